"""Counter-based randomness shared by encoders and decoders.

A stream is the pair (seed, substream_id) plus a position ``counter``
measured in raw 64-bit words.  Word ``k`` is lane ``k % 4`` of the
Philox4x64-10 block whose counter is ``k // 4 + 1`` under the key
``(seed, substream_id)``.  This matches numpy's ``Philox`` bit generator
word for word, so ``np.random.Philox(key=[seed, sub])`` is an independent
oracle for the core.

Uniforms are ``((w >> 11) + 1) * 2**-53``, which lies in (0, 1]; that
keeps ``-log(u)`` finite.  Draw costs in raw words:

* ``draw_exp``: 1 word
* ``draw_gaussian_vec``: ``2 * ceil(dim / 2)`` words (Box-Muller pairs)
* ``draw_sphere_uniform``: same as a Gaussian vector, redrawn if the norm is 0
* ``draw_gamma_trunc01`` / ``draw_gamma``: 2 words per rejection round
"""
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi


@njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO
    a_hi = a >> _S32
    b_lo = b & _LO
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO) + (hl & _LO)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True)
def raw_word(seed, sub, k):
    blk = np.uint64(k) // np.uint64(4) + _ONE
    w = philox_block(blk, np.uint64(0), np.uint64(0), np.uint64(0), np.uint64(seed), np.uint64(sub))
    lane = k % 4
    if lane == 0:
        return w[0]
    if lane == 1:
        return w[1]
    if lane == 2:
        return w[2]
    return w[3]


@njit(cache=True)
def fill_words(seed, sub, start, out):
    n = out.shape[0]
    k = start
    i = 0
    key0 = np.uint64(seed)
    key1 = np.uint64(sub)
    while i < n:
        blk = np.uint64(k) // np.uint64(4) + _ONE
        w = philox_block(blk, np.uint64(0), np.uint64(0), np.uint64(0), key0, key1)
        lane = k % 4
        while lane < 4 and i < n:
            out[i] = w[lane]
            lane += 1
            i += 1
            k += 1
    return k


@njit(cache=True, inline="always")
def word_to_unit(w):
    return float((w >> _S11) + _ONE) * _TWO_M53


@njit(cache=True)
def unit_at(seed, sub, k):
    return word_to_unit(raw_word(seed, sub, k))


@njit(cache=True)
def fill_units(seed, sub, start, out):
    words = np.empty(out.shape[0], dtype=np.uint64)
    end = fill_words(seed, sub, start, words)
    for i in range(out.shape[0]):
        out[i] = word_to_unit(words[i])
    return end


@njit(cache=True)
def fill_gaussian(seed, sub, start, out):
    """Standard normals into ``out`` by Box-Muller; returns the new counter."""
    d = out.shape[0]
    m = 2 * ((d + 1) // 2)
    u = np.empty(m)
    end = fill_units(seed, sub, start, u)
    for i in range(0, m, 2):
        r = np.sqrt(-2.0 * np.log(u[i]))
        th = _TWO_PI * u[i + 1]
        out[i] = r * np.cos(th)
        if i + 1 < d:
            out[i + 1] = r * np.sin(th)
    return end


@njit(cache=True)
def gamma_small(seed, sub, k, a):
    """Ahrens-Dieter GS sampler for Gamma(a), 0 < a < 1.  Returns (value, counter)."""
    b = 1.0 + a / np.e
    while True:
        p = b * unit_at(seed, sub, k)
        u2 = unit_at(seed, sub, k + 1)
        k += 2
        if p <= 1.0:
            x = p ** (1.0 / a)
            if u2 <= np.exp(-x):
                return x, k
        else:
            x = -np.log((b - p) / a)
            if u2 <= x ** (a - 1.0):
                return x, k


@njit(cache=True)
def gamma_trunc01(seed, sub, k, a):
    """Gamma(a) conditioned on being at most 1, by repeated draws."""
    while True:
        v, k = gamma_small(seed, sub, k, a)
        if v <= 1.0:
            return v, k


@dataclass
class SeededStream:
    """Position in a counter-based random stream.

    Equal ``(seed, substream_id)`` pairs give identical sequences.  The
    object is cheap to copy; copies advance independently.
    """

    seed: int
    substream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        mask = (1 << 64) - 1
        self.seed &= mask
        self.substream_id &= mask
        if self.counter < 0:
            raise ValueError("counter must be non-negative")

    def spawn(self, substream_id):
        return SeededStream(self.seed, substream_id)

    def copy(self):
        return replace(self)

    def words(self, n):
        out = np.empty(n, dtype=np.uint64)
        self.counter = int(fill_words(np.uint64(self.seed), np.uint64(self.substream_id), self.counter, out))
        return out

    def uniform(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n)
        self.counter = int(fill_units(np.uint64(self.seed), np.uint64(self.substream_id), self.counter, out))
        return out[0] if size is None else out.reshape(size)

    @property
    def key(self):
        return np.uint64(self.seed), np.uint64(self.substream_id)


def jump_to(stream, k):
    """Return a copy of ``stream`` positioned at raw word ``k`` (0-indexed)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return SeededStream(stream.seed, stream.substream_id, int(k))


def draw_exp(stream, size=None):
    u = stream.uniform(size)
    return -np.log(u)


def draw_gamma(stream, shape, size=None):
    """Untruncated Gamma(shape) for 0 < shape < 1 (GS rejection)."""
    if not 0.0 < shape < 1.0:
        raise ValueError("shape must lie in (0, 1)")
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    s, sub = stream.key
    k = stream.counter
    for i in range(n):
        out[i], k = gamma_small(s, sub, k, shape)
    stream.counter = int(k)
    return out[0] if size is None else out.reshape(size)


def draw_gamma_trunc01(stream, shape, size=None):
    """Gamma(shape) restricted to (0, 1]: CDF gamma(shape, v) / gamma(shape, 1)."""
    if not 0.0 < shape < 1.0:
        raise ValueError("shape must lie in (0, 1)")
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    s, sub = stream.key
    k = stream.counter
    for i in range(n):
        out[i], k = gamma_trunc01(s, sub, k, shape)
    stream.counter = int(k)
    return out[0] if size is None else out.reshape(size)


def gaussian_words(dim):
    return 2 * ((dim + 1) // 2)


def draw_gaussian_vec(stream, dim, mean=0.0, var=1.0):
    if dim < 1:
        raise ValueError("dim must be positive")
    if var <= 0:
        raise ValueError("var must be positive")
    z = np.empty(dim)
    s, sub = stream.key
    stream.counter = int(fill_gaussian(s, sub, stream.counter, z))
    return np.asarray(mean, dtype=float) + np.sqrt(var) * z


def draw_sphere_uniform(stream, dim):
    if dim < 1:
        raise ValueError("dim must be positive")
    while True:
        g = draw_gaussian_vec(stream, dim)
        nrm = np.linalg.norm(g)
        if nrm > 0:
            return g / nrm
