"""Poisson private representation: exact encoder, decoder and calculators.

The encoder follows the reparametrized scan: points of the marked process
(T_i, V_i) are produced in increasing order of T_i^alpha * min(V_i, 1)
from local randomness, handed proposal samples in time order from the
shared stream, and the index with the smallest weight
(T_i / r(Z_i))^alpha * V_i is returned once no unseen point can beat it.

Shared-stream layout: proposal sample k (1-based) starts at raw word
(k - 1) * words_per_sample, so decoding is a single jump.
"""
import heapq
import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special
from scipy.optimize import minimize_scalar

from .pfr_core import Pmf
from .rng import (SeededStream, fill_gaussian, gamma_trunc01, gaussian_words,
                  jump_to, unit_at)

LOG2_356 = math.log2(3.56)


class ContractViolation(RuntimeError):
    """A density ratio exceeded its declared bound, or was not finite."""


@dataclass(frozen=True)
class PprParams:
    alpha: float
    plain: bool = False

    def __post_init__(self):
        if math.isinf(self.alpha):
            object.__setattr__(self, "plain", True)
        elif not self.alpha > 1:
            raise ValueError("alpha must exceed 1")

    @classmethod
    def pfr(cls):
        return cls(math.inf, plain=True)


@dataclass
class DensityRatio:
    ratio_fn: object
    r_star: float
    log_ratio_fn: object = None

    def __post_init__(self):
        if not (self.r_star > 0 and math.isfinite(self.r_star)):
            raise ValueError("r_star must be positive and finite")

    def log_ratio(self, z):
        if self.log_ratio_fn is not None:
            return float(self.log_ratio_fn(z))
        r = float(self.ratio_fn(z))
        if math.isnan(r) or r < 0:
            raise ContractViolation("density ratio must be a non-negative number")
        return math.log(r) if r > 0 else -math.inf

    def checked_log_ratio(self, z):
        lr = self.log_ratio(z)
        if math.isnan(lr) or lr == math.inf:
            raise ContractViolation("density ratio is not finite")
        if lr > math.log(self.r_star) + 1e-9:
            raise ContractViolation(f"ratio {math.exp(lr):.6g} exceeds r_star {self.r_star:.6g}")
        return lr


@dataclass
class GaussianProposal:
    dim: int
    var: float
    mean: object = 0.0

    @property
    def words_per_sample(self):
        return gaussian_words(self.dim)

    def sample(self, stream):
        g = np.empty(self.dim)
        s, sub = stream.key
        stream.counter = int(fill_gaussian(s, sub, stream.counter, g))
        return np.asarray(self.mean, dtype=float) + math.sqrt(self.var) * g


class GaussianRatio(DensityRatio):
    """dN(x, var_p I) / dN(0, var_q I) with var_q > var_p."""

    def __init__(self, x, var_p, var_q):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not (var_p > 0 and var_q > var_p):
            raise ValueError("need 0 < var_p < var_q")
        self.x, self.var_p, self.var_q = x, float(var_p), float(var_q)
        d = x.size
        self.log_const = 0.5 * d * math.log(var_q / var_p)
        self.log_r_star = self.log_const + float(x @ x) / (2 * (var_q - var_p))
        super().__init__(self._ratio, math.exp(min(self.log_r_star, 700.0)), self._log_ratio)

    def _log_ratio(self, z):
        z = np.atleast_1d(z)
        return self.log_const - np.sum((z - self.x) ** 2) / (2 * self.var_p) + np.sum(z ** 2) / (2 * self.var_q)

    def _ratio(self, z):
        return math.exp(self._log_ratio(z))

    def kl_bits(self):
        d = self.x.size
        vp, vq = self.var_p, self.var_q
        nats = 0.5 * (d * vp / vq + float(self.x @ self.x) / vq - d + d * math.log(vq / vp))
        return nats / math.log(2)

    def checked_log_ratio(self, z):
        lr = self._log_ratio(z)
        if lr > self.log_r_star + 1e-9:
            raise ContractViolation("ratio exceeds closed-form bound")
        return lr


@dataclass
class EncodeResult:
    k: int
    points_examined: int
    w_star: float
    wall_time: float
    z: object = None
    local_counter: int = 0
    points_generated: int = 0

    @property
    def log2k(self):
        return math.log2(self.k)


def gamma1(alpha):
    """Lower incomplete gamma(1 - 1/alpha, 1), unnormalized."""
    a = 1.0 - 1.0 / alpha
    return float(special.gammainc(a, 1.0) * special.gamma(a))


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _heap_push(ht, hs, hv, hth, size, t, s, v, th):
    i = size
    ht[i], hs[i], hv[i], hth[i] = t, s, v, th
    while i > 0:
        p = (i - 1) // 2
        if ht[p] < ht[i] or (ht[p] == ht[i] and hs[p] < hs[i]):
            break
        ht[p], ht[i] = ht[i], ht[p]
        hs[p], hs[i] = hs[i], hs[p]
        hv[p], hv[i] = hv[i], hv[p]
        hth[p], hth[i] = hth[i], hth[p]
        i = p
    return size + 1


@njit(cache=True)
def _heap_pop(ht, hs, hv, hth, size):
    t, v, th = ht[0], hv[0], hth[0]
    size -= 1
    ht[0], hs[0], hv[0], hth[0] = ht[size], hs[size], hv[size], hth[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        r = l + 1
        if r < size and (ht[r] < ht[l] or (ht[r] == ht[l] and hs[r] < hs[l])):
            c = r
        if ht[i] < ht[c] or (ht[i] == ht[c] and hs[i] < hs[c]):
            break
        ht[c], ht[i] = ht[i], ht[c]
        hs[c], hs[i] = hs[i], hs[c]
        hv[c], hv[i] = hv[i], hv[c]
        hth[c], hth[i] = hth[i], hth[c]
        i = c
    return t, v, th, size


@njit(cache=True)
def _gauss_log_ratio(z, x, log_const, var_p, var_q):
    a = 0.0
    b = 0.0
    for j in range(x.shape[0]):
        a += (z[j] - x[j]) ** 2
        b += z[j] ** 2
    return log_const - a / (2 * var_p) + b / (2 * var_q)


@njit(cache=True)
def _lower_gamma(a, y):
    # unnormalized lower incomplete gamma for small y, by its power series
    s = 0.0
    term = 1.0 / a
    m = 0
    while True:
        s += term
        m += 1
        term *= y / (a + m)
        if term < 1e-17 * s:
            break
    return s * math.exp(a * math.log(y) - y)


@njit(cache=True)
def skipped_mean(alpha, bpia, f, t):
    """Expected number of not-yet-generated points with time in (f, t].

    Unseen points satisfy T^alpha * min(V, 1) > bpia^alpha, so the count is
    Poisson with mean int_f^t exp(-(bpia / s)^alpha) ds (requires f >= bpia).
    """
    a = 1.0 - 1.0 / alpha
    y_lo = (bpia / t) ** alpha
    y_hi = (bpia / f) ** alpha
    return t * math.exp(-y_lo) - f * math.exp(-y_hi) - bpia * (_lower_gamma(a, y_hi) - _lower_gamma(a, y_lo))


@njit(cache=True)
def _stirlerr(n):
    if n > 15.0:
        nn = n * n
        return (1.0 / 12 - (1.0 / 360 - 1.0 / 1260 / nn) / nn) / n
    return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - 0.5 * math.log(2 * math.pi)


@njit(cache=True)
def _bd0(x, m):
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / m) + m - x


@njit(cache=True)
def poisson_draw(seed, sub, k, mu):
    """Counter-based Poisson(mu) draw; returns (count, counter)."""
    if mu <= 0.0:
        return 0, k
    if mu < 10.0:
        lim = math.exp(-mu)
        prod = unit_at(seed, sub, k)
        k += 1
        n = 0
        while prod > lim:
            prod *= unit_at(seed, sub, k)
            k += 1
            n += 1
        return n, k
    # transformed rejection with squeeze (PTRS)
    slam = math.sqrt(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    while True:
        u = unit_at(seed, sub, k) - 0.5
        v = unit_at(seed, sub, k + 1)
        k += 2
        us = 0.5 - abs(u)
        n = math.floor((2 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= vr:
            return np.int64(n), k
        if n < 0 or (us < 0.013 and v > us):
            continue
        if n == 0:
            logp = -mu
        else:
            logp = -_stirlerr(n) - _bd0(n, mu) - 0.5 * math.log(2 * math.pi * n)
        if math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b) <= logp:
            return np.int64(n), k


@njit(cache=True)
def gauss_ppr_kernel(alpha, x, var_p, var_q, log_const, log_r_star,
                     sh_seed, sh_sub, lo_seed, lo_sub, lo_ctr, max_pop):
    """Exact PPR for a Gaussian target against a centred Gaussian proposal.

    Returns (k, indices_covered, points_generated, log_w_star, local_counter).  With
    ``max_pop > 0`` the scan ignores the stopping rule and returns the
    best index among the first ``max_pop`` points instead.
    """
    d = x.shape[0]
    wps = 2 * ((d + 1) // 2)
    sq = math.sqrt(var_q)
    z = np.empty(d)
    a_sh = 1.0 - 1.0 / alpha
    g1 = _lower_gamma(a_sh, 1.0)
    ie = math.exp(-1.0)
    sprob = ie / (ie + g1)
    scale = alpha / (ie + g1)
    cap = 64
    ht = np.empty(cap)
    hs = np.empty(cap, dtype=np.int64)
    hv = np.empty(cap)
    hth = np.empty(cap, dtype=np.int64)
    size = 0
    seq = 0
    u = 0.0
    log_ws = math.inf
    n = 0
    k = 0
    ks = 0
    popped = 0
    kctr = lo_ctr
    closing = False
    bpia = 0.0
    while True:
        if not closing:
            u += -math.log(unit_at(lo_seed, lo_sub, kctr))
            kctr += 1
            bpia = u * scale
            if max_pop == 0 and alpha * (math.log(bpia) - log_r_star) >= log_ws:
                if n == 0:
                    return ks, k, popped, log_ws, kctr
                closing = True
            if unit_at(lo_seed, lo_sub, kctr) < sprob:
                kctr += 1
                t = bpia
                v = -math.log(unit_at(lo_seed, lo_sub, kctr)) + 1.0
                kctr += 1
            else:
                kctr += 1
                v, kctr = gamma_trunc01(lo_seed, lo_sub, kctr, a_sh)
                t = bpia / v ** (1.0 / alpha)
            th = 1 if alpha * (math.log(t) - log_r_star) + math.log(v) <= log_ws else 0
            if size == cap:
                cap *= 2
                ht2 = np.empty(cap)
                hs2 = np.empty(cap, dtype=np.int64)
                hv2 = np.empty(cap)
                hth2 = np.empty(cap, dtype=np.int64)
                ht2[:size] = ht[:size]
                hs2[:size] = hs[:size]
                hv2[:size] = hv[:size]
                hth2[:size] = hth[:size]
                ht, hs, hv, hth = ht2, hs2, hv2, hth2
            size = _heap_push(ht, hs, hv, hth, size, t, seq, v, th)
            seq += 1
            n += th
            frontier = bpia
        while size > 0 and (closing or ht[0] <= bpia):
            t, v, th, size = _heap_pop(ht, hs, hv, hth, size)
            if closing and t > frontier:
                # unseen points between the frontier and t take indices first
                gap, kctr = poisson_draw(lo_seed, lo_sub, kctr, skipped_mean(alpha, bpia, frontier, t))
                k += gap
                frontier = t
            n -= th
            k += 1
            popped += 1
            if not closing or th == 1:
                fill_gaussian(sh_seed, sh_sub, (k - 1) * wps, z)
                for j in range(d):
                    z[j] *= sq
                lr = _gauss_log_ratio(z, x, log_const, var_p, var_q)
                if lr > log_r_star + 1e-9:
                    return -1, k, popped, log_ws, kctr
                lw = alpha * (math.log(t) - lr) + math.log(v)
                if lw < log_ws:
                    log_ws = lw
                    ks = k
            if max_pop > 0 and k >= max_pop:
                return ks, k, popped, log_ws, kctr
            if closing and n == 0:
                return ks, k, popped, log_ws, kctr


@njit(cache=True)
def gauss_pfr_kernel(x, var_p, var_q, log_const, log_r_star,
                     sh_seed, sh_sub, lo_seed, lo_sub, lo_ctr, max_pop):
    """alpha = infinity: the index minimizing T_i / r(Z_i)."""
    d = x.shape[0]
    wps = 2 * ((d + 1) // 2)
    sq = math.sqrt(var_q)
    z = np.empty(d)
    t = 0.0
    best = math.inf
    ks = 0
    k = 0
    kctr = lo_ctr
    while True:
        t += -math.log(unit_at(lo_seed, lo_sub, kctr))
        kctr += 1
        if max_pop == 0 and math.log(t) - log_r_star >= best:
            return ks, k, k, best, kctr
        k += 1
        fill_gaussian(sh_seed, sh_sub, (k - 1) * wps, z)
        for j in range(d):
            z[j] *= sq
        lr = _gauss_log_ratio(z, x, log_const, var_p, var_q)
        if lr > log_r_star + 1e-9:
            return -1, k, k, best, kctr
        lt = math.log(t) - lr
        if lt < best:
            best = lt
            ks = k
        if max_pop > 0 and k >= max_pop:
            return ks, k, k, best, kctr


# ------------------------------------------------------------ public API

def _is_fast(proposal, ratio):
    return (isinstance(proposal, GaussianProposal) and isinstance(ratio, GaussianRatio)
            and np.all(np.asarray(proposal.mean) == 0) and proposal.var == ratio.var_q
            and proposal.dim == ratio.x.size)


def _proposal_at(proposal, shared, k):
    """The k-th (1-based) proposal sample of the shared stream."""
    wps = getattr(proposal, "words_per_sample", None)
    if wps is not None:
        return proposal.sample(jump_to(shared, (k - 1) * wps))
    s = shared.copy()
    z = None
    for _ in range(k):
        z = _sample(proposal, s)
    return z


def _sample(proposal, stream):
    return proposal.sample(stream) if hasattr(proposal, "sample") else proposal(stream)


def _run(params, proposal, ratio, shared, local, max_pop):
    t0 = time.perf_counter()
    if _is_fast(proposal, ratio):
        args = (ratio.x, ratio.var_p, ratio.var_q, ratio.log_const, ratio.log_r_star,
                np.uint64(shared.seed), np.uint64(shared.substream_id),
                np.uint64(local.seed), np.uint64(local.substream_id), local.counter, max_pop)
        if params.plain:
            k, m, g, lw, ctr = gauss_pfr_kernel(*args)
        else:
            k, m, g, lw, ctr = gauss_ppr_kernel(params.alpha, *args)
        if k < 0:
            raise ContractViolation("ratio exceeds closed-form bound")
        local.counter = int(ctr)
        z = _proposal_at(proposal, shared, k)
        return EncodeResult(int(k), int(m), math.exp(lw), time.perf_counter() - t0, z, int(ctr), int(g))
    if params.plain:
        res = _pfr_python(proposal, ratio, shared, local, max_pop)
    else:
        res = _ppr_python(params.alpha, proposal, ratio, shared, local, max_pop)
    res.wall_time = time.perf_counter() - t0
    return res


def _ppr_python(alpha, proposal, ratio, shared, local, max_pop):
    # mirrors gauss_ppr_kernel draw for draw, with a Python ratio and proposal
    lo_s, lo_sub = local.key
    kctr = local.counter
    g1 = gamma1(alpha)
    ie = math.exp(-1.0)
    sprob = ie / (ie + g1)
    scale = alpha / (ie + g1)
    log_rs = math.log(ratio.r_star)
    stream = shared.copy()
    heap = []
    seq = 0
    u = bpia = frontier = 0.0
    log_ws = math.inf
    n = k = ks = popped = 0
    zs = None
    closing = False
    while True:
        if not closing:
            u += -math.log(unit_at(lo_s, lo_sub, kctr))
            kctr += 1
            bpia = u * scale
            if not max_pop and alpha * (math.log(bpia) - log_rs) >= log_ws:
                if n == 0:
                    break
                closing = True
            if unit_at(lo_s, lo_sub, kctr) < sprob:
                t = bpia
                v = -math.log(unit_at(lo_s, lo_sub, kctr + 1)) + 1.0
                kctr += 2
            else:
                v, kctr = gamma_trunc01(lo_s, lo_sub, kctr + 1, 1.0 - 1.0 / alpha)
                t = bpia / v ** (1.0 / alpha)
            th = int(alpha * (math.log(t) - log_rs) + math.log(v) <= log_ws)
            heapq.heappush(heap, (t, seq, v, th))
            seq += 1
            n += th
            frontier = bpia
        done = False
        while heap and (closing or heap[0][0] <= bpia):
            t, _, v, th = heapq.heappop(heap)
            if closing and t > frontier:
                gap, kctr = poisson_draw(lo_s, lo_sub, kctr, skipped_mean(alpha, bpia, frontier, t))
                k += int(gap)
                frontier = t
            n -= th
            k += 1
            popped += 1
            if not closing or th:
                z = _proposal_at(proposal, shared, k) if closing else _sample(proposal, stream)
                lw = alpha * (math.log(t) - ratio.checked_log_ratio(z)) + math.log(v)
                if lw < log_ws:
                    log_ws, ks, zs = lw, k, z
            if (max_pop and k >= max_pop) or (closing and n == 0):
                done = True
                break
        if done:
            break
    local.counter = int(kctr)
    return EncodeResult(ks, k, math.exp(log_ws), 0.0, zs, int(kctr), popped)


def _pfr_python(proposal, ratio, shared, local, max_pop):
    lo_s, lo_sub = local.key
    kctr = local.counter
    log_rs = math.log(ratio.r_star)
    stream = shared.copy()
    t = 0.0
    best = math.inf
    k = ks = 0
    zs = None
    while True:
        t += -math.log(unit_at(lo_s, lo_sub, kctr))
        kctr += 1
        if not max_pop and math.log(t) - log_rs >= best:
            break
        k += 1
        z = _sample(proposal, stream)
        lt = math.log(t) - ratio.checked_log_ratio(z)
        if lt < best:
            best, ks, zs = lt, k, z
        if max_pop and k >= max_pop:
            break
    local.counter = int(kctr)
    return EncodeResult(ks, k, math.exp(best), 0.0, zs, int(kctr), k)


def _shared(shared_seed, shared_substream):
    if isinstance(shared_seed, SeededStream):
        return SeededStream(shared_seed.seed, shared_seed.substream_id)
    return SeededStream(shared_seed, shared_substream)


def encode(params, proposal, ratio, shared_seed, local_stream, shared_substream=0):
    """Exact PPR encoding; ``local_stream`` is advanced past the draws used.

    ``proposal`` is an object with ``sample(stream)`` (and ideally a fixed
    ``words_per_sample``) or a plain callable ``stream -> z``.
    """
    return _run(params, proposal, ratio, _shared(shared_seed, shared_substream), local_stream, 0)


def encode_truncated(params, proposal, ratio, shared_seed, local_stream, n_points, shared_substream=0):
    """Best index among the first ``n_points`` points of the same process."""
    if n_points < 1:
        raise ValueError("n_points must be positive")
    return _run(params, proposal, ratio, _shared(shared_seed, shared_substream), local_stream, int(n_points))


def decode(proposal, k, shared_seed, shared_substream=0):
    if k < 1:
        raise ValueError("k must be at least 1")
    return _proposal_at(proposal, _shared(shared_seed, shared_substream), int(k))


def conditional_index_pmf(tilde_t, alpha):
    t = np.asarray(tilde_t, dtype=float)
    if t.size == 0:
        raise ValueError("empty list")
    if math.isinf(alpha):
        p = np.zeros(t.size)
        p[np.argmin(t)] = 1.0
        return Pmf(p)
    lw = -alpha * np.log(t)
    lw -= lw.max()
    w = np.exp(lw)
    return Pmf(w / w.sum())


def eta_alpha(alpha):
    """log2(3.56) / min{(alpha - 1)/2, 1}; zero-cost limit for alpha = inf is log2(3.56)."""
    if math.isinf(alpha):
        return LOG2_356
    return LOG2_356 / min((alpha - 1) / 2, 1.0)


def _refined_term(eta, alpha):
    if math.isinf(alpha):
        lg = special.gammaln(eta + 1)
    else:
        lg = (special.gammaln(1 - (eta + 1) / alpha) + special.gammaln(eta + 1)
              - (eta + 1) * special.gammaln(1 - 1 / alpha))
    return math.log2(math.exp(lg) + 1) / eta


def refined_overhead(alpha):
    hi = 1.0 if math.isinf(alpha) else min(1.0, alpha - 1)
    closed = math.isinf(alpha) or alpha - 1 > 1
    if closed:
        res = minimize_scalar(_refined_term, bounds=(1e-6, hi), args=(alpha,), method="bounded",
                              options={"xatol": 1e-10})
        return min(res.fun, _refined_term(hi, alpha))
    res = minimize_scalar(_refined_term, bounds=(1e-6, hi * (1 - 1e-9)), args=(alpha,),
                          method="bounded", options={"xatol": 1e-10})
    return res.fun


def expected_logk_bound(alpha, kl_bits, refined=True):
    """Upper bound on E[log2 K] in bits given D(P||Q) in bits."""
    simple = kl_bits + eta_alpha(alpha)
    if not refined:
        return simple
    return min(simple, kl_bits + refined_overhead(alpha))


def privacy_inflation(eps, delta, alpha, metric=False):
    """(2 alpha eps, 2 delta); with ``metric`` the coefficient 2 alpha eps of d_X."""
    if eps < 0 or not 0 <= delta <= 1 or not alpha > 1:
        raise ValueError("bad privacy parameters")
    if metric:
        return 2 * alpha * eps
    return 2 * alpha * eps, min(1.0, 2 * delta)


def alpha_for_tight_dp(eps_tilde, delta_tilde):
    if not (0 < eps_tilde <= 1 and 0 < delta_tilde <= 1 / 3):
        raise ValueError("eps_tilde in (0,1], delta_tilde in (0,1/3]")
    return math.exp(-4.2) * delta_tilde * eps_tilde ** 2 / (-math.log(delta_tilde)) + 1
