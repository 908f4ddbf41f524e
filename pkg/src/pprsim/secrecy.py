"""Covering numbers and one-shot secrecy schemes on small discrete alphabets.

Channels are column-stochastic matrices ``A[y, x]``.  Both schemes use a
random codebook over pairs (u, m) with base law P_U x Unif[L]; for finite
alphabets only the first point of each label matters to a PFR query, so a
trial draws one exponential mark per label (plus, for the wiretap code,
the first ``A`` points carrying the sent message).
"""
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import SeededStream, draw_exp


def _check_channel(a, tol=1e-12):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or np.any(a < 0) or np.any(np.abs(a.sum(axis=0) - 1) > tol):
        raise ValueError("channel must be a column-stochastic matrix")
    return a


class ChannelSet:
    def __init__(self, channels):
        self.channels = [_check_channel(c) for c in channels]
        if not self.channels:
            raise ValueError("empty channel set")
        if len({c.shape for c in self.channels}) != 1:
            raise ValueError("channels must share input and output alphabets")

    def __len__(self):
        return len(self.channels)

    def __getitem__(self, i):
        return self.channels[i]


def channel_distance(a, b):
    """max over inputs x of TV(a[:, x], b[:, x])."""
    return float(0.5 * np.abs(np.asarray(a) - np.asarray(b)).sum(axis=0).max())


def covering_bound(size_x, size_y, eps):
    if eps <= 0:
        raise ValueError("eps must be positive")
    return (1 / (2 * eps) + (size_y + 1) / 2) ** (size_x * size_y)


def greedy_cover(cset, eps):
    """Indices of a subset such that every member lies within eps of one of them."""
    if not isinstance(cset, ChannelSet):
        cset = ChannelSet(cset)
    chosen = []
    for i, c in enumerate(cset.channels):
        if all(channel_distance(c, cset[j]) > eps for j in chosen):
            chosen.append(i)
    return chosen


def _sample_cols(cum, cols, u):
    """Inverse-CDF draw from the columns ``cols`` of a cumulative matrix."""
    c = cum[:, cols]
    return np.minimum((c < u[None, :] * c[-1][None, :]).sum(axis=0), cum.shape[0] - 1)


def _safe_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b > 0, a / np.where(b > 0, b, 1), np.inf)


# ---------------------------------------------------------------- hiding

@dataclass
class HidingSpec:
    p_s: np.ndarray          # joint of (S^e, S^d)
    p_u_s: np.ndarray        # P(U | S^e), rows indexed by s^e
    p_x_su: np.ndarray       # P(X | S^e, U), shape (|S^e|, |U|, |X|)
    ref: np.ndarray          # reference attack channel used by the decoder
    attacks: ChannelSet
    L: int
    x_hat: Callable = None   # (m, y) -> reconstruction of X
    d1: Callable = None      # (s^e, x) -> distortion
    D1: float = 0.0
    d2: Callable = None      # (x, x_hat) -> distortion
    D2: float = 0.0

    def __post_init__(self):
        self.p_s = np.asarray(self.p_s, dtype=float)
        self.p_u_s = np.asarray(self.p_u_s, dtype=float)
        self.p_x_su = np.asarray(self.p_x_su, dtype=float)
        self.ref = _check_channel(self.ref)
        if not isinstance(self.attacks, ChannelSet):
            self.attacks = ChannelSet(self.attacks)
        if abs(self.p_s.sum() - 1) > 1e-9 or np.any(np.abs(self.p_u_s.sum(axis=1) - 1) > 1e-9):
            raise ValueError("invalid pmf")

    @property
    def sizes(self):
        ne, nd = self.p_s.shape
        return ne, nd, self.p_u_s.shape[1], self.p_x_su.shape[2], self.ref.shape[0]

    def ref_posterior(self):
        """P-hat(u | y, s^d) under the reference channel, shape (|Y|, |S^d|, |U|)."""
        j = np.einsum("ed,eu,eux,yx->ydu", self.p_s, self.p_u_s, self.p_x_su, self.ref)
        return j / np.where(j.sum(axis=2, keepdims=True) > 0, j.sum(axis=2, keepdims=True), 1)

    def _ok1(self, se, x):
        if self.d1 is None:
            return np.ones(len(se), bool)
        return np.array([self.d1(a, b) <= self.D1 for a, b in zip(se, x)])

    def _ok2(self, x, m, y):
        if self.d2 is None:
            return np.ones(len(x), bool)
        return np.array([self.d2(a, self.x_hat(b, c)) <= self.D2 for a, b, c in zip(x, m, y)])


def hiding_expectation(spec, attack):
    """Exact E_A[1 - 1{d1 ok} 1{d2 ok} (1 + L P(u|s^e)/P-hat(u|y,s^d))^-1]."""
    a = _check_channel(attack)
    ne, nd, nu, nx, ny = spec.sizes
    post = spec.ref_posterior()
    total = 0.0
    for e in range(ne):
        for d in range(nd):
            for u in np.flatnonzero(spec.p_u_s[e]):
                for x in np.flatnonzero(spec.p_x_su[e, u]):
                    w = spec.p_s[e, d] * spec.p_u_s[e, u] * spec.p_x_su[e, u, x]
                    if w == 0:
                        continue
                    ok1 = spec.d1 is None or spec.d1(e, x) <= spec.D1
                    for y in np.flatnonzero(a[:, x]):
                        ratio = _safe_div(spec.L * spec.p_u_s[e, u], post[y, d, u])
                        for m in range(spec.L):
                            ok2 = spec.d2 is None or spec.d2(x, spec.x_hat(m, y)) <= spec.D2
                            keep = float(ok1 and ok2) / (1 + ratio)
                            total += w * a[y, x] / spec.L * (1 - keep)
    return float(total)


def hiding_bound(spec, eps):
    cover = greedy_cover(spec.attacks, eps)
    worst = max(hiding_expectation(spec, a) for a in spec.attacks.channels)
    return len(cover) * worst + eps


def hiding_run(spec, attack_index, trials, seed):
    """Failure rate (d1 exceeded, d2 exceeded or wrong message) with a fresh codebook per trial."""
    ne, nd, nu, nx, ny = spec.sizes
    L = spec.L
    a = spec.attacks[attack_index]
    post = spec.ref_posterior()
    st = SeededStream(seed, attack_index)
    marks = draw_exp(st, (trials, nu, L))
    w = st.uniform((trials, 4))
    flat = np.cumsum(spec.p_s.ravel())
    sidx = np.minimum(np.searchsorted(flat, w[:, 0] * flat[-1]), flat.size - 1)
    se, sd = sidx // nd, sidx % nd
    m = np.minimum((w[:, 1] * L).astype(int), L - 1)
    tr = np.arange(trials)
    with np.errstate(divide="ignore"):
        u = np.argmin(marks[tr, :, m] / spec.p_u_s[se], axis=1)
    cx = np.cumsum(spec.p_x_su[se, u], axis=1)
    x = np.minimum((cx < (w[:, 2] * cx[:, -1])[:, None]).sum(axis=1), nx - 1)
    y = _sample_cols(np.cumsum(a, axis=0), x, w[:, 3])
    with np.errstate(divide="ignore"):
        score = marks / post[y, sd][:, :, None]
    m_hat = np.argmin(score.reshape(trials, -1), axis=1) % L
    fail = (m_hat != m) | ~spec._ok1(se, x) | ~spec._ok2(x, m_hat, y)
    p = float(fail.mean())
    return p, math.sqrt(p * (1 - p) / trials)


# --------------------------------------------------------------- wiretap

@dataclass
class WiretapSpec:
    p_ux: np.ndarray         # joint law of (U, X)
    ref_y: np.ndarray        # reference legitimate channel
    ref_z: np.ndarray        # reference eavesdropper channel
    decoders: ChannelSet     # the set D
    eavesdroppers: ChannelSet  # the set E
    L: int
    A: int
    B: int
    nu: float = 1.0
    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self):
        self.p_ux = np.asarray(self.p_ux, dtype=float)
        self.ref_y, self.ref_z = _check_channel(self.ref_y), _check_channel(self.ref_z)
        if not isinstance(self.decoders, ChannelSet):
            self.decoders = ChannelSet(self.decoders)
        if not isinstance(self.eavesdroppers, ChannelSet):
            self.eavesdroppers = ChannelSet(self.eavesdroppers)
        if self.A < 1 or self.B < 1 or self.L < 1:
            raise ValueError("L, A and B must be at least 1")
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        if abs(self.p_ux.sum() - 1) > 1e-9:
            raise ValueError("invalid pmf")

    @property
    def p_u(self):
        return self.p_ux.sum(axis=1)

    @property
    def p_x_u(self):
        pu = self.p_u
        return self.p_ux / np.where(pu > 0, pu, 1)[:, None]

    def ref_ratio(self, ch):
        """2^{i-hat(u; out)} = P-hat(out|u) / P-hat(out), shape (|U|, |out|)."""
        given_u = self.p_x_u @ ch.T
        marg = self.p_u @ given_u
        return _safe_div(given_u, marg[None, :])


def _expect_over(spec, actual, f):
    """E over P_{U,X} x actual[out|x] of f(u, out)."""
    w = np.einsum("ux,ox->uo", spec.p_ux, actual)
    return float(np.sum(w * f))


def wiretap_error_term(spec, ch):
    r = spec.ref_ratio(spec.ref_y)
    return _expect_over(spec, ch, np.minimum(_safe_div(spec.L * spec.A, r), 1.0))


def wiretap_secrecy_term(spec, ch):
    r = spec.ref_ratio(spec.ref_z)
    with np.errstate(divide="ignore"):
        f = (1 + _safe_div(1.0, r)) ** (-spec.B)
    return 2 * _expect_over(spec, ch, f) + math.sqrt(spec.B / spec.A)


def wiretap_bound(spec):
    nd = len(greedy_cover(spec.decoders, spec.eps1)) if spec.eps1 > 0 else len(spec.decoders)
    err = nd * max(wiretap_error_term(spec, c) for c in spec.decoders.channels) + spec.eps1
    if spec.nu == 0:
        return err
    ne = len(greedy_cover(spec.eavesdroppers, spec.eps2)) if spec.eps2 > 0 else len(spec.eavesdroppers)
    sec = ne * max(wiretap_secrecy_term(spec, c) for c in spec.eavesdroppers.channels)
    return err + spec.nu * (sec + spec.eps2)


def _wiretap_codebooks(spec, st, trials):
    """Labels of the first A points per message and each label's first mark."""
    L, A = spec.L, spec.A
    pu = spec.p_u
    nu = pu.size
    gaps = draw_exp(st, (trials, L, A)) * L
    times = np.cumsum(gaps, axis=2)
    cu = np.cumsum(pu)
    labels = np.minimum(np.searchsorted(cu, st.uniform((trials, L, A)) * cu[-1], side="left"), nu - 1)
    extra = draw_exp(st, (trials, L, nu)) * L
    first = np.empty((trials, L, nu))
    for u in range(nu):
        hit = labels == u
        seen = hit.any(axis=2)
        idx = np.argmax(hit, axis=2)
        t_seen = np.take_along_axis(times, idx[..., None], axis=2)[..., 0]
        with np.errstate(divide="ignore"):
            t_new = times[..., -1] + extra[..., u] / pu[u]
        first[..., u] = np.where(seen, t_seen, t_new)
    # first arrival of label (u, m) scaled to a unit exponential mark
    with np.errstate(invalid="ignore"):
        marks = np.where(pu > 0, first * pu / L, np.inf)
    return labels, marks


def _wiretap_block(spec, chy, chz, st, trials):
    labels, marks = _wiretap_codebooks(spec, st, trials)
    w = st.uniform((trials, 4))
    L, A = spec.L, spec.A
    m = np.minimum((w[:, 0] * L).astype(int), L - 1)
    rank = np.minimum((w[:, 3] * A).astype(int), A - 1)
    tr = np.arange(trials)
    u = labels[tr, m, rank]
    x = _sample_cols(np.cumsum(spec.p_x_u.T, axis=0), u, w[:, 1])
    y = _sample_cols(np.cumsum(chy, axis=0), x, w[:, 2])
    post = spec.p_u[:, None] * spec.ref_ratio(spec.ref_y)  # P-hat(u|y) up to a y-only factor
    with np.errstate(divide="ignore"):
        score = marks / post[:, y].T[:, None, :]
    m_hat = np.argmin(score.reshape(trials, -1), axis=1) // spec.p_u.size
    pz_u = spec.p_x_u @ chz.T
    pmz = pz_u[labels].mean(axis=2) / L
    pz = pmz.sum(axis=1, keepdims=True)
    tv = 0.5 * np.abs(pmz - pz / L).sum(axis=(1, 2))
    return m_hat != m, tv


def wiretap_run(spec, pair, trials, seed, block=8192):
    """(error rate, stderr, mean secrecy TV, stderr) for one (decoder, eavesdropper) pair.

    Secrecy TV is computed exactly for each sampled codebook and then
    averaged, which is the quantity the secrecy bound controls.
    """
    di, ei = pair
    chy, chz = spec.decoders[di], spec.eavesdroppers[ei]
    st = SeededStream(seed, 7919 * di + ei)
    errs, tvs = [], []
    for lo in range(0, trials, block):
        e, t = _wiretap_block(spec, chy, chz, st, min(block, trials - lo))
        errs.append(e)
        tvs.append(t)
    err, tv = np.concatenate(errs), np.concatenate(tvs)
    pe = float(err.mean())
    return pe, math.sqrt(pe * (1 - pe) / trials), float(tv.mean()), float(tv.std(ddof=1) / math.sqrt(trials))


# ------------------------------------------------------- random instances

def _perturb(rng, ch, scale):
    c = ch + scale * rng.random(ch.shape)
    return c / c.sum(axis=0, keepdims=True)


def _stochastic(rng, rows, cols, conc=1.0):
    return rng.dirichlet(np.full(rows, conc), size=cols).T


def random_hiding_instance(seed, n_attacks=3, L=2):
    """Small hiding instance with a Hamming embedding constraint and a noisy reconstruction."""
    rng = np.random.default_rng(seed)
    ne, nd, nu, nx = 2, 2, 4, 3
    p_s = rng.dirichlet(np.ones(ne * nd)).reshape(ne, nd)
    p_u_s = rng.dirichlet(np.full(nu, 2.0), size=ne)
    p_x_su = np.zeros((ne, nu, nx))
    for e in range(ne):
        for u in range(nu):
            p_x_su[e, u] = 0.1
            p_x_su[e, u, (u + e) % nx] += 1.0
            p_x_su[e, u] /= p_x_su[e, u].sum()
    ref = 0.8 * np.eye(nx) + 0.2 * _stochastic(rng, nx, nx)
    attacks = [ref] + [_perturb(rng, ref, 0.05) for _ in range(n_attacks - 1)]
    return HidingSpec(p_s, p_u_s, p_x_su, ref, attacks, L,
                      x_hat=lambda m, y: y, d1=lambda e, x: int(x != e), D1=1,
                      d2=lambda x, xh: int(x != xh), D2=0 if rng.random() < 0.5 else 1)


def random_wiretap_instance(seed, L=2, A=16, B=4, nu=1.0, size=2):
    """U = X on ``size`` symbols with two legitimate and two eavesdropper channels."""
    rng = np.random.default_rng(seed)
    p_ux = np.diag(rng.dirichlet(np.full(size, 3.0)))
    clean = 0.9 if size <= 2 else 0.98
    ref_y = clean * np.eye(size) + (1 - clean) * _stochastic(rng, size, size)
    ref_z = 0.4 * np.eye(size) + 0.6 * _stochastic(rng, size, size)
    dec = [ref_y, _perturb(rng, ref_y, 0.05 / size)]
    eav = [ref_z, _perturb(rng, ref_z, 0.05 / size)]
    e1 = max(channel_distance(ref_y, c) for c in dec) + 1e-9
    e2 = max(channel_distance(ref_z, c) for c in eav) + 1e-9
    return WiretapSpec(p_ux, ref_y, ref_z, dec, eav, L, A, B, nu, e1, e2)
