"""DP mechanisms to feed the PPR encoder, calibration helpers and baselines."""
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .ppr import DensityRatio, GaussianProposal, GaussianRatio, eta_alpha
from .rng import (SeededStream, draw_exp, draw_gaussian_vec, draw_sphere_uniform,
                  fill_gaussian, fill_units, gaussian_words)

LOG2E = math.log2(math.e)


def total_bits(ell):
    """Expected Zipf-coded size for a log-index budget ell."""
    return ell + math.log2(ell + 1) + 2


@dataclass
class PrivacyBudget:
    eps: float
    delta: float = 0.0
    order: float = None

    def __post_init__(self):
        if self.eps < 0 or not 0 <= self.delta <= 1:
            raise ValueError("invalid privacy budget")
        if self.order is not None and not self.order > 1:
            raise ValueError("Renyi order must exceed 1")


# --------------------------------------------------------------- Gaussian

@dataclass
class GaussianMechSpec:
    x: np.ndarray
    sigma: float
    C: float
    n: int = 1

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not self.sigma > 0 or not self.C > 0 or self.n < 1:
            raise ValueError("sigma, C and n must be positive")
        if np.linalg.norm(self.x) > self.C * (1 + 1e-12):
            raise ValueError("x lies outside the clipping ball")

    @property
    def d(self):
        return self.x.size

    @property
    def var(self):
        return self.sigma ** 2 / self.n

    @property
    def proposal_var(self):
        return self.C ** 2 / self.d + self.var

    def proposal(self):
        return GaussianProposal(self.d, self.proposal_var)


def gaussian_sigma_for_dp(C, eps, delta):
    if not (0 < eps <= 1 and 0 < delta < 1):
        raise ValueError("need eps in (0, 1] and delta in (0, 1)")
    return C * math.sqrt(2 * math.log(1.25 / delta)) / eps


def gaussian_ratio(spec: GaussianMechSpec) -> GaussianRatio:
    return GaussianRatio(spec.x, spec.var, spec.proposal_var)


def gaussian_kl_bound_bits(spec):
    return spec.d / 2 * math.log2(spec.C ** 2 * spec.n / (spec.d * spec.sigma ** 2) + 1)


def gaussian_ppr_ell(C, n, d, sigma, alpha):
    return d / 2 * math.log2(C ** 2 * n / (d * sigma ** 2) + 1) + eta_alpha(alpha)


def gaussian_rdp_to_dp(sigma, C, delta):
    """Best (eps, order) for the Gaussian mechanism with L2 sensitivity C."""
    def f(g):
        return g * C ** 2 / (2 * sigma ** 2) + math.log(1 / (g * delta)) / (g - 1) + math.log(1 - 1 / g)
    res = optimize.minimize_scalar(lambda lg: f(1 + math.exp(lg)), bounds=(-12, 12), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.fun), 1 + math.exp(res.x)


def gaussian_sigma_rdp(C, eps, delta):
    """Smallest sigma whose Renyi-converted guarantee is (eps, delta)."""
    if eps <= 0 or not 0 < delta < 1:
        raise ValueError("need eps > 0 and delta in (0, 1)")
    lo, hi = 1e-3 * C, 1e3 * C / eps + C
    return optimize.brentq(lambda s: gaussian_rdp_to_dp(s, C, delta)[0] - eps, lo, hi, xtol=1e-12)


def rdp_to_dp(order, eps, delta):
    if not order > 1 or not delta > 0:
        raise ValueError("order must exceed 1 and delta be positive")
    return eps + math.log(1 / (order * delta)) / (order - 1) + math.log(1 - 1 / order)


@dataclass
class PrivacyReport:
    central_eps: float
    central_delta: float
    local_eps: float
    local_delta: float
    route: str


def gaussian_privacy_report(sigma, C, n, delta, alpha):
    """Central and local guarantees of the PPR-compressed Gaussian mechanism.

    The simple route needs the classical calibration to be valid for the
    central epsilon and eps < 1/sqrt(n); otherwise the Renyi route is used.
    """
    eps_classic = C * math.sqrt(2 * math.log(1.25 / delta)) / sigma
    if eps_classic < 1 / math.sqrt(n):
        return PrivacyReport(eps_classic, delta, 2 * alpha * math.sqrt(n) * eps_classic, 2 * delta, "classic")
    central, _ = gaussian_rdp_to_dp(sigma, C, delta)

    def local(lg):
        g = 1 + math.exp(lg)
        return (math.sqrt(n) * g * C ** 2 / (2 * sigma ** 2) + math.log(1 / (g * delta)) / (g - 1)
                + math.log(1 - 1 / g))
    res = optimize.minimize_scalar(local, bounds=(-12, 12), method="bounded")
    return PrivacyReport(central, delta, 2 * alpha * float(res.fun), 2 * delta, "renyi")


# ---------------------------------------------------------------- Laplace

@dataclass
class LaplaceMechSpec:
    x: np.ndarray
    eps: float
    C: float

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not self.eps > 0 or not self.C > 0:
            raise ValueError("eps and C must be positive")
        if np.linalg.norm(self.x) > self.C * (1 + 1e-12):
            raise ValueError("x lies outside the clipping ball")

    @property
    def d(self):
        return self.x.size

    @property
    def proposal_var(self):
        return self.C ** 2 / self.d + (self.d + 1) / self.eps ** 2


def laplace_log_norm(d, eps):
    """log of the normalizer of z -> exp(-eps ||z||) on R^d (density = e^{-eps r} / Z)."""
    log_sphere = math.log(2) + d / 2 * math.log(math.pi) - special.gammaln(d / 2)
    return log_sphere + special.gammaln(d) - d * math.log(eps)


def laplace_sample_direct(spec, stream):
    # Gamma(d, 1/eps) radius as a sum of d exponentials
    r = float(draw_exp(stream, spec.d).sum()) / spec.eps
    return spec.x + r * draw_sphere_uniform(stream, spec.d)


class LaplaceProposal:
    """Gaussian proposal with a small zero-centred Laplace component.

    The pure Gaussian proposal has an unbounded density ratio against the
    Laplace target (its tails are lighter), so no finite r_star exists.
    Mixing in weight ``rho`` of Laplace(0, eps) caps the ratio at
    e^{eps C}/rho while costing at most log2(1/(1-rho)) bits of KL.

    Each sample uses a fixed number of words: one selector, the normals
    (used as the Gaussian draw or as a direction) and d exponentials whose
    sum is the Gamma(d) radius.
    """

    def __init__(self, d, var, eps, rho=0.01):
        if not 0 < rho < 1:
            raise ValueError("rho must be in (0, 1)")
        self.d, self.var, self.eps, self.rho = d, float(var), float(eps), float(rho)
        self.words_per_sample = 1 + gaussian_words(d) + d

    def sample(self, stream):
        s, sub = stream.key
        sel = np.empty(1)
        k = fill_units(s, sub, stream.counter, sel)
        g = np.empty(self.d)
        k = fill_gaussian(s, sub, k, g)
        e = np.empty(self.d)
        k = fill_units(s, sub, k, e)
        stream.counter = int(k)
        if sel[0] <= self.rho:
            return (-np.log(e).sum() / self.eps) * g / np.linalg.norm(g)
        return math.sqrt(self.var) * g

    def log_density(self, z):
        r2 = float(np.dot(z, z))
        lg = -0.5 * self.d * math.log(2 * math.pi * self.var) - r2 / (2 * self.var)
        ll = -self.eps * math.sqrt(r2) - laplace_log_norm(self.d, self.eps)
        return np.logaddexp(math.log1p(-self.rho) + lg, math.log(self.rho) + ll)


def _laplace_profile(spec, prop):
    """log ratio along the ray through x, as a function of s = ||z||."""
    c = float(np.linalg.norm(spec.x))
    lnorm = laplace_log_norm(spec.d, spec.eps)

    def f(s):
        lp = -spec.eps * abs(s - c) - lnorm
        lg = -0.5 * spec.d * math.log(2 * math.pi * prop.var) - s * s / (2 * prop.var)
        ll = -spec.eps * s - laplace_log_norm(spec.d, prop.eps)
        return lp - np.logaddexp(math.log1p(-prop.rho) + lg, math.log(prop.rho) + ll)
    return f, c


def laplace_ratio(spec, rho=0.01):
    """(proposal, DensityRatio) for PPR on the Laplace mechanism.

    For fixed ||z|| the target density is largest when z points along x, so
    the supremum over R^d reduces to a 1-D radial search; the tail limit
    e^{eps ||x||}/rho is included and the result is inflated by 1%.
    """
    prop = LaplaceProposal(spec.d, spec.proposal_var, spec.eps, rho)
    f, c = _laplace_profile(spec, prop)
    hi = c + 40 * math.sqrt(prop.var * spec.d) + 40 * spec.d / spec.eps
    grid = np.concatenate([np.linspace(0, hi, 20001), [c]])
    vals = np.array([f(s) for s in grid])
    best = float(vals.max())
    i = int(vals[:-1].argmax())
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 2)]
    if hi_b > lo_b:
        res = optimize.minimize_scalar(lambda s: -f(s), bounds=(lo_b, hi_b), method="bounded")
        best = max(best, -float(res.fun))
    tail = spec.eps * c - math.log(rho)
    log_r_star = max(best, tail) + math.log(1.01)
    if not math.isfinite(log_r_star):
        raise RuntimeError("could not certify r_star")
    lnorm = laplace_log_norm(spec.d, spec.eps)
    x = spec.x

    def log_ratio(z):
        return -spec.eps * float(np.linalg.norm(z - x)) - lnorm - prop.log_density(z)
    ratio = DensityRatio(lambda z: math.exp(log_ratio(z)), math.exp(log_r_star), log_ratio)
    return prop, ratio


def laplace_ppr_ell(C, eps, d, alpha):
    return (d / 2 * math.log2(2 / math.e * (C ** 2 * eps ** 2 / d + d + 1))
            - (special.gammaln(d + 1) - special.gammaln(d / 2 + 1)) / math.log(2) + eta_alpha(alpha))


def laplace_mse(d, eps):
    return d * (d + 1) / eps ** 2


def generic_compression_bound(eps, alpha):
    """ell = eps log2(e) + eta_alpha for an eps-LDP mechanism; total size is total_bits(ell)."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return eps * LOG2E + eta_alpha(alpha)


# --------------------------------------------------------------- baselines

def log_ball_volume(d, C):
    return d / 2 * math.log(math.pi) - special.gammaln(d / 2 + 1) + d * math.log(C)


def ball_volume(d, C):
    return math.exp(log_ball_volume(d, C))


def discrete_laplace_bits(d, C, u):
    return math.ceil((log_ball_volume(d, C) - d * math.log(u)) / math.log(2))


def discrete_laplace_step(d, C, bits):
    """Smallest step u whose cell count fits in ``bits``."""
    if bits < 1:
        raise ValueError("need at least one bit")
    u = math.exp((log_ball_volume(d, C) - bits * math.log(2)) / d)
    while discrete_laplace_bits(d, C, u) > bits:
        u *= 1 + 1e-12
    return u


def discrete_laplace_baseline(x, eps, C, d, bits, stream):
    """Laplace noise, projection onto the C-ball, then per-coordinate quantization."""
    x = np.asarray(x, dtype=float)
    u = discrete_laplace_step(d, C, bits)
    z = laplace_sample_direct(LaplaceMechSpec(x, eps, C), stream)
    nz = np.linalg.norm(z)
    if nz > C:
        z = z * (C / nz)
    return u * (np.floor(z / u) + 0.5)


# ------------------------------------------------------------------ CSGM
# Coordinate-subsampled Gaussian mechanism.  Inferred details: each client
# keeps each coordinate independently with probability q = bits / d and
# sends one sign bit per kept coordinate (values are +-B, B = C/sqrt(d),
# with stochastic rounding for other values); the server sums the
# reports, adds N(0, sigma^2) per coordinate (secure-aggregation model)
# and rescales by 1/(n q).  Privacy: d-fold composition of the Poisson-
# subsampled Gaussian with per-coordinate sensitivity B, via integer-order
# Renyi accounting and the conversion above.

def _log_a_subsampled(order, q, z):
    if q >= 1:
        return (order * order - order) / (2 * z * z)
    i = np.arange(order + 1)
    logc = special.gammaln(order + 1) - special.gammaln(i + 1) - special.gammaln(order - i + 1)
    t = logc + i * math.log(q) + (order - i) * math.log1p(-q) + (i * i - i) / (2 * z * z)
    return float(special.logsumexp(t))


def csgm_epsilon(sigma, q, d, delta, C=1.0, orders=range(2, 400)):
    """Central epsilon of CSGM with noise std sigma on each coordinate sum."""
    z = sigma * math.sqrt(d) / C
    best = math.inf
    for a in orders:
        rdp = d * _log_a_subsampled(a, q, z) / (a - 1)
        best = min(best, rdp_to_dp(a, rdp, delta))
    return best


def csgm_sigma(eps, delta, q, d, C=1.0):
    lo, hi = 1e-4, 1e3
    return optimize.brentq(lambda s: csgm_epsilon(s, q, d, delta, C) - eps, lo, hi, xtol=1e-10)


def csgm_q(bits, d):
    if bits < 1:
        raise ValueError("budget below one coordinate")
    return min(1.0, bits / d)


def csgm_encode(x, q, bound, stream):
    """Kept coordinate indices and their sign bits."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > bound * (1 + 1e-12)):
        raise ValueError("coordinate exceeds the quantizer range")
    u = stream.uniform(2 * x.size).reshape(2, -1)
    keep = np.flatnonzero(u[0] < q)
    up = u[1][keep] < (1 + x[keep] / bound) / 2
    return keep, up


def csgm_estimate(messages, n, d, q, bound, sigma, stream):
    total = np.zeros(d)
    for keep, up in messages:
        np.add.at(total, keep, np.where(up, bound, -bound))
    noise = draw_gaussian_vec(stream, d, var=sigma ** 2)
    return (total + noise) / (n * q)


def csgm_mse(n, d, q, sigma, C=1.0):
    """Exact MSE of the CSGM estimate when every |x_ij| = C/sqrt(d)."""
    return (1 - q) * C ** 2 / (n * q) + d * sigma ** 2 / (n * q) ** 2
