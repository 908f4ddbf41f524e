import math

import numpy as np
import pytest
from scipy import integrate, stats

from pprsim import mechanisms as m
from pprsim.ppr import PprParams, decode, encode, eta_alpha
from pprsim.rng import SeededStream


def test_sigma_calibration():
    assert m.gaussian_sigma_for_dp(1, 1, 1e-5) == pytest.approx(math.sqrt(2 * math.log(125000)))
    assert m.gaussian_sigma_for_dp(1, 1, 1e-5) == pytest.approx(4.845, abs=5e-4)
    assert m.gaussian_sigma_for_dp(3, 0.5, 1e-5) == pytest.approx(3 * m.gaussian_sigma_for_dp(1, 0.5, 1e-5))
    with pytest.raises(ValueError):
        m.gaussian_sigma_for_dp(1, 1, 1.25)
    with pytest.raises(ValueError):
        m.gaussian_sigma_for_dp(1, 0, 1e-5)


def test_rdp_conversion():
    assert m.rdp_to_dp(2, 1, 0.01) == pytest.approx(1 + math.log(50) - math.log(2))
    assert m.rdp_to_dp(2, 1, 0.01) == pytest.approx(4.219, abs=5e-4)
    # at delta = 1/gamma the log(1/(gamma delta)) term vanishes
    assert m.rdp_to_dp(4, 0.3, 0.25) == pytest.approx(0.3 + math.log(0.75))
    eps, order = m.gaussian_rdp_to_dp(4.530877, 1.0, 1e-6)
    assert eps == pytest.approx(1.0, abs=1e-5) and order > 1


def test_gaussian_ratio_sup_and_kl():
    rng = np.random.default_rng(0)
    for trial in range(20):
        d = int(rng.integers(1, 6))
        x = rng.normal(size=d)
        x *= rng.uniform(0, 1) / np.linalg.norm(x)
        spec = m.GaussianMechSpec(x, sigma=rng.uniform(0.3, 3), C=1.0, n=int(rng.integers(1, 20)))
        ratio = m.gaussian_ratio(spec)
        z = rng.normal(scale=3, size=(1000, d))
        assert max(ratio.log_ratio(zz) for zz in z) <= ratio.log_r_star + 1e-12
        # numeric KL per coordinate, summed
        sp, sq = math.sqrt(spec.var), math.sqrt(spec.proposal_var)
        kl = 0.0
        for xj in x:
            f = lambda t: stats.norm.pdf(t, xj, sp) * (stats.norm.logpdf(t, xj, sp) - stats.norm.logpdf(t, 0, sq))
            kl += integrate.quad(f, xj - 40 * sp, xj + 40 * sp, limit=200)[0]
        kl /= math.log(2)
        assert kl == pytest.approx(ratio.kl_bits(), rel=1e-6, abs=1e-9)
        assert kl <= m.gaussian_kl_bound_bits(spec) + 1e-9
    tiny = m.GaussianMechSpec([0.0], sigma=1.0, C=1e-6)
    assert m.gaussian_kl_bound_bits(tiny) < 1e-10


def test_gaussian_ppr_exactness():
    x = np.array([0.3, -0.4, 0.1, 0.2])
    spec = m.GaussianMechSpec(x, sigma=0.5, C=1.0, n=1)
    ratio, prop = m.gaussian_ratio(spec), spec.proposal()
    zs = np.array([decode(prop, encode(PprParams(2.0), prop, ratio, i, SeededStream(9, i)).k, i)
                   for i in range(3000)])
    se = math.sqrt(spec.var / len(zs))
    assert np.all(np.abs(zs.mean(0) - x) < 4 * se)
    var_se = spec.var * math.sqrt(2 / (len(zs) - 1))
    assert np.all(np.abs(zs.var(0, ddof=1) - spec.var) < 4 * var_se)
    proj = np.array([0.5, 0.5, -0.5, 0.5])
    assert stats.kstest((zs - x) @ proj, "norm", args=(0, math.sqrt(spec.var))).pvalue > 1e-3


def test_laplace_direct_mse():
    for d, eps in ((2, 1.0), (5, 2.0)):
        spec = m.LaplaceMechSpec(np.zeros(d), eps, 1.0)
        st_ = SeededStream(11, d)
        err = np.array([np.sum(m.laplace_sample_direct(spec, st_) ** 2) for _ in range(100_000)])
        assert abs(err.mean() - m.laplace_mse(d, eps)) < 3 * err.std() / math.sqrt(err.size)
    assert m.laplace_mse(2, 1.0) == 6


@pytest.mark.parametrize("d,eps", [(2, 1.0), (6, 2.0)])
def test_laplace_ppr_matches_direct(d, eps):
    x = np.zeros(d)
    x[0] = 0.7
    spec = m.LaplaceMechSpec(x, eps, 1.0)
    prop, ratio = m.laplace_ratio(spec)
    n = 800
    r_ppr = [np.linalg.norm(decode(prop, encode(PprParams(2.0), prop, ratio, i, SeededStream(5, i)).k, i) - x)
             for i in range(n)]
    st_ = SeededStream(6)
    r_dir = [np.linalg.norm(m.laplace_sample_direct(spec, st_) - x) for _ in range(4 * n)]
    assert stats.ks_2samp(r_ppr, r_dir).pvalue > 1e-3


def test_laplace_ratio_certified():
    rng = np.random.default_rng(2)
    spec = m.LaplaceMechSpec([0.6, -0.5, 0.2], 1.5, 1.0)
    prop, ratio = m.laplace_ratio(spec)
    z = np.concatenate([rng.normal(scale=s, size=(2000, 3)) for s in (0.3, 1, 3, 10, 50)])
    assert max(ratio.log_ratio(zz) for zz in z) <= math.log(ratio.r_star)


def test_ell_formulas():
    assert eta_alpha(3) == pytest.approx(1.832, abs=1e-3)
    d, eta = 7, eta_alpha(2.5)
    assert m.gaussian_ppr_ell(1.0, d, d, 1.0, 2.5) == pytest.approx(d / 2 + eta)
    # Laplace d = 1 by direct evaluation with Gamma(2)/Gamma(1.5)
    C, eps = 1.0, 2.0
    want = 0.5 * math.log2(2 / math.e * (C * C * eps * eps + 2)) - math.log2(math.gamma(2) / math.gamma(1.5)) + eta
    assert m.laplace_ppr_ell(C, eps, 1, 2.5) == pytest.approx(want)
    assert m.generic_compression_bound(0, 3) == pytest.approx(eta_alpha(3))
    assert m.generic_compression_bound(1, 3) == pytest.approx(3.275, abs=1e-3)
    assert m.generic_compression_bound(2, 3) > m.generic_compression_bound(1, 3)
    assert m.total_bits(3.0) == pytest.approx(3 + 2 + 2)


def test_privacy_report_routes():
    small = m.gaussian_privacy_report(sigma=60.0, C=1.0, n=4, delta=1e-5, alpha=2)
    assert small.route == "classic" and small.local_eps == pytest.approx(2 * 2 * 2 * small.central_eps)
    assert small.local_delta == 2e-5
    big = m.gaussian_privacy_report(sigma=4.53, C=1.0, n=500, delta=1e-6, alpha=2)
    assert big.route == "renyi" and big.local_eps > big.central_eps


def test_discrete_laplace_baseline():
    assert m.discrete_laplace_bits(2, 1.0, 0.5) == 4 == math.ceil(math.log2(math.pi / 0.25))
    u = m.discrete_laplace_step(2, 1.0, 10)
    assert m.discrete_laplace_bits(2, 1.0, u) <= 10
    st_ = SeededStream(21)
    x = np.array([0.5, 0.0])
    zs = np.array([m.discrete_laplace_baseline(x, 0.5, 1.0, 2, 12, st_) for _ in range(20000)])
    assert np.all(np.linalg.norm(zs, axis=1) <= 1.0 + 2 * u)
    # projection onto the ball pulls the mean toward the origin
    assert zs.mean(0)[0] < 0.5 - 0.1


def test_csgm_anchors():
    n, d = 500, 1000
    q = m.csgm_q(50, d)
    sigma = m.csgm_sigma(1.0, 1e-6, q, d)
    assert m.csgm_epsilon(sigma, q, d, 1e-6) == pytest.approx(1.0, abs=1e-6)
    assert m.csgm_mse(n, d, q, sigma) == pytest.approx(0.1231, rel=0.10)
    full = m.csgm_sigma(1.0, 1e-6, 1.0, d)
    assert m.csgm_mse(n, d, 1.0, full) == pytest.approx(full ** 2 * d / n ** 2)
    # with q = 1 the accountant is the plain Gaussian one
    assert full * math.sqrt(d) / math.sqrt(d) == pytest.approx(4.530877, rel=2e-3)
    with pytest.raises(ValueError):
        m.csgm_q(0.5, d)


def test_csgm_unbiased():
    n, d, q, sigma = 40, 20, 0.3, 0.5
    bound = 1 / math.sqrt(d)
    rng = np.random.default_rng(4)
    x = rng.choice([-bound, bound], size=(n, d)) * rng.uniform(0, 1, size=(n, d))
    st_ = SeededStream(31)
    est = np.array([m.csgm_estimate([m.csgm_encode(xi, q, bound, st_) for xi in x], n, d, q, bound, sigma, st_)
                    for _ in range(3000)])
    se = est.std(0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(est.mean(0) - x.mean(0)) < 4 * se)
