"""Acceptance checks, one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` or
``python3 tests/test_acceptance.py``.  The mean-estimation check
dominates the runtime (about 20 minutes on one core); set
PPRSIM_WORKERS to spread its trials over processes.
"""
import math
import sys
import time

import numpy as np
import pytest
from scipy import stats

from pprsim import adn, dme_cli, mechanisms as mech, secrecy
from pprsim.intcodes import (choose_lambda, elias_delta_decode, elias_delta_encode, elias_delta_length,
                             zipf_shannon_length)
from pprsim.ppr import (DensityRatio, GaussianProposal, GaussianRatio, PprParams, conditional_index_pmf, decode,
                        encode, eta_alpha)
from pprsim.rng import SeededStream, draw_exp

RESULTS = {}


def report(name, ok, detail, t0):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({time.perf_counter() - t0:.1f}s)"
    RESULTS[name] = ok
    print(line, file=sys.__stdout__, flush=True)
    return ok


# ------------------------------------------------------------ criteria

def ppr_exactness():
    t0 = time.perf_counter()
    n = 100_000
    prop1, rat1 = GaussianProposal(1, 4.0), GaussianRatio([1.0], 1.0, 4.0)
    z1 = np.array([encode(PprParams(2.0), prop1, rat1, SeededStream(101, i), SeededStream(102, i)).z[0]
                   for i in range(n)])
    pvals = {"1d": stats.kstest(z1, "norm", args=(1.0, 1.0)).pvalue}
    x = np.array([0.5, -0.3, 0.2, 0.1])
    vp, vq = 0.25, 0.25 + 0.5
    prop4, rat4 = GaussianProposal(4, vq), GaussianRatio(x, vp, vq)
    z4 = np.array([encode(PprParams(2.0), prop4, rat4, SeededStream(103, i), SeededStream(104, i)).z
                   for i in range(n)])
    pvals["4d_chi2"] = stats.kstest(np.sum((z4 - x) ** 2, axis=1) / vp, "chi2", args=(4,)).pvalue
    for j in range(4):
        pvals[f"4d_coord{j}"] = stats.kstest(z4[:, j], "norm", args=(x[j], math.sqrt(vp))).pvalue
    ok = min(pvals.values()) > 1e-3
    return report("PPR exactness", ok, "min p = %.3g over %s" % (min(pvals.values()), sorted(pvals)), t0)


def _kl_pair(target_bits):
    """(proposal, ratio, exact KL in bits) for a Gaussian pair with the requested KL."""
    if target_bits == 0:
        return GaussianProposal(1, 1.0), DensityRatio(lambda z: 1.0, 1.0), 0.0
    # a wide proposal keeps the peak ratio (and so the encoding time) modest
    vp, vq = 1.0, 4.0
    per_dim = 0.5 * (vp / vq - 1 + math.log(vq / vp)) / math.log(2)
    d = 1 if target_bits < 4 * per_dim else 4
    base = d * per_dim
    shift2 = max(0.0, (target_bits - base) * 2 * math.log(2) * vq)
    x = np.zeros(d)
    x[0] = math.sqrt(shift2)
    rat = GaussianRatio(x, vp, vq)
    return GaussianProposal(d, vq), rat, rat.kl_bits()


def compression_bound():
    t0 = time.perf_counter()
    targets = np.linspace(0, 8, 10)
    worst = -math.inf
    n = 2000
    for ti, target in enumerate(targets):
        prop, rat, kl = _kl_pair(target)
        for alpha in (1.5, 2.0, 3.0):
            lk = np.array([math.log2(encode(PprParams(alpha), prop, rat, SeededStream(200 + ti, i),
                                            SeededStream(300 + ti, i)).k) for i in range(n)])
            slack = lk.mean() - (kl + eta_alpha(alpha) + 3 * lk.std(ddof=1) / math.sqrt(n))
            worst = max(worst, slack)
    ok = worst <= 0
    return report("Compression bound", ok, f"max(mean log2K - bound - 3se) = {worst:.3f} over 10 pairs x 3 alphas", t0)


def conditional_privacy_ratio():
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for eps in (0.1, 0.5, 1.0, 2.0):
        for alpha in (1.5, 2.0, 3.0):
            for rep in range(84):
                s = SeededStream(4000 + count)
                count += 1
                m = 60
                t = np.cumsum(draw_exp(s, m))
                z = 2.0 * np.sqrt(-2 * np.log(s.uniform(m))) * np.cos(2 * math.pi * s.uniform(m))
                xa, xb = s.uniform(2)
                logq = -z * z / 8 - 0.5 * math.log(8 * math.pi)
                # 1-D Laplace densities at inputs within unit distance: pointwise eps-close
                ra = np.exp(math.log(eps / 2) - eps * np.abs(z - xa) - logq)
                rb = np.exp(math.log(eps / 2) - eps * np.abs(z - xb) - logq)
                pa = conditional_index_pmf(t / ra, alpha).probs
                pb = conditional_index_pmf(t / rb, alpha).probs
                worst = max(worst, float(np.max(np.log(pa / pb)) / (2 * alpha * eps)))
    ok = count >= 1000 and worst <= 1 + 1e-12
    return report("Conditional privacy ratio", ok,
                  f"{count} processes, max log-ratio / (2 alpha eps) = {worst:.4f}", t0)


def prefix_codes():
    t0 = time.perf_counter()
    top = 1 << 16
    stream = "".join(elias_delta_encode(k) for k in range(1, top + 1))
    pos, ok_rt = 0, True
    for k in range(1, top + 1):
        v, pos = elias_delta_decode(stream, pos)
        ok_rt &= v == k
    kraft = sum(2.0 ** -elias_delta_length(k) for k in range(1, top + 1))
    prop, rat, kl = _kl_pair(4.0)
    ks = np.array([encode(PprParams(2.0), prop, rat, SeededStream(500, i), SeededStream(501, i)).k
                   for i in range(20000)])
    e = float(np.mean(np.log2(ks)))
    lam = choose_lambda(e)
    mean_len = float(np.mean([zipf_shannon_length(int(k), lam) for k in ks]))
    ok = ok_rt and pos == len(stream) and kraft <= 1 and mean_len <= e + math.log2(e + 1) + 2
    return report("Prefix codes", ok, f"roundtrip={ok_rt}, Kraft={kraft:.6f}, Zipf mean {mean_len:.3f} <= "
                                      f"{e + math.log2(e + 1) + 2:.3f}", t0)


def dme_anchors():
    t0 = time.perf_counter()
    checks = []
    for eps, bits, ref_ppr, ref_csgm in ((1.0, 50, 0.08173, 0.1231), (0.5, 25, 0.3011, 0.3877)):
        r = dme_cli.run_ppr_dme(dme_cli.DmeConfig(eps=eps, bit_budget=bits, trials=200, seed=1))
        c = dme_cli.run_csgm_dme(dme_cli.DmeConfig(eps=eps, bit_budget=bits, trials=200, seed=1, mechanism="csgm"))
        checks.append((f"PPR eps={eps}", r.mse, ref_ppr, abs(r.mse / ref_ppr - 1) <= 0.1))
        checks.append((f"CSGM eps={eps}", c.mse, ref_csgm, abs(c.mse / ref_csgm - 1) <= 0.1))
    f = dme_cli.run_ppr_dme(dme_cli.DmeConfig(eps=2.0, bit_budget=None, trials=200, seed=2))
    gauss = f.sigma ** 2 * 1000 / 500 ** 2
    checks.append(("full budget", f.mse, gauss, abs(f.mse - gauss) <= 3 * f.mse_stderr))
    ok = all(c[3] for c in checks)
    detail = "; ".join(f"{name} {got:.5f} vs {want:.5f}" for name, got, want, _ in checks)
    return report("DME anchors", ok, detail, t0)


def laplace_mechanism():
    t0 = time.perf_counter()
    parts = []
    ok = True
    for d, eps in ((2, 1.0), (10, 2.0), (50, 1.0)):
        spec = mech.LaplaceMechSpec(np.zeros(d), eps, 1.0)
        st = SeededStream(600, d)
        err = np.array([np.sum(mech.laplace_sample_direct(spec, st) ** 2) for _ in range(100_000)])
        se = err.std(ddof=1) / math.sqrt(err.size)
        good = abs(err.mean() - mech.laplace_mse(d, eps)) <= 3 * se
        ok &= good
        parts.append(f"d={d}: {err.mean():.3f} vs {mech.laplace_mse(d, eps):.3f}")
    for d, eps in ((2, 1.0), (6, 2.0)):
        x = np.zeros(d)
        x[0] = 0.7
        spec = mech.LaplaceMechSpec(x, eps, 1.0)
        prop, ratio = mech.laplace_ratio(spec)
        r_ppr = [np.linalg.norm(decode(prop, encode(PprParams(2.0), prop, ratio, 700 + i, SeededStream(701, i)).k,
                                       700 + i) - x) for i in range(1500)]
        st = SeededStream(702, d)
        r_dir = [np.linalg.norm(mech.laplace_sample_direct(spec, st) - x) for _ in range(6000)]
        p = stats.ks_2samp(r_ppr, r_dir).pvalue
        ok &= p > 1e-3
        parts.append(f"KS d={d} p={p:.3g}")
    return report("Laplace mechanism", ok, "; ".join(parts), t0)


def adn_dominance():
    t0 = time.perf_counter()
    presets = adn.reference_presets()
    names = ["p2p_bsc", "gelfand_pinsker", "wyner_ziv", "mac", "broadcast", "relay", "cascade"]
    ok = True
    parts = []
    for i, name in enumerate(names):
        p = presets[name]
        j = p.joint()
        bound = adn.bound_total(p.net, p.spec, p.error, joint=j)
        res = adn.run_scheme(p.net, p.spec, p.error, 900 + i, 100_000, joint=j)
        good = res.error_rate <= res.failure_rate <= bound + 3 * res.failure_stderr
        ok &= good
        parts.append(f"{name} {res.failure_rate:.4f}<={bound:.4f}")
    p = presets["relay"]
    j = p.joint()
    n = 100_000
    mc = adn.bound_total(p.net, p.spec, p.error, mc_samples=n, seed=5, joint=j)
    exact = adn.bound_total(p.net, p.spec, p.error, joint=j)
    cor = p.corollary(j)
    se = math.sqrt(max(mc * (1 - mc), 1e-12) / n)  # values lie in [0, 1]
    relay_ok = abs(mc - cor) <= 3 * se and abs(exact - cor) <= 1e-10
    ok &= relay_ok
    parts.append(f"relay MC bound {mc:.4f} vs corollary {cor:.4f}")
    return report("ADN bound dominance", ok, "; ".join(parts), t0)


def covering():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    chans = [rng.dirichlet(np.ones(2), size=2).T for _ in range(100)]
    cover = secrecy.greedy_cover(chans, 0.25)
    valid = all(min(secrecy.channel_distance(c, chans[j]) for j in cover) <= 0.25 for c in chans)
    ok = valid and len(cover) <= secrecy.covering_bound(2, 2, 0.25)
    return report("Covering machinery", ok, f"cover size {len(cover)} <= 150.0625, valid={valid}", t0)


def secrecy_dominance():
    t0 = time.perf_counter()
    ok = True
    worst_h = worst_w = -math.inf
    for i in range(20):
        spec = secrecy.random_hiding_instance(1000 + i)
        bound = secrecy.hiding_bound(spec, 0.05)
        for a in range(len(spec.attacks)):
            rate, se = secrecy.hiding_run(spec, a, 20000, 1000 + i)
            worst_h = max(worst_h, rate - bound - 3 * se)
        wt = secrecy.random_wiretap_instance(2000 + i, L=2, A=16, B=4)
        wbound = secrecy.wiretap_bound(wt)
        for pair in ((0, 0), (0, 1), (1, 0), (1, 1)):
            pe, se_e, tv, se_t = secrecy.wiretap_run(wt, pair, 100_000, 2000 + i)
            worst_w = max(worst_w, pe + wt.nu * tv - wbound - 3 * se_e - 5 * wt.nu * se_t)
    ok = worst_h <= 0 and worst_w <= 0
    return report("Secrecy bound dominance", ok,
                  f"max hiding slack {worst_h:.3f}, max wiretap slack {worst_w:.3f} over 20 instances each", t0)


CRITERIA = [ppr_exactness, compression_bound, conditional_privacy_ratio, prefix_codes, dme_anchors,
            laplace_mechanism, adn_dominance, covering, secrecy_dominance]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[c.__name__ for c in CRITERIA])
def test_criterion(criterion):
    assert criterion()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
