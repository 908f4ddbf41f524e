"""Mean-estimation and metric-privacy experiments, plus the command-line front end.

Experiment configs are plain JSON objects; see the README for the key
schema.  Every run is a pure function of its config and seed.
"""
import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from numba import njit
from scipy import special

from . import adn, secrecy
from .intcodes import choose_lambda
from .mechanisms import (
    LaplaceMechSpec, csgm_q, csgm_sigma, discrete_laplace_baseline, discrete_laplace_bits,
    discrete_laplace_step, gaussian_ppr_ell, gaussian_privacy_report, gaussian_sigma_rdp,
    laplace_mse, laplace_ppr_ell, total_bits,
)
from .ppr import GaussianProposal, GaussianRatio, PprParams, encode, eta_alpha, gauss_ppr_kernel
from .rng import SeededStream, draw_gaussian_vec, draw_sphere_uniform, fill_gaussian

MECHANISMS = ("ppr_gaussian", "csgm", "discrete_laplace", "ppr_laplace")
WORKERS_ENV = "PPRSIM_WORKERS"
SCHEMA_VERSION = 1

# substream families
_DATA_SUB = 1 << 60
_CSGM_SUB = 1 << 59
_METRIC_SUB = 1 << 58


class BudgetError(ValueError):
    """No positive epsilon fits the communication budget."""


@dataclass
class DmeConfig:
    n: int = 500
    d: int = 1000
    C: float = 1.0
    eps: float = 1.0
    delta: float = 1e-6
    alpha: float = 2.0
    chunk_dim: int = 4
    bit_budget: float = None      # None means unlimited
    trials: int = 200
    seed: int = 0
    mechanism: str = "ppr_gaussian"
    budget_mode: str = "whole"    # "whole": bound for the full vector, "sliced": sum over chunks
    x_radius: float = 0.5         # metric experiment: ||x|| / C

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.n < 1 or self.d < 1 or self.trials < 1:
            raise ValueError("n, d and trials must be positive")
        if not 1 <= self.chunk_dim <= self.d:
            raise ValueError("chunk_dim must lie in [1, d]")
        if self.bit_budget is not None and not self.bit_budget >= 1:
            raise ValueError("bit_budget must be at least 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not (self.eps > 0 and self.C > 0 and self.alpha > 1):
            raise ValueError("eps and C must be positive and alpha > 1")
        if self.budget_mode not in ("whole", "sliced"):
            raise ValueError("budget_mode must be 'whole' or 'sliced'")
        if not 0 <= self.x_radius <= 1:
            raise ValueError("x_radius must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @property
    def n_chunks(self):
        return -(-self.d // self.chunk_dim)

    def chunk_sizes(self):
        full, rest = divmod(self.d, self.chunk_dim)
        return [self.chunk_dim] * full + ([rest] if rest else [])


@dataclass
class TrialReport:
    mechanism: str
    eps_target: float
    eps_used: float
    mse: float
    mse_stderr: float
    bits_mean: float
    bits_bound: float
    central_eps: float = math.nan
    central_delta: float = math.nan
    local_eps: float = math.nan
    local_delta: float = math.nan
    metric_coef: float = math.nan
    sigma: float = math.nan
    wall_time: float = 0.0
    points_mean: float = math.nan
    points_max: float = math.nan
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mse < 0 or self.bits_mean < 0:
            raise ValueError("mse and bits must be non-negative")


# ------------------------------------------------------------------ data

def gen_clients(n, d, seed):
    """n x d matrix of i.i.d. 2 Ber(0.8) - 1 entries."""
    u = SeededStream(seed, _DATA_SUB).uniform((n, d))
    return np.where(u < 0.8, 1.0, -1.0)


def client_vectors(cfg):
    """Client data scaled into the C-ball."""
    return gen_clients(cfg.n, cfg.d, cfg.seed) * (cfg.C / math.sqrt(cfg.d))


# --------------------------------------------------------- budget search

def _largest_eps(cost, eps, budget):
    """Largest e <= eps with cost(e) <= budget, for cost increasing in e."""
    if budget is None or cost(eps) <= budget:
        return eps
    lo = eps
    for _ in range(60):
        lo /= 4
        if cost(lo) <= budget:
            break
    else:
        raise BudgetError(f"no epsilon > 0 fits a budget of {budget} bits")
    hi = eps
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cost(mid) <= budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * hi:
            break
    return lo


def _chunk_ell(cfg, sigma, m):
    return gaussian_ppr_ell(cfg.C * math.sqrt(m / cfg.d), cfg.n, m, sigma, cfg.alpha)


def ppr_cost_bits(cfg, eps):
    """Communication bound per client when simulating the (eps, delta) Gaussian mechanism."""
    sigma = gaussian_sigma_rdp(cfg.C, eps, cfg.delta)
    if cfg.budget_mode == "whole":
        return total_bits(gaussian_ppr_ell(cfg.C, cfg.n, cfg.d, sigma, cfg.alpha))
    return sum(total_bits(_chunk_ell(cfg, sigma, m)) for m in cfg.chunk_sizes())


def ppr_budget_eps(cfg):
    floor = total_bits(eta_alpha(cfg.alpha))
    if cfg.budget_mode == "sliced":
        floor *= cfg.n_chunks
    if cfg.bit_budget is not None and cfg.bit_budget < floor:
        raise BudgetError(f"budget {cfg.bit_budget} is below the {floor:.2f}-bit floor")
    return _largest_eps(lambda e: ppr_cost_bits(cfg, e), cfg.eps, cfg.bit_budget)


# ----------------------------------------------------------------- PPR

@njit(cache=True)
def _sliced_ppr_trial(alpha, X, chunk, var_p, var_q, seed, base, est, ks, pops):
    """Encode every chunk of every client and add the decoded samples into ``est``."""
    n, d = X.shape
    nch = (d + chunk - 1) // chunk
    sq = math.sqrt(var_q)
    for i in range(n):
        for c in range(nch):
            lo = c * chunk
            hi = min(d, lo + chunk)
            m = hi - lo
            x = X[i, lo:hi].copy()
            lc = 0.5 * m * math.log(var_q / var_p)
            lrs = lc + (x @ x) / (2 * (var_q - var_p))
            sub = np.uint64(2 * (base + i * nch + c))
            k, cov, popped, lw, ctr = gauss_ppr_kernel(alpha, x, var_p, var_q, lc, lrs,
                                                       seed, sub, seed, sub + np.uint64(1), 0, 0)
            if k < 1:
                raise RuntimeError("ratio bound violated")
            # decoder side: regenerate the k-th shared proposal sample
            z = np.empty(m)
            fill_gaussian(seed, sub, (k - 1) * (2 * ((m + 1) // 2)), z)
            for j in range(m):
                est[lo + j] += sq * z[j]
            ks[i * nch + c] = k
            pops[i * nch + c] = popped


def _ppr_trials(args):
    cfg, X, sigma, lo, hi = args
    n, d = X.shape
    nch = cfg.n_chunks
    var_p = sigma ** 2 / n
    var_q = cfg.C ** 2 / d + var_p
    mu = X.mean(axis=0)
    sizes = np.array(cfg.chunk_sizes())
    lams = np.array([choose_lambda(_chunk_ell(cfg, sigma, m)) for m in sizes])
    log_zeta = np.log2(special.zeta(lams))
    out = []
    ks = np.zeros(n * nch, dtype=np.int64)
    pops = np.zeros(n * nch, dtype=np.int64)
    for t in range(lo, hi):
        est = np.zeros(d)
        _sliced_ppr_trial(cfg.alpha, X, cfg.chunk_dim, var_p, var_q, np.uint64(cfg.seed), t * n * nch, est, ks, pops)
        est /= n
        kk = ks.reshape(n, nch)
        bits = np.ceil(lams * np.log2(kk) + log_zeta).sum(axis=1)
        out.append((float(np.sum((est - mu) ** 2)), float(bits.mean()), float(np.log2(kk).mean()),
                    float(pops.mean()), int(pops.max())))
    return out


def _workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map_trials(fn, cfg, payload):
    w = min(_workers(), cfg.trials)
    cuts = np.linspace(0, cfg.trials, w + 1).astype(int)
    jobs = [payload + (int(a), int(b)) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
    if w == 1:
        return [r for j in jobs for r in fn(j)]
    with ProcessPoolExecutor(w) as ex:
        return [r for part in ex.map(fn, jobs) for r in part]


def _mean_se(a):
    a = np.asarray(a, dtype=float)
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0


def run_ppr_dme(cfg):
    t0 = time.perf_counter()
    eps_used = ppr_budget_eps(cfg)
    sigma = gaussian_sigma_rdp(cfg.C, eps_used, cfg.delta)
    X = client_vectors(cfg)
    rows = _map_trials(_ppr_trials, cfg, (cfg, X, sigma))
    mse, se = _mean_se([r[0] for r in rows])
    rep = gaussian_privacy_report(sigma, cfg.C, cfg.n, cfg.delta, cfg.alpha)
    chunk_bound = sum(total_bits(_chunk_ell(cfg, sigma, m)) for m in cfg.chunk_sizes())
    return TrialReport(
        "ppr_gaussian", cfg.eps, eps_used, mse, se, float(np.mean([r[1] for r in rows])),
        ppr_cost_bits(cfg, eps_used), rep.central_eps, rep.central_delta, rep.local_eps, rep.local_delta,
        sigma=sigma, wall_time=time.perf_counter() - t0,
        points_mean=float(np.mean([r[3] for r in rows])), points_max=float(max(r[4] for r in rows)),
        extra={"mse_gaussian": sigma ** 2 * cfg.d / cfg.n ** 2, "mean_log2k": float(np.mean([r[2] for r in rows])),
               "chunk_bits_bound": chunk_bound, "privacy_route": rep.route})


# ---------------------------------------------------------------- CSGM

def _csgm_trials(args):
    cfg, X, q, sigma, lo, hi = args
    n, d = X.shape
    bound = cfg.C / math.sqrt(d)
    mu = X.mean(axis=0)
    out = []
    for t in range(lo, hi):
        st = SeededStream(cfg.seed, _CSGM_SUB + t)
        u = st.uniform((2, n, d))
        keep = u[0] < q
        up = u[1] < (1 + X / bound) / 2
        total = np.where(keep, np.where(up, bound, -bound), 0.0).sum(axis=0)
        est = (total + draw_gaussian_vec(st, d, var=sigma ** 2)) / (n * q)
        out.append((float(np.sum((est - mu) ** 2)), float(keep.sum(axis=1).mean())))
    return out


def run_csgm_dme(cfg):
    t0 = time.perf_counter()
    q = 1.0 if cfg.bit_budget is None else csgm_q(cfg.bit_budget, cfg.d)
    sigma = csgm_sigma(cfg.eps, cfg.delta, q, cfg.d, cfg.C)
    X = client_vectors(cfg)
    rows = _map_trials(_csgm_trials, cfg, (cfg, X, q, sigma))
    mse, se = _mean_se([r[0] for r in rows])
    return TrialReport("csgm", cfg.eps, cfg.eps, mse, se, float(np.mean([r[1] for r in rows])), q * cfg.d,
                       cfg.eps, cfg.delta, sigma=sigma, wall_time=time.perf_counter() - t0,
                       extra={"q": q})


def run_dme(cfg):
    if cfg.mechanism == "ppr_gaussian":
        return run_ppr_dme(cfg)
    if cfg.mechanism == "csgm":
        return run_csgm_dme(cfg)
    raise ValueError("dme runs ppr_gaussian or csgm; use the metric experiment for Laplace mechanisms")


# -------------------------------------------------------- metric privacy

def laplace_budget_eps(cfg):
    return _largest_eps(lambda e: total_bits(laplace_ppr_ell(cfg.C, e, cfg.d, cfg.alpha)), cfg.eps, cfg.bit_budget)


def metric_point(cfg):
    """Fixed input of norm x_radius * C along a seeded random direction."""
    return cfg.x_radius * cfg.C * draw_sphere_uniform(SeededStream(cfg.seed, _DATA_SUB), cfg.d)


def run_metric_experiment(cfg):
    """(PPR-Laplace report, discrete Laplace report) at one (eps, budget) point.

    The PPR side reproduces the Laplace mechanism exactly, so its MSE is the
    closed form at the largest eps' <= eps whose size bound fits the budget.
    The discrete side is simulated at eps itself.
    """
    t0 = time.perf_counter()
    eps_ppr = laplace_budget_eps(cfg)
    ell = laplace_ppr_ell(cfg.C, eps_ppr, cfg.d, cfg.alpha)
    ppr_rep = TrialReport("ppr_laplace", cfg.eps, eps_ppr, laplace_mse(cfg.d, eps_ppr), 0.0, total_bits(ell),
                          total_bits(ell), metric_coef=2 * cfg.alpha * eps_ppr,
                          wall_time=time.perf_counter() - t0, extra={"ell": ell})
    t0 = time.perf_counter()
    if cfg.bit_budget is None:
        raise BudgetError("the discrete Laplace baseline needs a finite bit budget")
    x = metric_point(cfg)
    bits = discrete_laplace_bits(cfg.d, cfg.C, discrete_laplace_step(cfg.d, cfg.C, cfg.bit_budget))
    st = SeededStream(cfg.seed, _METRIC_SUB)
    err, bias = np.empty(cfg.trials), np.empty(cfg.trials)
    direction = x / np.linalg.norm(x) if np.any(x) else np.zeros(cfg.d)
    for t in range(cfg.trials):
        z = discrete_laplace_baseline(x, cfg.eps, cfg.C, cfg.d, cfg.bit_budget, st)
        err[t] = np.sum((z - x) ** 2)
        bias[t] = (z - x) @ direction
    mse, se = _mean_se(err)
    b, bse = _mean_se(bias)
    disc = TrialReport("discrete_laplace", cfg.eps, cfg.eps, mse, se, float(bits), float(cfg.bit_budget),
                       metric_coef=cfg.eps, wall_time=time.perf_counter() - t0,
                       extra={"radial_bias": b, "radial_bias_stderr": bse})
    return ppr_rep, disc


# ------------------------------------------------------------ benchmark

def ppr_bench(eps, chunk, alpha=2.0, n=500, d=1000, delta=1e-6, C=1.0, trials=1000, seed=0):
    """Wall time of encoding one chunk of the mean-estimation workload."""
    sigma = gaussian_sigma_rdp(C, eps, delta)
    var_p = sigma ** 2 / n
    x = np.full(chunk, C / math.sqrt(d))
    ratio = GaussianRatio(x, var_p, C ** 2 / d + var_p)
    prop = GaussianProposal(chunk, ratio.var_q)
    params = PprParams(alpha)
    encode(params, prop, ratio, SeededStream(seed, 0), SeededStream(seed, 1))  # compile
    times, logk = np.empty(trials), np.empty(trials)
    for t in range(trials):
        res = encode(params, prop, ratio, SeededStream(seed, 2 * t + 2), SeededStream(seed, 2 * t + 3))
        times[t], logk[t] = res.wall_time, res.log2k
    tm, ts = _mean_se(times)
    return {"eps": eps, "chunk": chunk, "alpha": alpha, "trials": trials, "time_mean": tm, "time_stderr": ts,
            "vector_time": tm * math.ceil(d / chunk), "mean_log2k": float(logk.mean())}


# ----------------------------------------------------------------- CLI

DME_COLUMNS = ["experiment", "seed", "mechanism", "n", "d", "eps", "delta", "alpha", "chunk_dim", "bit_budget",
               "trials", "eps_used", "sigma", "mse", "mse_stderr", "bits_mean", "bits_bound",
               "central_eps", "central_delta", "local_eps", "local_delta", "wall_time"]
METRIC_COLUMNS = ["experiment", "seed", "mechanism", "d", "C", "eps", "alpha", "bit_budget", "trials",
                  "eps_used", "mse", "mse_stderr", "bits_mean", "metric_coef", "radial_bias", "wall_time"]
ADN_COLUMNS = ["experiment", "seed", "preset", "trials", "bound", "error_rate", "error_stderr",
               "failure_rate", "failure_stderr"]
SECRECY_COLUMNS = ["experiment", "seed", "kind", "instance", "channel", "trials", "bound",
                   "channel_bound", "failure", "failure_stderr", "tv", "tv_stderr"]
BENCH_COLUMNS = ["experiment", "seed", "eps", "chunk", "alpha", "trials", "time_mean", "time_stderr",
                 "vector_time", "mean_log2k"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


class _Writer:
    """CSV sink that writes its header with the first row, or on a clean close."""

    def __init__(self, path, columns):
        self.path, self.columns = path, columns
        self.fh = self.w = None

    def _open(self):
        self.fh = open(self.path, "w", newline="") if self.path else sys.stdout
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(self.columns)

    def row(self, values):
        missing = set(self.columns) - set(values)
        if missing:
            raise KeyError(f"missing columns {sorted(missing)}")
        if self.w is None:
            self._open()
        self.w.writerow([_fmt(values[c]) for c in self.columns])
        self.fh.flush()

    def close(self, ok=True):
        if self.w is None and ok:
            self._open()
        if self.fh is not None and self.fh is not sys.stdout:
            self.fh.close()


def _grid(conf, key, default):
    v = conf.get(key, default)
    return v if isinstance(v, list) else [v]


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        conf = json.load(fh)
    if not isinstance(conf, dict):
        raise ValueError("config must be a JSON object")
    return conf


def _base_cfg(conf, drop):
    return {k: v for k, v in conf.items() if k not in drop}


def _cmd_dme(conf, seed, out):
    w = _Writer(out, DME_COLUMNS)
    base = _base_cfg(conf, {"eps", "bit_budget", "mechanisms"})
    summary = []
    try:
        for mech in _grid(conf, "mechanisms", ["ppr_gaussian", "csgm"]):
            for b in _grid(conf, "bit_budget", None):
                for e in _grid(conf, "eps", 1.0):
                    cfg = DmeConfig.from_dict({**base, "eps": e, "bit_budget": b, "mechanism": mech, "seed": seed})
                    r = run_dme(cfg)
                    w.row({"experiment": "dme", "seed": seed, "mechanism": mech, "n": cfg.n, "d": cfg.d, "eps": e,
                           "delta": cfg.delta, "alpha": cfg.alpha, "chunk_dim": cfg.chunk_dim, "bit_budget": b,
                           "trials": cfg.trials, **{k: getattr(r, k) for k in DME_COLUMNS[11:]}})
                    summary.append(asdict(r))
    except Exception:
        w.close(ok=False)
        raise
    w.close()
    return summary


def _cmd_metric(conf, seed, out):
    w = _Writer(out, METRIC_COLUMNS)
    base = _base_cfg(conf, {"eps", "bit_budget", "mechanism"})
    base.setdefault("d", 500)
    base.setdefault("C", 10000.0)
    base.setdefault("trials", 5000)
    summary = []
    try:
        for b in _grid(conf, "bit_budget", [500, 1000, 1500]):
            for e in _grid(conf, "eps", 1.0):
                cfg = DmeConfig.from_dict({**base, "eps": e, "bit_budget": b, "mechanism": "ppr_laplace",
                                           "seed": seed, "chunk_dim": 1})
                for r in run_metric_experiment(cfg):
                    w.row({"experiment": "metric", "seed": seed, "mechanism": r.mechanism, "d": cfg.d, "C": cfg.C,
                           "eps": e, "alpha": cfg.alpha, "bit_budget": b, "trials": cfg.trials,
                           "eps_used": r.eps_used, "mse": r.mse, "mse_stderr": r.mse_stderr,
                           "bits_mean": r.bits_mean, "metric_coef": r.metric_coef,
                           "radial_bias": r.extra.get("radial_bias"), "wall_time": r.wall_time})
                    summary.append(asdict(r))
    except Exception:
        w.close(ok=False)
        raise
    w.close()
    return summary


def _cmd_adn(conf, seed, out):
    presets = adn.reference_presets()
    names = conf.get("presets", sorted(presets))
    trials = int(conf.get("trials", 10000))
    unknown = set(names) - set(presets)
    if unknown:
        raise ValueError(f"unknown presets {sorted(unknown)}")
    w = _Writer(out, ADN_COLUMNS)
    summary = []
    try:
        for name in names:
            p = presets[name]
            j = p.joint()
            bound = adn.bound_total(p.net, p.spec, p.error, joint=j)
            r = adn.run_scheme(p.net, p.spec, p.error, seed, trials, joint=j)
            row = {"experiment": "adn", "seed": seed, "preset": name, "trials": trials, "bound": bound,
                   "error_rate": r.error_rate, "error_stderr": r.error_stderr,
                   "failure_rate": r.failure_rate, "failure_stderr": r.failure_stderr}
            w.row(row)
            summary.append(row)
    except Exception:
        w.close(ok=False)
        raise
    w.close()
    return summary


def _cmd_secrecy(conf, seed, out):
    kinds = _grid(conf, "kind", ["hiding", "wiretap"])
    instances = int(conf.get("instances", 5))
    trials = int(conf.get("trials", 20000))
    cover_eps = float(conf.get("cover_eps", 0.05))
    wt = conf.get("wiretap", {})
    w = _Writer(out, SECRECY_COLUMNS)
    summary = []
    try:
        for kind in kinds:
            for i in range(instances):
                if kind == "hiding":
                    spec = secrecy.random_hiding_instance(seed + i)
                    bound = secrecy.hiding_bound(spec, cover_eps)
                    for a, ch in enumerate(spec.attacks.channels):
                        p, se = secrecy.hiding_run(spec, a, trials, seed + i)
                        row = {"experiment": "secrecy", "seed": seed, "kind": kind, "instance": i, "channel": a,
                               "trials": trials, "bound": bound,
                               "channel_bound": secrecy.hiding_expectation(spec, ch),
                               "failure": p, "failure_stderr": se, "tv": None, "tv_stderr": None}
                        w.row(row)
                        summary.append(row)
                elif kind == "wiretap":
                    spec = secrecy.random_wiretap_instance(seed + i, **wt)
                    bound = secrecy.wiretap_bound(spec)
                    for d in range(len(spec.decoders)):
                        for e in range(len(spec.eavesdroppers)):
                            pe, se, tv, tse = secrecy.wiretap_run(spec, (d, e), trials, seed + i)
                            cb = (secrecy.wiretap_error_term(spec, spec.decoders[d])
                                  + spec.nu * secrecy.wiretap_secrecy_term(spec, spec.eavesdroppers[e]))
                            row = {"experiment": "secrecy", "seed": seed, "kind": kind, "instance": i,
                                   "channel": f"{d}:{e}", "trials": trials, "bound": bound, "channel_bound": cb,
                                   "failure": pe, "failure_stderr": se, "tv": tv, "tv_stderr": tse}
                            w.row(row)
                            summary.append(row)
                else:
                    raise ValueError(f"unknown secrecy kind {kind!r}")
    except Exception:
        w.close(ok=False)
        raise
    w.close()
    return summary


def _cmd_bench(conf, seed, out, args):
    eps_list = _grid(conf, "eps", [0.05, 1.0, 6.0])
    if args.eps is not None:
        eps_list = [args.eps]
    chunk = args.chunk or conf.get("chunk", 4)
    alpha = args.alpha or conf.get("alpha", 2.0)
    trials = int(conf.get("trials", 1000))
    w = _Writer(out, BENCH_COLUMNS)
    summary = []
    try:
        for e in eps_list:
            r = ppr_bench(e, chunk, alpha, trials=trials, seed=seed)
            row = {"experiment": "ppr-bench", "seed": seed, **r}
            w.row(row)
            summary.append(row)
    except Exception:
        w.close(ok=False)
        raise
    w.close()
    return summary


def _parser():
    p = argparse.ArgumentParser(prog="pprsim", description="Private representation and one-shot coding experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("dme", "metric", "adn", "secrecy", "ppr-bench"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--out", help="CSV output path (default: stdout)")
        s.add_argument("--summary", help="JSON summary path (default: <out>.json)")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        if name == "ppr-bench":
            s.add_argument("--alpha", type=float)
            s.add_argument("--chunk", type=int)
            s.add_argument("--eps", type=float)
    return p


def cli_main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        conf = _load_config(args.config)
        seed = args.seed if args.seed is not None else int(conf.pop("seed", 0))
        conf.pop("seed", None)
        cmds = {"dme": _cmd_dme, "metric": _cmd_metric, "adn": _cmd_adn, "secrecy": _cmd_secrecy}
        if args.command == "ppr-bench":
            summary = _cmd_bench(conf, seed, args.out, args)
        else:
            summary = cmds[args.command](conf, seed, args.out)
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    path = args.summary or (args.out + ".json" if args.out else None)
    if path:
        with open(path, "w") as fh:
            json.dump(_clean({"schema_version": SCHEMA_VERSION, "command": args.command, "seed": seed,
                              "config": conf, "results": summary}), fh, indent=2)
    return 0


def _clean(o):
    """JSON-safe copy: numpy scalars to Python, NaN and inf to null."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else None
    return o


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
