import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from pprsim import dme_cli as dc
from pprsim.mechanisms import csgm_mse, csgm_sigma, gaussian_sigma_rdp, laplace_mse, laplace_ppr_ell, total_bits

GOLDEN = json.loads((Path(__file__).parent / "golden" / "csv_headers.json").read_text())
SMALL = dict(n=40, d=24, chunk_dim=4)


def whole_cost(eps, C=1.0, n=500, d=1000, delta=1e-6, alpha=2.0):
    s = gaussian_sigma_rdp(C, eps, delta)
    ell = d / 2 * math.log2(C * C * n / (d * s * s) + 1) + math.log2(3.56) / min((alpha - 1) / 2, 1)
    return ell + math.log2(ell + 1) + 2


# ------------------------------------------------------------------ data

def test_gen_clients_law():
    x = dc.gen_clients(400, 250, 1)
    assert set(np.unique(x)) == {-1.0, 1.0}
    se = math.sqrt(1 - 0.6 ** 2) / math.sqrt(x.size)
    assert abs(x.mean() - 0.6) < 4 * se
    assert np.array_equal(x, dc.gen_clients(400, 250, 1))
    assert not np.array_equal(x, dc.gen_clients(400, 250, 2))


def test_client_vectors_in_ball():
    cfg = dc.DmeConfig(**SMALL, C=2.0)
    assert np.allclose(np.linalg.norm(dc.client_vectors(cfg), axis=1), 2.0)


@pytest.mark.parametrize("bad", [dict(chunk_dim=0), dict(chunk_dim=2000), dict(bit_budget=0.5), dict(delta=1.0),
                                 dict(delta=0.0), dict(mechanism="rr"), dict(eps=0), dict(alpha=1.0),
                                 dict(budget_mode="x"), dict(trials=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        dc.DmeConfig(**bad)


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError):
        dc.DmeConfig.from_dict({"n": 3, "colour": 1})
    assert dc.DmeConfig.from_dict({"n": 3, "d": 8}).n_chunks == 2
    assert dc.DmeConfig(d=10, chunk_dim=4).chunk_sizes() == [4, 4, 2]


# --------------------------------------------------------- budget search

def test_budget_not_binding_at_anchor_points():
    assert whole_cost(1.0) <= 50 and whole_cost(0.5) <= 25
    assert dc.ppr_budget_eps(dc.DmeConfig(eps=1.0, bit_budget=50)) == 1.0
    assert dc.ppr_budget_eps(dc.DmeConfig(eps=0.5, bit_budget=25)) == 0.5
    assert dc.ppr_cost_bits(dc.DmeConfig(), 1.0) == pytest.approx(whole_cost(1.0), rel=1e-12)


def test_budget_search_binding():
    cfg = dc.DmeConfig(eps=6.0, bit_budget=50)
    e = dc.ppr_budget_eps(cfg)
    assert e < 6.0
    assert whole_cost(e) <= 50 < whole_cost(e * (1 + 1e-6))


def test_budget_search_sliced_mode():
    cfg = dc.DmeConfig(**SMALL, eps=4.0, bit_budget=55, budget_mode="sliced")
    e = dc.ppr_budget_eps(cfg)
    assert e < 4.0
    assert dc.ppr_cost_bits(cfg, e) <= 55 < dc.ppr_cost_bits(cfg, e * (1 + 1e-6))


def test_infeasible_budget():
    with pytest.raises(dc.BudgetError):
        dc.ppr_budget_eps(dc.DmeConfig(bit_budget=5))
    with pytest.raises(dc.BudgetError):
        dc.ppr_budget_eps(dc.DmeConfig(**SMALL, bit_budget=30, budget_mode="sliced"))


# ----------------------------------------------------------------- runs

@pytest.fixture(scope="module")
def full_budget_run():
    return dc.run_ppr_dme(dc.DmeConfig(**SMALL, eps=1.0, trials=300, seed=4))


def test_full_budget_mse_is_gaussian(full_budget_run):
    r = full_budget_run
    want = r.sigma ** 2 * SMALL["d"] / SMALL["n"] ** 2
    assert abs(r.mse - want) <= 3 * r.mse_stderr


def test_bits_within_zipf_bound(full_budget_run):
    r = full_budget_run
    assert 0 < r.bits_mean <= r.extra["chunk_bits_bound"]
    assert r.points_mean >= 1


def test_privacy_report_fields(full_budget_run):
    r = full_budget_run
    assert r.central_eps == pytest.approx(1.0, rel=1e-6)
    assert r.local_delta == pytest.approx(2e-6)
    assert r.local_eps > r.central_eps


def test_ppr_run_deterministic():
    cfg = dc.DmeConfig(**SMALL, trials=3, seed=8)
    a, b = dc.run_ppr_dme(cfg), dc.run_ppr_dme(cfg)
    assert (a.mse, a.bits_mean) == (b.mse, b.bits_mean)
    c = dc.run_ppr_dme(dc.DmeConfig(**SMALL, trials=3, seed=9))
    assert c.mse != a.mse


def test_workers_do_not_change_results(monkeypatch):
    cfg = dc.DmeConfig(**SMALL, trials=4, seed=2)
    one = dc.run_ppr_dme(cfg)
    monkeypatch.setenv(dc.WORKERS_ENV, "2")
    two = dc.run_ppr_dme(cfg)
    assert (one.mse, one.bits_mean) == (two.mse, two.bits_mean)


@pytest.mark.parametrize("budget", [None, 12])
def test_csgm_mse_matches_formula(budget):
    cfg = dc.DmeConfig(**SMALL, eps=1.0, bit_budget=budget, trials=400, mechanism="csgm")
    r = dc.run_csgm_dme(cfg)
    q = r.extra["q"]
    assert abs(r.mse - csgm_mse(cfg.n, cfg.d, q, r.sigma)) <= 4 * r.mse_stderr
    assert abs(r.bits_mean - q * cfg.d) < 0.5


def test_csgm_full_budget_is_gaussian_calibration():
    cfg = dc.DmeConfig(eps=1.0, mechanism="csgm", trials=1)
    assert csgm_sigma(1.0, 1e-6, 1.0, 1000) == pytest.approx(gaussian_sigma_rdp(1.0, 1.0, 1e-6), rel=1e-3)
    assert dc.run_dme(cfg).mechanism == "csgm"
    with pytest.raises(ValueError):
        dc.run_dme(dc.DmeConfig(mechanism="ppr_laplace"))


# -------------------------------------------------------------- metric

def test_metric_ppr_side_closed_form():
    cfg = dc.DmeConfig(d=50, C=100.0, eps=0.3, bit_budget=500, trials=10, mechanism="ppr_laplace")
    ppr, disc = dc.run_metric_experiment(cfg)
    assert ppr.eps_used == 0.3
    assert ppr.mse == pytest.approx(50 * 51 / 0.09)
    assert ppr.bits_mean == pytest.approx(total_bits(laplace_ppr_ell(100.0, 0.3, 50, 2.0)))
    assert ppr.metric_coef == pytest.approx(1.2)
    assert disc.bits_mean <= 500


def test_metric_budget_binding():
    cfg = dc.DmeConfig(d=500, C=1e4, eps=2.0, bit_budget=1000, trials=5, mechanism="ppr_laplace")
    ppr, _ = dc.run_metric_experiment(cfg)
    assert ppr.eps_used < 2.0
    assert ppr.bits_mean <= 1000 < total_bits(laplace_ppr_ell(1e4, ppr.eps_used * (1 + 1e-6), 500, 2.0))
    assert ppr.mse == pytest.approx(laplace_mse(500, ppr.eps_used))


def test_discrete_laplace_bias_points_inward():
    cfg = dc.DmeConfig(d=20, C=10.0, eps=0.05, bit_budget=200, trials=2000, mechanism="discrete_laplace")
    _, disc = dc.run_metric_experiment(cfg)
    assert disc.extra["radial_bias"] + 4 * disc.extra["radial_bias_stderr"] < 0


# ----------------------------------------------------------------- CLI

def _run(tmp_path, args, conf):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(conf))
    out = tmp_path / "out.csv"
    rc = dc.cli_main(args + ["--config", str(cfg), "--out", str(out)])
    return rc, out


CLI_CASES = {
    "dme": {"n": 20, "d": 8, "trials": 2, "eps": [1.0], "bit_budget": [None, 30]},
    "metric": {"d": 10, "C": 5.0, "trials": 20, "eps": 0.5, "bit_budget": 40},
    "adn": {"presets": ["p2p"], "trials": 300},
    "secrecy": {"instances": 1, "trials": 300},
    "ppr-bench": {"trials": 5, "eps": 1.0},
}


@pytest.mark.parametrize("cmd", sorted(CLI_CASES))
def test_cli_golden_headers(cmd, tmp_path):
    rc, out = _run(tmp_path, [cmd], CLI_CASES[cmd])
    assert rc == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == GOLDEN[cmd]
    assert len(rows) > 1 and all(len(r) == len(rows[0]) for r in rows)
    summary = json.loads((tmp_path / "out.csv.json").read_text())
    assert summary["command"] == cmd and summary["schema_version"] == 1


def test_cli_seed_determinism(tmp_path):
    conf = {"n": 20, "d": 8, "trials": 2, "mechanisms": ["ppr_gaussian"]}

    def mse(seed, sub):
        d = tmp_path / sub
        d.mkdir()
        _, out = _run(d, ["dme", "--seed", str(seed)], conf)
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        return [r["mse"] for r in rows]
    assert mse(5, "a") == mse(5, "b")
    assert mse(5, "a2") != mse(6, "c")


@pytest.mark.parametrize("argv,conf", [
    (["dme", "--bogus"], {}),
    (["dme"], {"colour": 3}),
    (["dme"], {"bit_budget": 3, "trials": 1}),
    (["adn"], {"presets": ["nonexistent"]}),
    (["secrecy"], {"kind": "nonexistent", "instances": 1}),
])
def test_cli_errors(argv, conf, tmp_path, capsys):
    rc, out = _run(tmp_path, argv, conf)
    assert rc != 0
    assert not out.exists() or out.read_text() == ""


def test_cli_malformed_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert dc.cli_main(["dme", "--config", str(bad)]) != 0
    assert dc.cli_main(["frobnicate"]) != 0
