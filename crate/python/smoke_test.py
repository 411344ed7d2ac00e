"""Smoke test for the pycoalitions extension.

Build and install it first:

    pip install maturin
    pip install --no-build-isolation -e crates/py

then run `python python/smoke_test.py` (or `pytest python/smoke_test.py`).
"""

import json
import math
import random
import sys

import pycoalitions as pc


def normal_ppf(q):
    # bisection on erf, independent of the extension's inverse
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * (1.0 + math.erf(mid / math.sqrt(2.0))) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def factor_series(n_agents=40, n_groups=5, hours=2000, seed=1):
    rng = random.Random(seed)
    factors = [[rng.gauss(0, 1) for _ in range(hours)] for _ in range(n_groups)]
    values = []
    for i in range(n_agents):
        f = factors[i % n_groups]
        mu, load, noise = 5.0 + i % 7, 2.0, 1.0
        values.append([mu + load * f[t] + noise * rng.gauss(0, 1) for t in range(hours)])
    return pc.Series(values)


SMALL_CONFIG = {
    "seed": 5,
    "climate": {"synthetic": {"width": 3, "height": 3, "duration_days": 365}},
    "pool": {"random_pool": {"count": 30}},
    "requirements": {"phi": 0.1, "p_min": 0.0, "n_coal": 3},
    "algorithms": {"percolation": True, "random": {"repeats": 5}, "correlated": True},
    "formation": {"k_min": 2},
    "deseasonalize_window_days": 10,
}


def test_contract_math():
    for mu, sigma, phi in [(10.0, 2.0, 0.1), (-3.0, 0.5, 0.01), (100.0, 30.0, 0.4)]:
        c = pc.max_contract(mu, sigma, phi)
        assert abs(c - (mu + sigma * normal_ppf(phi))) < 1e-6
        assert abs(pc.shortfall_probability(mu, sigma, c) - phi) < 1e-9
    assert pc.empirical_max_contract([float(v) for v in range(1, 11)], 0.1) == 1.0
    try:
        pc.max_contract(1.0, 1.0, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("phi = 0 accepted in analytic mode")


def test_series_roundtrip(tmp="/tmp/pycoalitions_smoke.csv"):
    s = factor_series(n_agents=6, hours=100)
    assert s.n_agents == 6 and len(s) == 100
    s.write_csv(tmp)
    back = pc.Series.read_csv(tmp)
    assert back.ids == s.ids
    assert all(abs(a - b) < 1e-9 for a, b in zip(back.values(3), s.values(3)))
    ids, rho = s.correlation()
    assert ids == list(range(6)) and abs(rho[0][0] - 1.0) < 1e-12
    assert abs(pc.pearson(s.values(0), s.values(5)) - rho[0][5]) < 1e-12


def test_formation_and_baselines():
    s = factor_series()
    eps, seeds = pc.epsilon_star(s, 5, k_min=3)
    assert len(seeds) >= 5 and all(len(c) >= 3 for c in seeds)
    perc = pc.form_coalitions(s, 0.1, 0.0, 5, k_min=3)
    assert perc.algorithm == "percolation" and perc.epsilon_star == eps
    assert len(perc) == 5
    members = [m for c in perc.coalitions for m in c.members] + perc.unassigned
    assert sorted(members) == s.ids
    rand = pc.random_partition(s, 0.1, 0.0, 5, seed=3)
    corr = pc.correlated_partition(s, 0.1, 0.0, 5)
    assert sorted(m for c in rand.coalitions for m in c.members) == s.ids
    assert perc.welfare > rand.welfare and perc.welfare > corr.welfare
    doc = json.loads(perc.to_json())
    assert doc["provenance"]["algorithm"] == "percolation"
    try:
        pc.form_coalitions(s, 0.1, 0.0, 30, k_min=3)
    except pc.InfeasibleError:
        pass
    else:
        raise AssertionError("40 agents split into 30 cliques of 3")


def test_simulate_prepare_reliability():
    raw = pc.simulate(json.dumps(SMALL_CONFIG), 0)
    assert raw.n_agents == 30 and len(raw) == 365 * 24
    train, test = pc.prepare(raw, 0.8, 10)
    assert test is not None and len(train) + len(test) == len(raw)
    assert len(pc.form_coalitions(train, 0.1, 0.0, 3)) == 3

    s = factor_series(hours=5000)
    cs = pc.form_coalitions(s.slice(0, 4000), 0.1, 0.0, 5, k_min=3)
    rel = [r for r in cs.reliability(s.slice(4000, 5000)) if r is not None]
    assert rel and all(abs(r - 0.1) < 0.05 for r in rel), rel


def test_run_and_errors():
    out = pc.run(json.dumps(SMALL_CONFIG))
    algos = sorted({r["algorithm"] for r in out["rows"]})
    assert algos == ["correlated", "percolation", "random"]
    assert sum(r["algorithm"] == "random" for r in out["rows"]) == 5
    bad = dict(SMALL_CONFIG, formation={"k_min": "three"})
    try:
        pc.run(json.dumps(bad))
    except pc.ConfigError as e:
        assert "formation.k_min" in str(e)
    else:
        raise AssertionError("malformed config accepted")


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok  {t.__name__}")
    print(f"{len(tests)} smoke tests passed")


if __name__ == "__main__":
    sys.exit(main())
