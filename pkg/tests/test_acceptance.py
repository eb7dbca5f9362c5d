"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (also repeated in
the terminal summary) and asserts the criterion at its stated tolerance.
Criteria 2 and 3 are Monte Carlo runs of the shipped configs and are slow on
small machines; select them with ``-m slow`` or skip them with ``-m "not slow"``.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from spdeweak import OperatorSpec, SpectralField, from_grid, semigroup_apply, to_grid
from spdeweak.config import load_config
from spdeweak.experiments import run_experiment
from spdeweak.special import calE, chi_constant

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
REPORT: dict[int, str] = {}


def report(request, n: int, passed: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    REPORT[n] = line
    tr = request.config.pluginmanager.getplugin("terminalreporter")
    if tr is not None:
        tr.write_line("")
        tr.write_line(line)
    else:
        print(line)


def run_config(name: str, **numerics):
    cfg = load_config(CONFIGS / f"{name}.yaml")
    for k, v in numerics.items():
        setattr(cfg.numerics, k, v)
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    return cfg, res, time.perf_counter() - t0


def _crit_text(res) -> str:
    parts = []
    for k, c in res.acceptance.items():
        v = c["value"]
        if isinstance(v, float):
            v = f"{v:.4g}"
        parts.append(f"{k}={v} ({'ok' if c['passed'] else 'fail'}, need {c['threshold']})")
    return "; ".join(parts)


def test_criterion_01_exact_weak_rate(request):
    cfg, res, wall = run_config("weak-rate-exact", workers=1)
    assert cfg.numerics.M == 4096 and cfg.numerics.N == [4 * 2**k for k in range(9)]
    fit = res.results["fits"]["primary"]
    rows = res.csv.strip().splitlines()[1:]
    ok = -0.55 <= fit["slope"] <= -0.42 and fit["r_squared"] >= 0.99 and wall < 10.0 and len(rows) == 9
    alt = res.results["fits"].get("drop_smallest", {})
    report(request, 1, ok, f"slope={fit['slope']:.4f} r2={fit['r_squared']:.4f} in {wall:.1f}s "
                           f"(fit without N=4: slope={alt.get('slope', float('nan')):.4f})")
    assert -0.55 <= fit["slope"] <= -0.42
    assert fit["r_squared"] >= 0.99
    assert wall < 10.0


@pytest.mark.slow
def test_criterion_02_oracle_agreement(request):
    cfg, res, wall = run_config("oracle-agreement")
    n = cfg.numerics
    assert (n.M, n.N, n.samples, n.workers) == (64, [64], 100_000, 8)
    acc = res.acceptance
    keys = ("weak_oracle_agreement", "strong_oracle_agreement", "strong_relative")
    ok = all(acc[k]["passed"] for k in keys) and wall < 120.0
    report(request, 2, ok, f"{_crit_text(res)} in {wall:.1f}s")
    assert acc["weak_oracle_agreement"]["value"] <= 3.0
    assert acc["strong_oracle_agreement"]["value"] <= 3.0
    assert acc["strong_relative"]["value"] <= 0.05
    assert wall < 120.0


@pytest.mark.slow
def test_criterion_03_nonlinear_weak_self_convergence(request):
    cfg, res, wall = run_config("weak-rate-nonlinear")
    n = cfg.numerics
    assert n.N == [8 * 2**k for k in range(7)] and n.N_fine == 4096 and n.samples >= 20_000
    assert n.coupled and cfg.model.p == 6.0
    fit = res.results["fits"]["primary"]
    errs = [r["error"] for r in res.results["table"]["rows"]]
    ratio = errs[0] / errs[-1]
    need = 64**0.35
    ok = fit["slope"] <= -0.35 and ratio >= need and wall < 1800.0
    report(request, 3, ok, f"slope={fit['slope']:.4f} (need <= -0.35) ratio={ratio:.3f} "
                           f"(need >= {need:.3f}) in {wall:.0f}s")
    assert fit["slope"] <= -0.35
    assert ratio >= need
    assert wall < 1800.0


def test_criterion_04_apriori_bound(request):
    cfg, res, _ = run_config("bounds")
    assert cfg.model.p == 2.0 and cfg.study.upsilon == "ito" and cfg.numerics.samples == 10_000
    c = res.acceptance["apriori_pass"]
    report(request, 4, c["passed"], f"margin={c['value']:.4g}")
    assert c["passed"] and c["value"] > 0


def test_criterion_05_perturbation_bound(request):
    cfg, res, _ = run_config("perturbation")
    assert cfg.numerics.samples == 10_000 and cfg.numerics.coupled
    c = res.acceptance["perturbation_pass"]
    report(request, 5, c["passed"], f"margin={c['value']:.4g}")
    assert c["passed"]


def test_criterion_06_mollification(request):
    cfg, res, _ = run_config("mollify")
    assert cfg.study.rho == 0.2 and cfg.study.kappas == [1.0, 0.25, 0.0625, 0.015625]
    every = res.acceptance["all_pass"]
    slope = res.acceptance["kappa_slope"]
    ok = every["passed"] and slope["value"] >= 0.1
    report(request, 6, ok, f"statuses={every['value']} kappa-slope={slope['value']:.4f} (need >= 0.1)")
    assert every["passed"]
    assert slope["value"] >= 0.1


def test_criterion_07_semilinear_distance(request):
    cfg, res, _ = run_config("semilinear-distance")
    assert cfg.study.rho == 0.3 and cfg.study.mode == "semilinear"
    errs = res.acceptance["strictly_decreasing"]["value"]
    ok = len(errs) == 3 and errs[0] > errs[1] > errs[2]
    report(request, 7, ok, "distances=" + " > ".join(f"{e:.4g}" for e in errs))
    assert ok


def test_criterion_08_first_variation(request):
    cfg, res, _ = run_config("variation-check")
    assert cfg.study.deltas == [1e-3, 1e-4]
    ratio = res.acceptance["fd_ratio"]["value"]
    ok = 50 <= ratio <= 200
    report(request, 8, ok, f"FD error ratio={ratio:.2f} (need [50, 200])")
    assert ok


def test_criterion_09_special_functions(request):
    xs = np.linspace(0.0, 3.0, 301)
    gap = max(abs(calE(1.0, x) - math.exp(x * x / 2)) for x in xs)
    rs = np.linspace(0.01, 1.0, 100)
    zero_ok = all(calE(r, 0.0) == 1.0 for r in rs)
    op = OperatorSpec(64)
    chi_ok = all(chi_constant(r, op) == 1.0 for r in np.linspace(0.0, 1.0, 101))
    ok = gap <= 1e-12 and zero_ok and chi_ok
    report(request, 9, ok, f"max|calE(1,x)-exp(x^2/2)|={gap:.2e} calE(r,0)=1:{zero_ok} chi=1:{chi_ok}")
    assert gap <= 1e-12
    assert zero_ok and chi_ok


def test_criterion_10_infrastructure(request, tmp_path):
    rng = np.random.default_rng(10)
    dst = 0.0
    for M in (1, 7, 64, 257, 1000):
        v = SpectralField(rng.standard_normal(M), OperatorSpec(M))
        back = from_grid(to_grid(v, v.op.default_grid()), M).coeffs
        dst = max(dst, float(np.max(np.abs(back - v.coeffs)) / np.max(np.abs(v.coeffs))))
    semi = 0.0
    for _ in range(50):
        s, t = rng.uniform(0, 0.05, 2)
        v = SpectralField(rng.standard_normal(40), OperatorSpec(40))
        a = semigroup_apply(s + t, v).coeffs
        b = semigroup_apply(s, semigroup_apply(t, v)).coeffs
        semi = max(semi, float(np.linalg.norm(a - b) / np.linalg.norm(v.coeffs)))
    csvs = [run_config("weak-rate-mc-small", workers=w)[1].csv for w in (1, 4, 8)]
    same = csvs[0] == csvs[1] == csvs[2]
    ok = dst <= 1e-12 and semi <= 1e-14 and same
    report(request, 10, ok, f"DST round trip={dst:.2e} semigroup law={semi:.2e} "
                            f"results.csv identical across 1/4/8 workers:{same}")
    assert dst <= 1e-12
    assert semi <= 1e-14
    assert same
