import csv
import math

import numpy as np
import pytest

from spdeweak import (
    DivergenceError,
    InvalidArgument,
    NoisePlan,
    OperatorSpec,
    SchemeConfig,
    default_model,
    reference_solve,
    run,
)
from spdeweak.model import ModelSpec, constant, custom, exp_neg_l2sq, nemytskii_F, zero
from spdeweak.noise import increment_array
from spdeweak.schemes import (
    Engine,
    PathNorms,
    Track,
    exp_euler_step,
    linear_implicit_step,
    mollified_step,
    plan_too_coarse,
    semilinear_integrated_run,
    variation_step,
)
from spdeweak.spectral import SpectralField, semigroup_apply


def make(f, b, M=8, xi=None, T=1.0):
    op = OperatorSpec(M, T)
    xi = op.basis(1) if xi is None else xi
    return ModelSpec(f, b, exp_neg_l2sq(), xi, T=T), op


def cfg(kind, model, op, N, N_fine=None, seed=0, **kw):
    plan = NoisePlan(seed, op.M, N_fine or N, op.T)
    return SchemeConfig(kind, N, model, op, plan, **kw)


class FuturePerturbed:
    """Noise plan whose fine increments from index ``cut`` on are replaced."""

    def __init__(self, plan, cut):
        self._plan = plan
        self.cut = cut

    def __getattr__(self, name):
        return getattr(self._plan, name)

    def fine_increments(self, i, samples=(0,)):
        z = self._plan.fine_increments(i, samples)
        return z + 7.0 if i >= self.cut else z


def test_deterministic_exp_euler_step():
    model, op = make(zero(), zero())
    c = cfg("exp_euler", model, op, N=10)
    y1 = exp_euler_step(model.xi, 0, c)
    assert y1.coeffs[0] == pytest.approx(0.37270783885343791, rel=1e-14)
    assert not np.any(y1.coeffs[1:])


def test_additive_step_is_semigroup_of_noise():
    model, op = make(zero(), constant(1.0), M=6)
    c = cfg("exp_euler", model, op, N=4, N_fine=16)
    y1 = exp_euler_step(model.xi, 0, c)
    dW = increment_array(c.plan, 4, 0, [0])[0]
    np.testing.assert_allclose(y1.coeffs, np.exp(-op.eigenvalues * 0.25) * (model.xi.coeffs + dW), rtol=1e-15)


def test_additive_step_variance():
    model, op = make(zero(), constant(1.0), M=4, xi=OperatorSpec(4).zeros())
    h = 0.1
    plan = NoisePlan(1, 4, 10)
    res = Engine(model, op, plan).run([Track("y", "exp_euler", 10)], np.arange(20000), keep_paths=True)
    y1 = res["paths"]["y"][:, 1, :]
    expect = np.exp(-2 * op.eigenvalues * h) * h
    se = expect * math.sqrt(2 / (20000 - 1))
    assert np.all(np.abs(y1.var(axis=0, ddof=1) - expect) <= 4 * se)


def test_constant_drift_without_noise():
    model, op = make(constant(2.0), zero(), M=7)
    c = cfg("exp_euler", model, op, N=5)
    y1 = exp_euler_step(model.xi, 0, c)
    proj = nemytskii_F(constant(2.0), op.zeros()).coeffs
    np.testing.assert_allclose(y1.coeffs, np.exp(-op.eigenvalues * 0.2) * (model.xi.coeffs + 0.2 * proj), rtol=1e-14)


def test_mollified_with_zero_kappa_is_exp_euler():
    model = default_model(OperatorSpec(12))
    op = model.op
    a = run(cfg("exp_euler", model, op, N=8, N_fine=32, seed=3))
    b = run(cfg("mollified", model, op, N=8, N_fine=32, seed=3, kappa=0.0))
    assert np.array_equal(a.states, b.states)
    y = a[3]
    assert np.array_equal(mollified_step(y, 3, b.scheme).coeffs, exp_euler_step(y, 3, a.scheme).coeffs)


def test_mollified_drift_damping():
    model, op = make(constant(1.0), zero(), M=5, xi=OperatorSpec(5).zeros())
    T = 1.0
    c_m = cfg("mollified", model, op, N=4, kappa=T)
    c_e = cfg("exp_euler", model, op, N=4)
    y_m = mollified_step(op.zeros(), 0, c_m).coeffs
    y_e = exp_euler_step(op.zeros(), 0, c_e).coeffs
    np.testing.assert_allclose(y_m, np.exp(-op.eigenvalues * T) * y_e, rtol=1e-13, atol=1e-300)
    with pytest.raises(InvalidArgument):
        cfg("mollified", model, op, N=4, kappa=1.5)


def test_mollified_difference_is_pathwise():
    model = default_model(OperatorSpec(8))
    op = model.op
    d1 = run(cfg("exp_euler", model, op, N=8, N_fine=16, seed=5)).states - \
        run(cfg("mollified", model, op, N=8, N_fine=16, seed=5, kappa=0.1)).states
    d2 = run(cfg("exp_euler", model, op, N=8, N_fine=16, seed=5)).states - \
        run(cfg("mollified", model, op, N=8, N_fine=16, seed=5, kappa=0.1)).states
    assert np.array_equal(d1, d2)


def test_linear_implicit_examples():
    model, op = make(zero(), zero())
    y1 = linear_implicit_step(model.xi, 0, cfg("linear_implicit", model, op, N=10))
    assert y1.coeffs[0] == pytest.approx(0.50328128321728168, rel=1e-14)
    big = linear_implicit_step(model.xi, 0, cfg("linear_implicit", model, op, N=1))
    assert big.coeffs[0] == pytest.approx(1 / (1 + np.pi**2), rel=1e-14)
    op_long = OperatorSpec(8, 1e6)
    model_long = ModelSpec(zero(), zero(), exp_neg_l2sq(), op_long.basis(1), T=1e6)
    huge = linear_implicit_step(model_long.xi, 0, cfg("linear_implicit", model_long, op_long, N=1))
    assert 0 < huge.coeffs[0] < 1e-6


def test_linear_implicit_agrees_with_exp_euler_to_second_order():
    model, op = make(zero(), zero(), M=3)
    errs = []
    for N in (1000, 2000):
        a = linear_implicit_step(model.xi, 0, cfg("linear_implicit", model, op, N=N)).coeffs[0]
        b = exp_euler_step(model.xi, 0, cfg("exp_euler", model, op, N=N)).coeffs[0]
        errs.append(abs(a - b))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_semilinear_without_forcing_equals_scheme():
    model, op = make(zero(), zero(), M=6)
    c = cfg("exp_euler", model, op, N=8, N_fine=32)
    y = run(c)
    ybar = semilinear_integrated_run(cfg("semilinear", model, op, N=8, N_fine=32), y)
    np.testing.assert_allclose(ybar.states, y.states, rtol=1e-14, atol=1e-300)


def test_semilinear_constant_drift_geometric_sum():
    c0 = 1.5
    op = OperatorSpec(5)
    model = ModelSpec(constant(c0), zero(), exp_neg_l2sq(), op.zeros())
    N = 8
    y = run(cfg("exp_euler", model, op, N=N))
    ybar = semilinear_integrated_run(cfg("semilinear", model, op, N=N), y)
    ck = nemytskii_F(constant(c0), op.zeros()).coeffs
    lam, h = op.eigenvalues, 1.0 / N
    expect = sum(np.exp(-lam * (1.0 - (n + 1) * h)) * (-np.expm1(-lam * h)) / lam for n in range(N)) * ck
    np.testing.assert_allclose(ybar.final.coeffs, expect, rtol=1e-12, atol=1e-16)


def test_semilinear_driver_checks():
    model = default_model(OperatorSpec(6))
    op = model.op
    y = run(cfg("exp_euler", model, op, N=4, N_fine=8))
    with pytest.raises(InvalidArgument):
        semilinear_integrated_run(cfg("semilinear", model, op, N=8, N_fine=8), y)
    with pytest.raises(InvalidArgument):
        cfg("semilinear", model, op, N=4, N_fine=8, exact_ou=True)


def test_plan_too_coarse_flag():
    model = default_model(OperatorSpec(4))
    assert plan_too_coarse(cfg("semilinear", model, model.op, N=8, N_fine=8))
    assert not plan_too_coarse(cfg("semilinear", model, model.op, N=8, N_fine=16))


def test_variation_linear_flow_and_zero_direction():
    op = OperatorSpec(6)
    model = ModelSpec(zero(), constant(0.7), exp_neg_l2sq(), op.basis(1))
    v = SpectralField(np.arange(1.0, 7.0), op)
    c = cfg("variation", model, op, N=8, N_fine=16, direction=v)
    z = run(c)
    for n in range(9):
        np.testing.assert_allclose(z.states[n], semigroup_apply(n / 8, v).coeffs, rtol=1e-13, atol=1e-300)
    dm = default_model(op)
    z0 = run(cfg("variation", dm, op, N=8, N_fine=16, direction=op.zeros()))
    assert not np.any(z0.states)


def test_variation_step_matches_run():
    model = default_model(OperatorSpec(8))
    op = model.op
    v = op.basis(2)
    c = cfg("variation", model, op, N=4, N_fine=8, seed=2, direction=v)
    z = run(c)
    y = run(cfg("exp_euler", model, op, N=4, N_fine=8, seed=2))
    zn = v
    for n in range(4):
        zn = variation_step(zn, y[n], n, c)
        np.testing.assert_allclose(zn.coeffs, z.states[n + 1], rtol=1e-13, atol=1e-15)


def test_variation_central_difference():
    model = default_model(OperatorSpec(8), T=0.1)
    op = model.op
    v = op.basis(1)
    z = run(cfg("variation", model, op, N=16, N_fine=16, seed=4, direction=v)).final.coeffs
    errs = []
    for d in (1e-2, 1e-3):
        up = run(cfg("exp_euler", model, op, N=16, N_fine=16, seed=4), start=model.xi + v * d).final.coeffs
        dn = run(cfg("exp_euler", model, op, N=16, N_fine=16, seed=4), start=model.xi - v * d).final.coeffs
        errs.append(np.linalg.norm((up - dn) / (2 * d) - z))
    assert errs[0] / errs[1] == pytest.approx(100.0, rel=0.1)


def test_reference_solve():
    model, op = make(zero(), zero(), M=5)
    plan = NoisePlan(0, 5, 16)
    np.testing.assert_allclose(reference_solve(model, op, plan).coeffs, semigroup_apply(1.0, model.xi).coeffs,
                               rtol=1e-13, atol=1e-300)
    dm = default_model(OperatorSpec(6))
    plan = NoisePlan(8, 6, 32)
    a = reference_solve(dm, dm.op, plan, sample=3)
    b = run(SchemeConfig("exp_euler", 32, dm, dm.op, plan, sample=3)).final
    assert np.array_equal(a.coeffs, b.coeffs)


def test_determinism_and_sample_isolation():
    model = default_model(OperatorSpec(10))
    op = model.op
    a = run(cfg("exp_euler", model, op, N=16, N_fine=64, seed=11))
    b = run(cfg("exp_euler", model, op, N=16, N_fine=64, seed=11))
    assert np.array_equal(a.states, b.states)
    plan = NoisePlan(11, 10, 64)
    batch = Engine(model, op, plan).run([Track("y", "exp_euler", 16)], [4, 0, 9], keep_paths=True)
    assert np.array_equal(batch["paths"]["y"][1], a.states)


@pytest.mark.parametrize("kind", ["exp_euler", "linear_implicit", "mollified"])
def test_single_steps_reproduce_batched_run(kind):
    model = default_model(OperatorSpec(8))
    op = model.op
    c = cfg(kind, model, op, N=8, N_fine=32, seed=6, kappa=0.05 if kind == "mollified" else 0.0)
    traj = run(c)
    step = {"exp_euler": exp_euler_step, "linear_implicit": linear_implicit_step,
            "mollified": mollified_step}[kind]
    y = model.xi
    for n in range(8):
        y = step(y, n, c)
        assert np.array_equal(y.coeffs, traj.states[n + 1])


def test_adaptedness():
    model = default_model(OperatorSpec(8))
    op = model.op
    N, N_fine = 8, 64
    plan = NoisePlan(13, 8, N_fine)
    tracks = [Track("y", "exp_euler", N), Track("ybar", "semilinear", N, driver="y"),
              Track("z", "variation", N, direction=op.basis(2).coeffs, driver="y")]
    base = Engine(model, op, plan).run(tracks, [0], keep_paths=True)["paths"]
    r = N_fine // N
    for n in (1, 3, 6):
        pert = Engine(model, op, FuturePerturbed(plan, n * r)).run(tracks, [0], keep_paths=True)["paths"]
        for name in ("y", "ybar", "z"):
            assert np.array_equal(pert[name][0, : n + 1], base[name][0, : n + 1])
            assert not np.array_equal(pert[name][0, n + 1], base[name][0, n + 1])


def test_zero_noise_exp_euler_error_comes_from_drift_only():
    op = OperatorSpec(4)
    model = ModelSpec(zero(), zero(), exp_neg_l2sq(), SpectralField(np.array([1.0, -0.5, 0.2, 0.1]), op))
    for kind in ("exp_euler", "mollified", "semilinear"):
        t = run(cfg(kind, model, op, N=7))
        np.testing.assert_allclose(t.final.coeffs, semigroup_apply(1.0, model.xi).coeffs, rtol=1e-13, atol=1e-300)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_divergence_is_reported_with_step():
    blow = custom([np.exp] * 5, [math.inf] * 4, name="exp")
    op = OperatorSpec(4)
    model = ModelSpec(blow, zero(), exp_neg_l2sq(), op.basis(1) * 600.0)
    with pytest.raises(DivergenceError) as info:
        run(cfg("exp_euler", model, op, N=4))
    assert info.value.step == 0
    res = Engine(model, op, NoisePlan(0, 4, 4)).run([Track("y", "exp_euler", 4)], [0, 1])
    assert res["aborted"].all()


def test_path_norm_observer_on_nested_levels():
    model = default_model(OperatorSpec(6))
    op = model.op
    plan = NoisePlan(1, 6, 16)
    ob = PathNorms("c", "f", ("V", 0.0))
    res = Engine(model, op, plan).run([Track("c", "exp_euler", 4), Track("f", "exp_euler", 16)], [0, 1],
                                      observers=[ob], keep_paths=True)
    P = res["paths"]
    expect = np.linalg.norm(P["c"] - P["f"][:, ::4], axis=-1)
    np.testing.assert_allclose(ob.values, expect, rtol=1e-14, atol=1e-16)


def test_trajectory_csv(tmp_path):
    model = default_model(OperatorSpec(3))
    t = run(cfg("exp_euler", model, model.op, N=4))
    path = tmp_path / "traj.csv"
    t.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "a_1", "a_2", "a_3"]
    assert len(rows) == 6
    assert float(rows[-1][0]) == 1.0
    assert [float(x) for x in rows[-1][1:]] == list(t.final.coeffs)


def test_config_validation():
    model = default_model(OperatorSpec(4))
    op = model.op
    with pytest.raises(InvalidArgument):
        SchemeConfig("rk4", 4, model, op, NoisePlan(0, 4, 4))
    with pytest.raises(InvalidArgument):
        SchemeConfig("exp_euler", 4, model, op, NoisePlan(0, 5, 4))
    with pytest.raises(InvalidArgument):
        SchemeConfig("variation", 4, model, op, NoisePlan(0, 4, 4))
    assert SchemeConfig("ExpEuler", 4, model, op, NoisePlan(0, 4, 4)).kind == "exp_euler"
    with pytest.raises(InvalidArgument):
        Track("s", "semilinear", 4)
