import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdeweak import (
    GridField,
    InvalidArgument,
    OperatorSpec,
    SpectralField,
    fractional_apply,
    from_grid,
    norm,
    semigroup_apply,
    to_grid,
)
from spdeweak.spectral import grid_points


def field(coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    return SpectralField(coeffs, OperatorSpec(coeffs.shape[-1]))


def test_single_mode_on_three_points():
    g = to_grid(field([1.0, 0.0, 0.0]), 3)
    np.testing.assert_allclose(g.values, [1.0, math.sqrt(2.0), 1.0], rtol=0, atol=1e-15)


def test_zero_coefficients_give_zero_grid():
    assert not np.any(to_grid(field(np.zeros(5)), 15).values)


def test_grid_smaller_than_modes_rejected():
    with pytest.raises(InvalidArgument):
        to_grid(field(np.ones(8)), 7)
    with pytest.raises(InvalidArgument):
        from_grid(GridField(np.ones(7)), 8)


def test_projection_of_first_mode_samples():
    x = grid_points(31)
    v = from_grid(GridField(math.sqrt(2) * np.sin(np.pi * x)), 8)
    expect = np.zeros(8)
    expect[0] = 1.0
    np.testing.assert_allclose(v.coeffs, expect, atol=1e-12)


def test_product_lands_on_neighbouring_modes():
    # e_M * (sqrt2 sin(pi x))^2 = e_M - (e_{M+2} + e_{M-2}) / 2 by product-to-sum
    M, J = 6, 63
    x = grid_points(J)
    g = math.sqrt(2) * np.sin(M * np.pi * x) * 2 * np.sin(np.pi * x) ** 2
    c = from_grid(GridField(g), M + 3).coeffs
    expect = np.zeros(M + 3)
    expect[M - 1] = 1.0
    expect[M + 1] = -0.5
    expect[M - 3] = -0.5
    np.testing.assert_allclose(c, expect, atol=1e-12)
    # the Galerkin projection onto M modes drops the e_{M+2} part
    np.testing.assert_allclose(from_grid(GridField(g), M).coeffs, expect[:M], atol=1e-12)


def test_zero_grid_gives_zero_field():
    assert not np.any(from_grid(GridField(np.zeros(31)), 10).coeffs)


@given(st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_round_trip(M, seed):
    rng = np.random.default_rng(seed)
    v = field(rng.standard_normal(M))
    J = v.op.default_grid()
    back = from_grid(to_grid(v, J), M)
    scale = np.max(np.abs(v.coeffs))
    assert np.max(np.abs(back.coeffs - v.coeffs)) <= 1e-12 * scale


def test_round_trip_grid_side():
    rng = np.random.default_rng(3)
    M = 20
    v = field(rng.standard_normal(M))
    g = to_grid(v, 63)
    g2 = to_grid(from_grid(g, M), 63)
    np.testing.assert_allclose(g2.values, g.values, rtol=1e-12, atol=1e-12 * np.max(np.abs(g.values)))


def test_semigroup_on_first_mode():
    op = OperatorSpec(4)
    v = semigroup_apply(0.1, op.basis(1))
    assert v.coeffs[0] == pytest.approx(0.37270783885343791, rel=1e-14)
    assert not np.any(v.coeffs[1:])


def test_semigroup_identity_at_zero_and_negative_time():
    v = field([0.3, -1.0, 2.0])
    assert np.array_equal(semigroup_apply(0.0, v).coeffs, v.coeffs)
    with pytest.raises(InvalidArgument):
        semigroup_apply(-1e-3, v)


@given(st.floats(0, 0.05), st.floats(0, 0.05), st.integers(0, 2**31 - 1))
def test_semigroup_law(s, t, seed):
    v = field(np.random.default_rng(seed).standard_normal(12))
    a = semigroup_apply(s + t, v).coeffs
    b = semigroup_apply(s, semigroup_apply(t, v)).coeffs
    nz = a != 0
    assert np.all(np.abs(a - b)[nz] <= 1e-14 * np.abs(a)[nz] * 4)
    assert np.all(np.abs(a - b)[~nz] <= 1e-300)


@given(st.floats(0, 2.0), st.integers(0, 2**31 - 1))
def test_contraction(t, seed):
    v = field(np.random.default_rng(seed).standard_normal(9))
    assert norm(semigroup_apply(t, v)) <= norm(v) + 1e-15


def test_fractional_power():
    op = OperatorSpec(3)
    assert fractional_apply(1.0, op.basis(1)).coeffs[0] == pytest.approx(np.pi**2, rel=1e-15)
    v = field([1.0, 2.0, 3.0])
    assert np.array_equal(fractional_apply(0.0, v).coeffs, v.coeffs)


def test_smoothing_estimate(rng):
    from spdeweak import chi_constant

    op = OperatorSpec(30)
    for r in (0.0, 0.25, 0.5, 0.75, 1.0):
        chi = chi_constant(r, op)
        for t in np.geomspace(1e-4, 1.0, 15):
            v = SpectralField(rng.standard_normal(30), op)
            lhs = t**r * norm(fractional_apply(r, semigroup_apply(t, v)))
            assert lhs <= chi * norm(v) * (1 + 1e-12)


def test_norms_of_first_mode():
    op = OperatorSpec(8)
    e1 = op.basis(1)
    assert norm(e1) == 1.0
    assert norm(e1, "L", p=2.0, J=1023) == pytest.approx(1.0, abs=1e-10)
    # int_0^1 4 sin^4(pi x) dx = 3/2
    assert norm(e1, "L", p=4.0, J=1023) == pytest.approx(1.1066819197003215, rel=1e-10)


def test_negative_index_weakens_norm(rng):
    op = OperatorSpec(16)
    v = SpectralField(rng.standard_normal(16), op)
    rho = 0.3
    assert norm(v, "V", r=-rho) <= (np.pi**2) ** (-rho) * norm(v) * (1 + 1e-14)


def test_quadrature_consistency(rng):
    op = OperatorSpec(10)
    v = SpectralField(rng.standard_normal(10), op)
    J = op.default_grid()
    for p in (2.0, 4.0, 6.0):
        a = norm(v, "L", p=p, J=J)
        b = norm(v, "L", p=p, J=2 * J + 1)
        assert a == pytest.approx(b, rel=1e-8)


def test_norm_argument_checks():
    op = OperatorSpec(4)
    with pytest.raises(InvalidArgument):
        norm(op.basis(1), "L", p=0.5)
    with pytest.raises(InvalidArgument):
        norm(op.basis(1), "L", p=2.0, J=7)
    with pytest.raises(InvalidArgument):
        norm(op.basis(1), "W")


def test_operator_validation():
    with pytest.raises(InvalidArgument):
        OperatorSpec(0)
    with pytest.raises(InvalidArgument):
        OperatorSpec(4, T=0.0)
    assert OperatorSpec(1).default_grid() == 3
    assert OperatorSpec(51).default_grid() == 127
    assert OperatorSpec(64).default_grid() == 255
