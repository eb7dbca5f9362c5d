import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdeweak import InvalidArgument, InvalidRefinement, NoisePlan, increment, to_grid
from spdeweak.noise import (
    TreeAggregator,
    increment_array,
    keyed_normals,
    philox4x32,
    tree_sum,
    white_noise_grid,
)
from spdeweak.spectral import lp_norm_values

# Known-answer vectors distributed with the Random123 reference implementation.
PHILOX_KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


def _philox(ctr, key):
    u = np.uint64
    return tuple(int(x) for x in philox4x32(*(u(c) for c in ctr), *(u(k) for k in key)))


@pytest.mark.parametrize("ctr,key,expected", PHILOX_KAT)
def test_philox_known_answers(ctr, key, expected):
    assert _philox(ctr, key) == expected


@given(st.lists(st.integers(0, 2**32 - 1), min_size=6, max_size=6))
def test_philox_matches_randomgen(words):
    randomgen = pytest.importorskip("randomgen")
    ctr, key = words[:4], words[4:]
    c = sum(x << (32 * i) for i, x in enumerate(ctr))
    k = key[0] | (key[1] << 32)
    # randomgen advances the counter before each block
    g = randomgen.Philox(counter=(c - 1) % 2**128, key=k, number=4, width=32)
    assert tuple(int(x) for x in g.random_raw(4)) == _philox(ctr, key)


def test_keyed_normals_deterministic_and_distinct():
    a = keyed_normals(7, [0, 1, 2], 5, 9)
    assert np.array_equal(a, keyed_normals(7, [0, 1, 2], 5, 9))
    # a sample's draws do not depend on which other samples share the batch
    assert np.array_equal(a[1], keyed_normals(7, [1], 5, 9)[0])
    assert not np.array_equal(a, keyed_normals(8, [0, 1, 2], 5, 9))
    assert not np.array_equal(a, keyed_normals(7, [0, 1, 2], 6, 9))
    assert not np.array_equal(a, keyed_normals(7, [0, 1, 2], 5, 9, stream=3))
    # a longer mode vector extends the shorter one
    assert np.array_equal(keyed_normals(7, [0], 5, 12)[0, :9], a[0])


def test_keyed_normals_range_checks():
    with pytest.raises(InvalidArgument):
        keyed_normals(0, [-1], 0, 2)
    with pytest.raises(InvalidArgument):
        keyed_normals(0, [0], 2**32, 2)


def test_normal_moments():
    z = keyed_normals(11, np.arange(20000), 0, 50).ravel()
    n = z.size
    assert abs(z.mean()) < 4 / math.sqrt(n)
    assert abs(z.var() - 1) < 4 * math.sqrt(2 / n)
    assert abs(np.mean(z**4) - 3) < 4 * math.sqrt(96 / n)
    assert np.all(np.isfinite(z))


def test_increment_variance():
    plan = NoisePlan(seed=3, M=4, N_fine=16, T=1.0)
    S = 100_000
    inc = increment_array(plan, 4, 1, np.arange(S))
    var = inc.var(axis=0, ddof=1)
    # chi-square sampling distribution: sd of the sample variance is sigma^2 sqrt(2/(S-1))
    sigma2 = 1.0 / 4
    assert np.all(np.abs(var - sigma2) <= 3 * sigma2 * math.sqrt(2 / (S - 1)))


def test_independence_proxy():
    S = 100_000
    plan = NoisePlan(seed=9, M=3, N_fine=4)
    a = plan.fine_increments(0, np.arange(S))
    b = plan.fine_increments(1, np.arange(S))
    corr = np.corrcoef(np.hstack([a, b]).T)
    off = corr[~np.eye(6, dtype=bool)]
    assert np.max(np.abs(off)) < 3 / math.sqrt(S) * 1.5


def test_single_fine_draw_at_finest_level():
    plan = NoisePlan(seed=1, M=5, N_fine=8)
    for n in range(8):
        assert np.array_equal(increment_array(plan, 8, n, [0]), plan.fine_increments(n, [0]))


def test_refinement_checks():
    plan = NoisePlan(seed=1, M=5, N_fine=8)
    with pytest.raises(InvalidRefinement):
        increment(plan, 3, 0)
    with pytest.raises(InvalidArgument):
        increment(plan, 4, 4)
    with pytest.raises(InvalidRefinement):
        TreeAggregator(6)


@pytest.mark.parametrize("N1,N2", [(1, 2), (2, 8), (4, 64), (8, 64), (1, 64)])
def test_coupling_is_bit_exact(N1, N2):
    plan = NoisePlan(seed=21, M=7, N_fine=64)
    r = N2 // N1
    samples = [0, 5, 17]
    for n in range(N1):
        fine = np.stack([increment_array(plan, N2, n * r + j, samples) for j in range(r)])
        assert np.array_equal(tree_sum(fine), increment_array(plan, N1, n, samples))


def test_telescoping_sum_over_steps():
    plan = NoisePlan(seed=2, M=6, N_fine=32)
    total_fine = tree_sum(np.stack([increment_array(plan, 32, n) for n in range(32)]))
    for N in (1, 2, 4, 8, 16):
        total = tree_sum(np.stack([increment_array(plan, N, n) for n in range(N)]))
        assert np.array_equal(total, total_fine)
    assert np.array_equal(increment_array(plan, 1, 0), total_fine)


def test_streaming_aggregator_matches_tree_sum():
    plan = NoisePlan(seed=4, M=3, N_fine=16)
    agg = TreeAggregator(16)
    got = {}
    for i in range(16):
        for ratio, x in agg.push(plan.fine_increments(i, [0, 1])):
            got.setdefault(ratio, []).append(x)
    for ratio, xs in got.items():
        N = 16 // ratio
        assert len(xs) == N
        for n, x in enumerate(xs):
            assert np.array_equal(x, increment_array(plan, N, n, [0, 1]))


def test_white_noise_grid_single_mode():
    plan = NoisePlan(seed=5, M=1, N_fine=4)
    g = white_noise_grid(plan, 4, 2, 7)
    db = increment(plan, 4, 2).coeffs[0]
    x = np.arange(1, 8) / 8
    np.testing.assert_allclose(g.values, db * math.sqrt(2) * np.sin(np.pi * x), rtol=1e-14, atol=1e-16)


def test_white_noise_grid_linearity_and_parseval():
    plan = NoisePlan(seed=6, M=20, N_fine=8)
    J = 63
    a, b = white_noise_grid(plan, 8, 1, J), white_noise_grid(plan, 8, 5, J)
    s = increment(plan, 8, 1) + increment(plan, 8, 5)
    np.testing.assert_allclose(a.values + b.values, to_grid(s, J).values, atol=1e-14)
    dB = increment(plan, 8, 3).coeffs
    g = white_noise_grid(plan, 8, 3, J)
    assert lp_norm_values(g.values, 2.0) ** 2 == pytest.approx(np.sum(dB**2), rel=1e-10)


def test_plan_validation():
    with pytest.raises(InvalidArgument):
        NoisePlan(seed=0, M=0, N_fine=4)
    with pytest.raises(InvalidArgument):
        NoisePlan(seed=0, M=2, N_fine=4, T=-1.0)
    p = NoisePlan(seed=0, M=2, N_fine=4, T=2.0)
    assert p.dt_fine == 0.5
    with pytest.raises(InvalidArgument):
        p.fine_increments(4)
    aux = p.auxiliary_normals(2, 1, [0])
    assert not np.array_equal(aux, keyed_normals(0, [0], 1, 2))
