"""Counter-based generation of a truncated cylindrical Wiener path.

Every standard normal is a pure function of (seed, sample, fine step, mode):
Philox4x32-10 is keyed by the 64-bit seed and fed the counter
(mode pair, fine step, sample, stream); each 128-bit output block gives two
normals by Box-Muller on 53-bit uniforms.  Stream 0 carries the Wiener
increments, stream 2N+1 auxiliary normals used at coarse level N.

Coarse increments are sums of fine increments taken as a pairwise tree
(adjacent pairs first), so for power-of-two refinements aggregating level-2N
increments reproduces level-N increments bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidArgument, InvalidRefinement
from .spectral import OperatorSpec, SpectralField, GridField, coeffs_to_grid

WIENER_STREAM = 0


@numba.njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    M0 = np.uint64(0xD2511F53)
    M1 = np.uint64(0xCD9E8D57)
    W0 = np.uint64(0x9E3779B9)
    W1 = np.uint64(0xBB67AE85)
    MASK = np.uint64(0xFFFFFFFF)
    S = np.uint64(32)
    for r in range(10):
        if r > 0:
            k0 = (k0 + W0) & MASK
            k1 = (k1 + W1) & MASK
        p0 = M0 * c0
        p1 = M1 * c2
        c0, c1, c2, c3 = ((p1 >> S) ^ c1 ^ k0) & MASK, p1 & MASK, ((p0 >> S) ^ c3 ^ k1) & MASK, p0 & MASK
    return c0, c1, c2, c3


@numba.njit(cache=True, nogil=True)
def _normals_kernel(seed_lo, seed_hi, samples, step, M, stream, out):
    inv53 = 1.0 / 9007199254740992.0
    two_pi = 2.0 * np.pi
    nblocks = (M + 1) // 2
    c1 = np.uint64(step)
    c3 = np.uint64(stream)
    for s in range(samples.shape[0]):
        c2 = np.uint64(samples[s])
        for j in range(nblocks):
            x0, x1, x2, x3 = philox4x32(np.uint64(j), c1, c2, c3, seed_lo, seed_hi)
            u1 = 1.0 - ((x0 >> np.uint64(5)) * 67108864.0 + (x1 >> np.uint64(6))) * inv53
            u2 = ((x2 >> np.uint64(5)) * 67108864.0 + (x3 >> np.uint64(6))) * inv53
            rad = np.sqrt(-2.0 * np.log(u1))
            out[s, 2 * j] = rad * np.cos(two_pi * u2)
            if 2 * j + 1 < M:
                out[s, 2 * j + 1] = rad * np.sin(two_pi * u2)


def keyed_normals(seed: int, samples, step: int, M: int, stream: int = WIENER_STREAM) -> np.ndarray:
    """Standard normals of shape (len(samples), M) for one counter slice."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    samples = np.ascontiguousarray(samples, dtype=np.int64)
    if samples.size and (samples.min() < 0 or samples.max() >= 2**32):
        raise InvalidArgument("sample indices must lie in [0, 2^32)")
    if not 0 <= step < 2**32 or not 0 <= stream < 2**32:
        raise InvalidArgument("step and stream indices must lie in [0, 2^32)")
    out = np.empty((samples.shape[0], M))
    _normals_kernel(np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32), samples,
                    step, M, stream, out)
    return out


@dataclass(frozen=True)
class NoisePlan:
    seed: int
    M: int
    N_fine: int
    T: float = 1.0

    def __post_init__(self):
        if self.N_fine < 1 or self.M < 1:
            raise InvalidArgument("N_fine and M must be positive")
        if not self.T > 0:
            raise InvalidArgument("T must be positive")

    @property
    def dt_fine(self) -> float:
        return self.T / self.N_fine

    def ratio(self, N: int) -> int:
        if N < 1 or self.N_fine % N:
            raise InvalidRefinement(f"N must divide N_fine (N={N}, N_fine={self.N_fine})")
        return self.N_fine // N

    def fine_increments(self, i: int, samples=(0,)) -> np.ndarray:
        """Fine increments over [i dt, (i+1) dt) for each sample, shape (S, M)."""
        if not 0 <= i < self.N_fine:
            raise InvalidArgument(f"fine step {i} outside 0..{self.N_fine - 1}")
        return np.sqrt(self.dt_fine) * keyed_normals(self.seed, samples, i, self.M)

    def auxiliary_normals(self, N: int, n: int, samples=(0,)) -> np.ndarray:
        """Standard normals tied to coarse step n at level N, independent of the path."""
        self.ratio(N)
        return keyed_normals(self.seed, samples, n, self.M, stream=2 * N + 1)


def tree_sum(blocks: np.ndarray) -> np.ndarray:
    """Sum along axis 0 as a pairwise tree (adjacent pairs first)."""
    r = blocks.shape[0]
    if r == 1:
        return blocks[0]
    if r % 2 == 0:
        return tree_sum(blocks[0::2] + blocks[1::2])
    return tree_sum(blocks[:-1]) + blocks[-1]


def increment_array(plan: NoisePlan, N: int, n: int, samples=(0,)) -> np.ndarray:
    r = plan.ratio(N)
    if not 0 <= n < N:
        raise InvalidArgument(f"coarse step {n} outside 0..{N - 1}")
    fine = np.stack([plan.fine_increments(n * r + i, samples) for i in range(r)])
    return tree_sum(fine)


def increment(plan: NoisePlan, N: int, n: int, sample: int = 0, op: OperatorSpec | None = None) -> SpectralField:
    """Coefficients (Delta beta_1, ..., Delta beta_M) of W over coarse step n at level N."""
    op = OperatorSpec(plan.M, plan.T) if op is None else op
    return SpectralField(increment_array(plan, N, n, [sample])[0], op)


def white_noise_grid(plan: NoisePlan, N: int, n: int, J: int, sample: int = 0) -> GridField:
    return GridField(coeffs_to_grid(increment_array(plan, N, n, [sample])[0], J))


class TreeAggregator:
    """Streams fine increments and emits coarse increments for power-of-two levels.

    ``push`` returns a list of (ratio, increment) for every level whose step
    completes with this fine increment, finest first.  Bit-identical to
    :func:`tree_sum` over each aligned block.
    """

    def __init__(self, max_ratio: int):
        if max_ratio < 1 or max_ratio & (max_ratio - 1):
            raise InvalidRefinement(f"level ratios must be powers of two, got {max_ratio}")
        self.max_ratio = max_ratio
        self._pending: dict[int, np.ndarray] = {}

    def push(self, x: np.ndarray) -> list[tuple[int, np.ndarray]]:
        out = [(1, x)]
        ratio = 1
        while ratio < self.max_ratio:
            left = self._pending.pop(ratio, None)
            if left is None:
                self._pending[ratio] = x
                break
            x = left + x
            ratio *= 2
            out.append((ratio, x))
        return out
