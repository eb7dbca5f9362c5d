"""Sine-basis Galerkin representation of the Dirichlet Laplacian on (0, 1).

The basis is e_k(x) = sqrt(2) sin(k pi x), k = 1..M, with A e_k = -pi^2 k^2 e_k.
Coefficient arrays may carry leading batch dimensions; the mode axis is last.
Grid values live on the interior collocation points x_j = j / (J + 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

from .errors import InvalidArgument, InvalidOperator

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class OperatorSpec:
    M: int
    T: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise InvalidArgument(f"mode count must be a positive integer, got {self.M}")
        if not self.T > 0:
            raise InvalidArgument(f"horizon T must be positive, got {self.T}")
        if not np.all(self.eta + self.eigenvalues > 0):
            raise InvalidOperator("eta + pi^2 k^2 must be positive for every mode")

    @cached_property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.M + 1, dtype=float)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues pi^2 k^2 of -A."""
        return np.pi**2 * self.modes**2

    @cached_property
    def shifted(self) -> np.ndarray:
        return self.eta + self.eigenvalues

    def default_grid(self) -> int:
        """Smallest J = 2^m - 1 with J >= 2M + 1 (fast DST-I lengths)."""
        J = 3
        while J < 2 * self.M + 1:
            J = 2 * J + 1
        return J

    def basis(self, k: int) -> "SpectralField":
        c = np.zeros(self.M)
        c[k - 1] = 1.0
        return SpectralField(c, self)

    def zeros(self) -> "SpectralField":
        return SpectralField(np.zeros(self.M), self)


@dataclass(frozen=True, eq=False)
class SpectralField:
    coeffs: np.ndarray
    op: OperatorSpec = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape[-1:] != (self.op.M,):
            raise InvalidArgument(f"expected {self.op.M} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("spectral coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def _wrap(self, c):
        return SpectralField(c, self.op)

    def __add__(self, other):
        return self._wrap(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self._wrap(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self._wrap(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.coeffs)


@dataclass(frozen=True, eq=False)
class GridField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[-1] < 1:
            raise InvalidArgument("grid needs at least one point")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def J(self) -> int:
        return self.values.shape[-1]

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.J)


def grid_points(J: int) -> np.ndarray:
    return np.arange(1, J + 1) / (J + 1)


# Array-level transforms used by the time steppers.  DST-I of length J is
# y_k = 2 sum_j x_j sin(pi j k / (J + 1)), so both directions are rescaled DSTs.

def coeffs_to_grid(coeffs: np.ndarray, J: int) -> np.ndarray:
    M = coeffs.shape[-1]
    if J < M:
        raise InvalidArgument(f"grid size J={J} is smaller than mode count M={M}")
    # n=J zero-pads the coefficient vector up to the grid size
    return scipy.fft.dst(coeffs, type=1, n=J, axis=-1) * (SQRT2 / 2.0)


def grid_to_coeffs(values: np.ndarray, M: int) -> np.ndarray:
    J = values.shape[-1]
    if M > J:
        raise InvalidArgument(f"mode count M={M} exceeds grid size J={J}")
    out = scipy.fft.dst(values, type=1, axis=-1)[..., :M]
    return out * (SQRT2 / (2.0 * (J + 1)))


def to_grid(v: SpectralField, J: int) -> GridField:
    return GridField(coeffs_to_grid(v.coeffs, J))


def from_grid(g: GridField, M: int, op: OperatorSpec | None = None) -> SpectralField:
    """Galerkin projection of grid samples onto the first M sine modes."""
    if op is None:
        op = OperatorSpec(M)
    elif op.M != M:
        raise InvalidArgument(f"operator has {op.M} modes, asked for {M}")
    return SpectralField(grid_to_coeffs(g.values, M), op)


def semigroup_factors(op: OperatorSpec, t: float) -> np.ndarray:
    if t < 0:
        raise InvalidArgument(f"semigroup time must be nonnegative, got {t}")
    return np.exp(-op.eigenvalues * t)


def semigroup_apply(t: float, v: SpectralField) -> SpectralField:
    return v._wrap(semigroup_factors(v.op, t) * v.coeffs)


def fractional_factors(op: OperatorSpec, r: float) -> np.ndarray:
    lam = op.shifted
    if np.any(lam <= 0):
        raise InvalidOperator("fractional power undefined: eta + pi^2 k^2 <= 0")
    return lam**r


def fractional_apply(r: float, v: SpectralField) -> SpectralField:
    """Apply (eta - A)^r; negative r smooths."""
    return v._wrap(fractional_factors(v.op, r) * v.coeffs)


def vr_norm_coeffs(coeffs: np.ndarray, op: OperatorSpec, r: float = 0.0) -> np.ndarray:
    if r == 0:
        return np.sqrt(np.sum(coeffs * coeffs, axis=-1))
    w = fractional_factors(op, r)
    return np.sqrt(np.sum((w * coeffs) ** 2, axis=-1))


def lp_norm_values(values: np.ndarray, p: float) -> np.ndarray:
    if p < 1:
        raise InvalidArgument(f"L^p norm needs p >= 1, got {p}")
    J = values.shape[-1]
    return (np.sum(np.abs(values) ** p, axis=-1) / (J + 1)) ** (1.0 / p)


def norm(v: SpectralField, which: str = "V", r: float = 0.0, p: float = 2.0, J: int | None = None):
    """Norm of ``v``: ``which="V"`` gives the V_r norm, ``which="L"`` the L^p(0,1) norm.

    L^p norms use equal-weight quadrature on the collocation grid (default
    the smallest fast grid with J >= 2M + 1).
    """
    if which == "V":
        return vr_norm_coeffs(v.coeffs, v.op, r)
    if which == "L":
        if p < 1:
            raise InvalidArgument(f"L^p norm needs p >= 1, got {p}")
        J = v.op.default_grid() if J is None else J
        if J < 2 * v.op.M + 1:
            raise InvalidArgument(f"quadrature grid J={J} must be at least 2M+1={2 * v.op.M + 1}")
        return lp_norm_values(coeffs_to_grid(v.coeffs, J), p)
    raise InvalidArgument(f"unknown norm kind {which!r}; use 'V' or 'L'")
