"""Problem definition: scalar nonlinearities, Nemytskii drift, multiplication diffusion."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidArgument
from .spectral import (
    OperatorSpec,
    SpectralField,
    coeffs_to_grid,
    fractional_factors,
    grid_to_coeffs,
    vr_norm_coeffs,
)

MAX_ORDER = 5  # fifth derivative bound = Lipschitz constant of the fourth


@dataclass(frozen=True, eq=False)
class ScalarFunction:
    """Scalar C^4 function with closed-form derivatives.

    ``bounds[m]`` is sup |f^(m)| for m = 1..5; the fifth-order entry is the
    global Lipschitz constant of the fourth derivative.
    """

    kind: str
    params: dict
    _derivs: Callable[[np.ndarray, int], np.ndarray] = field(repr=False)
    bounds: tuple

    def __call__(self, x):
        return self._derivs(np.asarray(x, dtype=float), 0)

    def deriv(self, x, m: int = 1):
        if not 0 <= m <= MAX_ORDER:
            raise InvalidArgument(f"derivative order must lie in 0..{MAX_ORDER}, got {m}")
        return self._derivs(np.asarray(x, dtype=float), m)

    def bound(self, m: int) -> float:
        return self.bounds[m - 1]

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def is_constant(self) -> bool:
        return self.kind in ("zero", "constant")

    @property
    def constant_value(self) -> float:
        return 0.0 if self.kind == "zero" else float(self.params["c"])

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def zero() -> ScalarFunction:
    return ScalarFunction("zero", {}, lambda x, m: np.zeros_like(x), (0.0,) * MAX_ORDER)


def constant(c: float) -> ScalarFunction:
    c = float(c)
    return ScalarFunction(
        "constant", {"c": c},
        lambda x, m: np.full_like(x, c) if m == 0 else np.zeros_like(x),
        (0.0,) * MAX_ORDER,
    )


def sine(a: float = 1.0, omega: float = 1.0) -> ScalarFunction:
    """a sin(omega x)."""
    a, omega = float(a), float(omega)
    fn = lambda x, m: a * omega**m * np.sin(omega * x + m * np.pi / 2)
    return ScalarFunction("sine", {"a": a, "omega": omega}, fn,
                          tuple(abs(a) * abs(omega) ** m for m in range(1, MAX_ORDER + 1)))


def cosine(c0: float = 1.0, c1: float = 0.5, omega: float = 1.0) -> ScalarFunction:
    """c0 + c1 cos(omega x)."""
    c0, c1, omega = float(c0), float(c1), float(omega)

    def fn(x, m):
        out = c1 * omega**m * np.cos(omega * x + m * np.pi / 2)
        return out + c0 if m == 0 else out

    return ScalarFunction("cosine", {"c0": c0, "c1": c1, "omega": omega}, fn,
                          tuple(abs(c1) * abs(omega) ** m for m in range(1, MAX_ORDER + 1)))


def _tanh_polys(order: int) -> list[Polynomial]:
    # d/dx P(tanh x) = P'(t) (1 - t^2)
    polys = [Polynomial([0.0, 1.0])]
    sech2 = Polynomial([1.0, 0.0, -1.0])
    for _ in range(order):
        polys.append(polys[-1].deriv() * sech2)
    return polys


def _sup_on_unit_interval(P: Polynomial) -> float:
    cands = [-1.0, 1.0]
    for z in P.deriv().roots():
        if abs(z.imag) < 1e-12 and -1 <= z.real <= 1:
            cands.append(z.real)
    return float(max(abs(P(c)) for c in cands))


def tanh_scaled(a: float = 1.0) -> ScalarFunction:
    """tanh(a x)."""
    a = float(a)
    polys = _tanh_polys(MAX_ORDER)

    def fn(x, m):
        return a**m * polys[m](np.tanh(a * x))

    bnds = tuple(abs(a) ** m * _sup_on_unit_interval(polys[m]) for m in range(1, MAX_ORDER + 1))
    return ScalarFunction("tanh_scaled", {"a": a}, fn, bnds)


def custom(derivs: Sequence[Callable], bounds: Sequence[float], name: str = "custom") -> ScalarFunction:
    """User-supplied function: ``derivs[m]`` evaluates the m-th derivative."""
    if len(derivs) < 5 or len(bounds) < 4:
        raise InvalidArgument("custom functions need derivatives 0..4 and bounds for orders 1..4")
    bnds = tuple(float(b) for b in bounds) + (math.inf,) * (MAX_ORDER - len(bounds))

    def fn(x, m):
        if m >= len(derivs):
            raise InvalidArgument(f"custom function {name!r} has no derivative of order {m}")
        return np.asarray(derivs[m](x), dtype=float) * np.ones_like(x)

    return ScalarFunction("custom", {"name": name}, fn, bnds[:MAX_ORDER])


CATALOG = {
    "zero": zero,
    "constant": constant,
    "sine": sine,
    "cosine": cosine,
    "tanh_scaled": tanh_scaled,
}


def scalar_from_dict(d: dict) -> ScalarFunction:
    d = dict(d)
    kind = d.pop("kind")
    if kind not in CATALOG:
        raise InvalidArgument(f"unknown scalar function {kind!r}; choose from {sorted(CATALOG)}")
    return CATALOG[kind](**d)


@dataclass(frozen=True, eq=False)
class Functional:
    """Test functional on the state space, evaluated on coefficient arrays."""

    kind: str
    weights: np.ndarray | None = None
    fn: Callable | None = field(default=None, repr=False)

    def __call__(self, v):
        c = v.coeffs if isinstance(v, SpectralField) else np.asarray(v)
        if self.kind == "exp_neg_l2sq":
            # Parseval: ||v||_{L^2}^2 = sum_k a_k^2
            return np.exp(-np.sum(c * c, axis=-1))
        if self.kind == "cos_inner":
            return np.cos(c @ self.weights)
        return self.fn(c)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.weights is not None:
            out["weights"] = [float(w) for w in self.weights]
        return out


def exp_neg_l2sq() -> Functional:
    return Functional("exp_neg_l2sq")


def cos_inner(w) -> Functional:
    return Functional("cos_inner", weights=np.asarray(w, dtype=float))


def custom_functional(fn: Callable) -> Functional:
    return Functional("custom", fn=fn)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    f: ScalarFunction
    b: ScalarFunction
    phi: Functional
    xi: SpectralField
    T: float = 1.0
    p: float = 2.0
    beta: float = 0.26
    vartheta: float | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgument("T must be positive")
        if self.p < 2:
            raise InvalidArgument("p must be at least 2")
        if not 0.25 < self.beta < 0.5:
            raise InvalidArgument(f"beta must lie in (1/4, 1/2), got {self.beta}")
        if self.vartheta is None:
            object.__setattr__(self, "vartheta", 2.0 * self.beta)

    @property
    def op(self) -> OperatorSpec:
        return self.xi.op

    @property
    def theta(self) -> float:
        return 2.0 * self.beta

    @property
    def additive(self) -> bool:
        return self.b.is_constant

    def rate_hypotheses(self, eps: float) -> dict:
        """Which hypotheses of the weak-rate theorem this instance meets for a given epsilon."""
        p_min = 5.0 / (2.0 * (self.beta - 0.25))
        beta_max = 0.25 + min(eps, 1.0) / 28.0
        return {
            "p_min": p_min,
            "p_ok": self.p > p_min,
            "beta_max": beta_max,
            "beta_ok": self.beta < beta_max,
        }

    def describe(self) -> dict:
        return {
            "f": self.f.describe(),
            "b": self.b.describe(),
            "phi": self.phi.describe(),
            "xi": [float(c) for c in self.xi.coeffs],
            "T": self.T,
            "p": self.p,
            "beta": self.beta,
            "vartheta": self.vartheta,
            "M": self.op.M,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_model(op: OperatorSpec, T: float = 1.0, p: float = 2.0, beta: float = 0.26) -> ModelSpec:
    """f = sin, b = 1 + cos/2, phi = exp(-||.||^2), xi = e_1."""
    return ModelSpec(sine(), cosine(1.0, 0.5), exp_neg_l2sq(), op.basis(1), T=T, p=p, beta=beta)


# -- pseudo-spectral operators ---------------------------------------------

def _grid_size(op: OperatorSpec, J: int | None) -> int:
    J = op.default_grid() if J is None else J
    if J < 2 * op.M + 1:
        raise InvalidArgument(f"dealiasing needs J >= 2M+1 = {2 * op.M + 1}, got {J}")
    return J


def nemytskii_F(f: ScalarFunction, v: SpectralField, J: int | None = None) -> SpectralField:
    op = v.op
    if f.is_zero:
        return v._wrap(np.zeros_like(v.coeffs))
    J = _grid_size(op, J)
    return v._wrap(grid_to_coeffs(f(coeffs_to_grid(v.coeffs, J)), op.M))


def nemytskii_dF(f: ScalarFunction, m: int, v: SpectralField, *us: SpectralField,
                 J: int | None = None) -> SpectralField:
    """m-th Frechet derivative of the Nemytskii operator at v applied to u_1..u_m."""
    if not 1 <= m <= 4:
        raise InvalidArgument(f"derivative order must lie in 1..4, got {m}")
    if len(us) != m:
        raise InvalidArgument(f"order {m} derivative needs {m} directions, got {len(us)}")
    op = v.op
    J = _grid_size(op, J)
    g = f.deriv(coeffs_to_grid(v.coeffs, J), m)
    for u in us:
        g = g * coeffs_to_grid(u.coeffs, J)
    return v._wrap(grid_to_coeffs(g, op.M))


def multiplication_B(b: ScalarFunction, v: SpectralField, w: SpectralField,
                     J: int | None = None) -> SpectralField:
    """Galerkin projection of x -> b(v(x)) w(x)."""
    if b.is_constant:
        return w._wrap(b.constant_value * w.coeffs)
    op = v.op
    J = _grid_size(op, J)
    g = b(coeffs_to_grid(v.coeffs, J)) * coeffs_to_grid(w.coeffs, J)
    return w._wrap(grid_to_coeffs(g, op.M))


def multiplier_matrix(g: np.ndarray, M: int) -> np.ndarray:
    """Matrix P[k, l] = <Pi_M[g e_k], e_l> for grid multiplier values g."""
    J = g.shape[-1]
    E = coeffs_to_grid(np.eye(M), J)
    return grid_to_coeffs(g * E, M)


def hs_norm_multiplier(g: np.ndarray, op: OperatorSpec, r: float) -> float:
    P = multiplier_matrix(g, op.M)
    w = fractional_factors(op, r)
    return float(np.sqrt(np.sum((P * w) ** 2)))


def hs_norm_B(b: ScalarFunction, v: SpectralField, r: float, J: int | None = None) -> float:
    """Hilbert-Schmidt norm of u -> (eta - A)^r B(v) u on the truncation."""
    if r > 0:
        raise InvalidArgument(f"hs_norm_B takes r <= 0, got {r}")
    op = v.op
    if b.is_constant:
        w = fractional_factors(op, r)
        return abs(b.constant_value) * float(np.sqrt(np.sum(w**2)))
    J = _grid_size(op, J)
    return hs_norm_multiplier(b(coeffs_to_grid(v.coeffs, J)), op, r)


# -- Lipschitz bookkeeping ---------------------------------------------------

def _random_fields(rng, op: OperatorSpec, n: int) -> np.ndarray:
    scale = rng.choice([0.1, 0.5, 1.0, 2.0, 5.0], size=(n, 1))
    decay = op.modes ** -rng.choice([0.5, 1.0, 2.0], size=(n, 1))
    return scale * rng.standard_normal((n, op.M)) * decay


def lip_seminorm_estimate(op_kind: str, model: ModelSpec, r: float, samples: int = 64,
                          seed: int = 0, J: int | None = None) -> float:
    """Sampled LOWER estimate of |F|_{Lip0(V, V_r)} or |B|_{Lip0(V, gamma(U, V_r))}."""
    if samples < 2:
        raise InvalidArgument("need at least two samples")
    if r > 0:
        raise InvalidArgument(f"seminorm estimates take r <= 0, got {r}")
    op = model.op
    fn = model.f if op_kind == "F" else model.b
    if op_kind not in ("F", "B"):
        raise InvalidArgument(f"op_kind must be 'F' or 'B', got {op_kind!r}")
    if fn.is_constant:
        return 0.0
    J = _grid_size(op, J)
    rng = np.random.default_rng(seed)
    v = _random_fields(rng, op, samples)
    eps = rng.choice([1.0, 1e-1, 1e-2, 1e-3], size=(samples, 1))
    w = v + eps * _random_fields(rng, op, samples)
    dist = vr_norm_coeffs(v - w, op, 0.0)
    gv = fn(coeffs_to_grid(v, J))
    gw = fn(coeffs_to_grid(w, J))
    best = 0.0
    for i in range(samples):
        if dist[i] == 0:
            continue
        g = gv[i] - gw[i]
        if op_kind == "F":
            num = vr_norm_coeffs(grid_to_coeffs(g, op.M), op, r)
        else:
            num = hs_norm_multiplier(g, op, r)
        best = max(best, float(num / dist[i]))
    return best


def lip_seminorm_bound(op_kind: str, model: ModelSpec, r: float) -> float:
    """Analytic UPPER bound of the same seminorm on V = L^2(0,1).

    Uses the pointwise mean-value bound with sup|f'| and discrete Parseval;
    for B, sum_l ||g e_l||^2 <= 2 ||g||^2 per mode gives the sqrt(2) factor.
    """
    op = model.op
    w = fractional_factors(op, r)
    if op_kind == "F":
        return model.f.bound(1) * float(np.max(w))
    if op_kind == "B":
        return math.sqrt(2.0) * model.b.bound(1) * float(np.sqrt(np.sum(w**2)))
    raise InvalidArgument(f"op_kind must be 'F' or 'B', got {op_kind!r}")


def value_at_zero(op_kind: str, model: ModelSpec, r: float) -> float:
    """||F(0)||_{V_r}, resp. ||B(0)||_{gamma(U, V_r)}."""
    zero_field = model.op.zeros()
    if op_kind == "F":
        return float(vr_norm_coeffs(nemytskii_F(model.f, zero_field).coeffs, model.op, r))
    return hs_norm_B(model.b, zero_field, r)
