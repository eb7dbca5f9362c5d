"""Scalar special functions and constants used by the a priori bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import InvalidArgument, NumericOverflow
from .spectral import OperatorSpec

_SNAP_ULPS = 4


def floor_h(t: float, h: float) -> float:
    """Largest multiple n*h with n*h <= t; values within 4 ulps of a multiple snap to it."""
    if not h > 0:
        raise InvalidArgument(f"step h must be positive, got {h}")
    q = t / h
    n = round(q)
    if abs(q - n) <= _SNAP_ULPS * math.ulp(max(abs(q), 1.0)):
        # exact multiples map to themselves
        return float(t) if abs(n * h - t) <= _SNAP_ULPS * math.ulp(max(abs(t), h)) else n * h
    return math.floor(q) * h


@dataclass(frozen=True)
class GronwallEnvelope:
    """Square-rooted Mittag-Leffler type series sum_n x^(2n) Gamma(r)^n / Gamma(nr+1)."""

    r: float
    tol: float = 1e-14
    max_terms: int = 10_000

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise InvalidArgument(f"index r must lie in (0, 1], got {self.r}")

    def log_value(self, x: float) -> float:
        """Natural log of E_r(x) (half the log of the series)."""
        if x < 0:
            raise InvalidArgument(f"argument must be nonnegative, got {x}")
        if x == 0:
            return 0.0
        r = self.r
        log_step = 2.0 * math.log(x) + special.gammaln(r)
        logs = [0.0]
        cur = 0.0
        total = 0.0  # running log of the partial sum
        for n in range(1, self.max_terms + 1):
            # ratio Gamma((n-1)r+1)/Gamma(nr+1) via the Pochhammer symbol avoids lgamma cancellation
            cur += log_step - math.log(special.poch((n - 1) * r + 1.0, r))
            logs.append(cur)
            total = np.logaddexp(total, cur)
            if cur < logs[-2] and cur < total + math.log(self.tol):
                break
        else:
            raise NumericOverflow(
                f"E_{r}({x}) did not converge within {self.max_terms} terms"
            )
        arr = np.asarray(logs)
        shift = arr.max() if arr.max() > 600 else 0.0
        return 0.5 * (shift + math.log(np.sum(np.exp(arr - shift))))

    def __call__(self, x: float) -> float:
        lv = self.log_value(x)
        if lv > 709.0:
            raise NumericOverflow(f"E_{self.r}({x}) = exp({lv:.1f}) overflows double precision")
        return math.exp(lv)


def calE(r: float, x: float, tol: float = 1e-14, max_terms: int = 10_000) -> float:
    return GronwallEnvelope(r, tol, max_terms)(x)


def log_calE(r: float, x: float, tol: float = 1e-14, max_terms: int = 10_000) -> float:
    return GronwallEnvelope(r, tol, max_terms).log_value(x)


def _max_relaxation_ratio(r: float, xmax: float) -> float:
    """sup over x in (0, xmax] of (1 - e^-x) / x^r."""
    g = lambda x: -math.expm1(-x) / x**r
    if r == 0:
        return -math.expm1(-xmax)
    if r >= 1:
        return 1.0  # decreasing, limit 1 at x -> 0
    # g'(x) = 0  <=>  x e^-x = r (1 - e^-x); unique positive root
    dg = lambda x: x * math.exp(-x) + r * math.expm1(-x)
    hi = 1.0
    while dg(hi) > 0:
        hi *= 2.0
    xstar = optimize.brentq(dg, 1e-12, hi, xtol=1e-14)
    return g(min(xstar, xmax))


def chi_terms(r: float, op: OperatorSpec) -> tuple[float, float]:
    """The two suprema entering chi_r, maximised over the truncated spectrum."""
    if not 0 <= r <= 1:
        raise InvalidArgument(f"chi_r needs r in [0, 1], got {r}")
    lam = op.eigenvalues
    shifted = op.shifted
    T = op.T
    if r == 0:
        smoothing = 1.0
    else:
        interior = r / lam <= T
        sup_t = np.where(
            interior,
            (r / (math.e * lam)) ** r,
            T**r * np.exp(-lam * T),
        )
        smoothing = float(np.max(sup_t * shifted**r))
    # (eta + lam)^-r (1 - e^{-lam t}) / t^r = (lam / (eta + lam))^r g(lam t); g peaks at largest lam for small r
    scale = (lam / shifted) ** r
    ratio = max(_max_relaxation_ratio(r, lam_k * T) * s for lam_k, s in ((lam[0], scale[0]), (lam[-1], scale[-1])))
    return smoothing, float(ratio)


def chi_constant(r: float, op: OperatorSpec) -> float:
    smoothing, ratio = chi_terms(r, op)
    return max(1.0, smoothing, ratio)


def upsilon_constant(p: float, policy: str = "ito") -> float:
    """Stochastic-integral constant for moments of order p.

    ``ito``: the Ito isometry, exact only for p = 2. ``bdg``: sqrt(p(p-1)/2),
    a conservative admissible upper bound for p >= 2.
    """
    if p < 2:
        raise InvalidArgument(f"p must be at least 2, got {p}")
    if policy == "ito":
        if p != 2:
            raise InvalidArgument("the ito policy is only valid for p = 2; use 'bdg'")
        return 1.0
    if policy == "bdg":
        return math.sqrt(p * (p - 1) / 2.0)
    raise InvalidArgument(f"unknown upsilon policy {policy!r}")


@dataclass
class ConstantSet:
    chi: dict = field(default_factory=dict)
    upsilon: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    policy: str = "ito"

    @classmethod
    def build(cls, op: OperatorSpec, rs=(), ps=(2.0,), policy: str = "ito") -> "ConstantSet":
        cs = cls(policy=policy)
        for r in rs:
            cs.chi_of(r, op)
        for p in ps:
            cs.upsilon_of(p)
        return cs

    def chi_of(self, r: float, op: OperatorSpec) -> float:
        r = float(min(max(r, 0.0), 1.0)) if -1e-15 < r < 1 + 1e-15 else r
        key = round(r, 12)
        if key not in self.chi:
            self.chi[key] = chi_constant(r, op)
            self.provenance[f"chi[{key}]"] = "closed-form"
        return self.chi[key]

    def upsilon_of(self, p: float) -> float:
        if p not in self.upsilon:
            self.upsilon[p] = upsilon_constant(p, self.policy)
            self.provenance[f"upsilon[{p}]"] = f"policy:{self.policy}"
        return self.upsilon[p]
