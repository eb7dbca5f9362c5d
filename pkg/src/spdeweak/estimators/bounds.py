"""Evaluation of explicit a priori, perturbation and mollification bounds.

Every inequality is instantiated with V = L^2(0,1) on the M-mode truncation.
There S_t = e^{tA} and L_{s,t} = e^{(t - floor_h(s))A} are contractions, so
their operator-norm suprema equal 1, and the semigroup constants of the
scheme coincide with the smoothing constants chi_r.

Seminorms of F and B enter either as sampled lower estimates or as analytic
upper bounds.  Both are listed in each report; ``seminorms`` selects the one
used for the right-hand side.  A PASS with sampled seminorms is evidence, not
proof.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidArgument, NumericOverflow
from ..model import ModelSpec, lip_seminorm_bound, lip_seminorm_estimate, value_at_zero
from ..special import ConstantSet, GronwallEnvelope
from ..spectral import vr_norm_coeffs

LOG_MAX = 709.0


@dataclass
class Ingredient:
    name: str
    value: float
    provenance: str  # closed-form | policy | sampled-estimate | analytic | empirical
    note: str = ""


@dataclass
class BoundReport:
    inequality: str
    lhs: float
    lhs_stderr: float
    lhs_upper: float
    rhs: float
    margin: float
    status: str  # PASS | FAIL | UNBOUNDED
    ingredients: list = field(default_factory=list)
    seminorms: str = "sampled"
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def ingredient(self, name: str) -> Ingredient:
        for ing in self.ingredients:
            if ing.name == name:
                return ing
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        for k in ("lhs", "lhs_stderr", "lhs_upper", "rhs", "margin"):
            d[k] = _json_float(d[k])
        for ing in d["ingredients"]:
            ing["value"] = _json_float(ing["value"])
        return d


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


def _empirical(emp) -> tuple[float, float, float]:
    """Accept a float, or a dict with estimate/stderr/upper as from ``sup_moment``."""
    if isinstance(emp, dict):
        est = float(emp["estimate"])
        se = float(emp.get("stderr", 0.0))
        return est, se, float(emp.get("upper", est + 3.0 * se))
    est = float(emp)
    return est, 0.0, est


def _report(name, emp, log_rhs, ingredients, seminorms, note="") -> BoundReport:
    est, se, upper = _empirical(emp)
    if log_rhs is None:
        return BoundReport(name, est, se, upper, math.inf, math.inf, "UNBOUNDED", ingredients, seminorms, note)
    if log_rhs > LOG_MAX:
        note = (note + "; " if note else "") + f"log RHS = {log_rhs:.6g} overflows double precision"
        return BoundReport(name, est, se, upper, math.inf, math.inf, "UNBOUNDED", ingredients, seminorms, note)
    rhs = math.exp(log_rhs) if log_rhs > -math.inf else 0.0
    margin = rhs - upper
    return BoundReport(name, est, se, upper, rhs, margin, "PASS" if margin >= 0 else "FAIL",
                       ingredients, seminorms, note)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


# -- shared pieces -----------------------------------------------------------

def gronwall_argument(y: float, z: float, upsilon: float, T: float, vartheta: float) -> float:
    """y sqrt(2) T^{1-theta} / sqrt(1-theta) + z Upsilon sqrt(2 T^{1-theta})."""
    a = T ** (1.0 - vartheta)
    return y * math.sqrt(2.0) * a / math.sqrt(1.0 - vartheta) + z * upsilon * math.sqrt(2.0 * a)


def log_gronwall(x: float, vartheta: float) -> float:
    """log E_{1-theta}(x); raises NumericOverflow like the envelope itself."""
    return GronwallEnvelope(1.0 - vartheta).log_value(x)


def apriori_factor(y: float, z: float, upsilon: float, T: float, vartheta: float) -> float:
    """sqrt(2) E_{1-theta}[...] of the strong a priori estimate."""
    return math.sqrt(2.0) * GronwallEnvelope(1.0 - vartheta)(gronwall_argument(y, z, upsilon, T, vartheta))


def forcing_factor(y: float, z: float, upsilon: float, T: float, vartheta: float) -> float:
    """1 + y T^{1-theta}/(1-theta) + z Upsilon sqrt(T^{1-theta}/(1-theta))."""
    a = T ** (1.0 - vartheta)
    return 1.0 + y * a / (1.0 - vartheta) + z * upsilon * math.sqrt(a / (1.0 - vartheta))


def apriori_estimate(y, z, upsilon, T, vartheta, sup_forcing_free: float) -> float:
    """Upper bound of sup_t ||X_t|| given sup_t ||X_t - (int Y + int Z dW)||."""
    return apriori_factor(y, z, upsilon, T, vartheta) * sup_forcing_free


def apriori_estimate_from_solution(y, z, upsilon, T, vartheta, sup_norm: float) -> float:
    """Second inequality of the a priori estimate: in terms of sup_t ||X_t||."""
    return forcing_factor(y, z, upsilon, T, vartheta) * apriori_factor(y, z, upsilon, T, vartheta) * sup_norm


def perturbation_factor(y: float, z: float, upsilon: float, T: float, vartheta: float) -> float:
    """Factor multiplying the perturbation defect in the strong perturbation estimate."""
    return apriori_factor(y, z, upsilon, T, vartheta)


@dataclass
class Seminorms:
    """Lipschitz seminorms and values at zero of F: V -> V_{-theta}, B: V -> gamma(U, V_{-theta/2})."""

    F_lip: float
    B_lip: float
    F0: float
    B0: float
    F_lip_sampled: float
    B_lip_sampled: float
    F_lip_analytic: float
    B_lip_analytic: float
    mode: str

    @classmethod
    def of(cls, model: ModelSpec, vartheta: float, mode: str = "sampled", samples: int = 256,
           seed: int = 0) -> "Seminorms":
        if mode not in ("sampled", "analytic"):
            raise InvalidArgument(f"seminorms must be 'sampled' or 'analytic', got {mode!r}")
        Fs = lip_seminorm_estimate("F", model, -vartheta, samples, seed)
        Bs = lip_seminorm_estimate("B", model, -vartheta / 2.0, samples, seed + 1)
        Fa = lip_seminorm_bound("F", model, -vartheta)
        Ba = lip_seminorm_bound("B", model, -vartheta / 2.0)
        F0 = value_at_zero("F", model, -vartheta)
        B0 = value_at_zero("B", model, -vartheta / 2.0)
        F, B = (Fs, Bs) if mode == "sampled" else (Fa, Ba)
        return cls(F, B, F0, B0, Fs, Bs, Fa, Ba, mode)

    def ingredients(self) -> list:
        used = self.mode
        return [
            Ingredient("|F|_Lip0(V,V_-theta)", self.F_lip,
                       "sampled-estimate" if used == "sampled" else "analytic", "used"),
            Ingredient("|B|_Lip0(V,gamma(U,V_-theta/2))", self.B_lip,
                       "sampled-estimate" if used == "sampled" else "analytic", "used"),
            Ingredient("|F|_Lip0 sampled lower estimate", self.F_lip_sampled, "sampled-estimate"),
            Ingredient("|B|_Lip0 sampled lower estimate", self.B_lip_sampled, "sampled-estimate"),
            Ingredient("|F|_Lip0 analytic upper bound", self.F_lip_analytic, "analytic"),
            Ingredient("|B|_Lip0 analytic upper bound", self.B_lip_analytic, "analytic"),
            Ingredient("||F(0)||_V_-theta", self.F0, "closed-form"),
            Ingredient("||B(0)||_gamma(U,V_-theta/2)", self.B0, "closed-form"),
        ]


def _setup(model: ModelSpec, constants: ConstantSet | None, seminorms, policy_p: float | None = None):
    op = model.op
    th = model.vartheta
    if not 0 <= th < 1:
        raise InvalidArgument(f"vartheta must lie in [0, 1), got {th}")
    cs = ConstantSet(policy="ito" if model.p == 2 else "bdg") if constants is None else constants
    ups = cs.upsilon_of(model.p if policy_p is None else policy_p)
    sn = seminorms if isinstance(seminorms, Seminorms) else Seminorms.of(model, th, seminorms)
    ing = [
        Ingredient("T", model.T, "closed-form"),
        Ingredient("vartheta", th, "closed-form"),
        Ingredient(f"Upsilon_{model.p:g}", ups, f"policy:{cs.policy}"),
        Ingredient("sup ||S_t||, sup max(1, ||L_0,t||)", 1.0, "closed-form",
                   "contractions on L^2(0,1)"),
    ] + sn.ingredients()
    return op, th, cs, ups, sn, ing


def _chi(cs: ConstantSet, r: float, op, ing: list) -> float:
    v = cs.chi_of(r, op)
    ing.append(Ingredient(f"chi_{r:.6g}", v, "closed-form"))
    return v


def _log_envelope(x: float, th: float, ing: list):
    ing.append(Ingredient("E argument", x, "closed-form", f"E_{{{1 - th:.6g}}}"))
    try:
        lv = log_gronwall(x, th)
    except NumericOverflow as exc:
        ing.append(Ingredient("E value", math.inf, "closed-form", str(exc)))
        return None
    ing.append(Ingredient("log E value", lv, "closed-form"))
    return lv


# -- inequalities -------------------------------------------------------------

def eval_apriori_bound(model: ModelSpec, op=None, constants: ConstantSet | None = None,
                       empirical_sup=0.0, seminorms="sampled") -> BoundReport:
    """A priori bound on sup_t ||Y^0_t||_{L^p(P;V)} for the exp-Euler process."""
    op, th, cs, ups, sn, ing = _setup(model, constants, seminorms)
    T = model.T
    a = T ** (1.0 - th)
    c_th = _chi(cs, th, op, ing)
    c_half = _chi(cs, th / 2.0, op, ing)
    y0 = float(vr_norm_coeffs(model.xi.coeffs, op, 0.0))
    ing.append(Ingredient("||Y_0||_L^p(P;V)", y0, "closed-form"))
    bracket = y0 + c_th * a * sn.F0 / (1.0 - th) + c_half * ups * math.sqrt(a) * sn.B0 / math.sqrt(1.0 - th)
    ing.append(Ingredient("bracket", bracket, "closed-form"))
    x = gronwall_argument(c_th * sn.F_lip, c_half * sn.B_lip, ups, T, th)
    lv = _log_envelope(x, th, ing)
    log_rhs = None if lv is None else 0.5 * math.log(2.0) + _log(bracket) + lv
    return _report("a-priori(non-mollified)", empirical_sup, log_rhs, ing, sn.mode)


def eval_perturbation_bound(model: ModelSpec, op=None, xi1=None, xi2=None, constants: ConstantSet | None = None,
                            empirical_sup_diff=0.0, seminorms="sampled") -> BoundReport:
    """Initial-value perturbation bound on sup_t ||X_t - Xbar_t||_{L^p(P;V)}."""
    op_, th, cs, ups, sn, ing = _setup(model, constants, seminorms)
    op = op_ if op is None else op
    c1 = np.asarray(getattr(xi1, "coeffs", xi1), dtype=float)
    c2 = np.asarray(getattr(xi2, "coeffs", xi2), dtype=float)
    d0 = float(vr_norm_coeffs(c1 - c2, op, 0.0))
    ing.append(Ingredient("||X_0 - Xbar_0||_L^p(P;V)", d0, "closed-form"))
    c_th = _chi(cs, th, op, ing)
    c_half = _chi(cs, th / 2.0, op, ing)
    x = gronwall_argument(c_th * sn.F_lip, c_half * sn.B_lip, ups, model.T, th)
    lv = _log_envelope(x, th, ing)
    log_rhs = None if lv is None else 0.5 * math.log(2.0) + _log(d0) + lv
    return _report("perturbation(initial-value)", empirical_sup_diff, log_rhs, ing, sn.mode)


def eval_mollify_bound(model: ModelSpec, op=None, kappa: float = 0.0, rho: float = 0.0,
                       constants: ConstantSet | None = None, empirical=0.0,
                       seminorms="sampled") -> BoundReport:
    """Bound on sup_t ||Y^0_t - Y^kappa_t||_{L^p(P;V)} decaying like kappa^rho."""
    op, th, cs, ups, sn, ing = _setup(model, constants, seminorms)
    T = model.T
    if not 0 <= rho < (1.0 - th) / 2.0:
        raise InvalidArgument(f"rho must lie in [0, (1 - vartheta)/2) = [0, {(1 - th) / 2:.6g}), got {rho}")
    if not 0 <= kappa <= T:
        raise InvalidArgument(f"kappa must lie in [0, T], got {kappa}")
    a = T ** (1.0 - th)
    c0 = _chi(cs, 0.0, op, ing)
    c_rho = _chi(cs, rho, op, ing)
    c_th = _chi(cs, th, op, ing)
    c_half = _chi(cs, th / 2.0, op, ing)
    c_rth = _chi(cs, rho + th, op, ing)
    c_rhalf = _chi(cs, rho + th / 2.0, op, ing)
    y0 = float(vr_norm_coeffs(model.xi.coeffs, op, 0.0))
    ing.append(Ingredient("max(1, ||Y_0||)", max(1.0, y0), "closed-form"))
    F_full = sn.F0 + sn.F_lip
    B_full = sn.B0 + sn.B_lip
    ing.append(Ingredient("||F||_Lip0", F_full, "sampled-estimate" if sn.mode == "sampled" else "analytic"))
    ing.append(Ingredient("||B||_Lip0", B_full, "sampled-estimate" if sn.mode == "sampled" else "analytic"))
    bracket = (max(1.0, y0)
               + c_rho * c_th * c_rth * a * F_full / (1.0 - th - rho)
               + ups * c_rho * c_half * c_rhalf * math.sqrt(a) * B_full / math.sqrt(1.0 - th - 2.0 * rho))
    ing.append(Ingredient("bracket", bracket, "closed-form"))
    x = gronwall_argument(c0 * c_th * sn.F_lip, c0 * c_half * sn.B_lip, ups, T, th)
    lv = _log_envelope(x, th, ing)
    ing.append(Ingredient("kappa", kappa, "closed-form"))
    ing.append(Ingredient("rho", rho, "closed-form"))
    if lv is None:
        log_rhs = None
    else:
        pref = 2.0 * (kappa / T) ** rho
        log_rhs = _log(pref) + 2.0 * _log(bracket) + 2.0 * lv
    return _report("mollified-vs-non-mollified", empirical, log_rhs, ing, sn.mode)


def log_kp_bound(model: ModelSpec, constants: ConstantSet | None = None, seminorms="sampled",
                 ingredients: list | None = None) -> float | None:
    """log of the explicit upper bound of K_p; None when the envelope overflows."""
    op, th, cs, ups, sn, ing = _setup(model, constants, seminorms)
    if ingredients is not None:
        ingredients.extend(ing)
        ing = ingredients
    p, T = model.p, model.T
    a = T ** (1.0 - th)
    c0 = _chi(cs, 0.0, op, ing)
    c_th = _chi(cs, th, op, ing)
    c_half = _chi(cs, th / 2.0, op, ing)
    y0 = float(vr_norm_coeffs(model.xi.coeffs, op, 0.0))
    bracket = (c0 * max(1.0, y0) + c_th * (sn.F0 + sn.F_lip) * a / (1.0 - th)
               + ups * c_half * math.sqrt(a) * (sn.B0 + sn.B_lip) / math.sqrt(1.0 - th))
    ing.append(Ingredient("K_p bracket", bracket, "closed-form"))
    x = math.sqrt(2.0) * c_th * a * sn.F_lip / math.sqrt(1.0 - th) + ups * c_half * math.sqrt(2.0 * a) * sn.B_lip
    lv = _log_envelope(x, th, ing)
    if lv is None:
        return None
    return 2.0 * p * _log(bracket) + (p / 2.0 + 1.0) * math.log(2.0) + p * lv


def eval_kp_bound(model: ModelSpec, constants: ConstantSet | None = None, empirical=0.0,
                  seminorms="sampled") -> BoundReport:
    """Explicit bound on K_p = sup_{s,t} E max(1, ||Ybar_s||^p, ||Y_t||^p) versus its MC estimate."""
    ing: list = []
    lk = log_kp_bound(model, constants, seminorms, ing)
    mode = seminorms.mode if isinstance(seminorms, Seminorms) else seminorms
    return _report("K_p", empirical, lk, ing, mode)


def eval_semilinear_distance_bound(model: ModelSpec, N: int, rho: float, varrho: float,
                                   constants: ConstantSet | None = None, empirical=0.0,
                                   K_p: float | None = None, t: float | None = None,
                                   seminorms="sampled") -> BoundReport:
    """Bound on ||Y_t - Ybar_t||_{L^p(P;V_{-rho})} in terms of K_p and h^varrho.

    ``K_p`` defaults to its explicit bound; pass an empirical value to get
    the sharper, MC-informed right-hand side.
    """
    op, th, cs, ups, sn, ing = _setup(model, constants, seminorms)
    T = model.T
    t = T if t is None else t
    if not 0 < t <= T:
        raise InvalidArgument("t must lie in (0, T]")
    if not 0 <= rho < 1:
        raise InvalidArgument(f"rho must lie in [0, 1), got {rho}")
    vr_max = 1.0 - max((1.0 + th) / 2.0 - rho, 0.0)
    if not 0 <= varrho < vr_max:
        raise InvalidArgument(f"varrho must lie in [0, {vr_max:.6g}), got {varrho}")
    h = T / N
    p = model.p
    if K_p is None:
        lk = log_kp_bound(model, cs, sn, ing)
        if lk is None:
            return _report("semilinear-distance", empirical, None, ing, sn.mode)
        ing.append(Ingredient("K_p", math.exp(lk) if lk < LOG_MAX else math.inf, "closed-form", "explicit bound"))
    else:
        lk = _log(K_p)
        ing.append(Ingredient("K_p", K_p, "empirical"))
    r1 = varrho + th - rho
    r2 = varrho + th / 2.0 - rho
    if r1 < 0 or r2 < 0 or r1 > 1:
        raise InvalidArgument(f"smoothing constants needed at {r1:.6g}, {r2:.6g} lie outside [0, 1]")
    c_vr = _chi(cs, varrho, op, ing)
    c1 = _chi(cs, r1, op, ing)
    c2 = _chi(cs, r2, op, ing)
    e1 = max(th + varrho - rho, 0.0)
    e2 = max(th + 2.0 * varrho - 2.0 * rho, 0.0)
    bracket = (c1 * t ** (1.0 - e1) * (sn.F0 + sn.F_lip) / (1.0 - e1)
               + ups * c2 * math.sqrt(t ** (1.0 - e2)) * (sn.B0 + sn.B_lip) / math.sqrt(1.0 - e2))
    ing.append(Ingredient("bracket", bracket, "closed-form"))
    log_rhs = lk / p + _log(c_vr) + varrho * math.log(h) + _log(bracket)
    return _report("semilinear-distance", empirical, log_rhs, ing, sn.mode)
