"""Named experiments: build the model from a config, run, and judge acceptance."""
from __future__ import annotations

import csv
import difflib
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import schemes
from .config import ExperimentConfig
from .errors import InsufficientData, InvalidArgument
from .estimators import (
    MonteCarlo,
    Seminorms,
    eval_apriori_bound,
    eval_kp_bound,
    eval_mollify_bound,
    eval_perturbation_bound,
    eval_semilinear_distance_bound,
    fit_loglog,
    fit_rate,
    modes_for_policy,
    path_moments,
    semilinear_distance_table,
    strong_error_table_mc,
    sup_moment,
    variation_fd_check,
    weak_and_strong_tables,
    weak_error_exact,
    weak_error_table_mc,
)
from .estimators.montecarlo import check_aborts
from .estimators.rates import ErrorTable
from .model import ModelSpec, cos_inner, exp_neg_l2sq, scalar_from_dict
from .noise import NoisePlan
from .oracles import OUSpec, ou_strong_error, ou_weak_value
from .schemes import Track
from .special import ConstantSet
from .spectral import OperatorSpec, SpectralField
from .svg import loglog_svg

DESCRIPTIONS = {
    "weak-rate-exact": (
        "Deterministic weak errors of exponential Euler for the additive-noise heat equation "
        "(f = 0, b constant) from the mode-wise Gaussian oracle. Exercises the weak rate "
        "N^(eps - 1/2), i.e. exponent 1/2 - eps, which is also a lower bound c N^(-1/2). "
        "Expected: fitted log-log slope close to -1/2 once lambda_M h >> 1.",
        ("slope_range", "r2_min"),
    ),
    "weak-rate-mc": (
        "Coupled Monte Carlo weak errors |E phi(X_T) - E phi(Y_N)| against a fine or exact "
        "reference on common noise. Exercises the weak rate 1/2 - eps for nonlinear "
        "multiplicative noise. Expected: slope at most -0.35 and error decaying over the N range; "
        "in the additive case agreement with the oracle within 3 standard errors.",
        ("slope_max", "ratio_exponent", "oracle_z"),
    ),
    "strong-rate": (
        "Coupled strong errors (E||X_T - Y_N||^p)^(1/p) in V_r or L^q(0,1), or with mode "
        "'semilinear' the analytically weak, probabilistically strong distance "
        "||Y_T - Ybar_T|| in L^p(P; V_-rho) to the semilinear-integrated process, which decays "
        "like h^varrho. Expected: oracle agreement in the additive case; strictly decreasing "
        "distances in semilinear mode.",
        ("oracle_z", "strong_rel_tol", "strictly_decreasing"),
    ),
    "mollify-study": (
        "Distance between the scheme and its mollified version (F, B pre-smoothed by e^(kappa A)) "
        "on common noise, compared against the explicit bound proportional to kappa^rho. "
        "Expected: kappa^rho decay of the bound, PASS at every kappa, LHS slope in kappa >= rho - 0.1.",
        ("slope_min",),
    ),
    "bounds": (
        "Strong a priori bound sqrt(2)[...] E_(1-theta)[...] for the non-mollified scheme, "
        "and the explicit bound on the moment constant K_p, against Monte Carlo estimates. "
        "Expected: PASS with positive margin.",
        (),
    ),
    "perturbation": (
        "Initial-value perturbation estimate sqrt(2) sup||S_t|| ||X_0 - Xbar_0|| E_(1-theta)[...] "
        "for two coupled schemes started at xi and xi2. Expected: PASS.",
        (),
    ),
    "variation-check": (
        "First-variation process Z (derivative of the scheme flow in the initial value) against "
        "central finite differences on one common noise path. Expected: relative error O(delta^2), "
        "so the ratio between delta = 1e-3 and 1e-4 lies in [50, 200].",
        ("fd_ratio_range",),
    ),
    "simulate": (
        "One trajectory of a chosen scheme, written as a CSV of coefficients per time step. "
        "With f = 0 and b = 0 the final row equals e^(TA) xi.",
        (),
    ),
}


def describe(name: str) -> str:
    if name not in DESCRIPTIONS:
        near = difflib.get_close_matches(name, DESCRIPTIONS, n=3, cutoff=0.3)
        hint = f" Did you mean: {', '.join(near)}?" if near else ""
        raise InvalidArgument(f"unknown experiment {name!r}.{hint} Valid: {', '.join(DESCRIPTIONS)}")
    text, knobs = DESCRIPTIONS[name]
    out = f"{name}\n  {text}"
    if knobs:
        out += f"\n  acceptance knobs: {', '.join(knobs)}"
    return out


@dataclass
class Result:
    csv: str
    results: dict
    acceptance: dict = field(default_factory=dict)
    svg: str | None = None

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.acceptance.values() if v.get("passed") is not None)


# -- construction ----------------------------------------------------------------

def resolve_M(cfg: ExperimentConfig) -> int:
    n = cfg.numerics
    if n.M == "policy":
        return modes_for_policy(max(n.N), cfg.model.T, n.policy_resolution)
    return int(n.M)


def build_field(d: dict, op: OperatorSpec) -> np.ndarray:
    kind = d.get("kind")
    if kind == "zero":
        return np.zeros(op.M)
    if kind == "mode":
        k = int(d.get("k", 1))
        if not 1 <= k <= op.M:
            raise InvalidArgument(f"mode {k} outside 1..{op.M}")
        return float(d.get("scale", 1.0)) * op.basis(k).coeffs
    if kind == "coeffs":
        vals = np.asarray(d["values"], dtype=float)
        if vals.ndim != 1 or vals.size > op.M:
            raise InvalidArgument(f"coefficient list must have at most M={op.M} entries")
        out = np.zeros(op.M)
        out[: vals.size] = vals
        return out
    raise InvalidArgument(f"unknown field kind {kind!r}; choose zero, mode or coeffs")


def build_phi(d: dict, op: OperatorSpec):
    kind = d.get("kind")
    if kind == "exp_neg_l2sq":
        return exp_neg_l2sq()
    if kind == "cos_inner":
        return cos_inner(build_field(d["weights"], op))
    raise InvalidArgument(f"unknown functional {kind!r}; choose exp_neg_l2sq or cos_inner")


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    m = cfg.model
    op = OperatorSpec(resolve_M(cfg), T=m.T)
    xi = SpectralField(build_field(m.xi, op), op)
    return ModelSpec(scalar_from_dict(m.f), scalar_from_dict(m.b), build_phi(m.phi, op), xi,
                     T=m.T, p=m.p, beta=m.beta)


def build_plan(cfg: ExperimentConfig, model: ModelSpec) -> NoisePlan:
    n = cfg.numerics
    return NoisePlan(n.seed, model.op.M, n.N_fine, model.T)


def _mc(cfg, model, plan) -> MonteCarlo:
    n = cfg.numerics
    return MonteCarlo(model, plan, J=n.J, workers=n.workers, chunk=n.chunk)


def _constants(cfg, model) -> ConstantSet:
    pol = cfg.study.upsilon
    if pol == "auto":
        pol = "ito" if model.p == 2 else "bdg"
    return ConstantSet(policy=pol)


def _oracle_ok(model: ModelSpec) -> bool:
    return model.f.is_zero and model.b.is_constant and not np.any(model.xi.coeffs) \
        and model.phi.kind == "exp_neg_l2sq"


def _crit(passed, value, threshold) -> dict:
    return {"passed": None if passed is None else bool(passed), "value": value, "threshold": threshold}


def _fits(table: ErrorTable, fit_min_N):
    out = {}
    Ns = sorted(r.N for r in table.rows if r.error > 0)
    try:
        out["keep_all"] = fit_rate(table).to_dict()
    except InsufficientData as exc:
        out["keep_all"] = {"error": str(exc)}
    if len(Ns) >= 4:
        out["drop_smallest"] = fit_rate(table, N_min=Ns[1]).to_dict()
    if fit_min_N is not None:
        try:
            out["primary"] = fit_rate(table, N_min=fit_min_N).to_dict()
        except InsufficientData as exc:
            out["primary"] = {"error": str(exc)}
    else:
        out["primary"] = out["keep_all"]
    return out


def _table_svg(table: ErrorTable, fit: dict, title: str, guide=None, ylabel="error"):
    rows = [r for r in table.rows if r.error > 0]
    if not rows:
        return None
    f = (fit["slope"], fit["intercept"]) if "slope" in fit else None
    return loglog_svg([r.N for r in rows], [r.error for r in rows], title=title, ylabel=ylabel,
                      yerr=[r.stderr for r in rows], fit=f, guide_slope=guide)


def _report_csv(reports, key_name=None, keys=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ([key_name] if key_name else []) + ["inequality", "lhs", "lhs_stderr", "lhs_upper", "rhs",
                                               "margin", "status"]
    w.writerow(head)
    for i, r in enumerate(reports):
        row = ([repr(float(keys[i]))] if key_name else []) + [
            r.inequality, repr(r.lhs), repr(r.lhs_stderr), repr(r.lhs_upper), repr(r.rhs), repr(r.margin),
            r.status]
        w.writerow(row)
    return buf.getvalue()


# -- experiments ---------------------------------------------------------------

def run_weak_rate_exact(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    table = weak_error_exact(model, cfg.numerics.N)
    fits = _fits(table, cfg.numerics.fit_min_N)
    acc = cfg.acceptance
    lo, hi = acc.slope_range or [-0.55, -0.42]
    r2_min = 0.99 if acc.r2_min is None else acc.r2_min
    prim = fits["primary"]
    crit = {
        "slope_in_range": _crit("slope" in prim and lo <= prim["slope"] <= hi, prim.get("slope"), [lo, hi]),
        "r_squared": _crit("r_squared" in prim and prim["r_squared"] >= r2_min, prim.get("r_squared"), r2_min),
    }
    svg = _table_svg(table, prim, "exact weak error", guide=-0.5)
    return Result(table.to_csv(), {"table": table.to_dict(), "fits": fits}, crit, svg)


def _oracle_rows(model: ModelSpec, table: ErrorTable, kind="weak"):
    out = []
    for r in table.rows:
        s = OUSpec(model.T, model.op.M, model.b.constant_value, "exp_euler", r.N)
        if kind == "weak":
            val = ou_weak_value(s, "mild") - ou_weak_value(s, "scheme")
            mc = r.signed
        else:
            val = math.sqrt(ou_strong_error(s))
            mc = r.error
        out.append({"N": r.N, "mc": mc, "stderr": r.stderr, "oracle": val,
                    "z": abs(mc - val) / r.stderr if r.stderr > 0 else (0.0 if mc == val else math.inf),
                    "relative": abs(mc - val) / abs(val) if val else abs(mc)})
    return out


def run_weak_rate_mc(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    plan = build_plan(cfg, model)
    n = cfg.numerics
    table = weak_error_table_mc(model, plan, n.N, n.samples, coupled=n.coupled, reference=n.reference,
                                scheme=n.scheme, kappa=cfg.study.kappa, mc=_mc(cfg, model, plan))
    acc = cfg.acceptance
    res = {"table": table.to_dict()}
    crit = {}
    rows = [r for r in table.rows if r.error > 0]
    if len(rows) >= 3:
        fits = _fits(table, n.fit_min_N)
        res["fits"] = fits
        slope_max = -0.35 if acc.slope_max is None else acc.slope_max
        prim = fits["primary"]
        crit["slope_max"] = _crit("slope" in prim and prim["slope"] <= slope_max, prim.get("slope"), slope_max)
    if len(table.rows) >= 2:
        a, b = table.rows[0], table.rows[-1]
        ex = 0.35 if acc.ratio_exponent is None else acc.ratio_exponent
        need = (b.N / a.N) ** ex
        ratio = a.error / b.error if b.error > 0 else math.inf
        crit["error_ratio"] = _crit(ratio >= need, ratio, need)
    if _oracle_ok(model) and n.scheme == "exp_euler":
        z = 3.0 if acc.oracle_z is None else acc.oracle_z
        orc = _oracle_rows(model, table, "weak")
        res["oracle"] = orc
        crit["oracle_agreement"] = _crit(all(o["z"] <= z for o in orc), max(o["z"] for o in orc), z)
    svg = _table_svg(table, res.get("fits", {}).get("primary", {}), "Monte Carlo weak error", guide=-0.5)
    return Result(table.to_csv(), res, crit, svg)


def run_strong_rate(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    plan = build_plan(cfg, model)
    n, s, acc = cfg.numerics, cfg.study, cfg.acceptance
    mc = _mc(cfg, model, plan)
    res, crit = {}, {}
    p = model.p
    if s.mode == "semilinear":
        table = semilinear_distance_table(model, plan, n.N, n.samples, s.rho, p=p, exact_ou=s.exact_ou, mc=mc)
        errs = [r.error for r in table.rows]
        if acc.strictly_decreasing is not False:
            dec = all(b < a for a, b in zip(errs, errs[1:]))
            crit["strictly_decreasing"] = _crit(dec, errs, "strict")
        vr_max = 1.0 - max((1.0 + model.vartheta) / 2.0 - s.rho, 0.0)
        varrho = 0.5 * vr_max if s.varrho is None else s.varrho
        cs = _constants(cfg, model)
        sn = Seminorms.of(model, model.vartheta, s.seminorms)
        reps = []
        for r in table.rows:
            emp = {"estimate": r.error, "stderr": r.stderr, "upper": r.error + 3.0 * r.stderr}
            reps.append(eval_semilinear_distance_bound(model, r.N, s.rho, varrho, cs, emp, seminorms=sn))
        res["bounds"] = [b.to_dict() for b in reps]
        res["varrho"] = varrho
    else:
        norm = ("V", s.r) if s.norm == "V" else ("L", s.q)
        if s.sup:
            table = strong_error_table_mc(model, plan, n.N, n.samples, p=p, norm=norm, sup=True,
                                          reference=n.reference, scheme=n.scheme, kappa=s.kappa, mc=mc)
        else:
            weak, table = weak_and_strong_tables(model, plan, n.N, n.samples, p=p, norm=norm,
                                                 reference=n.reference, scheme=n.scheme, mc=mc)
            res["weak_table"] = weak.to_dict()
        if (_oracle_ok(model) and n.scheme == "exp_euler" and n.reference == "exact_ou"
                and norm == ("V", 0.0) and p == 2 and not s.sup):
            z = 3.0 if acc.oracle_z is None else acc.oracle_z
            tol = 0.05 if acc.strong_rel_tol is None else acc.strong_rel_tol
            so = _oracle_rows(model, table, "strong")
            wo = _oracle_rows(model, weak, "weak")
            res["oracle"] = {"strong": so, "weak": wo}
            crit["weak_oracle_agreement"] = _crit(all(o["z"] <= z for o in wo), max(o["z"] for o in wo), z)
            crit["strong_oracle_agreement"] = _crit(all(o["z"] <= z for o in so), max(o["z"] for o in so), z)
            crit["strong_relative"] = _crit(all(o["relative"] <= tol for o in so),
                                            max(o["relative"] for o in so), tol)
    res["table"] = table.to_dict()
    if len([r for r in table.rows if r.error > 0]) >= 3:
        res["fits"] = _fits(table, n.fit_min_N)
    svg = _table_svg(table, res.get("fits", {}).get("primary", {}), "strong error")
    return Result(table.to_csv(), res, crit, svg)


def run_mollify_study(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    plan = build_plan(cfg, model)
    n, s, acc = cfg.numerics, cfg.study, cfg.acceptance
    N = max(n.N)
    fr = s.kappas or [1.0, 0.25, 0.0625, 0.015625]
    kappas = sorted(float(k) * model.T for k in fr)
    tracks = [Track("y0", "exp_euler", N)]
    tracks += [Track(f"k{i}", "mollified", N, kappa=k) for i, k in enumerate(kappas)]
    pairs = [("y0", f"k{i}") for i in range(len(kappas))]
    ids = np.arange(n.samples)
    out = path_moments(_mc(cfg, model, plan), tracks, pairs, ids, model.p, ("V", 0.0))
    ok = ~out["aborted"]
    n_abort = check_aborts(out["aborted"])
    cs = _constants(cfg, model)
    sn = Seminorms.of(model, model.vartheta, s.seminorms)
    reps = []
    for i, k in enumerate(kappas):
        emp = sup_moment(out["pairs"][pairs[i]][ok], model.p)
        reps.append(eval_mollify_bound(model, None, k, s.rho, cs, emp, seminorms=sn))
    lhs = [r.lhs for r in reps]
    res = {"kappas": kappas, "N": N, "aborted": n_abort, "bounds": [r.to_dict() for r in reps]}
    crit = {"all_pass": _crit(all(r.passed for r in reps), [r.status for r in reps], "PASS")}
    slope_min = s.rho - 0.1 if acc.slope_min is None else acc.slope_min
    try:
        fit = fit_loglog(kappas, lhs)
        res["kappa_fit"] = fit.to_dict()
        crit["kappa_slope"] = _crit(fit.slope >= slope_min, fit.slope, slope_min)
        f = (fit.slope, fit.intercept)
    except InsufficientData as exc:
        res["kappa_fit"] = {"error": str(exc)}
        crit["kappa_slope"] = _crit(False, None, slope_min)
        f = None
    pos = [(k, v) for k, v in zip(kappas, lhs) if v > 0]
    svg = loglog_svg([a for a, _ in pos], [b for _, b in pos], title="mollification distance",
                     xlabel="kappa", ylabel="sup_t ||Y0 - Ykappa||", fit=f) if pos else None
    return Result(_report_csv(reps, "kappa", kappas), res, crit, svg)


def _kp_empirical(A: np.ndarray, B: np.ndarray) -> float:
    """sup over grid times s, t of E max(1, A_s, B_t)."""
    best = 0.0
    for s in range(A.shape[1]):
        m = np.maximum(np.maximum(A[:, s:s + 1], B), 1.0).mean(axis=0)
        best = max(best, float(m.max()))
    return best


def run_bounds(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    plan = build_plan(cfg, model)
    n, s = cfg.numerics, cfg.study
    N = max(n.N)
    p = model.p
    tracks = [Track("y", "exp_euler", N), Track("ybar", "semilinear", N, driver="y", exact_ou=s.exact_ou)]
    mc = _mc(cfg, model, plan)
    ids = np.arange(n.samples)
    lp = path_moments(mc, tracks, [("y", None)], ids, p, ("L", p))
    vv = path_moments(mc, tracks, [("y", None), ("ybar", None)], ids, p, ("V", 0.0))
    ok = ~lp["aborted"] & ~vv["aborted"]
    n_abort = check_aborts(lp["aborted"] | vv["aborted"])
    emp = sup_moment(lp["pairs"][("y", None)][ok], p)
    cs = _constants(cfg, model)
    sn = Seminorms.of(model, model.vartheta, s.seminorms)
    apriori = eval_apriori_bound(model, None, cs, emp, seminorms=sn)
    kp_mc = _kp_empirical(vv["pairs"][("ybar", None)][ok], vv["pairs"][("y", None)][ok])
    kp = eval_kp_bound(model, cs, kp_mc, seminorms=sn)
    reps = [apriori, kp]
    res = {"N": N, "aborted": n_abort, "sup_moment": {k: v for k, v in emp.items() if k != "per_time"},
           "bounds": [r.to_dict() for r in reps]}
    crit = {"apriori_pass": _crit(apriori.passed and apriori.margin > 0, apriori.margin, "> 0"),
            "kp_pass": _crit(kp.passed, kp.margin, ">= 0")}
    return Result(_report_csv(reps), res, crit, None)


def run_perturbation(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    plan = build_plan(cfg, model)
    n, s = cfg.numerics, cfg.study
    N = max(n.N)
    xi1 = model.xi.coeffs
    xi2 = 1.1 * xi1 if s.xi2 is None else build_field(s.xi2, model.op)
    tracks = [Track("a", "exp_euler", N, start=xi1), Track("b", "exp_euler", N, start=xi2)]
    out = path_moments(_mc(cfg, model, plan), tracks, [("a", "b")], np.arange(n.samples), model.p, ("V", 0.0))
    ok = ~out["aborted"]
    n_abort = check_aborts(out["aborted"])
    emp = sup_moment(out["pairs"][("a", "b")][ok], model.p)
    rep = eval_perturbation_bound(model, None, xi1, xi2, _constants(cfg, model), emp,
                                  seminorms=Seminorms.of(model, model.vartheta, s.seminorms))
    res = {"N": N, "aborted": n_abort, "xi2": [float(c) for c in xi2], "bounds": [rep.to_dict()]}
    return Result(_report_csv([rep]), res, {"perturbation_pass": _crit(rep.passed, rep.margin, ">= 0")}, None)


def run_variation_check(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    plan = build_plan(cfg, model)
    n, s, acc = cfg.numerics, cfg.study, cfg.acceptance
    N = max(n.N)
    d = build_field(s.direction, model.op)
    chk = variation_fd_check(model, plan, N, d, s.deltas, sample=s.sample, J=n.J)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "relative_error"])
    for dl, e in zip(chk["deltas"], chk["relative_errors"]):
        w.writerow([repr(dl), repr(e)])
    lo, hi = acc.fd_ratio_range or [50.0, 200.0]
    crit = {}
    if len(chk["relative_errors"]) >= 2:
        e = chk["relative_errors"]
        ratio = e[0] / e[1] if e[1] > 0 else math.inf
        chk["ratio"] = ratio
        crit["fd_ratio"] = _crit(lo <= ratio <= hi, ratio, [lo, hi])
    return Result(buf.getvalue(), {"N": N, "check": chk}, crit, None)


def run_simulate(cfg: ExperimentConfig) -> Result:
    model = build_model(cfg)
    plan = build_plan(cfg, model)
    n, s = cfg.numerics, cfg.study
    N = max(n.N)
    direction = None
    if n.scheme in ("variation", "Variation"):
        direction = SpectralField(build_field(s.direction, model.op), model.op)
    sc = schemes.SchemeConfig(n.scheme, N, model, model.op, plan, kappa=s.kappa, direction=direction,
                              exact_ou=s.exact_ou, J=n.J, sample=s.sample)
    traj = schemes.run(sc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    M = traj.states.shape[1]
    w.writerow(["t"] + [f"a_{k}" for k in range(1, M + 1)])
    for t, row in zip(traj.times, traj.states):
        w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
    fin = traj.states[-1]
    res = {"N": N, "scheme": sc.kind, "final_l2": float(np.sqrt(np.sum(fin**2))),
           "plan_too_coarse": schemes.plan_too_coarse(sc)}
    return Result(buf.getvalue(), res, {}, None)


RUNNERS = {
    "weak-rate-exact": run_weak_rate_exact,
    "weak-rate-mc": run_weak_rate_mc,
    "strong-rate": run_strong_rate,
    "mollify-study": run_mollify_study,
    "bounds": run_bounds,
    "perturbation": run_perturbation,
    "variation-check": run_variation_check,
    "simulate": run_simulate,
}


def run_experiment(cfg: ExperimentConfig) -> Result:
    return RUNNERS[cfg.experiment](cfg)
