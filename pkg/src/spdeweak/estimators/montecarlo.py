"""Coupled Monte Carlo estimators of weak and strong errors.

Every estimator drives all of its tracks through one :class:`Engine` pass per
chunk of samples.  Chunks have a fixed size independent of the worker count,
per-sample results are concatenated in sample order, and all reductions are
done afterwards, so the numbers do not depend on how many threads ran.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import EstimationDegraded, InvalidArgument, UnsupportedOracle
from ..model import Functional, ModelSpec
from ..noise import NoisePlan
from ..schemes import Engine, PathNorms, Track
from ..spectral import OperatorSpec
from .rates import ErrorRow, ErrorTable

ABORT_LIMIT = 0.01


@dataclass
class MonteCarlo:
    """Sample-parallel runner over one model and noise plan."""

    model: ModelSpec
    plan: NoisePlan
    J: int | None = None
    workers: int = 1
    chunk: int = 128

    def __post_init__(self):
        if self.workers < 1 or self.chunk < 1:
            raise InvalidArgument("workers and chunk must be positive")
        if self.plan.M != self.model.op.M:
            raise InvalidArgument(f"noise plan has {self.plan.M} modes, model {self.model.op.M}")

    @property
    def op(self) -> OperatorSpec:
        return self.model.op

    def engine(self) -> Engine:
        return Engine(self.model, self.op, self.plan, self.J)

    def map(self, job: Callable, sample_ids) -> dict:
        """Apply ``job(engine, ids) -> {name: per-sample array}`` chunk-wise and concatenate."""
        ids = np.asarray(sample_ids, dtype=np.int64)
        chunks = [ids[i:i + self.chunk] for i in range(0, ids.size, self.chunk)]
        eng = self.engine()
        if self.workers == 1 or len(chunks) == 1:
            parts = [job(eng, c) for c in chunks]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(lambda c: job(eng, c), chunks))
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def check_aborts(aborted: np.ndarray) -> int:
    n = int(aborted.sum())
    if n > ABORT_LIMIT * aborted.size:
        raise EstimationDegraded(f"{n} of {aborted.size} samples diverged (limit {ABORT_LIMIT:.0%})")
    return n


def _sample_ids(samples: int, sample_ids, offset: int = 0) -> np.ndarray:
    if sample_ids is not None:
        ids = np.asarray(sample_ids, dtype=np.int64)
    else:
        ids = np.arange(offset, offset + samples, dtype=np.int64)
    if ids.size < 2:
        raise InvalidArgument("need at least two samples")
    return ids


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        raise EstimationDegraded("fewer than two completed samples")
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def reference_tracks(model: ModelSpec, plan: NoisePlan, reference: str) -> list[Track]:
    """Tracks whose state "ref" proxies the exact solution X_T.

    "fine" is exp-Euler at N_fine.  "exact_ou" is the jointly Gaussian exact
    stochastic convolution, which equals X at grid times when f = 0 and b is
    constant.
    """
    if reference == "fine":
        return [Track("ref", "exp_euler", plan.N_fine)]
    if reference == "exact_ou":
        if not (model.f.is_zero and model.b.is_constant):
            raise UnsupportedOracle("the exact reference needs f = 0 and constant b")
        return [
            Track("ref_drv", "exp_euler", plan.N_fine),
            Track("ref", "semilinear", plan.N_fine, driver="ref_drv", exact_ou=True),
        ]
    raise InvalidArgument(f"reference must be 'fine' or 'exact_ou', got {reference!r}")


def _scheme_tracks(N_list, scheme: str, kappa: float) -> list[Track]:
    return [Track(f"y{N}", scheme, int(N), kappa=kappa) for N in N_list]


def _levels(plan: NoisePlan, N_list) -> list[int]:
    N_list = sorted({int(N) for N in N_list})
    if not N_list:
        raise InvalidArgument("N list is empty")
    for N in N_list:
        plan.ratio(N)
    return N_list


# -- weak errors ---------------------------------------------------------------

def weak_error_table_mc(model: ModelSpec, plan: NoisePlan, N_list: Sequence[int], samples: int,
                        coupled: bool = True, reference: str = "fine", phi: Functional | None = None,
                        scheme: str = "exp_euler", kappa: float = 0.0, sample_ids=None,
                        mc: MonteCarlo | None = None) -> ErrorTable:
    """Weak errors |E phi(X_T) - E phi(Y^N_N)| for every N, on common noise.

    Coupled: mean and standard error of the per-sample difference on shared
    paths.  Uncoupled: the reference runs on a disjoint block of sample ids
    and the two means are differenced with a combined standard error.
    """
    N_list = _levels(plan, N_list)
    phi = model.phi if phi is None else phi
    mc = MonteCarlo(model, plan) if mc is None else mc
    ref_tracks = reference_tracks(model, plan, reference)
    ids = _sample_ids(samples, sample_ids)

    def job_for(tracks, names):
        def job(eng, chunk):
            res = eng.run(tracks, chunk)
            out = {n: phi(res["states"][n]) for n in names}
            out["aborted"] = res["aborted"]
            return out
        return job

    names = [f"y{N}" for N in N_list]
    if coupled:
        tr = ref_tracks + _scheme_tracks(N_list, scheme, kappa)
        vals = mc.map(job_for(tr, names + ["ref"]), ids)
        ok = ~vals["aborted"]
        n_abort = check_aborts(vals["aborted"])
        rows = []
        for N, name in zip(N_list, names):
            d = vals["ref"][ok] - vals[name][ok]
            m, se = _mean_se(d)
            rows.append(ErrorRow(N, abs(m), se, int(ok.sum()), n_abort, signed=m))
    else:
        ref_ids = _sample_ids(ids.size, None, offset=int(ids.max()) + 1)
        vr = mc.map(job_for(ref_tracks, ["ref"]), ref_ids)
        vs = mc.map(job_for(_scheme_tracks(N_list, scheme, kappa), names), ids)
        n_abort = check_aborts(vr["aborted"]) + check_aborts(vs["aborted"])
        mr, ser = _mean_se(vr["ref"][~vr["aborted"]])
        rows = []
        for N, name in zip(N_list, names):
            ms, ses = _mean_se(vs[name][~vs["aborted"]])
            m = mr - ms
            rows.append(ErrorRow(N, abs(m), math.hypot(ser, ses), int((~vs["aborted"]).sum()),
                                 n_abort, signed=m))
    return ErrorTable(rows, metric=f"weak({phi.kind})", fingerprint=model.fingerprint(),
                      M=model.op.M, N_fine=plan.N_fine)


def weak_error_mc(model: ModelSpec, op: OperatorSpec, plan: NoisePlan, N: int, phi: Functional | None,
                  samples: int, couple_to_reference: bool = True, **kw) -> ErrorRow:
    """Single-N weak error row; see :func:`weak_error_table_mc`."""
    if op.M != model.op.M:
        raise InvalidArgument("operator and model disagree on M")
    return weak_error_table_mc(model, plan, [N], samples, coupled=couple_to_reference,
                               phi=phi, **kw).rows[0]


# -- strong errors -----------------------------------------------------------------

def moment_root(per_sample: np.ndarray, p: float) -> tuple[float, float]:
    """(E D)^{1/p} and its delta-method standard error for D = ||.||^p samples."""
    m, se_m = _mean_se(per_sample)
    if m <= 0:
        return 0.0, 0.0
    est = m ** (1.0 / p)
    return est, est / (p * m) * se_m


def coupled_distances(mc: MonteCarlo, tracks: list[Track], pairs: Sequence[tuple[str, str | None]],
                      sample_ids, p: float = 2.0, metric=("V", 0.0), sup: bool = False) -> dict:
    """Per-sample ||a - b||^p at T (or sup over the coarser grid times) for each pair.

    Returns {"pairs": {(a, b): array}, "aborted": array}.  With ``sup`` the
    per-sample supremum is taken before the moment, i.e. E sup_n ||.||^p.
    """
    keys = [f"{a}|{b}" for a, b in pairs]

    def job(eng, chunk):
        obs = [PathNorms(a, b, tuple(metric)) for a, b in pairs]
        res = eng.run(tracks, chunk, observers=obs)
        out = {"aborted": res["aborted"]}
        for k, ob in zip(keys, obs):
            v = ob.values.max(axis=1) if sup else ob.values[:, -1]
            out[k] = v**p
        return out

    vals = mc.map(job, sample_ids)
    return {"pairs": {pr: vals[k] for pr, k in zip(pairs, keys)}, "aborted": vals["aborted"]}


def path_moments(mc: MonteCarlo, tracks: list[Track], pairs: Sequence[tuple[str, str | None]],
                 sample_ids, p: float = 2.0, metric=("V", 0.0)) -> dict:
    """Per-sample ||a_n - b_n||^p at every grid time, shape (S, N+1) per pair."""
    keys = [f"{a}|{b}" for a, b in pairs]

    def job(eng, chunk):
        obs = [PathNorms(a, b, tuple(metric)) for a, b in pairs]
        res = eng.run(tracks, chunk, observers=obs)
        out = {k: ob.values**p for k, ob in zip(keys, obs)}
        out["aborted"] = res["aborted"]
        return out

    vals = mc.map(job, sample_ids)
    return {"pairs": {pr: vals[k] for pr, k in zip(pairs, keys)}, "aborted": vals["aborted"]}


def sup_moment(per_time: np.ndarray, p: float, z: float = 3.0) -> dict:
    """sup_n (E ||.||^p)^{1/p} from per-sample per-time p-th powers, with an upper CI."""
    if per_time.shape[0] < 2:
        raise EstimationDegraded("fewer than two completed samples")
    S = per_time.shape[0]
    m = per_time.mean(axis=0)
    se_m = per_time.std(axis=0, ddof=1) / math.sqrt(S)
    est = np.where(m > 0, m, 0.0) ** (1.0 / p)
    se = np.where(m > 0, est / (p * np.where(m > 0, m, 1.0)) * se_m, 0.0)
    upper = est + z * se
    n = int(np.argmax(est))
    return {"estimate": float(est[n]), "stderr": float(se[n]), "upper": float(np.max(upper)),
            "argmax": n, "per_time": est}


def strong_error_table_mc(model: ModelSpec, plan: NoisePlan, N_list: Sequence[int], samples: int,
                          p: float = 2.0, norm=("V", 0.0), sup: bool = False, reference: str = "fine",
                          scheme: str = "exp_euler", kappa: float = 0.0, sample_ids=None,
                          mc: MonteCarlo | None = None) -> ErrorTable:
    """Coupled strong errors (E ||X_T - Y^N_N||^p)^{1/p}, norm ("V", r) or ("L", q)."""
    if p < 1:
        raise InvalidArgument("p must be at least 1")
    N_list = _levels(plan, N_list)
    mc = MonteCarlo(model, plan) if mc is None else mc
    ids = _sample_ids(samples, sample_ids)
    tracks = reference_tracks(model, plan, reference) + _scheme_tracks(N_list, scheme, kappa)
    pairs = [(f"y{N}", "ref") for N in N_list]
    res = coupled_distances(mc, tracks, pairs, ids, p, norm, sup)
    ok = ~res["aborted"]
    n_abort = check_aborts(res["aborted"])
    rows = []
    for N, pr in zip(N_list, pairs):
        est, se = moment_root(res["pairs"][pr][ok], p)
        rows.append(ErrorRow(N, est, se, int(ok.sum()), n_abort))
    kind, param = norm
    tag = f"strong(p={p:g},{'r' if kind == 'V' else 'q'}={param:g}{',sup' if sup else ''})"
    return ErrorTable(rows, metric=tag, fingerprint=model.fingerprint(), M=model.op.M,
                      N_fine=plan.N_fine)


def weak_and_strong_tables(model: ModelSpec, plan: NoisePlan, N_list: Sequence[int], samples: int,
                           p: float = 2.0, norm=("V", 0.0), reference: str = "fine",
                           phi: Functional | None = None, scheme: str = "exp_euler", sample_ids=None,
                           mc: MonteCarlo | None = None) -> tuple[ErrorTable, ErrorTable]:
    """Coupled weak and strong tables from a single pass over the noise."""
    N_list = _levels(plan, N_list)
    phi = model.phi if phi is None else phi
    mc = MonteCarlo(model, plan) if mc is None else mc
    ids = _sample_ids(samples, sample_ids)
    tracks = reference_tracks(model, plan, reference) + _scheme_tracks(N_list, scheme, 0.0)
    names = [f"y{N}" for N in N_list]
    kind, param = norm

    def job(eng, chunk):
        obs = [PathNorms(n, "ref", tuple(norm)) for n in names]
        res = eng.run(tracks, chunk, observers=obs)
        st = res["states"]
        out = {"aborted": res["aborted"]}
        ref_phi = phi(st["ref"])
        for n, ob in zip(names, obs):
            out["w_" + n] = ref_phi - phi(st[n])
            out["s_" + n] = ob.values[:, -1] ** p
        return out

    vals = mc.map(job, ids)
    ok = ~vals["aborted"]
    n_abort = check_aborts(vals["aborted"])
    weak, strong = [], []
    for N, n in zip(N_list, names):
        m, se = _mean_se(vals["w_" + n][ok])
        weak.append(ErrorRow(N, abs(m), se, int(ok.sum()), n_abort, signed=m))
        est, se = moment_root(vals["s_" + n][ok], p)
        strong.append(ErrorRow(N, est, se, int(ok.sum()), n_abort))
    meta = dict(fingerprint=model.fingerprint(), M=model.op.M, N_fine=plan.N_fine)
    tag = f"strong(p={p:g},{'r' if kind == 'V' else 'q'}={param:g})"
    return (ErrorTable(weak, metric=f"weak({phi.kind})", **meta),
            ErrorTable(strong, metric=tag, **meta))


def strong_error_mc(model: ModelSpec, op: OperatorSpec, plan: NoisePlan, N: int, p: float, r: float,
                    samples: int, **kw) -> ErrorRow:
    """Single-N coupled strong error in L^p(P; V_r)."""
    if op.M != model.op.M:
        raise InvalidArgument("operator and model disagree on M")
    return strong_error_table_mc(model, plan, [N], samples, p=p, norm=("V", r), **kw).rows[0]


# -- auxiliary processes ---------------------------------------------------

def semilinear_distance_table(model: ModelSpec, plan: NoisePlan, N_list: Sequence[int], samples: int,
                              rho: float, p: float = 2.0, exact_ou: bool = False, sample_ids=None,
                              mc: MonteCarlo | None = None) -> ErrorTable:
    """(E ||Y_T - Ybar_T||^p_{V_{-rho}})^{1/p} per N on one coupled pass."""
    if rho < 0:
        raise InvalidArgument("rho must be nonnegative")
    N_list = _levels(plan, N_list)
    mc = MonteCarlo(model, plan) if mc is None else mc
    ids = _sample_ids(samples, sample_ids)
    tracks = []
    for N in N_list:
        tracks.append(Track(f"y{N}", "exp_euler", N))
        tracks.append(Track(f"ybar{N}", "semilinear", N, driver=f"y{N}", exact_ou=exact_ou))
    pairs = [(f"y{N}", f"ybar{N}") for N in N_list]
    res = coupled_distances(mc, tracks, pairs, ids, p, ("V", -rho))
    ok = ~res["aborted"]
    n_abort = check_aborts(res["aborted"])
    rows = []
    for N, pr in zip(N_list, pairs):
        est, se = moment_root(res["pairs"][pr][ok], p)
        rows.append(ErrorRow(N, est, se, int(ok.sum()), n_abort))
    return ErrorTable(rows, metric=f"strong(p={p:g},r={-rho:g})", fingerprint=model.fingerprint(),
                      M=model.op.M, N_fine=plan.N_fine)


def variation_fd_check(model: ModelSpec, plan: NoisePlan, N: int, direction: np.ndarray,
                       deltas: Sequence[float], sample: int = 0, start: np.ndarray | None = None,
                       J: int | None = None) -> dict:
    """Relative error of central differences of Y_T in the initial value against Z_T.

    All perturbed runs and the variation share sample ``sample`` of the plan.
    """
    op = model.op
    direction = np.asarray(direction, dtype=float)
    xi = model.xi.coeffs if start is None else np.asarray(start, dtype=float)
    tracks = [Track("y", "exp_euler", N, start=xi),
              Track("z", "variation", N, direction=direction, driver="y")]
    for i, d in enumerate(deltas):
        tracks.append(Track(f"p{i}", "exp_euler", N, start=xi + d * direction))
        tracks.append(Track(f"m{i}", "exp_euler", N, start=xi - d * direction))
    res = Engine(model, op, plan, J).run(tracks, [sample], raise_on_divergence=True)
    st = res["states"]
    Z = st["z"][0]
    zn = float(np.linalg.norm(Z))
    if zn == 0:
        raise InvalidArgument("variation vanishes; relative error undefined")
    rel = []
    for i, d in enumerate(deltas):
        fd = (st[f"p{i}"][0] - st[f"m{i}"][0]) / (2.0 * d)
        rel.append(float(np.linalg.norm(fd - Z) / zn))
    return {"deltas": [float(d) for d in deltas], "relative_errors": rel, "Z_norm": zn}
