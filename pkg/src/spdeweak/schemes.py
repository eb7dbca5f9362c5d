"""Time-stepping engines on the M-mode Galerkin space.

All schemes consume the same coupled noise: a single pass over the fine
increments of a :class:`NoisePlan` drives every requested track, at every
requested level, on every sample of a batch.  State arrays have shape (S, M).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import DivergenceError, InvalidArgument, InvalidRefinement
from .model import ModelSpec
from .noise import NoisePlan, TreeAggregator, increment_array
from .spectral import (
    OperatorSpec,
    SpectralField,
    coeffs_to_grid,
    grid_to_coeffs,
    lp_norm_values,
    vr_norm_coeffs,
)

KINDS = ("exp_euler", "mollified", "linear_implicit", "semilinear", "variation")
_ALIASES = {
    "ExpEuler": "exp_euler",
    "MollifiedExpEuler": "mollified",
    "LinearImplicitEuler": "linear_implicit",
    "SemilinearIntegrated": "semilinear",
    "Variation": "variation",
}


def scheme_kind(name: str) -> str:
    kind = _ALIASES.get(name, name)
    if kind not in KINDS:
        raise InvalidArgument(f"unknown scheme {name!r}; choose from {KINDS}")
    return kind


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    kind: str
    N: int
    model: ModelSpec
    op: OperatorSpec
    plan: NoisePlan
    kappa: float = 0.0
    direction: SpectralField | None = None
    exact_ou: bool = False
    J: int | None = None
    sample: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", scheme_kind(self.kind))
        if self.N < 1:
            raise InvalidArgument("N must be at least 1")
        self.plan.ratio(self.N)
        if self.plan.M != self.op.M:
            raise InvalidArgument(f"noise plan has {self.plan.M} modes, operator {self.op.M}")
        if self.kind == "mollified" and not 0 <= self.kappa <= self.op.T:
            raise InvalidArgument(f"kappa must lie in [0, T], got {self.kappa}")
        if self.kind == "variation" and self.direction is None:
            raise InvalidArgument("variation scheme needs a direction")
        if self.exact_ou and not self.model.b.is_constant:
            raise InvalidArgument("exact_ou sampling requires constant b")

    @property
    def h(self) -> float:
        return self.op.T / self.N


@dataclass
class Trajectory:
    states: np.ndarray  # (N+1, M)
    scheme: SchemeConfig

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.scheme.op.T, self.states.shape[0])

    @property
    def final(self) -> SpectralField:
        return SpectralField(self.states[-1], self.scheme.op)

    def __getitem__(self, n) -> SpectralField:
        return SpectralField(self.states[n], self.scheme.op)

    def __len__(self):
        return self.states.shape[0]

    def to_csv(self, path) -> None:
        M = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"a_{k}" for k in range(1, M + 1)])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


# -- batched engine ----------------------------------------------------------

@dataclass
class Track:
    """One process to advance on the shared noise path.

    ``driver`` names the exp-Euler track at the same N whose frozen values
    feed a semilinear-integrated or variation track.
    """

    name: str
    kind: str
    N: int
    start: np.ndarray | None = None
    kappa: float = 0.0
    direction: np.ndarray | None = None
    driver: str | None = None
    exact_ou: bool = False

    def __post_init__(self):
        self.kind = scheme_kind(self.kind)
        if self.kind in ("semilinear", "variation") and self.driver is None:
            raise InvalidArgument(f"track {self.name!r} of kind {self.kind} needs a driver")


@dataclass
class PathNorms:
    """Records per-sample norms of track ``a`` (minus ``b``) at every grid time.

    With tracks on two nested levels the coarser grid times are used.

    ``metric`` is ("V", r) for V_r norms or ("L", p) for L^p(0,1) quadrature norms.
    """

    a: str
    b: str | None = None
    metric: tuple = ("V", 0.0)
    values: np.ndarray | None = field(default=None, repr=False)


class _LevelStep:
    """Lazily computed grid evaluations shared by the tracks of one level step."""

    def __init__(self, states, dW, J):
        self.states = states
        self.dW = dW
        self.J = J
        self._grids = {}
        self._wgrid = None

    def grid(self, name):
        g = self._grids.get(name)
        if g is None:
            g = self._grids[name] = coeffs_to_grid(self.states[name], self.J)
        return g

    def wgrid(self):
        if self._wgrid is None:
            self._wgrid = coeffs_to_grid(self.dW, self.J)
        return self._wgrid


class Engine:
    def __init__(self, model: ModelSpec, op: OperatorSpec, plan, J: int | None = None):
        self.model = model
        self.op = op
        self.plan = plan
        self.J = op.default_grid() if J is None else J
        if self.J < 2 * op.M + 1:
            raise InvalidArgument(f"dealiasing needs J >= 2M+1 = {2 * op.M + 1}, got {self.J}")
        self.lam = op.eigenvalues

    # forcing pieces -------------------------------------------------------
    def _forcing(self, ctx: _LevelStep, name: str, h: float) -> np.ndarray:
        """Pi_M[h f(Y) + b(Y) dW] for the state of track ``name``."""
        f, b = self.model.f, self.model.b
        Y = ctx.states[name]
        out = None
        if not f.is_zero or not b.is_constant:
            Yg = ctx.grid(name)
            G = h * f(Yg) if not f.is_zero else 0.0
            if not b.is_constant:
                G = G + b(Yg) * ctx.wgrid()
            out = grid_to_coeffs(G, self.op.M)
        if b.is_constant and b.constant_value != 0.0:
            noise = b.constant_value * ctx.dW
            out = noise if out is None else out + noise
        return np.zeros_like(Y) if out is None else out

    def _drift_only(self, ctx, name, h):
        f = self.model.f
        if f.is_zero:
            return np.zeros_like(ctx.states[name])
        return grid_to_coeffs(h * f(ctx.grid(name)), self.op.M)

    def run(self, tracks: Iterable[Track], samples, observers: Iterable[PathNorms] = (),
            keep_paths: bool = False, raise_on_divergence: bool = False):
        tracks = list(tracks)
        observers = list(observers)
        samples = np.atleast_1d(np.asarray(samples, dtype=np.int64))
        S, M, T = samples.shape[0], self.op.M, self.op.T
        plan = self.plan
        names = {t.name for t in tracks}
        if len(names) != len(tracks):
            raise InvalidArgument("track names must be unique")
        levels = sorted({t.N for t in tracks})
        for N in levels:
            plan.ratio(N)
        max_ratio = plan.N_fine // levels[0]
        agg = TreeAggregator(max_ratio)
        for N in levels:
            if max_ratio % (plan.N_fine // N):
                raise InvalidRefinement("streamed levels need power-of-two ratios to N_fine")
        by_name = {t.name: t for t in tracks}
        for t in tracks:
            if t.driver is not None:
                d = by_name.get(t.driver)
                if d is None or d.kind != "exp_euler" or d.N != t.N:
                    raise InvalidArgument(f"driver of {t.name!r} must be an exp_euler track at N={t.N}")
            if t.exact_ou and not self.model.b.is_constant:
                raise InvalidArgument("exact_ou sampling requires constant b")

        xi = self.model.xi.coeffs
        states = {}
        for t in tracks:
            if t.kind == "variation":
                start = t.direction
            else:
                start = xi if t.start is None else t.start
            states[t.name] = np.broadcast_to(np.asarray(start, dtype=float), (S, M)).copy()

        per_level = {N: [t for t in tracks if t.N == N] for N in levels}
        # dependents read their driver before it advances
        for N in levels:
            per_level[N].sort(key=lambda t: t.driver is None)
        step_of = {N: 0 for N in levels}
        aborted = np.zeros(S, dtype=bool)
        paths = {t.name: [states[t.name].copy()] for t in tracks} if keep_paths else None

        factors = {}
        for N in levels:
            h = T / N
            lam = self.lam
            factors[N] = {
                "h": h,
                "E": np.exp(-lam * h),
                "R": 1.0 / (1.0 + h * lam),
                "Phi": -np.expm1(-lam * h) / lam,
            }
        for t in tracks:
            if t.kind == "mollified":
                factors[(t.name, "kappa")] = np.exp(-self.lam * t.kappa)

        # semilinear accumulators over fine sub-steps
        semis = [t for t in tracks if t.kind == "semilinear"]
        acc = {t.name: np.zeros((S, M)) for t in semis if not t.exact_ou}
        bgrid = {}

        def refresh_bgrid(t):
            if self.model.b.is_constant:
                bgrid[t.name] = None
            else:
                bgrid[t.name] = self.model.b(coeffs_to_grid(states[t.driver], self.J))

        for t in semis:
            if not t.exact_ou:
                refresh_bgrid(t)

        obs_levels = {}
        for ob in observers:
            # observed at the coarser level; finer levels finish the same fine step first
            N = by_name[ob.a].N
            if ob.b is not None:
                Nb = by_name[ob.b].N
                if max(N, Nb) % min(N, Nb):
                    raise InvalidArgument("observed tracks need nested levels")
                N = min(N, Nb)
            ob.values = np.zeros((S, N + 1))
            obs_levels.setdefault(N, []).append(ob)
            self._observe(ob, states, 0)

        dt = plan.dt_fine
        for i in range(plan.N_fine):
            z = plan.fine_increments(i, samples)
            for t in semis:
                if t.exact_ou:
                    continue
                r = plan.N_fine // t.N
                lag = T / t.N - (i % r) * dt
                w = np.exp(-self.lam * lag)
                if bgrid[t.name] is None:
                    contrib = self.model.b.constant_value * z
                else:
                    contrib = grid_to_coeffs(bgrid[t.name] * coeffs_to_grid(z, self.J), M)
                acc[t.name] += w * contrib
            for ratio, dW in agg.push(z):
                N = plan.N_fine // ratio
                if N not in per_level:
                    continue
                n = step_of[N]
                self._advance_level(per_level[N], states, dW, factors, N, n, samples, acc)
                step_of[N] = n + 1
                for t in per_level[N]:
                    if t.kind == "semilinear" and not t.exact_ou:
                        acc[t.name][:] = 0.0
                        refresh_bgrid(t)
                bad = np.zeros(S, dtype=bool)
                for t in per_level[N]:
                    bad |= ~np.all(np.isfinite(states[t.name]), axis=1)
                if bad.any():
                    if raise_on_divergence:
                        raise DivergenceError(n, per_level[N][0].kind)
                    aborted |= bad
                    for t in per_level[N]:
                        states[t.name][bad] = 0.0
                for ob in obs_levels.get(N, ()):
                    self._observe(ob, states, n + 1)
                if keep_paths:
                    for t in per_level[N]:
                        paths[t.name].append(states[t.name].copy())
        out = {"states": states, "aborted": aborted}
        if keep_paths:
            out["paths"] = {k: np.stack(v, axis=1) for k, v in paths.items()}
        return out

    def _observe(self, ob: PathNorms, states, n):
        x = states[ob.a] if ob.b is None else states[ob.a] - states[ob.b]
        kind, param = ob.metric
        if kind == "V":
            ob.values[:, n] = vr_norm_coeffs(x, self.op, param)
        else:
            ob.values[:, n] = lp_norm_values(coeffs_to_grid(x, self.J), param)

    def _advance_level(self, tracks, states, dW, factors, N, n, samples, acc):
        fac = factors[N]
        h, E = fac["h"], fac["E"]
        ctx = _LevelStep(states, dW, self.J)
        new = {}
        for t in tracks:
            Y = states[t.name]
            if t.kind == "exp_euler":
                new[t.name] = E * (Y + self._forcing(ctx, t.name, h))
            elif t.kind == "mollified":
                new[t.name] = E * (Y + factors[(t.name, "kappa")] * self._forcing(ctx, t.name, h))
            elif t.kind == "linear_implicit":
                new[t.name] = fac["R"] * (Y + self._forcing(ctx, t.name, h))
            elif t.kind == "variation":
                f, b = self.model.f, self.model.b
                Yg = ctx.grid(t.driver)
                Zg = ctx.grid(t.name)
                G = h * f.deriv(Yg, 1) * Zg
                if not b.is_constant:
                    G = G + b.deriv(Yg, 1) * Zg * ctx.wgrid()
                new[t.name] = E * (Y + grid_to_coeffs(G, self.op.M))
            elif t.kind == "semilinear":
                drift = fac["Phi"] * self._drift_only(ctx, t.driver, 1.0)
                if t.exact_ou:
                    noise = self._exact_ou_convolution(dW, N, n, samples, fac)
                else:
                    noise = acc[t.name]
                new[t.name] = E * Y + drift + noise
        states.update(new)

    def _exact_ou_convolution(self, dW, N, n, samples, fac):
        """Sample c int e^{(t_{n+1}-s)A} dW_s jointly Gaussian with the coarse increment."""
        c = self.model.b.constant_value
        lam, h = self.lam, fac["h"]
        cov = -np.expm1(-lam * h) / lam
        var = -np.expm1(-2.0 * lam * h) / (2.0 * lam)
        resid = np.sqrt(np.maximum(var - cov * cov / h, 0.0))
        z = self.plan.auxiliary_normals(N, n, samples)
        return c * (cov / h * dW + resid * z)


# -- single-path API -----------------------------------------------------------

def _one_step_engine(cfg: SchemeConfig) -> Engine:
    return Engine(cfg.model, cfg.op, cfg.plan, cfg.J)


def _step(cfg: SchemeConfig, kind: str, Y: SpectralField, n: int, extra=None) -> SpectralField:
    if not 0 <= n < cfg.N:
        raise InvalidArgument(f"step index {n} outside 0..{cfg.N - 1}")
    eng = _one_step_engine(cfg)
    dW = increment_array(cfg.plan, cfg.N, n, [cfg.sample])
    h = cfg.h
    fac = {
        "h": h,
        "E": np.exp(-eng.lam * h),
        "R": 1.0 / (1.0 + h * eng.lam),
        "Phi": -np.expm1(-eng.lam * h) / eng.lam,
    }
    states = {"y": Y.coeffs[None, :].copy()}
    factors = {cfg.N: fac, ("y", "kappa"): np.exp(-eng.lam * cfg.kappa)}
    if kind == "variation":
        states["drv"] = extra.coeffs[None, :].copy()
        track = Track("y", kind, cfg.N, driver="drv")
    else:
        track = Track("y", kind, cfg.N, kappa=cfg.kappa)
    eng._advance_level([track], states, dW, factors, cfg.N, n, None, {})
    out = states["y"][0]
    if not np.all(np.isfinite(out)):
        raise DivergenceError(n, kind)
    return SpectralField(out, cfg.op)


def exp_euler_step(Y_n: SpectralField, n: int, cfg: SchemeConfig) -> SpectralField:
    return _step(cfg, "exp_euler", Y_n, n)


def mollified_step(Y_n: SpectralField, n: int, cfg: SchemeConfig) -> SpectralField:
    return _step(cfg, "mollified", Y_n, n)


def linear_implicit_step(Y_n: SpectralField, n: int, cfg: SchemeConfig) -> SpectralField:
    return _step(cfg, "linear_implicit", Y_n, n)


def variation_step(Z_n: SpectralField, Y_n: SpectralField, n: int, cfg: SchemeConfig) -> SpectralField:
    """Linearised exp-Euler step of the first variation along the path Y."""
    return _step(cfg, "variation", Z_n, n, extra=Y_n)


def run(cfg: SchemeConfig, start: SpectralField | None = None) -> Trajectory:
    """Whole trajectory of one scheme on sample ``cfg.sample`` of the plan."""
    eng = _one_step_engine(cfg)
    main_kind = "exp_euler" if cfg.kind in ("semilinear", "variation") else cfg.kind
    tracks = [Track("main", main_kind, cfg.N,
                    start=None if start is None else start.coeffs, kappa=cfg.kappa)]
    name = "main"
    if cfg.kind == "semilinear":
        tracks.append(Track("ybar", "semilinear", cfg.N, start=tracks[0].start,
                            driver="main", exact_ou=cfg.exact_ou))
        name = "ybar"
    elif cfg.kind == "variation":
        tracks.append(Track("z", "variation", cfg.N, direction=cfg.direction.coeffs, driver="main"))
        name = "z"
    res = eng.run(tracks, [cfg.sample], keep_paths=True, raise_on_divergence=True)
    return Trajectory(res["paths"][name][0], cfg)


def semilinear_integrated_run(cfg: SchemeConfig, driving: Trajectory) -> Trajectory:
    """Semilinear-integrated companion of an exp-Euler trajectory on the same path.

    Drift uses the exact convolution of the frozen F(Y_n); the stochastic
    convolution is a left-point sum over the plan's fine sub-steps (or an exact
    joint Gaussian draw when ``exact_ou`` is set and b is constant).
    """
    dcfg = driving.scheme
    if dcfg.kind != "exp_euler" or dcfg.N != cfg.N or dcfg.plan != cfg.plan or dcfg.sample != cfg.sample:
        raise InvalidArgument("driving trajectory must be exp_euler on the same plan, N and sample")
    eng = _one_step_engine(cfg)
    start = driving.states[0]
    tracks = [
        Track("main", "exp_euler", cfg.N, start=start),
        Track("ybar", "semilinear", cfg.N, start=start, driver="main", exact_ou=cfg.exact_ou),
    ]
    res = eng.run(tracks, [cfg.sample], keep_paths=True, raise_on_divergence=True)
    if not np.array_equal(res["paths"]["main"][0], driving.states):
        raise InvalidArgument("driving trajectory does not match the plan and model")
    return Trajectory(res["paths"]["ybar"][0], replace(cfg, kind="semilinear"))


def plan_too_coarse(cfg: SchemeConfig) -> bool:
    """True when the stochastic convolution has no fine sub-steps (maximal quadrature bias)."""
    return cfg.plan.N_fine == cfg.N and not cfg.exact_ou


def reference_solve(model: ModelSpec, op: OperatorSpec, plan: NoisePlan, sample: int = 0) -> SpectralField:
    """Exp-Euler at the finest resolution of the plan, the coupling reference."""
    cfg = SchemeConfig("exp_euler", plan.N_fine, model, op, plan, sample=sample)
    return run(cfg).final
