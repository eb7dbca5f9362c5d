"""Error tables, log-log rate regression and the exact additive-noise weak table."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from ..errors import InsufficientData, InvalidArgument, UnsupportedOracle
from ..model import ModelSpec
from ..oracles import OUSpec, ou_weak_error

CSV_HEADER = ("N", "error", "stderr", "samples", "aborted")


@dataclass
class ErrorRow:
    N: int
    error: float
    stderr: float = 0.0
    samples: int = 0
    aborted: int = 0
    signed: float | None = None


@dataclass
class ErrorTable:
    rows: list = field(default_factory=list)
    metric: str = "weak"
    fingerprint: str = ""
    M: int = 0
    N_fine: int = 0

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.N)
        for r in self.rows:
            if r.error < 0:
                raise InvalidArgument("errors must be nonnegative")

    @property
    def N(self) -> np.ndarray:
        return np.array([r.N for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([r.stderr for r in self.rows])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.N, repr(float(r.error)), repr(float(r.stderr)), r.samples, r.aborted])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "fingerprint": self.fingerprint,
            "M": self.M,
            "N_fine": self.N_fine,
            "rows": [asdict(r) for r in self.rows],
        }


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_ci_halfwidth: float
    N_min: float
    N_max: float
    points: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_loglog(x, y, confidence: float = 0.95) -> RateFit:
    """Least squares of log y on log x over points with positive y."""
    pts = sorted((float(a), float(b)) for a, b in zip(x, y) if b > 0)
    if len(pts) < 3:
        raise InsufficientData(f"rate fit needs at least 3 rows with positive error, got {len(pts)}")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    n = len(pts)
    xm, ym = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - xm) ** 2))
    if sxx == 0:
        raise InsufficientData("rate fit needs at least two distinct abscissae")
    slope = float(np.sum((lx - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = ly - (intercept + slope * lx)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    se_slope = math.sqrt(ss_res / (n - 2) / sxx)
    half = float(stats.t.ppf(0.5 + confidence / 2, n - 2) * se_slope)
    return RateFit(slope, intercept, r2, half, pts[0][0], pts[-1][0], n)


def fit_rate(table: ErrorTable, N_min: int | None = None, N_max: int | None = None,
             confidence: float = 0.95) -> RateFit:
    """Log-log rate fit over table rows with positive error inside [N_min, N_max]."""
    rows = [r for r in table.rows if r.error > 0
            and (N_min is None or r.N >= N_min) and (N_max is None or r.N <= N_max)]
    fit = fit_loglog([r.N for r in rows], [r.error for r in rows], confidence)
    fit.N_min, fit.N_max = int(fit.N_min), int(fit.N_max)
    return fit


def predicted_exponent(kappa: float, eps: float) -> float:
    """Weak-rate exponent 1 - kappa - 6 max(kappa - 1/2, 0) - eps for kappa in [0, 4/7)."""
    if not 0 <= kappa < 4.0 / 7.0:
        raise InvalidArgument(f"kappa must lie in [0, 4/7), got {kappa}")
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    return 1.0 - kappa - 6.0 * max(kappa - 0.5, 0.0) - eps


def modes_for_policy(N_max: int, T: float = 1.0, resolution: float = 50.0) -> int:
    """Smallest M with pi^2 M^2 T / N_max >= resolution."""
    return int(math.ceil(math.sqrt(resolution * N_max / (math.pi**2 * T)) - 1e-12))


def _as_ouspec(spec) -> OUSpec:
    if isinstance(spec, OUSpec):
        return spec
    if isinstance(spec, ModelSpec):
        if not (spec.f.is_zero and spec.b.is_constant and not np.any(spec.xi.coeffs)):
            raise UnsupportedOracle("exact weak errors need f = 0, constant b and xi = 0")
        if spec.phi.kind != "exp_neg_l2sq":
            raise UnsupportedOracle("exact weak errors need phi = exp(-||.||^2)")
        return OUSpec(T=spec.T, M=spec.op.M, c=spec.b.constant_value)
    raise UnsupportedOracle(f"no oracle for {type(spec).__name__}")


def weak_error_exact(spec, N_list, kind: str = "exp_euler") -> ErrorTable:
    """Deterministic table |E phi(X_T) - E phi(Y_N)| from the mode-wise oracle."""
    ou = _as_ouspec(spec)
    rows = []
    for N in N_list:
        s = OUSpec(ou.T, ou.M, ou.c, kind, int(N))
        rows.append(ErrorRow(int(N), ou_weak_error(s), 0.0, 0, 0))
    fp = spec.fingerprint() if isinstance(spec, ModelSpec) else f"ou:T={ou.T},M={ou.M},c={ou.c}"
    return ErrorTable(rows, metric="weak(exp_neg_l2sq)", fingerprint=fp, M=ou.M, N_fine=0)
