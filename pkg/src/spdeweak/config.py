"""YAML experiment configuration with schema checks and line-accurate diagnostics."""
import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Optional, Union

import yaml

from .errors import ConfigError

EXPERIMENTS = (
    "weak-rate-exact",
    "weak-rate-mc",
    "strong-rate",
    "mollify-study",
    "bounds",
    "perturbation",
    "variation-check",
    "simulate",
)


@dataclass
class ModelConfig:
    f: dict = field(default_factory=lambda: {"kind": "sine"})
    b: dict = field(default_factory=lambda: {"kind": "cosine", "c0": 1.0, "c1": 0.5})
    phi: dict = field(default_factory=lambda: {"kind": "exp_neg_l2sq"})
    xi: dict = field(default_factory=lambda: {"kind": "mode", "k": 1, "scale": 1.0})
    T: float = 1.0
    p: float = 2.0
    beta: float = 0.26


@dataclass
class NumericsConfig:
    M: Union[int, str] = 32  # an integer or "policy"
    N: list = field(default_factory=lambda: [8, 16, 32, 64])
    N_fine: int = 64
    J: Optional[int] = None
    samples: int = 1000
    seed: int = 0
    workers: int = 1
    chunk: int = 128
    reference: str = "fine"  # fine | exact_ou
    coupled: bool = True
    scheme: str = "exp_euler"
    fit_min_N: Optional[int] = None
    policy_resolution: float = 50.0


@dataclass
class StudyConfig:
    kappas: Optional[list] = None  # fractions of T
    rho: float = 0.2
    varrho: Optional[float] = None
    xi2: Optional[dict] = None
    deltas: list = field(default_factory=lambda: [1e-3, 1e-4])
    direction: dict = field(default_factory=lambda: {"kind": "mode", "k": 1, "scale": 1.0})
    sample: int = 0
    upsilon: str = "auto"  # auto | ito | bdg
    seminorms: str = "sampled"  # sampled | analytic
    norm: str = "V"  # V | L
    r: float = 0.0
    q: float = 2.0
    sup: bool = False
    mode: str = "reference"  # reference | semilinear (strong-rate)
    exact_ou: bool = False
    kappa: float = 0.0


@dataclass
class AcceptanceConfig:
    slope_range: Optional[list] = None
    r2_min: Optional[float] = None
    slope_max: Optional[float] = None
    ratio_exponent: Optional[float] = None
    slope_min: Optional[float] = None
    fd_ratio_range: Optional[list] = None
    oracle_z: Optional[float] = None
    strong_rel_tol: Optional[float] = None
    strictly_decreasing: Optional[bool] = None


@dataclass
class OutputConfig:
    directory: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json", "svg"])


@dataclass
class ExperimentConfig:
    experiment: str = "simulate"
    model: ModelConfig = field(default_factory=ModelConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    acceptance: AcceptanceConfig = field(default_factory=AcceptanceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- parsing -------------------------------------------------------------------

def _compose(text: str, source: str):
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            data = loader.construct_document(node) if node is not None else {}
        finally:
            loader.dispose()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        loc = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"YAML syntax error: {exc.problem}", loc) from None
    return node, data


def _marks(node, path=(), out=None) -> dict:
    """Map field paths to 1-based line numbers of their values (keys for mappings)."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _marks(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (i,)
            out[p] = v.start_mark.line + 1
            _marks(v, p, out)
    return out


class _Ctx:
    def __init__(self, source, marks):
        self.source = source
        self.marks = marks

    def loc(self, path) -> str:
        dotted = ".".join(str(p) for p in path) or "<root>"
        for n in range(len(path), -1, -1):
            line = self.marks.get(tuple(path[:n]))
            if line is not None:
                return f"{self.source}:{line}: {dotted}"
        return f"{self.source}: {dotted}"

    def fail(self, path, msg):
        raise ConfigError(msg, self.loc(path))


def _type_name(tp) -> str:
    origin = typing.get_origin(tp)
    if origin is Union:
        return " or ".join(_type_name(a) for a in typing.get_args(tp))
    return getattr(tp, "__name__", str(tp))


def _coerce(value, tp, path, ctx):
    origin = typing.get_origin(tp)
    if origin is Union:
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        for a in args:
            if a is type(None):
                continue
            try:
                return _coerce(value, a, path, ctx)
            except ConfigError:
                pass
        ctx.fail(path, f"expected {_type_name(tp)}, got {type(value).__name__} {value!r}")
    if tp is type(None):
        if value is not None:
            ctx.fail(path, "expected null")
        return None
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path, ctx)
    if tp is bool:
        if not isinstance(value, bool):
            ctx.fail(path, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            ctx.fail(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            ctx.fail(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            ctx.fail(path, f"expected a finite number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            ctx.fail(path, f"expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            ctx.fail(path, f"expected a list, got {value!r}")
        return value
    if tp is dict:
        if not isinstance(value, dict):
            ctx.fail(path, f"expected a mapping, got {value!r}")
        return value
    raise TypeError(tp)


def _build(cls, data, path, ctx):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        ctx.fail(path, f"expected a mapping for {cls.__name__}, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    for k in data:
        if k not in names:
            ctx.fail(path + (str(k),), f"unknown field {k!r}; valid fields: {', '.join(names)}")
    kw = {k: _coerce(v, hints[k], path + (k,), ctx) for k, v in data.items()}
    return cls(**kw)


def _validate(cfg: ExperimentConfig, ctx: _Ctx) -> None:
    if cfg.experiment not in EXPERIMENTS:
        ctx.fail(("experiment",), f"unknown experiment {cfg.experiment!r}; valid: {', '.join(EXPERIMENTS)}")
    m, n, s = cfg.model, cfg.numerics, cfg.study
    for key in ("f", "b", "phi", "xi"):
        d = getattr(m, key)
        if "kind" not in d:
            ctx.fail(("model", key), "missing 'kind'")
    if m.T <= 0:
        ctx.fail(("model", "T"), "T must be positive")
    if m.p < 2:
        ctx.fail(("model", "p"), "p must be at least 2")
    if not 0.25 < m.beta < 0.5:
        ctx.fail(("model", "beta"), "beta must lie in (1/4, 1/2)")
    if isinstance(n.M, str):
        if n.M != "policy":
            ctx.fail(("numerics", "M"), "M must be a positive integer or 'policy'")
    elif n.M < 1:
        ctx.fail(("numerics", "M"), "M must be a positive integer")
    if not n.N:
        ctx.fail(("numerics", "N"), "N list must be nonempty")
    for i, N in enumerate(n.N):
        if isinstance(N, bool) or not isinstance(N, int) or N < 1:
            ctx.fail(("numerics", "N", i), f"N entries must be positive integers, got {N!r}")
    if n.N_fine < 1:
        ctx.fail(("numerics", "N_fine"), "N_fine must be positive")
    for i, N in enumerate(n.N):
        if n.N_fine % N:
            ctx.fail(("numerics", "N", i), f"N must divide N_fine (N={N}, N_fine={n.N_fine})")
    r = n.N_fine // min(n.N)
    if r & (r - 1):
        ctx.fail(("numerics", "N_fine"), "N_fine must be a power of two times min(N)")
    if n.samples < 0 or n.workers < 1 or n.chunk < 1:
        ctx.fail(("numerics",), "samples must be nonnegative; workers and chunk positive")
    if n.reference not in ("fine", "exact_ou"):
        ctx.fail(("numerics", "reference"), "reference must be 'fine' or 'exact_ou'")
    if s.upsilon not in ("auto", "ito", "bdg"):
        ctx.fail(("study", "upsilon"), "upsilon must be auto, ito or bdg")
    if s.seminorms not in ("sampled", "analytic"):
        ctx.fail(("study", "seminorms"), "seminorms must be 'sampled' or 'analytic'")
    if s.norm not in ("V", "L"):
        ctx.fail(("study", "norm"), "norm must be 'V' or 'L'")
    if s.mode not in ("reference", "semilinear"):
        ctx.fail(("study", "mode"), "mode must be 'reference' or 'semilinear'")
    fmts = set(cfg.output.formats)
    if not fmts <= {"csv", "json", "svg"}:
        ctx.fail(("output", "formats"), "formats are drawn from csv, json, svg")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    node, data = _compose(text, source)
    ctx = _Ctx(source, _marks(node) if node is not None else {})
    cfg = _build(ExperimentConfig, data, (), ctx)
    _validate(cfg, ctx)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
