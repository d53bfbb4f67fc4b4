"""Job configuration files.

A job file is line oriented ``key = value`` text in named ``[blocks]``::

    [system]
    field = [-x1, -r*x2 + eps*(r - 3)*x1^3]
    map = false

    [parameters]
    r = 2.0
    eps = 0.1

    [attractor]
    type = point
    guess = 0, 0

    [analysis]
    k = 3
    target = -2
    grid_lo = -0.5, -0.5
    grid_hi = 0.5, 0.5
    grid_n = 5, 5

    [output]
    dir = out

Numeric targets are exponents ``mu`` (the multiplier of the time-one map
is ``e^mu`` for maps and flows alike).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

NAMED_TARGETS = ("slowest", "all-principal", "sternberg", "floquet")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ConfigError("grid_lo, grid_hi and grid_n must have equal lengths")
        if any(r < 1 for r in self.n):
            raise ConfigError("grid resolution must be positive")
        if any(not (math.isfinite(a) and math.isfinite(b)) for a, b in zip(self.lo, self.hi)):
            raise ConfigError("grid bounds must be finite")


@dataclass(frozen=True)
class SystemSpec:
    field: str
    is_map: bool = False
    params: dict = field(default_factory=dict)
    dim: Optional[int] = None


@dataclass(frozen=True)
class AttractorSpec:
    kind: str
    guess: tuple
    period: Optional[float] = None


@dataclass(frozen=True)
class AnalysisSpec:
    k: int = 3
    alpha: float = 0.0
    target: object = None
    approximant: Optional[str] = None
    grid: Optional[GridSpec] = None
    tol: float = 1e-10
    step: float = 1.0
    max_steps: int = 400
    divergence_threshold: float = 1e8
    laplace_horizon: Optional[float] = None
    samples: int = 8
    mu: tuple = ()
    lam: tuple = ()
    j_range: int = 3
    lattice_tol: float = 1e-9


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    factor: str = "factor.txt"
    grid: str = "grid.csv"
    summary: str = "summary.txt"
    report: str = "classify.txt"


@dataclass(frozen=True)
class JobConfig:
    system: SystemSpec
    attractor: AttractorSpec
    analysis: AnalysisSpec
    output: OutputSpec
    name: str = "job"


def parse_number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_complex(text: str) -> complex:
    s = text.strip().replace(" ", "").replace("i", "j")
    try:
        return complex(s)
    except ValueError:
        raise ConfigError(f"not a complex number: {text!r}") from None


def parse_list(text: str, conv=parse_number) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(conv(t) for t in items)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _int(text: str, key: str) -> int:
    v = parse_number(text)
    if v != int(v):
        raise ConfigError(f"{key} must be an integer")
    return int(v)


def _target(text: str):
    t = text.strip().lower()
    if t in NAMED_TARGETS:
        return t
    return parse_complex(text)


def _reader(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # parameter names are case sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return cp


def loads(text: str, name: str = "job") -> JobConfig:
    cp = _reader(text)
    for block in ("system", "attractor"):
        if not cp.has_section(block):
            raise ConfigError(f"missing [{block}] block")
    sys_b = cp["system"]
    if "field" not in sys_b:
        raise ConfigError("[system] needs a field")
    params = {}
    if cp.has_section("parameters"):
        params = {k: parse_number(v) for k, v in cp["parameters"].items()}
    system = SystemSpec(sys_b["field"].strip(), _bool(sys_b.get("map", "false")), params,
                        _int(sys_b["dim"], "dim") if "dim" in sys_b else None)

    att_b = cp["attractor"]
    kind = att_b.get("type", "").strip().lower()
    if kind not in ("point", "cycle"):
        raise ConfigError("attractor type must be exactly one of point, cycle")
    guess = parse_list(att_b.get("guess", ""))
    if not guess:
        raise ConfigError("[attractor] needs an initial guess")
    period = parse_number(att_b["period"]) if "period" in att_b else None
    if kind == "cycle" and (period is None or period <= 0):
        raise ConfigError("a cycle attractor needs a positive period guess")
    if kind == "cycle" and system.is_map:
        raise ConfigError("cycle attractors are supported for flows only")
    attractor = AttractorSpec(kind, guess, period)

    an = cp["analysis"] if cp.has_section("analysis") else {}
    kw = {}
    if "k" in an:
        kw["k"] = _int(an["k"], "k")
    if "alpha" in an:
        kw["alpha"] = parse_number(an["alpha"])
    if "target" in an:
        kw["target"] = _target(an["target"])
    if "approximant" in an:
        kw["approximant"] = an["approximant"].strip()
    keys = [g in an for g in ("grid_lo", "grid_hi", "grid_n")]
    if any(keys):
        if not all(keys):
            raise ConfigError("grid needs grid_lo, grid_hi and grid_n")
        kw["grid"] = GridSpec(parse_list(an["grid_lo"]), parse_list(an["grid_hi"]),
                              tuple(_int(v, "grid_n") for v in an["grid_n"].split(",")))
    for key in ("tol", "step", "divergence_threshold", "laplace_horizon", "lattice_tol"):
        if key in an:
            kw[key] = parse_number(an[key])
    for key in ("max_steps", "samples", "j_range"):
        if key in an:
            kw[key] = _int(an[key], key)
    if "mu" in an:
        kw["mu"] = parse_list(an["mu"], parse_complex)
    if "lambda" in an:
        kw["lam"] = parse_list(an["lambda"], parse_complex)
    analysis = AnalysisSpec(**kw)
    if analysis.k < 1:
        raise ConfigError("k must be at least 1")
    if not 0 <= analysis.alpha <= 1:
        raise ConfigError("alpha must lie in [0, 1]")
    if analysis.tol <= 0 or analysis.step <= 0:
        raise ConfigError("tol and step must be positive")
    if analysis.grid is not None and len(analysis.grid.lo) != len(guess):
        raise ConfigError("grid dimension differs from the attractor guess")

    out = cp["output"] if cp.has_section("output") else {}
    output = OutputSpec(**{k: out[k].strip() for k in ("dir", "factor", "grid", "summary", "report")
                           if k in out})
    return JobConfig(system, attractor, analysis, output, name)


def load(path) -> JobConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    return loads(text, p.stem)


def bundled() -> dict[str, str]:
    """Names and texts of the example job files shipped with the package."""
    root = resources.files("koopfactor") / "data"
    return {p.name[:-4]: p.read_text() for p in sorted(root.iterdir(), key=lambda q: q.name)
            if p.name.endswith(".ini")}


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("koopfactor") / "data" / f"{name}.ini"))
