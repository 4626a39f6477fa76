"""Plain ``key = value`` run configuration.

Example::

    # ex1 temporal study on a graded grid
    case = ex1
    delta = 0.6
    r = 2
    M = 128
    N = 16, 32, 64
    policy = offset 0.6

Blank lines and ``#`` comments are ignored. Every error names the offending
line (``line 0`` for missing keys).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

from .errors import ConfigError, InvalidParameter
from .solver import SOURCE_MODES
from .temporal import SuperconvPolicy

__all__ = ["RunSpec", "parse_config", "load_config", "serialize"]

PROBLEMS = ("subdiffusion", "mobile_immobile")
CASES = ("ex1", "ex2", "ex3")
KEYS = (
    "problem", "case", "delta", "alpha0", "alphaT", "N", "M", "r", "p",
    "policy", "cg_tol", "quad_degree", "source", "out",
)
REQUIRED = ("case", "N", "M")


@dataclass(frozen=True)
class RunSpec:
    case: str
    N: Tuple[int, ...]
    M: Tuple[int, ...]
    problem: str = ""
    delta: float = 0.6
    alpha0: float = 0.4
    alphaT: float = 0.6
    r: float = 1.0
    p: int = 2
    policy: SuperconvPolicy = field(default_factory=lambda: SuperconvPolicy.offset(0.5))
    cg_tol: float = 1e-11
    quad_degree: int = 6
    source: str = "analytic"
    out: Optional[str] = None

    def __post_init__(self):
        if not self.problem:
            object.__setattr__(self, "problem", "mobile_immobile" if self.case == "ex3" else "subdiffusion")


def _int_list(text):
    vals = tuple(int(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


_PARSERS = {
    "problem": str,
    "case": str,
    "delta": float,
    "alpha0": float,
    "alphaT": float,
    "N": _int_list,
    "M": _int_list,
    "r": float,
    "p": int,
    "policy": SuperconvPolicy.parse,
    "cg_tol": float,
    "quad_degree": int,
    "source": str,
    "out": str,
}


def _check(key, value):
    """Return an error message for an out-of-range value, or None."""
    if key == "problem" and value not in PROBLEMS:
        return f"problem must be one of {PROBLEMS}"
    if key == "case" and value not in CASES:
        return f"case must be one of {CASES}"
    if key == "r" and not value >= 1.0:
        return f"r = {value} violates the constraint r >= 1"
    if key == "p" and value not in (1, 2):
        return "p must be 1 or 2"
    if key in ("N", "M") and min(value) < 1:
        return f"{key} entries must be positive"
    if key == "cg_tol" and not 0 < value < 1:
        return "cg_tol must lie in (0, 1)"
    if key == "quad_degree" and value < 6:
        return "quad_degree must be >= 6"
    if key == "source" and value not in SOURCE_MODES:
        return f"source must be one of {SOURCE_MODES}"
    if key in ("alpha0", "alphaT") and not 0 <= value < 1:
        return f"{key} must lie in [0, 1)"
    if key == "delta" and not 0 < value <= 1:
        return "delta must lie in (0, 1]"
    return None


def parse_config(text: str) -> RunSpec:
    """Parse and validate a configuration text.

    Raises
    ------
    ConfigError
        Unknown key, duplicate key, malformed or out-of-range value, or a
        missing required key.
    """
    values, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key '{key}'", lineno)
        if key in values:
            raise ConfigError(f"duplicate key '{key}' (first set on line {where[key]})", lineno)
        try:
            parsed = _PARSERS[key](val)
        except (ValueError, InvalidParameter) as exc:
            raise ConfigError(f"malformed value for '{key}': {val!r} ({exc})", lineno) from None
        msg = _check(key, parsed)
        if msg:
            raise ConfigError(msg, lineno)
        values[key], where[key] = parsed, lineno

    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key '{key}'", 0)

    case, problem = values["case"], values.get("problem")
    expected = "mobile_immobile" if case == "ex3" else "subdiffusion"
    if problem is not None and problem != expected:
        raise ConfigError(f"case {case} is a {expected} problem, not {problem}", where["problem"])
    if case == "ex1" and not values.get("delta", 0.6) < 0.9:
        raise ConfigError("ex1 needs delta in (0, 0.9)", where.get("delta", 0))
    if case == "ex3" and values.get("r", 1.0) != 1.0:
        raise ConfigError("ex3 runs on a uniform grid; r must be 1", where["r"])
    for key in ("N", "M"):
        seq = values[key]
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise ConfigError(f"{key} list must be strictly increasing", where[key])
    return RunSpec(**values)


def load_config(path) -> RunSpec:
    """Read and parse a config file; ``OSError`` propagates to the caller."""
    return parse_config(Path(path).read_text(encoding="utf-8"))


def serialize(spec: RunSpec) -> str:
    """Inverse of :func:`parse_config` (``parse_config(serialize(s)) == s``)."""
    lines = [
        f"problem = {spec.problem}",
        f"case = {spec.case}",
        f"delta = {spec.delta!r}",
        f"alpha0 = {spec.alpha0!r}",
        f"alphaT = {spec.alphaT!r}",
        f"N = {', '.join(map(str, spec.N))}",
        f"M = {', '.join(map(str, spec.M))}",
        f"r = {spec.r!r}",
        f"p = {spec.p}",
        f"policy = {spec.policy}",
        f"cg_tol = {spec.cg_tol!r}",
        f"quad_degree = {spec.quad_degree}",
        f"source = {spec.source}",
    ]
    if spec.out is not None:
        lines.append(f"out = {spec.out}")
    return "\n".join(lines) + "\n"


def with_overrides(spec: RunSpec, **kw) -> RunSpec:
    return replace(spec, **{k: v for k, v in kw.items() if v is not None})
