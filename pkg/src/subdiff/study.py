"""Convergence-study drivers and CSV output."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import fem2d
from .cases import builtin_case
from .config import RunSpec
from .errors import InvalidParameter, StepFailure
from .solver import ProblemSpec, SchemeConfig, SolutionHistory, StabilityReport, run, stability_certificate

__all__ = [
    "ConvergenceRow",
    "ConvergenceReport",
    "problem_for",
    "max_l2_error",
    "converge_time",
    "converge_space",
    "run_grid",
    "emit_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("case", "policy", "p", "r", "delta", "M", "N", "error", "order")


@dataclass(frozen=True)
class ConvergenceRow:
    case: str
    policy: str
    p: int
    r: float
    delta: Optional[float]
    M: int
    N: int
    error: float
    order: Optional[float] = None
    seconds: float = 0.0
    certificate: Optional[StabilityReport] = field(default=None, repr=False, compare=False)


@dataclass
class ConvergenceReport:
    case: str
    rows: List[ConvergenceRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.array([row.error for row in self.rows])

    @property
    def orders(self) -> np.ndarray:
        return np.array([np.nan if row.order is None else row.order for row in self.rows])

    def __len__(self):
        return len(self.rows)

    def table(self) -> str:
        out = [f"{'M':>5} {'N':>5} {'error':>12} {'order':>8}"]
        for row in self.rows:
            order = "" if row.order is None else f"{row.order:.4f}"
            out.append(f"{row.M:>5} {row.N:>5} {row.error:>12.4e} {order:>8}")
        return "\n".join(out)


def problem_for(spec: RunSpec) -> ProblemSpec:
    if spec.case == "ex3":
        return builtin_case("ex3", alpha0=spec.alpha0, alphaT=spec.alphaT)
    return builtin_case(spec.case, delta=spec.delta)


def scheme_for(spec: RunSpec, N: int, M: int) -> SchemeConfig:
    return SchemeConfig(
        N=N, M=M, r=spec.r, p=spec.p, policy=spec.policy, cg_tol=spec.cg_tol,
        quad_degree=spec.quad_degree, source=spec.source,
    )


def max_l2_error(history: SolutionHistory, exact: Callable) -> float:
    """``max_{1<=n<=N} ||u(., t_n) - u_h^n||_{L2}``."""
    space, q = history.space, history.config.quad_degree
    errs = [
        fem2d.l2_error(space, history.coefficients(n), lambda x, y, t=t: exact(x, y, t), q)
        for n, t in enumerate(history.times[1:], start=1)
    ]
    return float(max(errs))


def _orders(errors: Sequence[float], sizes: Sequence[int]) -> List[Optional[float]]:
    # log(e_prev / e) / log(size / size_prev); plain log2 ratio when sizes double
    out: List[Optional[float]] = [None]
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(sizes[i] / sizes[i - 1]))
        else:
            out.append(float("nan"))
    return out


def _solve_one(problem: ProblemSpec, spec: RunSpec, N: int, M: int, certify: bool) -> ConvergenceRow:
    start = time.perf_counter()
    try:
        hist = run(problem, scheme_for(spec, N, M))
    except StepFailure as exc:
        raise StepFailure(f"N={N}, M={M}: {exc}", exc.step, exc.cause) from exc
    err = max_l2_error(hist, problem.exact)
    cert = stability_certificate(hist, problem) if certify and problem.kind == "subdiffusion" else None
    delta = None if spec.case == "ex3" else spec.delta
    return ConvergenceRow(
        spec.case, str(spec.policy), spec.p, spec.r, delta, M, N, err,
        seconds=time.perf_counter() - start, certificate=cert,
    )


def _collect(problem, spec, pairs, threads, certify):
    if threads and threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # map() yields in submission order, independent of completion order
            return list(pool.map(lambda nm: _solve_one(problem, spec, nm[0], nm[1], certify), pairs))
    return [_solve_one(problem, spec, N, M, certify) for N, M in pairs]


def _strictly_increasing(name, seq):
    if len(seq) == 0:
        raise InvalidParameter(f"{name} list is empty")
    if any(b <= a for a, b in zip(seq, seq[1:])):
        raise InvalidParameter(f"{name} list must be strictly increasing")


def converge_time(
    spec: RunSpec,
    N_list: Optional[Sequence[int]] = None,
    problem: Optional[ProblemSpec] = None,
    threads: int = 1,
    certify: bool = False,
) -> ConvergenceReport:
    """Temporal refinement at fixed ``M = spec.M[0]``."""
    N_list = tuple(N_list or spec.N)
    _strictly_increasing("N", N_list)
    problem = problem or problem_for(spec)
    M = spec.M[0]
    rows = _collect(problem, spec, [(N, M) for N in N_list], threads, certify)
    orders = _orders([r.error for r in rows], N_list)
    rows = [_with_order(r, o) for r, o in zip(rows, orders)]
    return ConvergenceReport(spec.case, rows, {"study": "time", "source": spec.source})


def converge_space(
    spec: RunSpec,
    M_list: Optional[Sequence[int]] = None,
    N: Optional[int] = None,
    problem: Optional[ProblemSpec] = None,
    threads: int = 1,
    certify: bool = False,
) -> ConvergenceReport:
    """Spatial refinement at fixed ``N`` (``spec.N[-1]`` unless given)."""
    M_list = tuple(M_list or spec.M)
    _strictly_increasing("M", M_list)
    problem = problem or problem_for(spec)
    N = N or spec.N[-1]
    rows = _collect(problem, spec, [(N, M) for M in M_list], threads, certify)
    orders = _orders([r.error for r in rows], M_list)
    rows = [_with_order(r, o) for r, o in zip(rows, orders)]
    return ConvergenceReport(spec.case, rows, {"study": "space", "source": spec.source})


def run_grid(spec: RunSpec, threads: int = 1, certify: bool = False) -> ConvergenceReport:
    """One solve per ``(M, N)`` pair of the config; no orders."""
    problem = problem_for(spec)
    pairs = [(N, M) for M in spec.M for N in spec.N]
    rows = _collect(problem, spec, pairs, threads, certify)
    return ConvergenceReport(spec.case, rows, {"study": "run", "source": spec.source})


def _with_order(row: ConvergenceRow, order):
    return replace(row, order=order)


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.4e}"


def emit_csv(report: ConvergenceReport, path) -> Path:
    """Write ``report`` as CSV; an empty report is rejected before touching ``path``."""
    if not report.rows:
        raise InvalidParameter("refusing to write an empty convergence report")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in report.rows:
            w.writerow([
                row.case, row.policy, row.p, f"{row.r:g}",
                "" if row.delta is None else f"{row.delta:g}",
                row.M, row.N, _fmt(row.error), _fmt(row.order),
            ])
    return path

