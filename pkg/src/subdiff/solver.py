"""Fully discrete L2-1sigma / finite element time stepping.

Two problem kinds are supported:

``subdiffusion``
    ``D^{alpha(t)} u - div(K grad u) = f``.
``mobile_immobile``
    ``u_t + k(t) D^{alpha(t)} u - div(K grad u) = f`` on a uniform time grid,
    with ``u_t`` replaced by a BDF2-like difference at ``t_{n-theta_n}``.

Linear systems are solved on interior degrees of freedom only. The history
sum ``sum_k c_{n-k,n} M (U^k - U^{k-1})`` reuses cached mass-weighted
increments, so each step costs ``O(n * ndof)`` plus one CG solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import gamma

from . import fem2d
from .errors import InvalidParameter, StepFailure, SubdiffError, UnsupportedConfiguration
from .sparse import CGReport, cg_solve
from .temporal import (
    CoeffRow,
    GradedMesh,
    StepParams,
    SuperconvPolicy,
    VariableExponent,
    build_graded_mesh,
    l21_coefficients,
    select_step_params,
)

__all__ = [
    "ProblemSpec",
    "SchemeConfig",
    "SOURCE_MODES",
    "SolverState",
    "SolutionHistory",
    "StabilityReport",
    "initialize",
    "step_subdiffusion",
    "step_mobile_immobile",
    "run",
    "stability_certificate",
]

KINDS = ("subdiffusion", "mobile_immobile")


@dataclass(frozen=True)
class ProblemSpec:
    """Continuous problem data.

    ``source(x, y, t)``, ``u0(x, y)`` and ``u0_grad(x, y) -> (gx, gy)`` are
    vectorised callables. ``ut0`` is the initial velocity field
    ``f(., 0) - L u0`` needed by the mobile-immobile first step.
    ``reduced_source`` is ``f`` minus the fractional term ``k(t) D^alpha u``;
    together with ``exact`` it enables the ``"discrete"`` source mode.
    """

    exponent: VariableExponent
    K: fem2d.DiffusionTensor
    source: Callable
    u0: Callable
    u0_grad: Callable
    T: float = 1.0
    kind: str = "subdiffusion"
    k_coeff: Optional[Callable] = None
    ut0: Optional[Callable] = None
    exact: Optional[Callable] = None
    reduced_source: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"problem kind must be one of {KINDS}")
        if self.kind == "mobile_immobile":
            if self.k_coeff is None or self.ut0 is None:
                raise InvalidParameter("mobile_immobile problems need k_coeff and ut0")
        edge = np.linspace(0.0, 1.0, 33)
        z = np.zeros_like(edge)
        o = np.ones_like(edge)
        vals = np.concatenate([self.u0(edge, z), self.u0(edge, o), self.u0(z, edge), self.u0(o, edge)])
        if np.abs(vals).max() > 1e-12:
            raise InvalidParameter("initial value must vanish on the boundary")
        if self.k_coeff is not None:
            ks = np.asarray(self.k_coeff(np.linspace(0.0, self.T, 257)), float)
            if ks.min() < 0:
                raise InvalidParameter("k(t) must be nonnegative")


@dataclass(frozen=True)
class SchemeConfig:
    N: int
    M: int
    r: float = 1.0
    p: int = 2
    policy: SuperconvPolicy = field(default_factory=SuperconvPolicy)
    cg_tol: float = 1e-11
    cg_max_iter: Optional[int] = None
    quad_degree: int = 6
    stiffness_quad_degree: int = 4
    # "analytic": load f(t_{n-theta}) directly.
    # "discrete": fractional part of the load is the discrete operator applied
    # to the exact solution, so the Caputo truncation error drops out.
    source: str = "analytic"

    def __post_init__(self):
        if self.source not in SOURCE_MODES:
            raise InvalidParameter(f"source must be one of {SOURCE_MODES}, got '{self.source}'")


SOURCE_MODES = ("analytic", "discrete")


@dataclass
class SolverState:
    problem: ProblemSpec
    config: SchemeConfig
    mesh: GradedMesh
    space: fem2d.FESpace
    mass: object  # interior blocks, CSR
    stiffness: object
    U: np.ndarray  # (N+1, n_interior)
    dMU: np.ndarray  # (N, n_interior): M (U^k - U^{k-1}) in row k-1
    params: List[StepParams] = field(default_factory=list)
    rows: List[CoeffRow] = field(default_factory=list)
    reports: List[CGReport] = field(default_factory=list)
    init_report: Optional[CGReport] = None
    history_ops: int = 0
    n_done: int = 0
    _same_pattern: bool = False
    exact_increments: Optional[np.ndarray] = None  # (u(t_k) - u(t_{k-1}), w), discrete mode only

    def system(self, mass_coeff: float, stiff_coeff: float):
        """``mass_coeff * M + stiff_coeff * A`` on interior dofs."""
        if self._same_pattern:
            S = self.mass.copy()
            S.data = mass_coeff * self.mass.data + stiff_coeff * self.stiffness.data
            return S
        return (mass_coeff * self.mass + stiff_coeff * self.stiffness).tocsr()

    def load(self, g: Callable) -> np.ndarray:
        q = self.config.quad_degree
        return fem2d.assemble_functional(self.space, g, q)[self.space.interior]


@dataclass
class SolutionHistory:
    """Result of :func:`run`: coefficient vectors ``U^0..U^N`` and step metadata."""

    problem: ProblemSpec
    config: SchemeConfig
    mesh: GradedMesh
    space: fem2d.FESpace
    U: np.ndarray
    params: List[StepParams]
    rows: List[CoeffRow]
    reports: List[CGReport]
    history_ops: int
    mass: object = None
    stiffness: object = None

    @property
    def times(self) -> np.ndarray:
        return self.mesh.nodes

    def coefficients(self, n: int) -> np.ndarray:
        """Full coefficient vector of ``u_h^n`` (boundary entries zero)."""
        return self.space.extend(self.U[n])

    def solution(self, n: int) -> fem2d.FEFunction:
        return fem2d.FEFunction(self.space, self.coefficients(n))


def initialize(problem: ProblemSpec, config: SchemeConfig) -> SolverState:
    """Assemble matrices and the initial value ``U^0 = Pi_h u0``."""
    if problem.kind == "mobile_immobile" and config.r != 1:
        raise UnsupportedConfiguration("the mobile-immobile scheme needs a uniform time grid (r = 1)")
    mesh = build_graded_mesh(problem.T, config.N, config.r)
    space = fem2d.build_fe_space(fem2d.build_unit_square_mesh(config.M), config.p)
    interior = space.interior
    mass = fem2d.assemble_mass(space, max(2 * config.p, 2))[interior][:, interior].tocsr()
    stiff = fem2d.assemble_stiffness(space, problem.K, config.stiffness_quad_degree)[interior][:, interior].tocsr()
    mass.sort_indices()
    stiff.sort_indices()
    same = (
        np.array_equal(mass.indptr, stiff.indptr)
        and np.array_equal(mass.indices, stiff.indices)
    )

    if config.source == "discrete" and (problem.exact is None or problem.reduced_source is None):
        raise InvalidParameter("discrete source mode needs the exact solution and the reduced source")
    U = np.zeros((config.N + 1, space.n_interior))
    dMU = np.zeros((config.N, space.n_interior))
    state = SolverState(problem, config, mesh, space, mass, stiff, U, dMU, _same_pattern=same)
    u0, report = fem2d.elliptic_projection(
        space, stiff, problem.K, problem.u0_grad, config.quad_degree, tol=config.cg_tol, return_report=True
    )
    U[0] = u0.coeffs[interior]
    state.init_report = report
    if config.source == "discrete":
        u, q = problem.exact, config.quad_degree
        G = np.array([
            fem2d.assemble_functional(space, lambda x, y, t=t: u(x, y, t), q)[interior] for t in mesh.nodes
        ])
        state.exact_increments = np.diff(G, axis=0)
    return state


def _source_load(state: SolverState, params: StepParams, row: CoeffRow, kval: float = 1.0) -> np.ndarray:
    ts, n = params.t_super, params.n
    if state.config.source == "analytic":
        f = state.problem.source
        return state.load(lambda x, y: f(x, y, ts))
    g = state.problem.reduced_source
    frac = row.c[:n][::-1] @ state.exact_increments[:n]
    return state.load(lambda x, y: g(x, y, ts)) + kval * frac


def _history_sum(state: SolverState, row: CoeffRow, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros(state.space.n_interior)
    # weights c_{n-k,n} for k = 1..n-1
    w = row.c[1:n][::-1]
    state.history_ops += n - 1
    return w @ state.dMU[: n - 1]


def _solve(state: SolverState, S, rhs, n):
    cfg = state.config
    x, report = cg_solve(S, rhs, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter, x0=state.U[n - 1])
    if not np.all(np.isfinite(x)):
        raise SubdiffError(f"step {n}: non-finite values in the solution")
    state.U[n] = x
    state.dMU[n - 1] = state.mass @ (x - state.U[n - 1])
    state.reports.append(report)
    state.n_done = n
    return x


def _prepare(state: SolverState, n: int):
    if n != state.n_done + 1:
        raise InvalidParameter(f"steps must be taken in order: expected {state.n_done + 1}, got {n}")
    params = select_step_params(state.problem.exponent, state.mesh, n, state.config.policy)
    row = l21_coefficients(state.mesh, params)
    state.params.append(params)
    state.rows.append(row)
    return params, row


def step_subdiffusion(state: SolverState, n: int) -> np.ndarray:
    """Advance to ``U^n``; returns the interior coefficient vector."""
    params, row = _prepare(state, n)
    theta, c0 = params.theta, row.c[0]
    U_prev = state.U[n - 1]
    rhs = (
        _source_load(state, params, row)
        + c0 * (state.mass @ U_prev)
        - _history_sum(state, row, n)
        - theta * (state.stiffness @ U_prev)
    )
    S = state.system(c0, 1.0 - theta)
    return _solve(state, S, rhs, n)


def step_mobile_immobile(state: SolverState, n: int) -> np.ndarray:
    """Advance the mobile-immobile scheme to ``U^n``."""
    params, row = _prepare(state, n)
    prob = state.problem
    tau = state.mesh.tau(n)
    theta, c0, al = params.theta, row.c[0], params.alpha_n
    ts = params.t_super
    kval = float(prob.k_coeff(ts))
    U_prev = state.U[n - 1]
    MU_prev = state.mass @ U_prev
    load = _source_load(state, params, row, kval)
    caputo = kval * (c0 * MU_prev - _history_sum(state, row, n))
    if n == 1:
        d = (2.0 - al) / tau
        rhs = load + (1.0 - al) * state.load(prob.ut0) + d * MU_prev + caputo
    else:
        d = (3.0 - al) / (2.0 * tau)
        combo = (4.0 - 2.0 * al) * U_prev - (1.0 - al) * state.U[n - 2]
        rhs = load + (state.mass @ combo) / (2.0 * tau) + caputo
    rhs = rhs - theta * (state.stiffness @ U_prev)
    S = state.system(d + kval * c0, 1.0 - theta)
    return _solve(state, S, rhs, n)


def run(problem: ProblemSpec, config: SchemeConfig) -> SolutionHistory:
    """Execute all ``N`` steps and return the solution history."""
    state = initialize(problem, config)
    stepper = step_subdiffusion if problem.kind == "subdiffusion" else step_mobile_immobile
    for n in range(1, config.N + 1):
        try:
            stepper(state, n)
        except SubdiffError as exc:
            raise StepFailure(f"step {n}/{config.N} with policy '{config.policy}' failed: {exc}", n, exc) from exc
    return SolutionHistory(
        problem, config, state.mesh, state.space, state.U, state.params, state.rows,
        state.reports, state.history_ops, state.mass, state.stiffness,
    )


@dataclass(frozen=True)
class StabilityReport:
    norms: np.ndarray  # ||u_h^n||, n = 0..N
    bounds: np.ndarray  # B_n, n = 1..N (B_0 := ||u_h^0||)
    applicable: bool
    holds: bool

    @property
    def worst_ratio(self) -> float:
        return float(np.max(self.norms[1:] / self.bounds[1:])) if self.applicable else float("nan")


def stability_certificate(history: SolutionHistory, problem: Optional[ProblemSpec] = None) -> StabilityReport:
    """Compare ``||u_h^n||`` with the a priori bound of the subdiffusion scheme.

    The bound is ``||u_h^0|| + 2 (1 + 2^r) e^r t_n^{alpha_sup} G_n F_n`` with
    ``G_n = max_j Gamma(1 + l_N - alpha_j^*) / Gamma(1 + l_N)``, ``l_N = 1/ln N``
    and ``F_n = max_j ||f(., t_{j-theta_j})||`` over ``1 <= j <= n``.
    """
    problem = problem or history.problem
    space, N = history.space, history.config.N
    q = history.config.quad_degree
    norms = np.array([fem2d.l2_error(space, history.coefficients(n), None, q) for n in range(N + 1)])
    if N < 2:
        return StabilityReport(norms, np.full(N + 1, np.nan), False, False)
    lN = 1.0 / math.log(N)
    r = history.mesh.r
    a_sup = problem.exponent.alpha_sup
    g = np.array([gamma(1.0 + lN - p.alpha_star) for p in history.params]) / gamma(1.0 + lN)
    f = problem.source
    fn = np.array([fem2d.l2_norm(space, lambda x, y: f(x, y, p.t_super), q) for p in history.params])
    t = history.mesh.nodes[1:]
    bounds = norms[0] + 2.0 * (1.0 + 2.0**r) * math.e**r * t**a_sup * np.maximum.accumulate(g) * np.maximum.accumulate(fn)
    bounds = np.concatenate([[norms[0]], bounds])
    holds = bool(np.all(norms[1:] <= bounds[1:] * (1.0 + 1e-12)))
    return StabilityReport(norms, bounds, True, holds)
