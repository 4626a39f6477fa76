"""Graded time grids and the L2-1sigma approximation of variable-order Caputo derivatives.

The discrete operator at step ``n`` is evaluated at the offset point
``t_{n-theta_n} = theta_n t_{n-1} + (1 - theta_n) t_n`` with ``theta_n = alpha_n / 2``
and frozen order ``alpha_n^* = alpha(t_{n-theta_n})``::

    D_tau v^{n-theta_n} = sum_{k=1}^{n} c_{n-k,n} (v^k - v^{k-1})

The weights are assembled from the history integrals ``a``, ``b`` which are
evaluated in closed form (powers and a hypergeometric series), never by
numerical quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gamma

from .errors import (
    ConditionViolated,
    ExponentOutOfRange,
    IdentityViolation,
    InvalidParameter,
    NewtonDiverged,
)

__all__ = [
    "VariableExponent",
    "GradedMesh",
    "SuperconvPolicy",
    "StepParams",
    "CoeffRow",
    "KernelRow",
    "build_graded_mesh",
    "select_step_params",
    "step_schedule",
    "l21_coefficients",
    "coefficient_rows",
    "apply_l21sigma",
    "complementary_kernels",
    "kernel_table",
    "caputo_power_reference",
    "ij_quantities",
]

_MONOTONICITY = ("increasing", "decreasing", "none")


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class VariableExponent:
    """Time-dependent fractional order ``alpha(t)`` on ``[0, T]``.

    Parameters
    ----------
    func : callable
        Vectorised map ``t -> alpha(t)``.
    alpha_sup : float
        Upper bound ``alpha^*`` with ``alpha(t) <= alpha^* < 1``.
    T : float
        Final time of the interval the exponent is validated on.
    monotonicity : {'increasing', 'decreasing', 'none'}
        Hint used by the ``interval_min`` policy to skip the search.
    derivative : callable, optional
        ``t -> alpha'(t)``. Used by the Newton policy and by test oracles.
    """

    func: Callable
    alpha_sup: float
    T: float = 1.0
    monotonicity: str = "none"
    derivative: Optional[Callable] = None
    n_check: int = field(default=2001, repr=False)

    def __post_init__(self):
        if self.monotonicity not in _MONOTONICITY:
            raise InvalidParameter(f"monotonicity must be one of {_MONOTONICITY}")
        if not (0.0 <= self.alpha_sup < 1.0):
            raise ExponentOutOfRange(f"alpha_sup={self.alpha_sup} must lie in [0, 1)")
        if not self.T > 0:
            raise InvalidParameter("T must be positive")
        ts = np.linspace(0.0, self.T, self.n_check)
        vals = self(ts)
        if not np.all(np.isfinite(vals)):
            raise ExponentOutOfRange("exponent is not finite on [0, T]")
        if vals.min() < -1e-14 or vals.max() > self.alpha_sup + 1e-14:
            raise ExponentOutOfRange(
                f"exponent range [{vals.min():.6g}, {vals.max():.6g}] "
                f"leaves [0, {self.alpha_sup}]"
            )
        d = np.diff(vals)
        if self.monotonicity == "increasing" and d.min() < -1e-14:
            raise InvalidParameter("exponent declared increasing but decreases")
        if self.monotonicity == "decreasing" and d.max() > 1e-14:
            raise InvalidParameter("exponent declared decreasing but increases")

    def __call__(self, t):
        return np.asarray(self.func(np.asarray(t, dtype=float)), dtype=float) + 0.0

    def at(self, t: float) -> float:
        return float(self(t))

    def slope(self, t: float, h: float = 1e-6) -> float:
        if self.derivative is not None:
            return float(self.derivative(t))
        lo, hi = max(t - h, 0.0), min(t + h, self.T)
        return (self.at(hi) - self.at(lo)) / (hi - lo)

    @classmethod
    def constant(cls, value: float, T: float = 1.0) -> "VariableExponent":
        value = float(value)
        return cls(
            func=lambda t: np.full(np.shape(t), value),
            alpha_sup=value,
            T=T,
            monotonicity="none",
            derivative=lambda t: np.zeros(np.shape(t)),
        )


@dataclass(frozen=True)
class GradedMesh:
    """Temporal grid ``t_n = T (n/N)^r`` with steps and step ratios."""

    T: float
    N: int
    r: float
    nodes: np.ndarray
    steps: np.ndarray
    ratios: np.ndarray

    def rho(self, k: int) -> float:
        """``tau_k / tau_{k+1}`` for ``1 <= k <= N-1``."""
        return float(self.ratios[k - 1])

    def tau(self, k: int) -> float:
        return float(self.steps[k - 1])


def build_graded_mesh(T: float, N: int, r: float) -> GradedMesh:
    """Build the graded mesh ``t_n = T (n/N)^r``, ``0 <= n <= N``.

    >>> build_graded_mesh(1.0, 4, 2).nodes.tolist()
    [0.0, 0.0625, 0.25, 0.5625, 1.0]
    """
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise InvalidParameter(f"N must be a positive integer, got {N!r}")
    if not r >= 1:
        raise InvalidParameter(f"grading exponent r must satisfy r >= 1, got {r}")
    if not T > 0:
        raise InvalidParameter(f"T must be positive, got {T}")
    n = np.arange(N + 1, dtype=float)
    nodes = T * (n / N) ** r
    nodes[-1] = T
    steps = np.diff(nodes)
    ratios = steps[:-1] / steps[1:]
    return GradedMesh(float(T), int(N), float(r), _readonly(nodes), _readonly(steps), _readonly(ratios))


@dataclass(frozen=True)
class SuperconvPolicy:
    """Rule choosing the exponent ``kappa = alpha_n`` on each step.

    ``kind`` is one of ``interval_min``, ``offset`` (``kappa = alpha(t_{n-a})``),
    ``offset_frac`` (offset with ``a = frac * alpha(t_n)``), ``newton``
    (solve ``kappa = alpha(t_{n-kappa/2})``), ``at_left`` or ``at_right``.
    """

    kind: str = "interval_min"
    a: float = 0.0
    tol: float = 1e-12
    max_iter: int = 50
    slack: float = 1e-14

    _KINDS = ("interval_min", "offset", "offset_frac", "newton", "at_left", "at_right")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InvalidParameter(f"unknown policy kind {self.kind!r}")
        if self.kind == "offset" and not (0.0 <= self.a <= 1.0):
            raise InvalidParameter(f"offset a={self.a} must lie in [0, 1]")
        if self.kind == "offset_frac" and not (0.0 <= self.a <= 2.0):
            raise InvalidParameter(f"offset_frac c={self.a} must lie in [0, 2]")

    @classmethod
    def interval_min(cls):
        return cls("interval_min")

    @classmethod
    def offset(cls, a: float):
        return cls("offset", a=float(a))

    @classmethod
    def offset_frac(cls, c: float):
        return cls("offset_frac", a=float(c))

    @classmethod
    def newton(cls, tol: float = 1e-12, max_iter: int = 50):
        return cls("newton", tol=tol, max_iter=max_iter)

    @classmethod
    def at_left(cls):
        return cls("at_left")

    @classmethod
    def at_right(cls):
        return cls("at_right")

    @classmethod
    def parse(cls, text: str) -> "SuperconvPolicy":
        """Parse the config form, e.g. ``"offset 0.6"`` or ``"newton"``."""
        parts = text.split()
        if not parts:
            raise InvalidParameter("empty policy")
        kind, args = parts[0], parts[1:]
        if kind in ("offset", "offset_frac"):
            if len(args) != 1:
                raise InvalidParameter(f"policy {kind} takes exactly one number")
            try:
                value = float(args[0])
            except ValueError:
                raise InvalidParameter(f"policy {kind}: bad number {args[0]!r}") from None
            return cls(kind, a=value)
        if args:
            raise InvalidParameter(f"policy {kind} takes no arguments")
        return cls(kind)

    def __str__(self):
        if self.kind in ("offset", "offset_frac"):
            return f"{self.kind} {self.a!r}"
        return self.kind


@dataclass(frozen=True)
class StepParams:
    n: int
    alpha_n: float
    theta: float
    t_super: float
    alpha_star: float


def _golden_min(f, lo, hi, iters=30):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = f(x2)
    return min(f1, f2)


def _interval_min(alpha: VariableExponent, t0: float, t1: float) -> float:
    if alpha.monotonicity == "increasing":
        return alpha.at(t0)
    if alpha.monotonicity == "decreasing":
        return alpha.at(t1)
    ts = np.linspace(t0, t1, 33)
    vals = alpha(ts)
    i = int(np.argmin(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, 32)]
    return min(float(vals[i]), _golden_min(alpha.at, lo, hi))


def _newton_kappa(alpha, t0, t1, tol, max_iter, n):
    tau = t1 - t0

    def g(k):
        return k - alpha.at(t1 - 0.5 * k * tau)

    kappa = alpha.at(t1)
    gk = g(kappa)
    for _ in range(max_iter):
        if gk == 0.0:
            return kappa
        dg = 1.0 + 0.5 * tau * alpha.slope(t1 - 0.5 * kappa * tau)
        step = gk / dg
        lam = 1.0
        while True:
            trial = min(max(kappa - lam * step, 0.0), 2.0 * (1.0 - 1e-15))
            gt = g(trial)
            if abs(gt) < abs(gk) or lam < 1e-4:
                break
            lam *= 0.5
        kappa, gk = trial, gt
        if abs(lam * step) <= tol:
            # one polishing pass to push the residual to roundoff level
            return alpha.at(t1 - 0.5 * kappa * tau)
    raise NewtonDiverged(f"step {n}: Newton iteration exceeded {max_iter} iterations (|g|={abs(gk):.3e})")


def select_step_params(
    alpha: VariableExponent, mesh: GradedMesh, n: int, policy: SuperconvPolicy
) -> StepParams:
    """Choose ``alpha_n`` for step ``n`` and derive the superconvergence point.

    Raises
    ------
    ConditionViolated
        If ``alpha(t_{n - alpha_n/2}) < alpha_n - policy.slack``.
    NewtonDiverged
        If the Newton policy does not converge within ``max_iter``.
    """
    if not 1 <= n <= mesh.N:
        raise InvalidParameter(f"step index n={n} outside 1..{mesh.N}")
    t0, t1 = float(mesh.nodes[n - 1]), float(mesh.nodes[n])
    kind = policy.kind
    if kind == "interval_min":
        kappa = _interval_min(alpha, t0, t1)
    elif kind == "offset":
        kappa = alpha.at(policy.a * t0 + (1.0 - policy.a) * t1)
    elif kind == "offset_frac":
        a = min(policy.a * alpha.at(t1), 1.0)
        kappa = alpha.at(a * t0 + (1.0 - a) * t1)
    elif kind == "newton":
        kappa = _newton_kappa(alpha, t0, t1, policy.tol, policy.max_iter, n)
    elif kind == "at_left":
        kappa = alpha.at(t0)
    else:
        kappa = alpha.at(t1)

    if not (0.0 <= kappa < 1.0):
        raise ExponentOutOfRange(f"step {n}: selected exponent {kappa} outside [0, 1)")
    theta = 0.5 * kappa
    t_super = theta * t0 + (1.0 - theta) * t1
    alpha_star = alpha.at(t_super)
    if not (0.0 <= alpha_star <= alpha.alpha_sup + 1e-14):
        raise ExponentOutOfRange(f"step {n}: alpha(t_super)={alpha_star} outside [0, alpha_sup]")
    if alpha_star < kappa - policy.slack:
        raise ConditionViolated(
            f"step {n}: policy {policy} gives alpha_n={kappa:.16g} > "
            f"alpha(t_n-theta)={alpha_star:.16g}"
        )
    return StepParams(n=n, alpha_n=kappa, theta=theta, t_super=t_super, alpha_star=alpha_star)


def step_schedule(alpha: VariableExponent, mesh: GradedMesh, policy: SuperconvPolicy) -> list:
    """:class:`StepParams` for every step ``1..N``."""
    return [select_step_params(alpha, mesh, n, policy) for n in range(1, mesh.N + 1)]


@dataclass(frozen=True)
class CoeffRow:
    """Weights of the discrete operator at step ``n``.

    ``a[j]`` holds ``a_j``, ``b[j]`` holds ``b_j`` (``b[0]`` is unused and zero)
    and ``c[j]`` holds ``c_{j,n}`` for ``0 <= j <= n-1``.
    """

    n: int
    alpha_star: float
    theta: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def _hyp_series(x, alpha, weight):
    """``sum_j (alpha+1)_j / j! * x^j * weight(j)`` for ``0 <= x <= 2/3``."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.zeros_like(x)
    xmax = float(x.max())
    if xmax <= 0.0:
        nterms = 1
    else:
        nterms = min(400, int(math.ceil(-40.0 / math.log(xmax))) + 8)
    term = np.ones_like(x)
    total = term * weight(0)
    for j in range(1, nterms):
        term = term * ((alpha + j) / j) * x
        total = total + term * weight(j)
    return total


def _history_geometry(mesh: GradedMesh, params: StepParams):
    n, theta = params.n, params.theta
    nodes, steps = mesh.nodes, mesh.steps
    tau_n = float(steps[n - 1])
    # u0 = t_super - t_k and u1 = t_super - t_{k-1}, k = 1..n-1
    head = (1.0 - theta) * tau_n
    u0 = head + (nodes[n - 1] - nodes[1:n])
    tau_k = steps[: n - 1]
    u1 = u0 + tau_k
    return tau_n, tau_k, u0, u1


def l21_coefficients(mesh: GradedMesh, params: StepParams) -> CoeffRow:
    """Closed-form L2-1sigma weights ``a``, ``b``, ``c`` for step ``params.n``."""
    n, theta, al = params.n, params.theta, params.alpha_star
    g1 = gamma(1.0 - al)
    g2 = (1.0 - al) * g1
    tau_n, tau_k, u0, u1 = _history_geometry(mesh, params)

    a = np.empty(n)
    b = np.zeros(n)
    a[0] = ((1.0 - theta) * tau_n) ** (1.0 - al) / (tau_n * g2)
    if n >= 2 and al == 0.0:
        # constant integrand: history a = 1 and b = 0 exactly
        a[1:] = 1.0
    elif n >= 2:
        x = tau_k / u1
        beta = 1.0 - al
        # (u1^beta - u0^beta) / tau_k without cancellation
        a_hist = u1 ** (-al) * (-np.expm1(beta * np.log1p(-x))) / x / g2
        tau_next = mesh.steps[1:n]
        s_b = _hyp_series(x, al, lambda j: 1.0 / ((j + 2) * (j + 3)))
        b_hist = al * tau_k**2 / (g1 * (tau_k + tau_next)) * u1 ** (-al - 1.0) * s_b
        # index k = 1..n-1 maps to j = n-k = n-1..1
        a[1:] = a_hist[::-1]
        b[1:] = b_hist[::-1]

    c = np.empty(n)
    if n == 1:
        c[0] = a[0]
    else:
        rho = mesh.ratios
        c[0] = a[0] + rho[n - 2] * b[1]
        for k in range(2, n):
            j = n - k
            c[j] = a[j] + rho[k - 2] * b[j + 1] - b[j]
        c[n - 1] = a[n - 1] - b[n - 1]
    return CoeffRow(n=n, alpha_star=al, theta=theta, a=_readonly(a), b=_readonly(b), c=_readonly(c))


def coefficient_rows(mesh: GradedMesh, schedule: Sequence[StepParams]) -> list:
    return [l21_coefficients(mesh, p) for p in schedule]


def ij_quantities(mesh: GradedMesh, params: StepParams, k: int):
    """Auxiliary integrals ``(I_{n-k}, J_{n-k})`` for ``1 <= k <= n-1``.

    ``I`` weights ``(t_k - s)/tau_k`` and ``J`` weights ``(s - t_{k-1})/tau_k``
    against ``alpha^* (t_super - s)^{-alpha^*-1} / Gamma(1 - alpha^*)``.
    """
    n = params.n
    if not 1 <= k <= n - 1:
        raise InvalidParameter(f"k={k} outside 1..{n - 1}")
    I, J = ij_arrays(mesh, params)
    return float(I[n - k]), float(J[n - k])


def ij_arrays(mesh: GradedMesh, params: StepParams):
    """Vectorised :func:`ij_quantities`; entry ``j`` holds ``I_j``/``J_j`` (index 0 unused)."""
    n, al = params.n, params.alpha_star
    I = np.zeros(n)
    J = np.zeros(n)
    if n < 2:
        return I, J
    g1 = gamma(1.0 - al)
    _, tau_k, _, u1 = _history_geometry(mesh, params)
    x = tau_k / u1
    pref = al * tau_k / g1 * u1 ** (-al - 1.0)
    I[1:] = (pref * _hyp_series(x, al, lambda j: 1.0 / ((j + 1) * (j + 2))))[::-1]
    J[1:] = (pref * _hyp_series(x, al, lambda j: 1.0 / (j + 2)))[::-1]
    return I, J


def apply_l21sigma(row: CoeffRow, history) -> np.ndarray:
    """``sum_{k=1}^n c_{n-k,n} (v^k - v^{k-1})``, accumulated in ascending ``k``.

    ``history`` holds ``v^0..v^n`` along its first axis; trailing axes are
    treated componentwise.
    """
    v = np.asarray(history, dtype=float)
    n = row.n
    if v.shape[0] != n + 1:
        raise InvalidParameter(f"history has {v.shape[0]} entries, expected {n + 1}")
    acc = np.zeros(v.shape[1:])
    c = row.c
    for k in range(1, n + 1):
        acc = acc + c[n - k] * (v[k] - v[k - 1])
    return acc if acc.ndim else float(acc)


@dataclass(frozen=True)
class KernelRow:
    """Complementary kernels ``P_j^{(n)}``, ``0 <= j <= n-1``."""

    n: int
    P: np.ndarray


def _lower_system(rows: Sequence[CoeffRow], n: int) -> np.ndarray:
    # L[j, i] = c_{j-i, n-i}: row j encodes the identity for m = n - j
    L = np.zeros((n, n))
    jj, ii = np.tril_indices(n)
    cmat = np.zeros((n + 1, n))
    for row in rows[:n]:
        cmat[row.n, : row.n] = row.c
    L[jj, ii] = cmat[n - ii, jj - ii]
    return L


def complementary_kernels(rows: Sequence[CoeffRow], n: Optional[int] = None, tol: float = 1e-8) -> KernelRow:
    """Solve ``sum_{k=m}^n P_{n-k}^{(n)} c_{k-m,k} = 1`` (all ``1 <= m <= n``).

    ``rows[k-1]`` must be the coefficient row of step ``k``.
    """
    if n is None:
        n = len(rows)
    if len(rows) < n or any(rows[k].n != k + 1 for k in range(n)):
        raise InvalidParameter("coefficient rows must cover steps 1..n in order")
    L = _lower_system(rows, n)
    try:
        P = solve_triangular(L, np.ones(n), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IdentityViolation(f"kernel system is singular at n={n}: {exc}") from None
    resid = np.abs(L @ P - 1.0).max()
    if not resid <= tol:
        raise IdentityViolation(f"kernel identity residual {resid:.3e} at n={n}")
    return KernelRow(n=n, P=_readonly(P))


def kernel_table(rows: Sequence[CoeffRow], tol: float = 1e-8) -> list:
    """:class:`KernelRow` for every ``n = 1..len(rows)``."""
    return [complementary_kernels(rows, n, tol) for n in range(1, len(rows) + 1)]


def caputo_power_reference(delta: float, alpha: float, t):
    """Exact Caputo derivative of order ``alpha`` of ``t**delta`` at ``t``."""
    return gamma(1.0 + delta) / gamma(1.0 + delta - alpha) * np.power(t, delta - alpha)
