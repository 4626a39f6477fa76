"""Numerical audit of the coefficient, kernel and energy inequalities.

For every (exponent family, grading ``r``, ``N``, policy) combination the
audit builds the step schedule, the coefficient rows and the complementary
kernels, then evaluates each inequality for every admissible ``(n, k)``.
Failures are report content, not exceptions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.special import gamma

from .cases import ex1_exponent, ex2_exponent
from .errors import ConditionViolated, NewtonDiverged
from .temporal import (
    GradedMesh,
    SuperconvPolicy,
    VariableExponent,
    build_graded_mesh,
    ij_arrays,
    kernel_table,
    l21_coefficients,
    select_step_params,
)

__all__ = ["SweepSpec", "Violation", "AuditReport", "default_sweep", "property_audit"]

# relative slack for inequalities that hold with equality in degenerate cases
RTOL = 1e-12


@dataclass(frozen=True)
class SweepSpec:
    families: Tuple[Tuple[str, VariableExponent], ...]
    r_values: Tuple[float, ...]
    N_values: Tuple[int, ...]
    policies: Tuple[SuperconvPolicy, ...]
    energy_samples: int = 4
    seed: int = 0


def default_sweep(seed: int = 0) -> SweepSpec:
    fams = [(f"ex1(delta={d})", ex1_exponent(d)) for d in (0.2, 0.4, 0.6, 0.8)]
    fams.append(("ex2", ex2_exponent()))
    fams += [(f"const({a})", VariableExponent.constant(a)) for a in (0.0, 0.3, 0.7)]
    policies = (
        SuperconvPolicy.interval_min(),
        SuperconvPolicy.offset(0.5),
        SuperconvPolicy.offset(0.6),
        SuperconvPolicy.offset(0.8),
        SuperconvPolicy.offset_frac(0.25),
        SuperconvPolicy.offset_frac(0.5),
        SuperconvPolicy.newton(),
        SuperconvPolicy.at_left(),
        SuperconvPolicy.at_right(),
    )
    return SweepSpec(tuple(fams), (1.0, 2.0, 3.0, 4.0), (8, 16, 32, 64), policies, seed=seed)


@dataclass(frozen=True)
class Violation:
    check: str
    family: str
    r: float
    N: int
    policy: str
    n: int
    k: int
    lhs: float
    rhs: float

    def __str__(self):
        return (
            f"{self.check}: {self.family} r={self.r:g} N={self.N} policy='{self.policy}' "
            f"n={self.n} k={self.k}: lhs={self.lhs:.6e} < rhs={self.rhs:.6e}"
        )


@dataclass
class AuditReport:
    tuples: int = 0  # (mesh, exponent, policy, n, k) combinations visited
    checks: int = 0  # scalar inequalities evaluated
    violations: List[Violation] = field(default_factory=list)
    observations: List[Violation] = field(default_factory=list)  # audited, not asserted
    skipped: List[str] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        head = (
            f"audit: {self.tuples} tuples, {self.checks} checks, "
            f"{len(self.violations)} violations, {len(self.observations)} observations, "
            f"{len(self.skipped)} skipped runs, {self.elapsed:.1f} s"
        )
        lines = [head] + [f"  VIOLATION {v}" for v in self.violations[:50]]
        lines += [f"  note {v}" for v in self.observations[:10]]
        lines += [f"  skipped {s}" for s in self.skipped[:20]]
        return "\n".join(lines)


class _Recorder:
    def __init__(self, report, ctx):
        self.report, self.ctx = report, ctx

    def ge(self, check, n, lhs, rhs, ks, observe=False, scale=None):
        """Record ``lhs >= rhs`` elementwise (``ks`` labels the entries).

        ``scale`` sets the roundoff allowance when ``lhs`` is itself a
        difference of larger quantities; it defaults to ``max(|lhs|, |rhs|)``.
        """
        lhs = np.atleast_1d(np.asarray(lhs, float))
        rhs = np.broadcast_to(np.asarray(rhs, float), lhs.shape)
        ks = np.broadcast_to(np.asarray(ks), lhs.shape)
        self.report.checks += lhs.size
        if scale is None:
            scale = np.maximum(np.abs(lhs), np.abs(rhs))
        bad = ~(lhs >= rhs - RTOL * scale)
        if np.any(bad):
            sink = self.report.observations if observe else self.report.violations
            for i in np.flatnonzero(bad):
                sink.append(Violation(check, *self.ctx, n, int(ks[i]), float(lhs[i]), float(rhs[i])))


def _int_kernel(mesh: GradedMesh, n: int, al: float) -> np.ndarray:
    """``int_{t_{k-1}}^{t_k} (t_n - s)^{-al} ds / Gamma(1-al)`` for ``k = 1..n``."""
    t, tau = mesh.nodes, mesh.steps[:n]
    w = t[n] - t[:n]
    x = tau / w
    with np.errstate(divide="ignore"):
        frac = -np.expm1((1.0 - al) * np.log1p(-x))
    return w ** (1.0 - al) * frac / gamma(2.0 - al)


def _audit_run(rep: _Recorder, alpha: VariableExponent, mesh: GradedMesh, policy, rng, samples):
    N, r = mesh.N, mesh.r
    a_sup = alpha.alpha_sup
    params = [select_step_params(alpha, mesh, n, policy) for n in range(1, N + 1)]
    rows = [l21_coefficients(mesh, p) for p in params]
    kernels = kernel_table(rows)
    rho = mesh.ratios
    lN = 1.0 / math.log(N)
    gmax = np.maximum.accumulate([gamma(1.0 + lN - p.alpha_star) for p in params]) / gamma(1.0 + lN)
    t = mesh.nodes

    for p, row, ker in zip(params, rows, kernels):
        n, al, th = p.n, p.alpha_star, p.theta
        a, b, c = row.a, row.b, row.c
        rep.report.tuples += n
        ge = rep.ge

        # step parameters
        ts = np.linspace(t[n - 1], t[n], 65)
        vals = alpha(ts)
        ge("alpha_n in interval range (lower)", n, p.alpha_n, vals.min() - 1e-9, 0)
        ge("alpha_n in interval range (upper)", n, vals.max() + 1e-9, p.alpha_n, 0)
        ge("condition alpha* >= alpha_n", n, al + policy.slack, p.alpha_n, 0)
        ge("theta in [0, 1/2)", n, 0.5 - 1e-15, th, 0)

        g = gamma(1.0 - al)
        ge("Gamma(1-alpha*) lower", n, g, 0.6, 0)
        ge("Gamma(1-alpha*) upper", n, 2.0 / (1.0 - a_sup), g, 0)

        ge("a > 0", n, a, np.finfo(float).tiny, np.arange(n, 0, -1))
        ge("c > 0", n, c, np.finfo(float).tiny, np.arange(n, 0, -1))

        I, J = ij_arrays(mesh, p)
        if n >= 2:
            k = np.arange(1, n)
            j = n - k
            floor = np.finfo(float).tiny if al > 0 else 0.0
            ge("b > 0", n, b[j], floor, k)
            ge("b <= a/4", n, a[j] / 4.0, b[j], k)
            ge("a lower bound", n, a[j], (t[n] - t[k - 1]) ** (-al) / g, k)
            rk = rho[k - 1]
            ge("I >= (rho+1)/rho b", n, I[j], (rk + 1.0) / rk * b[j], k)
            ge("J >= I", n, J[j], I[j], k)
            if n >= 3:
                k2 = np.arange(1, n - 1)
                j2 = n - k2
                ge("rho I_{n-k-1} >= I_{n-k}", n, rho[k2 - 1] * I[j2 - 1], I[j2], k2)
                diff = a[j2 - 1] - a[j2]
                rhs = np.where(
                    k2 == 1,
                    b[n - 2] + 1.5 * I[n - 1],
                    b[np.maximum(j2 - 1, 0)] + rho[np.maximum(k2 - 2, 0)] * b[np.minimum(j2 + 1, n - 1)] + I[j2],
                )
                ge("a difference (k <= n-2)", n, diff, rhs, k2, scale=a[j2 - 1])
            if al >= th:
                rhs = I[1] if n == 2 else rho[n - 3] * b[2] + 0.5 * I[1]
                ge("a difference (k = n-1)", n, a[0] - a[1], rhs, n - 1, scale=a[0])
            # positivity holds with equality when alpha* = 0 (c0 = c1 = 1, theta = 0)
            lhs = (1.0 - 2.0 * th) / (1.0 - th) * c[0] - c[1]
            ge("c0 weighted gap", n, lhs, np.finfo(float).tiny if al > 0 else 0.0, 0, scale=c[0])
            ge("c monotone", n, c[:-1], c[1:], np.arange(n, 1, -1))

        ge("c0 upper bound", n, 9.0 / 8.0 * mesh.steps[n - 1] ** (-al) / gamma(2.0 - al), c[0], n)
        lower = _int_kernel(mesh, n, al) / ((1.0 + 3.0**r) * mesh.steps[:n])
        ge("c lower bound", n, c[::-1], lower, np.arange(1, n + 1))

        # scalar energy inequality on random sequences
        V = rng.standard_normal((samples, n + 1))
        dV = np.diff(V, axis=1)
        D = dV @ c[::-1]
        vth = th * V[:, n - 1] + (1.0 - th) * V[:, n]
        energy = np.diff(V**2, axis=1) @ c[::-1]
        ge("energy inequality", n, 2.0 * D * vth, energy, np.full(samples, n))

        # complementary kernels
        P = ker.P
        ge("P >= 0", n, P, 0.0, np.arange(n), observe=True, scale=np.abs(P).max())
        if N >= 2:
            astars = np.array([q.alpha_star for q in params[:n]])
            jj = np.arange(1, n + 1)
            s1 = P[n - jj] @ t[jj] ** (-astars)
            bound = (1.0 + 2.0**r) * math.e**r * gmax[n - 1]
            ge("kernel sum weighted by t^-alpha*", n, bound, s1, n)
            ge("kernel sum", n, bound * t[n] ** a_sup, P.sum(), n)
            # same bound with t_n^{min_j alpha_j^*}; t_j^{-alpha_j^*} >= t_n^{-alpha_sup}
            # needs t_n >= 1, this form needs only t_n <= 1
            if t[n] <= 1.0:
                ge("kernel sum (min-exponent form)", n, bound * t[n] ** astars.min(), P.sum(), n)


def property_audit(sweep: SweepSpec | None = None) -> AuditReport:
    """Run every coefficient/kernel inequality over ``sweep``.

    Policies that are inadmissible for a family (the condition check raises)
    or whose Newton iteration diverges are listed under ``skipped``.
    """
    sweep = sweep or default_sweep()
    rng = np.random.default_rng(sweep.seed)
    report = AuditReport()
    start = time.perf_counter()
    combos = [(f, r, N, p) for f in sweep.families for r in sweep.r_values for N in sweep.N_values for p in sweep.policies]
    # --seed only reorders the sweep; results are order independent
    if sweep.seed:
        rng.shuffle(combos)
    for (label, alpha), r, N, policy in combos:
        mesh = build_graded_mesh(alpha.T, N, r)
        rec = _Recorder(report, (label, r, N, str(policy)))
        try:
            _audit_run(rec, alpha, mesh, policy, rng, sweep.energy_samples)
        except (ConditionViolated, NewtonDiverged) as exc:
            report.skipped.append(f"{label} r={r:g} N={N} policy='{policy}': {exc}")
    report.elapsed = time.perf_counter() - start
    return report

