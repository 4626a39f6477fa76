"""P1/P2 Lagrange finite elements on uniform triangulations of the unit square.

Every grid square ``[x_i, x_{i+1}] x [y_j, y_{j+1}]`` is split along the
diagonal from its lower-left to its upper-right corner. Degrees of freedom of
the degree-``p`` space sit on the uniform grid of spacing ``h/p`` and are
numbered ``I + J (pM + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameter
from .quadrature import triangle_rule
from .sparse import cg_solve, csr_from_triplets

__all__ = [
    "TriMesh",
    "FESpace",
    "DiffusionTensor",
    "FEFunction",
    "build_unit_square_mesh",
    "build_fe_space",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_functional",
    "assemble_gradient_functional",
    "elliptic_projection",
    "l2_error",
    "l2_norm",
    "interpolate",
    "reference_basis",
]


@dataclass(frozen=True)
class TriMesh:
    M: int
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counter-clockwise

    @property
    def h(self) -> float:
        return 1.0 / self.M

    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_unit_square_mesh(M: int) -> TriMesh:
    if not (isinstance(M, (int, np.integer)) and M >= 1):
        raise InvalidParameter(f"M must be a positive integer, got {M!r}")
    g = np.linspace(0.0, 1.0, M + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(M), np.arange(M), indexing="xy")
    v00 = (i + j * (M + 1)).ravel()
    v10, v01 = v00 + 1, v00 + M + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    tris = np.empty((2 * M * M, 3), dtype=np.int64)
    tris[0::2], tris[1::2] = lower, upper
    return TriMesh(int(M), verts, tris)


def reference_basis(p: int, pts: np.ndarray):
    """Values ``(nq, nb)`` and reference gradients ``(nq, nb, 2)`` at ``pts``.

    P2 ordering: three vertices, then midpoints of edges 01, 12, 20.
    """
    xi, eta = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    one = np.ones_like(xi)
    zero = np.zeros_like(xi)
    # gradients of barycentrics in (xi, eta)
    d0, d1, d2 = (-one, -one), (one, zero), (zero, one)
    if p == 1:
        vals = np.column_stack([l0, l1, l2])
        grads = np.stack([np.column_stack(d) for d in (d0, d1, d2)], axis=1)
        return vals, grads
    if p != 2:
        raise InvalidParameter(f"unsupported degree p={p}")
    lam = (l0, l1, l2)
    dl = (d0, d1, d2)
    vals, grads = [], []
    for a in range(3):
        vals.append(lam[a] * (2 * lam[a] - 1))
        grads.append(np.column_stack([(4 * lam[a] - 1) * dl[a][c] for c in range(2)]))
    for a, b in ((0, 1), (1, 2), (2, 0)):
        vals.append(4 * lam[a] * lam[b])
        grads.append(np.column_stack([4 * (dl[a][c] * lam[b] + lam[a] * dl[b][c]) for c in range(2)]))
    return np.column_stack(vals), np.stack(grads, axis=1)


@dataclass(frozen=True)
class FESpace:
    mesh: TriMesh
    degree: int
    coords: np.ndarray  # (ndof, 2)
    cells: np.ndarray  # (nt, nb) local-to-global dof map
    boundary: np.ndarray  # (ndof,) bool
    interior: np.ndarray  # indices of interior dofs

    @property
    def ndof(self) -> int:
        return self.coords.shape[0]

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    def geometry(self):
        """Per-cell origin, Jacobian ``B`` (nt,2,2), ``|det B|`` and ``B^{-T}``."""
        return self._geometry

    @cached_property
    def _geometry(self):
        v = self.mesh.vertices[self.mesh.triangles]
        B = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        inv_t = np.empty_like(B)
        inv_t[:, 0, 0] = B[:, 1, 1] / det
        inv_t[:, 0, 1] = -B[:, 1, 0] / det
        inv_t[:, 1, 0] = -B[:, 0, 1] / det
        inv_t[:, 1, 1] = B[:, 0, 0] / det
        return v[:, 0], B, np.abs(det), inv_t

    def map_points(self, ref_pts: np.ndarray) -> np.ndarray:
        """Physical coordinates ``(nt, nq, 2)`` of reference points."""
        x0, B, _, _ = self.geometry()
        return x0[:, None, :] + np.einsum("eij,qj->eqi", B, ref_pts)

    def zero(self) -> "FEFunction":
        return FEFunction(self, np.zeros(self.ndof))

    def extend(self, interior_values) -> np.ndarray:
        full = np.zeros(self.ndof)
        full[self.interior] = interior_values
        return full


def build_fe_space(mesh: TriMesh, p: int) -> FESpace:
    if p not in (1, 2):
        raise InvalidParameter(f"unsupported polynomial degree p={p}; use 1 or 2")
    M = mesh.M
    n1 = p * M + 1
    g = np.linspace(0.0, 1.0, n1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    tri = mesh.triangles
    if p == 1:
        cells = tri.copy()
    else:
        # vertex (i, j) of the coarse grid is fine-grid point (2i, 2j)
        vi, vj = tri % (M + 1), tri // (M + 1)
        fi, fj = 2 * vi, 2 * vj
        corner = fi + fj * n1
        mids = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            mi = (fi[:, a] + fi[:, b]) // 2
            mj = (fj[:, a] + fj[:, b]) // 2
            mids.append(mi + mj * n1)
        cells = np.column_stack([corner, np.column_stack(mids)])
    I = np.arange(n1 * n1) % n1
    J = np.arange(n1 * n1) // n1
    boundary = (I == 0) | (J == 0) | (I == n1 - 1) | (J == n1 - 1)
    interior = np.flatnonzero(~boundary)
    for a in (coords, cells, boundary, interior):
        a.setflags(write=False)
    return FESpace(mesh, p, coords, cells, boundary, interior)


@dataclass(frozen=True)
class DiffusionTensor:
    """Symmetric ``2x2`` tensor field ``K(x, y)``.

    ``func`` maps arrays ``x, y`` of equal shape to an array of shape
    ``x.shape + (2, 2)``. Use :meth:`scalar` for ``K = kappa I``.
    """

    func: Callable
    k_min: Optional[float] = None
    k_max: Optional[float] = None
    constant: Optional[float] = None

    @classmethod
    def scalar(cls, kappa: float) -> "DiffusionTensor":
        kappa = float(kappa)
        if not kappa > 0:
            raise InvalidParameter("diffusion coefficient must be positive")

        def func(x, y):
            out = np.zeros(np.shape(x) + (2, 2))
            out[..., 0, 0] = kappa
            out[..., 1, 1] = kappa
            return out

        return cls(func, kappa, kappa, kappa)

    def __call__(self, x, y):
        return self.func(np.asarray(x, float), np.asarray(y, float))

    def check_ellipticity(self, K: np.ndarray):
        """Validate symmetry and ``K_* <= xi^T K xi <= K^*`` on sampled tensors."""
        if not np.allclose(K[..., 0, 1], K[..., 1, 0], rtol=1e-12, atol=1e-14):
            raise InvalidParameter("diffusion tensor is not symmetric")
        ev = np.linalg.eigvalsh(K.reshape(-1, 2, 2))
        lo = self.k_min if self.k_min is not None else 0.0
        if ev.min() <= 0 or ev.min() < lo * (1 - 1e-12):
            raise InvalidParameter(f"diffusion tensor not uniformly elliptic (min eigenvalue {ev.min():.3e})")
        if self.k_max is not None and ev.max() > self.k_max * (1 + 1e-12):
            raise InvalidParameter(f"diffusion tensor exceeds K^*={self.k_max}")


@dataclass
class FEFunction:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndof,):
            raise InvalidParameter(f"coefficient vector has shape {self.coeffs.shape}, expected ({self.space.ndof},)")
        if np.any(self.coeffs[self.space.boundary] != 0.0):
            raise InvalidParameter("boundary coefficients must be exactly zero")

    def evaluate_ref(self, ref_pts):
        vals, _ = reference_basis(self.space.degree, ref_pts)
        return self.coeffs[self.space.cells] @ vals.T  # (nt, nq)


def _element_triplets(space: FESpace, local: np.ndarray):
    nb = space.cells.shape[1]
    rows = np.repeat(space.cells, nb, axis=1)
    cols = np.tile(space.cells, (1, nb))
    return csr_from_triplets(rows, cols, local.reshape(local.shape[0], -1), space.ndof, space.ndof)


def assemble_mass(space: FESpace, quad_degree: Optional[int] = None) -> sp.csr_matrix:
    """Consistent mass matrix ``M_ij = (phi_i, phi_j)`` on all dofs."""
    if quad_degree is None:
        quad_degree = 2 * space.degree
    if quad_degree < 2 * space.degree:
        raise InvalidParameter(f"mass matrix needs quadrature degree >= {2 * space.degree}")
    rule = triangle_rule(quad_degree)
    vals, _ = reference_basis(space.degree, rule.points)
    _, _, det, _ = space.geometry()
    ref = np.einsum("q,qa,qb->ab", rule.weights, vals, vals)
    local = det[:, None, None] * ref[None]
    return _element_triplets(space, local)


def _physical_gradients(space: FESpace, ref_grads):
    _, _, _, inv_t = space.geometry()
    # grad phi = B^{-T} grad_ref phi
    return np.einsum("eij,qbj->eqbi", inv_t, ref_grads)


def assemble_stiffness(space: FESpace, K: DiffusionTensor, quad_degree: int = 4) -> sp.csr_matrix:
    """Stiffness matrix ``A_ij = (K grad phi_i, grad phi_j)`` on all dofs."""
    rule = triangle_rule(quad_degree)
    _, ref_grads = reference_basis(space.degree, rule.points)
    _, _, det, _ = space.geometry()
    grads = _physical_gradients(space, ref_grads)  # (nt, nq, nb, 2)
    if K.constant is not None:
        wq = rule.weights
        local = K.constant * np.einsum("q,e,eqai,eqbi->eab", wq, det, grads, grads)
    else:
        xq = space.map_points(rule.points)
        Kq = K(xq[..., 0], xq[..., 1])
        K.check_ellipticity(Kq)
        local = np.einsum("q,e,eqij,eqaj,eqbi->eab", rule.weights, det, Kq, grads, grads)
    return _element_triplets(space, local)


def assemble_functional(space: FESpace, g: Callable, quad_degree: int = 6) -> np.ndarray:
    """Load vector ``F_i = (g, phi_i)`` with ``g(x, y)`` vectorised."""
    rule = triangle_rule(quad_degree)
    vals, _ = reference_basis(space.degree, rule.points)
    _, _, det, _ = space.geometry()
    xq = space.map_points(rule.points)
    gq = np.broadcast_to(np.asarray(g(xq[..., 0], xq[..., 1]), dtype=float), xq.shape[:2])
    local = np.einsum("q,e,eq,qa->ea", rule.weights, det, gq, vals)
    return np.bincount(space.cells.ravel(), weights=local.ravel(), minlength=space.ndof)


def assemble_gradient_functional(space: FESpace, K: DiffusionTensor, grad: Callable, quad_degree: int = 6) -> np.ndarray:
    """``F_i = (K grad v, grad phi_i)`` for an analytic gradient ``grad(x, y) -> (gx, gy)``."""
    rule = triangle_rule(quad_degree)
    _, ref_grads = reference_basis(space.degree, rule.points)
    _, _, det, _ = space.geometry()
    xq = space.map_points(rule.points)
    gx, gy = grad(xq[..., 0], xq[..., 1])
    gv = np.stack(np.broadcast_arrays(np.asarray(gx, float), np.asarray(gy, float)), axis=-1)
    if K.constant is not None:
        kg = K.constant * gv
    else:
        kg = np.einsum("eqij,eqj->eqi", K(xq[..., 0], xq[..., 1]), gv)
    grads = _physical_gradients(space, ref_grads)
    local = np.einsum("q,e,eqi,eqai->ea", rule.weights, det, kg, grads)
    return np.bincount(space.cells.ravel(), weights=local.ravel(), minlength=space.ndof)


def elliptic_projection(
    space: FESpace,
    stiffness,
    K: DiffusionTensor,
    grad: Callable,
    quad_degree: int = 6,
    tol: float = 1e-11,
    return_report: bool = False,
):
    """Ritz projection: ``(K grad(v - P v), grad w) = 0`` for all ``w`` in the space.

    ``stiffness`` may be the full matrix or its interior block; ``grad`` is the
    analytic gradient of ``v`` (which must vanish on the boundary).
    """
    rhs = assemble_gradient_functional(space, K, grad, quad_degree)[space.interior]
    A = stiffness
    if A.shape[0] != space.n_interior:
        A = A[space.interior][:, space.interior]
    if not np.any(rhs):
        from .sparse import CGReport

        fe, report = space.zero(), CGReport(0, 0.0, True)
    else:
        x, report = cg_solve(A, rhs, tol=tol)
        fe = FEFunction(space, space.extend(x))
    return (fe, report) if return_report else fe


def interpolate(space: FESpace, g: Callable) -> FEFunction:
    """Nodal interpolant; boundary values are forced to zero."""
    vals = np.asarray(g(space.coords[:, 0], space.coords[:, 1]), dtype=float) * np.ones(space.ndof)
    vals[space.boundary] = 0.0
    return FEFunction(space, vals)


def _cell_values(space: FESpace, coeffs, rule):
    vals, _ = reference_basis(space.degree, rule.points)
    return np.asarray(coeffs)[space.cells] @ vals.T


def l2_error(space: FESpace, fe, exact: Optional[Callable], quad_degree: int = 6) -> float:
    """``|| fe - exact ||_{L2}`` by elementwise quadrature.

    ``fe`` is an :class:`FEFunction` or a full coefficient vector; ``exact`` is
    a vectorised ``(x, y) -> value`` or ``None`` for zero.
    """
    if quad_degree < 6:
        raise InvalidParameter("error norms need quadrature degree >= 6")
    coeffs = fe.coeffs if isinstance(fe, FEFunction) else fe
    rule = triangle_rule(quad_degree)
    _, _, det, _ = space.geometry()
    uh = _cell_values(space, coeffs, rule)
    if exact is not None:
        xq = space.map_points(rule.points)
        uh = uh - exact(xq[..., 0], xq[..., 1])
    return float(np.sqrt(np.einsum("q,e,eq->", rule.weights, det, uh * uh)))


def l2_norm(space: FESpace, g: Callable, quad_degree: int = 6) -> float:
    """``|| g ||_{L2}`` of an analytic field by the same quadrature."""
    rule = triangle_rule(quad_degree)
    _, _, det, _ = space.geometry()
    xq = space.map_points(rule.points)
    gq = np.broadcast_to(np.asarray(g(xq[..., 0], xq[..., 1]), float), xq.shape[:2])
    return float(np.sqrt(np.einsum("q,e,eq->", rule.weights, det, gq * gq)))
