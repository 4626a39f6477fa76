"""Symmetric quadrature rules on the reference triangle ``(0,0), (1,0), (0,1)``.

Weights sum to the reference area ``1/2``. Degrees 1, 2, 4 and 6 use the
classical symmetric (Strang-Fix / Dunavant) rules; any other degree falls
back to a collapsed Gauss-Jacobi product rule, exact to the requested degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import InvalidParameter

__all__ = ["TriangleRule", "triangle_rule"]


@dataclass(frozen=True)
class TriangleRule:
    degree: int
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sum 1/2

    def __len__(self):
        return len(self.weights)


def _orbit3(a, w):
    # points of the form (a, a, 1-2a) in barycentrics
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b), (b, a), (a, c), (c, a), (b, c), (c, b)]
    return pts, [w] * 6


def _symmetric(orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts), 0.5 * np.array(wts)


def _collapsed(degree):
    n = degree // 2 + 1
    # x in [0,1] with weight (1-x) from Gauss-Jacobi(1,0); y via Gauss-Legendre
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (xj + 1.0)
    wx = wj / 4.0
    y = 0.5 * (xl + 1.0)
    wy = wl / 2.0
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(wx, wy)
    pts = np.column_stack([X.ravel(), ((1.0 - X) * Y).ravel()])
    return pts, W.ravel()


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> TriangleRule:
    """Quadrature rule exact for polynomials of total degree ``<= degree``."""
    if degree < 1:
        raise InvalidParameter(f"quadrature degree must be >= 1, got {degree}")
    if degree == 1:
        pts, wts = np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5])
    elif degree == 2:
        pts, wts = _symmetric([_orbit3(1.0 / 6.0, 1.0 / 3.0)])
    elif degree <= 4:
        degree = 4
        pts, wts = _symmetric([
            _orbit3(0.445948490915965, 0.223381589678011),
            _orbit3(0.091576213509771, 0.109951743655322),
        ])
    elif degree <= 6:
        degree = 6
        pts, wts = _symmetric([
            _orbit3(0.249286745170910, 0.116786275726379),
            _orbit3(0.063089014491502, 0.050844906370207),
            _orbit6(0.310352451033784, 0.053145049844817, 0.082851075618374),
        ])
    else:
        pts, wts = _collapsed(degree)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return TriangleRule(degree, pts, wts)
