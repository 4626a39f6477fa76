"""Built-in manufactured problems with known smooth-in-space solutions.

``ex1``  increasing exponent, ``u = (1 + t^delta) sin(pi x) sin(pi y)``, ``K = I``.
``ex2``  decreasing exponent ``0.9 exp(-t)``, ``u = (1 + t^delta) sin(2 pi x) sin(2 pi y)``,
         ``K = 0.001 I``.
``ex3``  mobile-immobile model, ``u = t^(3 - alpha0) sin(2 pi x) sin(2 pi y)``,
         ``k = 1``, ``K = 0.001 I``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma

from .errors import InvalidParameter
from .fem2d import DiffusionTensor
from .solver import ProblemSpec
from .temporal import VariableExponent

__all__ = ["builtin_case", "ex1_exponent", "ex2_exponent", "ex3_exponent", "constant_case", "CASES"]

CASES = ("ex1", "ex2", "ex3", "constant")


def _bump(t):
    # 1 - t - sin(2 pi (1 - t)) / (2 pi): increases from 0 at t = 1 to 1 at t = 0
    t = np.asarray(t, float)
    return 1.0 - t - np.sin(2.0 * np.pi * (1.0 - t)) / (2.0 * np.pi)


def _bump_slope(t):
    return np.cos(2.0 * np.pi * (1.0 - np.asarray(t, float))) - 1.0


def ex1_exponent(delta: float, T: float = 1.0) -> VariableExponent:
    """``alpha(t) = 0.9 + (delta - 0.9) * bump(t)``; ``alpha(0) = delta``, ``alpha(1) = 0.9``."""
    mono = "increasing" if delta <= 0.9 else "decreasing"
    return VariableExponent(
        lambda t: 0.9 + (delta - 0.9) * _bump(t),
        alpha_sup=max(0.9, delta), T=T, monotonicity=mono,
        derivative=lambda t: (delta - 0.9) * _bump_slope(t),
    )


def ex2_exponent(T: float = 1.0) -> VariableExponent:
    return VariableExponent(lambda t: 0.9 * np.exp(-np.asarray(t, float)), alpha_sup=0.9, T=T,
                            monotonicity="decreasing", derivative=lambda t: -0.9 * np.exp(-np.asarray(t, float)))


def ex3_exponent(alpha0: float, alphaT: float, T: float = 1.0) -> VariableExponent:
    """``alpha(t) = alphaT + (alpha0 - alphaT) * bump(t)``."""
    mono = "increasing" if alpha0 <= alphaT else "decreasing"
    return VariableExponent(
        lambda t: alphaT + (alpha0 - alphaT) * _bump(t),
        alpha_sup=max(alpha0, alphaT), T=T, monotonicity=mono,
        derivative=lambda t: (alpha0 - alphaT) * _bump_slope(t),
    )


def _separable(m, amp, damp, lap_coeff, caputo):
    """Problem pieces for ``u = amp(t) s(x) s(y)`` with ``s = sin(m pi .)``.

    ``lap_coeff`` is ``kappa * 2 (m pi)^2`` so that ``-div(K grad u) = lap_coeff amp(t) s s``.
    ``caputo(t)`` is the time-fractional term of the source divided by ``s s``.
    """
    w = m * np.pi

    def shape(x, y):
        return np.sin(w * x) * np.sin(w * y)

    def exact(x, y, t):
        return amp(t) * shape(x, y)

    def source(x, y, t):
        return (caputo(t) + damp(t) + lap_coeff * amp(t)) * shape(x, y)

    def reduced(x, y, t):
        return (damp(t) + lap_coeff * amp(t)) * shape(x, y)

    def u0(x, y):
        return amp(0.0) * shape(x, y)

    def u0_grad(x, y):
        a = amp(0.0)
        return (a * w * np.cos(w * x) * np.sin(w * y), a * w * np.sin(w * x) * np.cos(w * y))

    return exact, source, reduced, u0, u0_grad


def builtin_case(name: str, delta: float = 0.6, alpha0: float = 0.4, alphaT: float = 0.6) -> ProblemSpec:
    """Return the manufactured problem ``name`` on ``[0, 1]`` in time.

    ``delta`` is the regularity index for ``ex1``/``ex2``; ``alpha0``/``alphaT``
    are the end-point exponents for ``ex3``.
    """
    if name == "ex1":
        _check_delta(delta)
        if delta >= 0.9:
            raise InvalidParameter(f"ex1 needs delta in (0, 0.9), got {delta}")
        alpha = ex1_exponent(delta)
        amp = lambda t: 1.0 + np.power(t, delta)  # noqa: E731
        caputo = lambda t: gamma(1 + delta) / gamma(1 + delta - alpha(t)) * np.power(t, delta - alpha(t))  # noqa: E731
        m, kappa = 1, 1.0
    elif name == "ex2":
        _check_delta(delta)
        alpha = ex2_exponent()
        amp = lambda t: 1.0 + np.power(t, delta)  # noqa: E731
        caputo = lambda t: gamma(1 + delta) / gamma(1 + delta - alpha(t)) * np.power(t, delta - alpha(t))  # noqa: E731
        m, kappa = 2, 1e-3
    elif name == "ex3":
        if not (0.0 <= alpha0 < 1.0 and 0.0 <= alphaT < 1.0):
            raise InvalidParameter("ex3 needs alpha0, alphaT in [0, 1)")
        alpha = ex3_exponent(alpha0, alphaT)
        e = 3.0 - alpha0
        amp = lambda t: np.power(t, e)  # noqa: E731
        caputo = lambda t: gamma(e + 1) / gamma(e + 1 - alpha(t)) * np.power(t, e - alpha(t))  # noqa: E731
        damp = lambda t: e * np.power(t, e - 1.0)  # noqa: E731
        exact, source, reduced, u0, u0_grad = _separable(2, amp, damp, 1e-3 * 8 * np.pi**2, caputo)
        return ProblemSpec(
            alpha, DiffusionTensor.scalar(1e-3), source, u0, u0_grad, kind="mobile_immobile",
            k_coeff=lambda t: np.ones_like(np.asarray(t, float)),
            ut0=lambda x, y: np.zeros_like(x), exact=exact, reduced_source=reduced,
        )
    else:
        raise InvalidParameter(f"unknown case '{name}', expected one of {CASES[:3]}")

    zero = lambda t: 0.0  # noqa: E731
    exact, source, reduced, u0, u0_grad = _separable(m, amp, zero, kappa * 2 * (m * np.pi) ** 2, caputo)
    return ProblemSpec(alpha, DiffusionTensor.scalar(kappa), source, u0, u0_grad, exact=exact, reduced_source=reduced)


def constant_case(alpha: float, delta: float = 0.6) -> ProblemSpec:
    """``ex1`` solution with a constant exponent (used by the coefficient audit)."""
    _check_delta(delta)
    alpha_fn = VariableExponent.constant(alpha)
    amp = lambda t: 1.0 + np.power(t, delta)  # noqa: E731
    caputo = lambda t: gamma(1 + delta) / gamma(1 + delta - alpha) * np.power(t, delta - alpha)  # noqa: E731
    exact, source, reduced, u0, u0_grad = _separable(1, amp, lambda t: 0.0, 2 * np.pi**2, caputo)
    return ProblemSpec(alpha_fn, DiffusionTensor.scalar(1.0), source, u0, u0_grad, exact=exact, reduced_source=reduced)


def _check_delta(delta):
    if not (0.0 < delta <= 1.0) or math.isnan(delta):
        raise InvalidParameter(f"delta must lie in (0, 1], got {delta}")
