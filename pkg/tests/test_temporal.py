import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from subdiff.cases import ex1_exponent, ex2_exponent, ex3_exponent
from subdiff.errors import (
    ConditionViolated,
    ExponentOutOfRange,
    IdentityViolation,
    InvalidParameter,
    NewtonDiverged,
)
from subdiff.temporal import (
    CoeffRow,
    SuperconvPolicy,
    VariableExponent,
    apply_l21sigma,
    build_graded_mesh,
    caputo_power_reference,
    coefficient_rows,
    complementary_kernels,
    ij_arrays,
    ij_quantities,
    kernel_table,
    l21_coefficients,
    select_step_params,
    step_schedule,
)

QUAD = dict(epsabs=0.0, epsrel=1e-13, limit=200)

# the b oracle integrand changes sign; quad flags the cancellation but still meets 1e-10
pytestmark = pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")


# --- strategies -------------------------------------------------------------

@st.composite
def exponents(draw):
    kind = draw(st.sampled_from(["ex1", "ex2", "const", "ex3"]))
    if kind == "ex1":
        return ex1_exponent(draw(st.floats(0.05, 0.85)))
    if kind == "ex2":
        return ex2_exponent()
    if kind == "const":
        return VariableExponent.constant(draw(st.floats(0.0, 0.95)))
    return ex3_exponent(draw(st.floats(0.0, 0.9)), draw(st.floats(0.0, 0.9)))


@st.composite
def schedules(draw, max_N=32):
    alpha = draw(exponents())
    N = draw(st.integers(1, max_N))
    r = draw(st.floats(1.0, 4.0))
    choices = [SuperconvPolicy.interval_min(), SuperconvPolicy.newton()]
    if alpha.monotonicity == "increasing":
        choices += [SuperconvPolicy.offset(draw(st.floats(0.5, 1.0))), SuperconvPolicy.at_left()]
    if alpha.monotonicity == "decreasing":
        choices.append(SuperconvPolicy.at_right())
    policy = draw(st.sampled_from(choices))
    mesh = build_graded_mesh(1.0, N, r)
    sched = step_schedule(alpha, mesh, policy)
    return alpha, mesh, policy, sched, coefficient_rows(mesh, sched)


# --- graded mesh ------------------------------------------------------------

def test_mesh_uniform():
    assert build_graded_mesh(1.0, 4, 1).nodes.tolist() == [0, 0.25, 0.5, 0.75, 1.0]


def test_mesh_graded_nodes_and_ratios():
    m = build_graded_mesh(1.0, 4, 2)
    assert m.nodes.tolist() == [0, 0.0625, 0.25, 0.5625, 1.0]
    np.testing.assert_allclose(m.ratios, [1 / 3, 3 / 5, 5 / 7], rtol=1e-15)


def test_mesh_scaled_final_time():
    assert build_graded_mesh(2.0, 2, 3).nodes.tolist() == [0, 0.25, 2.0]


@pytest.mark.parametrize("T,N,r", [(1.0, 4, 0.5), (1.0, 0, 2), (0.0, 4, 1), (1.0, 2.5, 1)])
def test_mesh_rejects_bad_input(T, N, r):
    with pytest.raises(InvalidParameter):
        build_graded_mesh(T, N, r)


@given(st.integers(1, 300), st.floats(1.0, 6.0), st.floats(0.1, 10.0))
def test_mesh_invariants(N, r, T):
    m = build_graded_mesh(T, N, r)
    assert m.nodes[0] == 0.0 and m.nodes[-1] == T
    assert np.all(m.steps > 0)
    assert np.all(m.ratios <= 1.0 + 1e-12)
    np.testing.assert_allclose(m.nodes, T * (np.arange(N + 1) / N) ** r, rtol=1e-14, atol=0)


# --- exponents and step parameters ------------------------------------------

def test_exponent_validation():
    with pytest.raises(ExponentOutOfRange):
        VariableExponent.constant(1.0)
    with pytest.raises(ExponentOutOfRange):
        VariableExponent(lambda t: 0.5 + t, alpha_sup=0.9)
    with pytest.raises(InvalidParameter):
        VariableExponent(lambda t: 0.2 + 0.5 * t, alpha_sup=0.9, monotonicity="decreasing")


def test_ex1_exponent_endpoints():
    for d in (0.2, 0.4, 0.6, 0.8):
        a = ex1_exponent(d)
        assert a.at(0.0) == pytest.approx(d, abs=1e-15)
        assert a.at(1.0) == pytest.approx(0.9, abs=1e-15)


@pytest.mark.parametrize("policy", ["interval_min", "offset 0.3", "offset_frac 0.5", "newton", "at_left", "at_right"])
def test_constant_exponent_any_policy(policy):
    alpha = VariableExponent.constant(0.5)
    mesh = build_graded_mesh(1.0, 8, 2)
    for n in range(1, 9):
        p = select_step_params(alpha, mesh, n, SuperconvPolicy.parse(policy))
        assert (p.alpha_n, p.theta, p.alpha_star) == (0.5, 0.25, 0.5)


def test_decreasing_interval_min_uses_right_end():
    alpha, mesh = ex2_exponent(), build_graded_mesh(1.0, 16, 2)
    for n in range(1, 17):
        p = select_step_params(alpha, mesh, n, SuperconvPolicy.interval_min())
        assert p.alpha_n == alpha.at(mesh.nodes[n])
        assert p.alpha_star >= p.alpha_n


def test_increasing_offset_satisfies_condition():
    alpha, mesh = ex1_exponent(0.6), build_graded_mesh(1.0, 64, 2)
    for n in range(1, 65):
        p = select_step_params(alpha, mesh, n, SuperconvPolicy.offset(0.6))
        assert p.alpha_n == alpha.at(0.6 * mesh.nodes[n - 1] + 0.4 * mesh.nodes[n])
        assert p.alpha_star >= p.alpha_n


def test_increasing_at_right_violates_condition():
    mesh = build_graded_mesh(1.0, 8, 1)
    with pytest.raises(ConditionViolated, match="step 1"):
        select_step_params(ex1_exponent(0.4), mesh, 1, SuperconvPolicy.at_right())


def test_interval_min_without_hint_matches_dense_minimum():
    # minimum at t = 0.37 lies strictly inside a step
    alpha = VariableExponent(lambda t: 0.3 + (t - 0.37) ** 2, alpha_sup=0.95)
    mesh = build_graded_mesh(1.0, 4, 1)
    p = select_step_params(alpha, mesh, 2, SuperconvPolicy.interval_min())
    assert p.alpha_n == pytest.approx(0.3, abs=1e-12)


def test_newton_fixed_point():
    alpha, mesh = ex1_exponent(0.2), build_graded_mesh(1.0, 16, 3)
    for p in step_schedule(alpha, mesh, SuperconvPolicy.newton()):
        assert abs(p.alpha_n - p.alpha_star) <= 1e-12


def test_newton_iteration_cap():
    alpha, mesh = ex1_exponent(0.2), build_graded_mesh(1.0, 2, 1)
    with pytest.raises(NewtonDiverged):
        select_step_params(alpha, mesh, 2, SuperconvPolicy.newton(tol=0.0, max_iter=1))


def test_step_index_range():
    mesh = build_graded_mesh(1.0, 4, 1)
    with pytest.raises(InvalidParameter):
        select_step_params(ex2_exponent(), mesh, 5, SuperconvPolicy())


def test_policy_parse_round_trip():
    for text in ("interval_min", "offset 0.6", "offset_frac 0.25", "newton", "at_left", "at_right"):
        assert SuperconvPolicy.parse(str(SuperconvPolicy.parse(text))) == SuperconvPolicy.parse(text)
    assert SuperconvPolicy.parse("offset 0.6") == SuperconvPolicy.offset(0.6)
    for bad in ("", "offset", "offset x", "newton 3", "offset 1.5", "bisect"):
        with pytest.raises(InvalidParameter):
            SuperconvPolicy.parse(bad)


# --- coefficients -----------------------------------------------------------

def test_zero_exponent_degeneracy():
    alpha, mesh = VariableExponent.constant(0.0), build_graded_mesh(1.0, 10, 2)
    for row in coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy())):
        assert row.theta == 0.0
        assert np.all(row.a == 1.0) and np.all(row.b == 0.0) and np.all(row.c == 1.0)


def test_first_step_weight():
    alpha = VariableExponent.constant(0.5)
    mesh = build_graded_mesh(1.0, 10, 1)
    row = l21_coefficients(mesh, select_step_params(alpha, mesh, 1, SuperconvPolicy()))
    expected = 0.75**0.5 / (gamma(1.5) * 0.1**0.5)
    assert row.c[0] == pytest.approx(expected, rel=1e-14)
    assert round(row.c[0], 4) == 3.0902


def _oracle_ab(mesh, p, k):
    t, A = p.t_super, p.alpha_star
    g1 = gamma(1 - A)
    ts = mesh.nodes
    tau, tau1 = ts[k] - ts[k - 1], ts[k + 1] - ts[k]
    mid = 0.5 * (ts[k] + ts[k - 1])
    a = quad(lambda s: (t - s) ** -A / g1, ts[k - 1], ts[k], **QUAD)[0] / tau
    b = 2 / (tau * (tau + tau1)) * quad(lambda s: (s - mid) * (t - s) ** -A / g1, ts[k - 1], ts[k], **QUAD)[0]
    return a, b


def _oracle_ij(mesh, p, k):
    t, A = p.t_super, p.alpha_star
    ts = mesh.nodes
    tau = ts[k] - ts[k - 1]
    w = A / gamma(1 - A)
    I = w * quad(lambda s: (ts[k] - s) / tau * (t - s) ** (-A - 1), ts[k - 1], ts[k], **QUAD)[0]
    J = w * quad(lambda s: (s - ts[k - 1]) / tau * (t - s) ** (-A - 1), ts[k - 1], ts[k], **QUAD)[0]
    return I, J


def test_history_weights_match_quadrature_uniform():
    alpha, mesh = VariableExponent.constant(0.4), build_graded_mesh(1.0, 10, 1)
    p = select_step_params(alpha, mesh, 2, SuperconvPolicy())
    row = l21_coefficients(mesh, p)
    a1, b1 = _oracle_ab(mesh, p, 1)
    assert row.a[1] == pytest.approx(a1, rel=1e-10)
    assert row.b[1] == pytest.approx(b1, rel=1e-10)
    a0 = quad(lambda s: (p.t_super - s) ** -0.4 / gamma(0.6), mesh.nodes[1], p.t_super, **QUAD)[0] / mesh.tau(2)
    assert row.a[0] == pytest.approx(a0, rel=1e-10)


def test_ij_match_quadrature_uniform():
    alpha, mesh = VariableExponent.constant(0.4), build_graded_mesh(1.0, 10, 1)
    p = select_step_params(alpha, mesh, 3, SuperconvPolicy())
    I, J = ij_quantities(mesh, p, 1)
    Iq, Jq = _oracle_ij(mesh, p, 1)
    assert I == pytest.approx(Iq, rel=1e-10)
    assert J == pytest.approx(Jq, rel=1e-10)
    assert J >= I
    with pytest.raises(InvalidParameter):
        ij_quantities(mesh, p, 3)


def test_ij_vanish_for_zero_exponent():
    alpha, mesh = VariableExponent.constant(0.0), build_graded_mesh(1.0, 6, 2)
    I, J = ij_arrays(mesh, select_step_params(alpha, mesh, 6, SuperconvPolicy()))
    assert not I.any() and not J.any()


@pytest.mark.parametrize("n", [2, 5, 9])
def test_weights_match_quadrature_graded(n):
    alpha, mesh = ex1_exponent(0.6), build_graded_mesh(1.0, 9, 2.5)
    p = select_step_params(alpha, mesh, n, SuperconvPolicy.offset(0.6))
    row = l21_coefficients(mesh, p)
    I, J = ij_arrays(mesh, p)
    for k in range(1, n):
        a, b = _oracle_ab(mesh, p, k)
        Iq, Jq = _oracle_ij(mesh, p, k)
        np.testing.assert_allclose([row.a[n - k], row.b[n - k], I[n - k], J[n - k]], [a, b, Iq, Jq], rtol=1e-10)


def test_c_assembly_cases():
    # c follows the four-case combination of a and b
    alpha, mesh = ex1_exponent(0.4), build_graded_mesh(1.0, 7, 2)
    p = select_step_params(alpha, mesh, 7, SuperconvPolicy.newton())
    row = l21_coefficients(mesh, p)
    a, b, rho, n = row.a, row.b, mesh.ratios, 7
    expect = np.empty(n)
    expect[0] = a[0] + rho[n - 2] * b[1]
    for k in range(2, n):
        expect[n - k] = a[n - k] + rho[k - 2] * b[n - k + 1] - b[n - k]
    expect[n - 1] = a[n - 1] - b[n - 1]
    np.testing.assert_allclose(row.c, expect, rtol=1e-15)


@given(schedules())
def test_coefficient_inequalities(case):
    alpha, mesh, _, sched, rows = case
    for p, row in zip(sched, rows):
        n, a, b, c = p.n, row.a, row.b, row.c
        assert np.all(a > 0) and np.all(c > 0)
        assert 0.6 <= gamma(1 - p.alpha_star) <= 2 / (1 - alpha.alpha_sup)
        if n >= 2:
            assert np.all(b[1:] <= a[1:] / 4 * (1 + 1e-12))
            assert np.all(c[:-1] >= c[1:] * (1 - 1e-12))
        assert c[0] <= 9 / 8 * mesh.tau(n) ** -p.alpha_star / gamma(2 - p.alpha_star) * (1 + 1e-12)


# --- discrete operator ------------------------------------------------------

def test_operator_annihilates_constants():
    alpha, mesh = ex1_exponent(0.3), build_graded_mesh(1.0, 12, 2)
    for row in coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy.newton())):
        assert apply_l21sigma(row, np.full(row.n + 1, 2.5)) == 0.0


def test_zero_exponent_telescopes(rng):
    alpha, mesh = VariableExponent.constant(0.0), build_graded_mesh(1.0, 40, 3)
    rows = coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy()))
    v = rng.standard_normal(41)
    for row in rows:
        n = row.n
        assert abs(apply_l21sigma(row, v[: n + 1]) - (v[n] - v[0])) <= 1e-14 * max(1.0, np.abs(v).max())


@given(schedules(max_N=48))
def test_linear_exactness(case):
    _, mesh, _, sched, rows = case
    for p, row in zip(sched, rows):
        exact = caputo_power_reference(1.0, p.alpha_star, p.t_super)
        got = apply_l21sigma(row, mesh.nodes[: p.n + 1])
        assert abs(got - exact) <= 1e-12 * abs(exact)


def test_operator_componentwise_and_length_check():
    alpha, mesh = ex2_exponent(), build_graded_mesh(1.0, 5, 1)
    row = coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy()))[-1]
    V = np.column_stack([mesh.nodes, mesh.nodes**2])
    got = apply_l21sigma(row, V)
    assert got.shape == (2,)
    assert got[0] == apply_l21sigma(row, mesh.nodes) and got[1] == apply_l21sigma(row, mesh.nodes**2)
    with pytest.raises(InvalidParameter):
        apply_l21sigma(row, mesh.nodes[:4])


@given(schedules(), st.integers(0, 2**32 - 1))
def test_energy_inequality(case, seed):
    _, _, _, sched, rows = case
    r = np.random.default_rng(seed)
    for p, row in zip(sched, rows):
        n, th = p.n, p.theta
        v = r.standard_normal((5, n + 1))
        D = np.array([apply_l21sigma(row, vi) for vi in v])
        vth = th * v[:, n - 1] + (1 - th) * v[:, n]
        rhs = np.diff(v**2, axis=1) @ row.c[::-1]
        assert np.all(2 * D * vth >= rhs - 1e-12 * np.abs(2 * D * vth).max())


# --- complementary kernels --------------------------------------------------

def test_kernel_first_step():
    alpha, mesh = ex1_exponent(0.5), build_graded_mesh(1.0, 4, 2)
    rows = coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy.newton()))
    assert complementary_kernels(rows, 1).P[0] == pytest.approx(1 / rows[0].c[0], rel=1e-15)


def test_kernel_zero_exponent():
    alpha, mesh = VariableExponent.constant(0.0), build_graded_mesh(1.0, 12, 2)
    rows = coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy()))
    P = complementary_kernels(rows).P
    assert P[0] == 1.0 and not P[1:].any()


def _identity_residual(rows, P, n):
    worst = 0.0
    for m in range(1, n + 1):
        s = sum(P[n - k] * rows[k - 1].c[k - m] for k in range(m, n + 1))
        worst = max(worst, abs(s - 1.0))
    return worst


def test_kernel_identity_ex1_n8(rng):
    mesh = build_graded_mesh(1.0, 8, float(rng.uniform(1, 4)))
    rows = coefficient_rows(mesh, step_schedule(ex1_exponent(0.4), mesh, SuperconvPolicy.offset(0.7)))
    assert _identity_residual(rows, complementary_kernels(rows, 8).P, 8) <= 1e-10


def test_kernel_rows_must_be_ordered():
    alpha, mesh = ex2_exponent(), build_graded_mesh(1.0, 4, 1)
    rows = coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy()))
    with pytest.raises(InvalidParameter):
        complementary_kernels(rows[1:], 3)


def test_kernel_corruption_detected():
    row = CoeffRow(1, 0.5, 0.25, np.array([1.0]), np.zeros(1), np.array([0.0]))
    with pytest.raises(IdentityViolation):
        complementary_kernels([row])


def test_kernel_table_lengths():
    alpha, mesh = ex2_exponent(), build_graded_mesh(1.0, 6, 2)
    table = kernel_table(coefficient_rows(mesh, step_schedule(alpha, mesh, SuperconvPolicy())))
    assert [k.n for k in table] == list(range(1, 7))
    assert [len(k.P) for k in table] == list(range(1, 7))


# --- reference values -------------------------------------------------------

def test_caputo_reference_examples():
    t = np.linspace(0.1, 2.0, 7)
    np.testing.assert_allclose(caputo_power_reference(1.0, 0.3, t), t**0.7 / gamma(1.7), rtol=1e-15)
    np.testing.assert_allclose(caputo_power_reference(0.6, 0.0, t), t**0.6, rtol=1e-15)
    assert round(caputo_power_reference(0.6, 0.3, 1.0), 5) == 0.99559


def test_caputo_reference_against_quadrature():
    # Caputo derivative as the weakly singular integral of v'
    d, al, t = 0.6, 0.35, 0.8
    val = quad(lambda s: d * s ** (d - 1) * (t - s) ** -al, 0, t, **QUAD)[0] / gamma(1 - al)
    assert caputo_power_reference(d, al, t) == pytest.approx(val, rel=1e-9)


def test_gamma_accuracy():
    assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    mpmath.mp.dps = 30
    for x in np.linspace(0.5, 4.0, 71):
        assert gamma(x) == pytest.approx(float(mpmath.gamma(mpmath.mpf(x))), rel=1e-13)
