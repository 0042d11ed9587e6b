import math

import numpy as np
import pytest
import scipy.linalg

from smoothfield.base import (
    ChartField,
    CoordinateField,
    DiagonalPullback,
    RestrictionField,
    TaylorFunction,
    eval_jet,
)
from smoothfield.errors import (
    DomainError,
    ExprSyntaxError,
    IntegrationError,
    JetOrderError,
    UnknownIdentifierError,
    VariableRangeError,
)
from smoothfield.expr import ExprField, parse_expr
from smoothfield.jet import Jet, invert_series, jet_space, multi_indices
from smoothfield.matexp import MatrixExpCurve, matrix_exp_curve
from smoothfield.ode import GridTrajectory

RNG_SEED = 42


def random_jet(rng, num_vars, order):
    space = jet_space(num_vars, order)
    return Jet(space, rng.normal(size=space.size))


def fd_gradient(f, point, h=1e-4):
    point = np.asarray(point, dtype=float)
    out = np.zeros(len(point))
    for i in range(len(point)):
        e = np.zeros(len(point))
        e[i] = h
        out[i] = (f.value(point + e) - f.value(point - e)) / (2 * h)
    return out


def fd_hessian(f, point, h=1e-4):
    point = np.asarray(point, dtype=float)
    n = len(point)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            out[i, j] = (
                f.value(point + ei + ej)
                - f.value(point + ei - ej)
                - f.value(point - ei + ej)
                + f.value(point - ei - ej)
            ) / (4 * h * h)
    return out


def jet_gradient(jet):
    n = jet.num_vars
    return np.array([jet.derivative(tuple(int(k == i) for k in range(n))) for i in range(n)])


def jet_hessian(jet):
    n = jet.num_vars
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            alpha = [0] * n
            alpha[i] += 1
            alpha[j] += 1
            out[i, j] = jet.derivative(tuple(alpha))
    return out


# ============ jets ============


def test_multi_indices_graded_and_prefix_closed():
    low = multi_indices(3, 2)
    high = multi_indices(3, 3)
    assert high[: len(low)] == low
    assert len(high) == math.comb(3 + 3, 3)
    assert [sum(a) for a in high] == sorted(sum(a) for a in high)


def test_jet_ring_axioms():
    rng = np.random.default_rng(RNG_SEED)
    for order in range(4):
        a, b, c = (random_jet(rng, 3, order) for _ in range(3))
        np.testing.assert_allclose((a * (b + c)).coeffs, (a * b + a * c).coeffs, atol=1e-12)
        np.testing.assert_allclose((a * b).coeffs, (b * a).coeffs, atol=1e-12)
        np.testing.assert_allclose(((a * b) * c).coeffs, (a * (b * c)).coeffs, atol=1e-12)


def test_jet_order_above_three_rejected():
    with pytest.raises(JetOrderError):
        jet_space(2, 4)
    with pytest.raises(JetOrderError):
        eval_jet(CoordinateField(0, 1), [0.0], 4)


def test_reciprocal_and_matrix_inverse():
    rng = np.random.default_rng(RNG_SEED)
    space = jet_space(2, 3)
    a = random_jet(rng, 2, 3)
    a.coeffs[0] = 3.0
    np.testing.assert_allclose((a * a.reciprocal()).coeffs, space.constant(1.0), atol=1e-12)

    m = rng.normal(size=(3, 3, space.size)) * 0.3
    m[..., 0] += np.eye(3) * 2.0
    inv = space.inverse_matrix(m)
    prod = space.einsum("ik,kj->ij", m, inv)
    np.testing.assert_allclose(prod, space.identity(3), atol=1e-12)


def test_division_by_zero_jet():
    with pytest.raises(DomainError):
        Jet.constant(0.0, 1, 2).reciprocal()


def test_invert_series_reverts():
    a = np.array([0.0, 2.0, -0.5, 0.3])
    b = invert_series(a)
    # compose F(G(e)) and compare with e up to third order
    e = Jet.variable(0, 0.0, 1, 3)
    g = b[1] * e + b[2] * e**2 + b[3] * e**3
    f = a[1] * g + a[2] * g**2 + a[3] * g**3
    np.testing.assert_allclose(f.coeffs, [0.0, 1.0, 0.0, 0.0], atol=1e-12)


def test_jet_record_round_trip():
    jet = eval_jet(ExprField.parse("x0^2 * x1", 2), [1.0, 2.0], 2)
    record = jet.to_record()
    assert record["order"] == 2 and record["num_vars"] == 2
    assert Jet.from_record(record).as_dict() == jet.as_dict()


# ============ expressions ============


def test_parse_polynomial():
    expr = parse_expr("2*x0*x1 + x2^2", 3)
    assert expr.evaluate([1.0, 2.0, 3.0]) == pytest.approx(13.0)


def test_parse_exp_sin_at_origin():
    expr = parse_expr("exp(x0)*sin(x1)", 2)
    assert expr.evaluate([0.0, 0.0]) == 0.0


@pytest.mark.parametrize(
    "source, dim, error",
    [
        ("x3", 3, VariableRangeError),
        ("foo + x0", 1, UnknownIdentifierError),
        ("tan(x0)", 1, UnknownIdentifierError),
        ("x0 +* 2", 1, ExprSyntaxError),
        ("(x0", 1, ExprSyntaxError),
        ("x0 ^ 0.5", 1, ExprSyntaxError),
    ],
)
def test_parse_errors(source, dim, error):
    with pytest.raises(error):
        parse_expr(source, dim)


def test_unknown_identifier_reports_position():
    with pytest.raises(UnknownIdentifierError) as info:
        parse_expr("x0 + foo", 1)
    assert info.value.position == 5


def test_aliases_and_constants():
    expr = parse_expr("t * pi + e", 2, aliases={"t": 0, "v": 1})
    assert expr.evaluate([2.0, 0.0]) == pytest.approx(2 * math.pi + math.e)


def test_constant_folding():
    expr = parse_expr("2 * 3 + cos(0) - x0", 1)
    assert expr.to_source() == "(7.0 - x0)"


def test_unary_minus_binds_looser_than_power():
    assert parse_expr("-x0^2", 1).evaluate([3.0]) == pytest.approx(-9.0)
    assert parse_expr("2^-1", 1).evaluate([0.0]) == pytest.approx(0.5)


def test_print_then_parse_round_trip():
    rng = np.random.default_rng(RNG_SEED)
    sources = [
        "x0 / (1 + x1^2) - sqrt(x2 + 5)",
        "exp(-x0) * log(2 + sin(x1)^2) + cos(x2)^3",
        "-(x0 - x1) * (x2 + -1.5)^(-2)",
    ]
    for source in sources:
        expr = parse_expr(source, 3)
        again = parse_expr(expr.to_source(), 3)
        for _ in range(10):
            p = rng.uniform(-1, 1, size=3)
            assert again.evaluate(p) == pytest.approx(expr.evaluate(p), rel=1e-14)


def test_eval_jet_polynomial_coefficients():
    jet = eval_jet(ExprField.parse("x0^2", 1), [3.0], 2)
    assert jet.as_dict() == {(0,): 9.0, (1,): 6.0, (2,): 1.0}


def test_eval_jet_exponential_series():
    jet = eval_jet(ExprField.parse("exp(x0)", 1), [0.0], 3)
    np.testing.assert_allclose(jet.coeffs, [1.0, 1.0, 0.5, 1.0 / 6.0], rtol=1e-15)


def test_eval_jet_domain_errors():
    with pytest.raises(DomainError):
        eval_jet(ExprField.parse("log(x0)", 1), [-1.0], 1)
    with pytest.raises(DomainError):
        eval_jet(ExprField.parse("sqrt(x0)", 1), [0.0], 1)
    with pytest.raises(DomainError):
        ExprField.parse("1 / x0", 1).value([0.0])


def test_chain_rule_matches_series_composition():
    rng = np.random.default_rng(RNG_SEED)
    f = ExprField.parse("x0^3 - 2*x0*x1 + 0.5*x1^2", 2)
    g = ExprField.parse("exp(x0^3 - 2*x0*x1 + 0.5*x1^2)", 2)
    for _ in range(5):
        p = rng.uniform(-1, 1, size=2)
        composed = eval_jet(f, p, 3).exp()
        np.testing.assert_allclose(eval_jet(g, p, 3).coeffs, composed.coeffs, rtol=1e-12, atol=1e-12)


def test_expression_fields_match_finite_differences():
    rng = np.random.default_rng(RNG_SEED)
    fields = [
        ExprField.parse("sin(x0) * exp(x1) + x2^3 / (2 + cos(x0))", 3),
        ExprField.parse("sqrt(4 + x0^2 + x1^2) * log(3 + x2)", 3),
    ]
    for f in fields:
        for _ in range(50):
            p = rng.uniform(-1, 1, size=3)
            jet = eval_jet(f, p, 2)
            np.testing.assert_allclose(jet_gradient(jet), fd_gradient(f, p), rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(jet_hessian(jet), fd_hessian(f, p), rtol=1e-5, atol=1e-6)


def test_third_order_matches_differences_of_second():
    f = ExprField.parse("exp(x0 * x1) + x1^4", 2)
    p = np.array([0.3, -0.7])
    h = 1e-4
    jet = eval_jet(f, p, 3)
    second = lambda q: eval_jet(f, q, 2).derivative((2, 0))
    fd = (second(p + [h, 0]) - second(p - [h, 0])) / (2 * h)
    assert jet.derivative((3, 0)) == pytest.approx(fd, rel=1e-5)


def test_field_algebra():
    x = CoordinateField(0, 2)
    y = CoordinateField(1, 2)
    f = (x * y + 2.0 - y).exp()
    jet = eval_jet(f, [1.0, 2.0], 1)
    e = math.exp(2.0)
    np.testing.assert_allclose(jet.coeffs, [e, 2 * e, 0.0], atol=1e-12)


def test_chart_and_restriction_fields():
    sine = TaylorFunction(lambda t, order: [math.sin(t), math.cos(t), -math.sin(t) / 2, -math.cos(t) / 6][: order + 1])
    placed = ChartField(sine, 1, 3)
    jet = eval_jet(placed, [5.0, 0.2, -1.0], 2)
    assert jet.coeff((0, 1, 0)) == pytest.approx(math.cos(0.2))
    assert jet.coeff((1, 0, 0)) == 0.0

    g = ExprField.parse("x0 * (1 + x1 + x2^2)", 3)
    line = RestrictionField(g, [0.0, 0.0, 0.0], 0)
    np.testing.assert_allclose(line.taylor(2.0, 2), [2.0, 1.0, 0.0])


def test_diagonal_pullback():
    f = ExprField.parse("x0 + x1^2", 2)
    pulled = DiagonalPullback(f, [1.0, 0.5])
    jet = eval_jet(pulled, [1.0, 2.0], 2)
    assert jet.value == pytest.approx(2.0)
    assert jet.coeff((0, 2)) == pytest.approx(0.25)


# ============ matrix exponential curves ============


def test_matrix_exp_curve_zero_generator():
    curve = MatrixExpCurve(np.zeros((3, 3)))
    coeffs = curve.taylor(1.3, 3)
    np.testing.assert_allclose(coeffs[0], np.eye(3))
    np.testing.assert_allclose(coeffs[1:], 0.0)


def test_matrix_exp_curve_rotation():
    F = np.array([[0.0, 1.0], [-1.0, 0.0]])
    curve = MatrixExpCurve(F)
    value = curve.value(math.pi / 2)
    np.testing.assert_allclose(value, F, atol=1e-14)
    np.testing.assert_allclose(curve.taylor(math.pi / 2, 1)[1], F @ value, atol=1e-14)


def test_matrix_exp_curve_diagonal():
    entries = matrix_exp_curve(np.diag([1.0, -1.0]))
    assert entries[0][0].value([1.0]) == pytest.approx(math.e)
    assert entries[1][1].value([1.0]) == pytest.approx(1 / math.e)
    assert entries[0][1].value([1.0]) == 0.0


def test_matrix_exp_entry_matches_finite_differences():
    F = np.array([[0.0, 1.0, -0.5], [-1.0, 0.0, 2.0], [0.5, -2.0, 0.0]])
    entry = matrix_exp_curve(F)[1][2]
    t, h = 0.7, 1e-4
    jet = eval_jet(entry, [t], 3)
    for k in range(1, 4):
        lower = lambda s: eval_jet(entry, [s], k - 1).derivative((k - 1,))
        fd = (lower(t + h) - lower(t - h)) / (2 * h)
        assert jet.derivative((k,)) == pytest.approx(fd, rel=1e-6, abs=1e-8)
    np.testing.assert_allclose(entry.value([t]), scipy.linalg.expm(t * F)[1, 2])


def assert_taylor_matches_differences(taylor, t, h=1e-4, rel=1e-5, abs_tol=1e-7):
    """k! c_k against a central difference of (k-1)! c_{k-1}, for k = 1, 2, 3."""
    coeffs = np.asarray(taylor(t, 3))
    for k in range(1, 4):
        lower = lambda s: np.asarray(taylor(s, k - 1))[k - 1] * math.factorial(k - 1)
        fd = (lower(t + h) - lower(t - h)) / (2 * h)
        np.testing.assert_allclose(coeffs[k] * math.factorial(k), fd, rtol=rel, atol=abs_tol)


@pytest.mark.parametrize(
    "F",
    [
        np.array([[0.0, 1.0, -0.5], [-1.0, 0.0, 2.0], [0.5, -2.0, 0.0]]),
        np.array([[0.3, 1.0], [0.0, -0.7]]),
        np.diag([0.5, -1.0]),
    ],
)
def test_matrix_exp_jets_match_finite_differences(F):
    rng = np.random.default_rng(RNG_SEED)
    curve = MatrixExpCurve(F)
    entries = matrix_exp_curve(F)
    n = F.shape[0]
    for _ in range(50):
        t = rng.uniform(-1.5, 1.5)
        assert_taylor_matches_differences(curve.taylor, t)
        i, j = rng.integers(0, n, size=2)
        entry = entries[i][j]
        assert_taylor_matches_differences(entry.taylor, t)


# ============ grid trajectories ============


def test_trajectory_cosh():
    rhs = lambda t, y: np.array([y[1], y[0]])
    traj = GridTrajectory(rhs, 0.0, [1.0, 0.0])
    assert traj(1.0)[0] == pytest.approx(math.cosh(1.0), abs=1e-8)
    assert traj(-0.5)[1] == pytest.approx(math.sinh(-0.5), abs=1e-8)
    assert traj(0.12345)[0] == pytest.approx(math.cosh(0.12345), abs=1e-10)


def test_trajectory_domain():
    traj = GridTrajectory(lambda t, y: -y, 0.5, [1.0], domain=(0.1, 2.0))
    assert traj(2.0)[0] == pytest.approx(math.exp(-1.5), abs=1e-10)
    with pytest.raises(DomainError):
        traj(0.05)


def test_trajectory_richardson_guard(monkeypatch):
    import smoothfield.ode as ode

    monkeypatch.setattr(ode, "RICHARDSON_TOL", 1e-30)
    traj = GridTrajectory(lambda t, y: np.array([y[0] * np.sin(50 * t)]), 0.0, [1.0], step=0.05)
    with pytest.raises(IntegrationError):
        traj(1.0)


def stiff_oscillator(edge):
    """y'' = -w^2 y with w^2 jumping from 1 to 4e6 beyond t = edge (on the side of edge's sign)."""

    def rhs(t, y):
        stiff = t > edge if edge > 0 else t < edge
        w2 = 4e6 if stiff else 1.0
        return np.array([y[1], -w2 * y[0]])

    return rhs


@pytest.mark.parametrize("warmup", [None, 0.1, -0.1])
@pytest.mark.parametrize("edge, far", [(0.5, 1.0), (-0.5, -1.0)])
def test_trajectory_checks_every_chunk(edge, far, warmup):
    traj = GridTrajectory(stiff_oscillator(edge), 0.0, [1.0, 0.0])
    if warmup is not None:
        assert traj(warmup)[0] == pytest.approx(math.cos(warmup), abs=1e-10)
    with pytest.raises(IntegrationError):
        traj(far)
    # the failed chunk is not cached
    with pytest.raises(IntegrationError):
        traj(far)
    assert traj(0.2 if edge > 0 else -0.2)[0] == pytest.approx(math.cos(0.2), abs=1e-10)
