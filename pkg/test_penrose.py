import math

import numpy as np
import pandas as pd
import pytest

from geometry import ChartMismatchError, MetricField, curvature
from penrose import (
    ConformalFlow,
    ConjugatePointError,
    GeodesicResidualError,
    RootFindingError,
    RosenWave,
    ShapeViolationError,
    adapted_chart,
    adapted_from_brinkmann,
    conformal_limit_residuals,
    brinkmann_to_rosen,
    default_probe_grid,
    first_order_convergence,
    penrose_limit,
    penrose_of_conformal,
    pulled_back_metric,
    plane_wave_limit_dichotomy,
    rescale_convergence,
    rescaled_metric,
    validate_adapted,
)
from planewave import PlaneWaveSpec, brinkmann_metric
from smoothfield.base import ConstantField, CoordinateField
from smoothfield.expr import ExprField

ROTATION = 0.5 * np.array([[0.0, 1.0], [-1.0, 0.0]])
SADDLE = np.diag([1.0, -1.0])


def rosen_wave():
    return RosenWave.from_expressions([["1+u^2", "0.1*u"], ["0.1*u", "exp(u)"]])


def adapted_from_exprs(exprs, n=2):
    chart = adapted_chart(n)
    comps = {(0, 1): "1"}
    comps.update(exprs)
    return MetricField.from_expressions(chart, comps)


def perturbed_rosen():
    return adapted_from_exprs({(2, 2): "1+u^2+x1", (3, 3): "1+u^2+x1"})


def field_on(source, n=2):
    return ExprField.parse(source, n + 2, adapted_chart(n).aliases())


# ============ adapted shape ============


def test_rosen_wave_is_adapted():
    am = validate_adapted(rosen_wave().metric())
    assert am.shape_residual == 0.0
    assert am.geodesic_residual < 1e-12
    assert len(am.probes) == 45


def test_brinkmann_along_xi_is_adapted():
    spec = PlaneWaveSpec.regular(SADDLE, np.zeros((2, 2)))
    g = adapted_from_brinkmann(spec)
    am = validate_adapted(g)
    p = np.array([0.3, 0.4, 0.5, -0.2])
    x = p[2:]
    assert am.a().value(p) == pytest.approx(x @ spec.Q(0.4) @ x)
    assert g.chart.names == ("u", "v", "x1", "x2")


def test_swapped_potential_jets_match_brinkmann():
    spec = PlaneWaveSpec.generic([["sin(t)", "0"], ["0", "-sin(t)"]])
    g = adapted_from_brinkmann(spec, t_c=0.2)
    brinkmann = brinkmann_metric(spec)
    # at (u, v, x) the adapted a equals the Brinkmann g_tt at (t_c + v, u, x)
    p = np.array([0.7, 0.3, 0.5, -0.4])
    q = np.array([0.5, 0.7, 0.5, -0.4])
    a = g.component(1, 1).coeffs(p, 2)
    b = brinkmann.component(0, 0).coeffs(q, 2)
    assert a[0] == pytest.approx(b[0])
    # d/dv of a is d/dt of g_tt
    assert a[2] == pytest.approx(b[1])
    assert a[1] == pytest.approx(b[2])


def test_shape_violation_names_component():
    g = rosen_wave().metric().perturbed(0, 0, ConstantField(0.01, 4))
    with pytest.raises(ShapeViolationError, match="g_uu"):
        validate_adapted(g)


def test_geodesic_residual_detected():
    # g_uu vanishes at every probe but not to first order across the central line
    g = rosen_wave().metric().perturbed(0, 0, field_on("4*x1*(x1^2-0.25)"))
    with pytest.raises(GeodesicResidualError):
        validate_adapted(g)


def test_wrong_chart_rejected():
    with pytest.raises(ChartMismatchError):
        validate_adapted(brinkmann_metric(PlaneWaveSpec.regular(SADDLE, ROTATION)))


# ============ Penrose limit ============


def test_rosen_limit_is_itself():
    rosen = rosen_wave()
    limit = penrose_limit(validate_adapted(rosen.metric()))
    us = np.linspace(-1, 1, 7)
    np.testing.assert_array_equal(limit.samples(us).to_numpy(), rosen.samples(us).to_numpy())


def test_limit_is_idempotent():
    limit = penrose_limit(validate_adapted(perturbed_rosen()))
    again = penrose_limit(validate_adapted(limit.metric()))
    for u in np.linspace(-1, 1, 5):
        np.testing.assert_array_equal(again.matrix(u), limit.matrix(u))


def test_tangent_limit_of_brinkmann_is_flat():
    spec = PlaneWaveSpec.regular(SADDLE, ROTATION)
    limit = penrose_limit(validate_adapted(adapted_from_brinkmann(spec)))
    np.testing.assert_array_equal(limit.matrix(0.3), np.eye(2))
    assert curvature(limit.metric(), [0.1, 0.2, 0.3, 0.4]).riemann_norm == 0.0


def test_transverse_dependence_dies_on_the_geodesic():
    g = adapted_from_exprs({(2, 2): "1+v+x1^2+x2^2", (3, 3): "1+v+x1^2+x2^2"})
    limit = penrose_limit(validate_adapted(g))
    for u in (-1.0, 0.0, 0.8):
        np.testing.assert_allclose(limit.matrix(u), np.eye(2))


def test_rosen_samples_table():
    table = rosen_wave().samples([0.0, 1.0])
    assert list(table.columns) == ["u", "c11", "c12", "c22"]
    assert table.loc[1, "c22"] == pytest.approx(math.e)


# ============ rescaling ============


def test_rescaling_fixes_rosen_wave():
    table = rescale_convergence(validate_adapted(rosen_wave().metric()))
    assert (table["deviation"] == 0.0).all()
    assert first_order_convergence(table)
    assert table["eps"].iloc[-1] == pytest.approx(1 / 64)


def test_rescaling_converges_linearly():
    table = rescale_convergence(validate_adapted(perturbed_rosen()))
    dev = table["deviation"].to_numpy()
    # sup |eps x1| over probes with |x1| <= 0.5
    np.testing.assert_allclose(dev, 0.5 * table["eps"].to_numpy(), rtol=1e-12)
    assert first_order_convergence(table)
    assert table["ratio"].iloc[1:].to_numpy() == pytest.approx(0.5)


def test_rescaled_cross_terms_scale_with_eps():
    g = adapted_from_exprs({(1, 2): "1+0.3*u", (2, 2): "1", (3, 3): "1"})
    am = validate_adapted(g)
    p = np.array([0.5, 0.2, 0.1, -0.3])
    for eps in (1.0, 0.5, 0.25):
        m = rescaled_metric(am, eps).matrix(p)
        assert m[1, 2] == pytest.approx(eps * (1 + 0.3 * 0.5))
        assert m[0, 1] == 1.0
    table = rescale_convergence(am)
    assert first_order_convergence(table)


def test_quadratic_term_converges_faster():
    g = adapted_from_exprs({(1, 1): "x1^2+u", (2, 2): "1", (3, 3): "1"})
    table = rescale_convergence(validate_adapted(g))
    assert table["ratio"].iloc[-1] == pytest.approx(0.25, abs=1e-3)


def test_non_convergent_table_rejected():
    table = pd.DataFrame({"eps": [1.0, 0.5, 0.25], "deviation": [1.0, 1.0, 1.0], "ratio": [math.nan, 1.0, 1.0]})
    assert not first_order_convergence(table)


# ============ conformal change ============


def test_zero_sigma_leaves_limit_unchanged():
    am = validate_adapted(rosen_wave().metric())
    transformed, flow, report = penrose_of_conformal(am, ConstantField(0.0, 4))
    assert report.passed
    p = np.array([0.4, 0.1, 0.2, 0.3])
    np.testing.assert_allclose(flow.phi(p), p, atol=1e-14)
    for u in (-0.8, 0.0, 0.6):
        np.testing.assert_allclose(transformed.matrix(u), rosen_wave().matrix(u), atol=1e-12)


def test_constant_sigma_rescales_profile():
    c = 0.4
    am = validate_adapted(rosen_wave().metric())
    transformed, flow, report = penrose_of_conformal(am, ConstantField(c, 4))
    assert report.passed
    assert flow.f_value(0.7) == pytest.approx(math.exp(c) * 0.7, abs=1e-12)
    assert flow.h(math.exp(c) * 0.7) == pytest.approx(0.7, abs=1e-11)
    for U in (-0.9, 0.2, 1.1):
        expected = math.exp(c) * rosen_wave().matrix(U * math.exp(-c))
        np.testing.assert_allclose(transformed.matrix(U), expected, atol=1e-9)


def test_constant_sigma_profile_derivatives():
    c = 0.4
    am = validate_adapted(rosen_wave().metric())
    transformed, _, _ = penrose_of_conformal(am, ConstantField(c, 4))
    U = 0.3
    got = transformed.taylor(U, 3)
    base = rosen_wave().taylor(U * math.exp(-c), 3)
    for k in range(4):
        np.testing.assert_allclose(got[k], math.exp(c) * base[k] * math.exp(-c * k), atol=1e-8)


def test_sigma_along_geodesic_on_rosen_wave():
    am = validate_adapted(rosen_wave().metric())
    sigma = field_on("0.2*sin(u)")
    transformed, flow, report = penrose_of_conformal(am, sigma)
    table = report.table()
    assert report.passed, table
    natural = table.loc[table["check"] == "phi^*PL[g_sigma]=Kbar*PL[g]", "residual"].iloc[0]
    assert natural < 1e-8


def test_limit_residuals_catch_sigma_mismatch():
    am = validate_adapted(rosen_wave().metric())
    transformed, flow, report = penrose_of_conformal(am, field_on("0.2*sin(u)"))
    us = am.probe_us()
    transverse, natural = conformal_limit_residuals(am, flow, transformed, us)
    assert transverse < 1e-8 and natural < 1e-8

    # only the metric side sees the extra u^2 term
    other = ConformalFlow(field_on("0.2*sin(u) + 0.1*u^2"), flow.u_base, am.u_domain)
    transverse, natural = conformal_limit_residuals(am, other, transformed, us)
    assert transverse > 1e-3
    assert natural < 1e-8

    # and only the limit side sees it here
    shifted, _, _ = penrose_of_conformal(am, field_on("0.2*sin(u) + 0.1*u^2"))
    transverse, _ = conformal_limit_residuals(am, flow, shifted, us)
    assert transverse > 1e-3


def test_pulled_back_metric_keeps_adapted_shape():
    am = validate_adapted(adapted_from_brinkmann(PlaneWaveSpec.regular(SADDLE, ROTATION)))
    flow = ConformalFlow(field_on("0.3*u + 0.2*v - 0.4*x1"), 0.0, am.u_domain)
    for u in (-0.7, 0.1, 0.9):
        pulled = pulled_back_metric(am.metric, flow, u)
        np.testing.assert_allclose(pulled[0], [0.0, 1.0, 0.0, 0.0], atol=1e-10)
        K = math.exp(0.3 * u)
        np.testing.assert_allclose(pulled[2:, 2:], K * am.metric.matrix(am.central_point(u))[2:, 2:], atol=1e-10)


def random_sigma(rng):
    a, b, c, d = rng.uniform(-0.3, 0.3, size=4)
    u, v, x1, x2 = (CoordinateField(i, 4) for i in range(4))
    return a * u + b * v + c * x1 + d * (u * x2)


@pytest.mark.parametrize(
    "make_metric",
    [
        lambda: rosen_wave().metric(),
        lambda: adapted_from_brinkmann(PlaneWaveSpec.regular(SADDLE, ROTATION)),
        lambda: adapted_from_exprs({(2, 2): "1+v+x1^2+x2^2", (3, 3): "1+v+x1^2+x2^2"}),
    ],
)
def test_conformal_naturality_random_sigma(make_metric):
    rng = np.random.default_rng(42)
    am = validate_adapted(make_metric())
    probes = default_probe_grid(2)[::4]
    for _ in range(5):
        _, flow, report = penrose_of_conformal(am, random_sigma(rng), probes=probes)
        assert report.passed, report.table()


def test_flow_jets_follow_the_integrand():
    sigma = field_on("0.3*v+0.2*x1")
    flow = ConformalFlow(sigma)
    # f = u exp(0.3 v + 0.2 x1)
    p = np.array([0.6, 0.5, 0.4, 0.0])
    jet = flow.f_coeffs(p, 1)
    K = math.exp(0.3 * 0.5 + 0.2 * 0.4)
    np.testing.assert_allclose(jet, [0.6 * K, K, 0.3 * 0.6 * K, 0.2 * 0.6 * K, 0.0], atol=1e-11)


def test_inverse_outside_domain_fails():
    flow = ConformalFlow(ConstantField(0.0, 3), u_domain=(0.0, 1.0))
    with pytest.raises(RootFindingError):
        flow.h(5.0)


# ============ Brinkmann to Rosen ============


def test_rosen_of_flat_wave_is_identity():
    rosen = brinkmann_to_rosen(PlaneWaveSpec.generic([["0", "0"], ["0", "0"]]))
    np.testing.assert_allclose(rosen.matrix(0.7), np.eye(2), atol=1e-14)


@pytest.mark.parametrize(
    "q, expected",
    [
        ("-1", lambda u: math.cos(u) ** 2),
        ("1", lambda u: math.cosh(u) ** 2),
    ],
)
def test_rosen_closed_forms(q, expected):
    rosen = brinkmann_to_rosen(PlaneWaveSpec.generic([[q]]), window=(-1.0, 1.0))
    for u in (-0.9, -0.3, 0.0, 0.5, 1.0):
        assert rosen.matrix(u)[0, 0] == pytest.approx(expected(u), abs=1e-10)


def test_rosen_derivative_of_cosine_profile():
    rosen = brinkmann_to_rosen(PlaneWaveSpec.generic([["-1"]]), window=(-1.0, 1.0))
    taylor = rosen.taylor(0.5, 2)
    assert taylor[1, 0, 0] == pytest.approx(-math.sin(1.0), abs=1e-10)
    assert taylor[2, 0, 0] == pytest.approx(-math.cos(1.0), abs=1e-10)


def test_conjugate_point_reported():
    with pytest.raises(ConjugatePointError) as info:
        brinkmann_to_rosen(PlaneWaveSpec.generic([["-1"]]), window=(0.0, 2.0))
    assert info.value.u == pytest.approx(math.pi / 2, abs=1e-6)


def test_rosen_curvature_matches_brinkmann():
    spec = PlaneWaveSpec.regular(SADDLE, ROTATION)
    rosen = brinkmann_to_rosen(spec)
    for u in (-0.8, 0.1, 0.9):
        E = rosen.frame(u)
        R = curvature(rosen.metric(), [u, 0.2, 0.0, 0.0]).riemann_lower
        np.testing.assert_allclose(R[2:, 0, 2:, 0], E.T @ spec.Q(u) @ E, atol=1e-6)


# ============ dichotomy ============


def test_dichotomy_flat_wave():
    result = plane_wave_limit_dichotomy(PlaneWaveSpec.generic([["0", "0"], ["0", "0"]]))
    assert result.flat
    assert result.reproduces_input
    assert curvature(result.self_limit.metric(), [0.2, 0.0, 0.0, 0.0]).riemann_norm < 1e-12


@pytest.mark.parametrize(
    "spec",
    [
        PlaneWaveSpec.regular(SADDLE, np.zeros((2, 2))),
        PlaneWaveSpec.regular(SADDLE, ROTATION),
        PlaneWaveSpec.singular(np.array([[1.0, 0.2], [0.2, -0.5]]), ROTATION),
    ],
)
def test_dichotomy_homogeneous_specs(spec):
    result = plane_wave_limit_dichotomy(spec)
    assert result.flat_residual < 1e-9
    assert result.reproduces_input
    assert result.curvature_residual < 1e-6
    if spec.family == "singular":
        assert result.rosen.domain == (0.5, 2.0)
    table = result.table()
    assert list(table["limit"]) == ["xi-tangent", "transversal", "transversal"]
