import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riemoreau.envelope import EnvelopeParams
from riemoreau.fields import builtin_field, constant, distance, linear, squared_distance
from riemoreau.manifolds import Cylinder, Euclidean, Hyperboloid, Isometry, PoincareHalfPlane, Sphere
from riemoreau.verification import (
    CheckReport,
    GeodesicSamplePlan,
    check_c1,
    check_convergence,
    check_distance_joint_convexity,
    check_gradient,
    check_localization,
    check_midpoint_convexity,
    check_minimizer_preservation,
    check_order,
    check_symmetry,
    envelope_function,
    finite_difference_gradient,
    lambda_sweep,
    parallel_meridians,
    reports_to_json,
    run_bundle,
    select_lambda0,
)

IDENTITY = Isometry(lambda x: np.asarray(x, float), lambda x, v: v, "identity")


# ---------------------------------------------------------------------------
# Midpoint and joint convexity
# ---------------------------------------------------------------------------


def test_half_squared_distance_is_midpoint_convex_on_the_hyperboloid():
    m = Hyperboloid(2)
    report = check_midpoint_convexity(m, squared_distance(m), GeodesicSamplePlan(500, radius=3.0))
    assert report.passed
    assert report.samples == 500


def test_linear_functions_have_zero_midpoint_defect():
    m = Euclidean(3)
    report = check_midpoint_convexity(m, linear(m, [1.0, -2.0, 0.5], 3.0),
                                      GeodesicSamplePlan(200, radius=2.0))
    assert abs(report.worst_violation) < 1e-14


def test_squared_distance_on_the_sphere_fails_near_the_cut_locus():
    m = Sphere()
    report = check_midpoint_convexity(m, squared_distance(m),
                                      GeodesicSamplePlan(500, (0.05, 0.6), radius=3.0))
    assert not report.passed
    assert report.worst_violation > 1e-3
    assert report.witnesses[0]["raw_violation"] > 0


def test_joint_convexity_of_distance_holds_on_the_hyperboloid():
    report = check_distance_joint_convexity(Hyperboloid(2), GeodesicSamplePlan(300, radius=2.0))
    assert report.passed


def test_parallel_meridians_break_joint_convexity():
    m = Sphere()
    sep, half = 0.5, 0.5
    report = check_distance_joint_convexity(m, pairs=[parallel_meridians(m, sep, half)])
    # spherical law of cosines: both ends sit at latitude +-half, longitudes 0 and sep
    d_end = math.acos(math.cos(half) ** 2 * math.cos(sep) + math.sin(half) ** 2)
    expected = sep - d_end
    assert report.witnesses[0]["raw_violation"] == pytest.approx(expected, abs=1e-12)
    assert expected > 1e-3
    assert not report.passed


def test_envelope_of_a_ball_indicator_is_midpoint_convex():
    m = PoincareHalfPlane()
    f = builtin_field(m, "indicator_ball", radius=1.0)
    g = envelope_function(m, f, EnvelopeParams(1.0))
    assert check_midpoint_convexity(m, g, GeodesicSamplePlan(100, radius=2.0)).passed


# ---------------------------------------------------------------------------
# Order, sweep and convergence
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("m", [Hyperboloid(2), Cylinder(), Sphere(), Euclidean(2)],
                         ids=lambda m: m.name)
def test_order_and_monotonicity_hold(m):
    f = squared_distance(m)
    pts = m.random_point(m.origin(), 1.0, np.random.default_rng(0), size=60)
    assert check_order(m, f, [0.1, 0.5, 2.0], pts, EnvelopeParams(1.0)).passed


def test_lambda_sweep_for_distance_matches_the_closed_form():
    m = Hyperboloid(2)
    pts = m.random_point(m.origin(), 3.0, np.random.default_rng(1), size=100)
    d = m.dist(pts, m.origin())
    for row in lambda_sweep(m, distance(m), [0.05, 0.5, 1.0], pts, EnvelopeParams(1.0)):
        lam = row["lam"]
        gap = d - np.where(d <= lam, d ** 2 / (2 * lam), d - lam / 2)
        assert row["sup_gap"] == pytest.approx(gap.max(), abs=1e-9)
        assert row["sup_gap"] <= lam / 2 + 1e-12


def test_lambda_sweep_constant_has_no_gap():
    m = Cylinder()
    pts = m.random_point(m.origin(), 1.0, np.random.default_rng(2), size=20)
    for row in lambda_sweep(m, constant(m, 2.5), [0.1, 1.0], pts, EnvelopeParams(1.0)):
        assert row["sup_gap"] == 0.0 and row["mean_gap"] == 0.0


def test_lambda_sweep_euclidean_quadratic():
    m = Euclidean(2)
    pts = np.random.default_rng(3).uniform(-2, 2, size=(50, 2))
    r2 = np.sum(pts ** 2, axis=1)
    for row in lambda_sweep(m, squared_distance(m), [0.1, 1.0, 4.0], pts, EnvelopeParams(1.0)):
        lam = row["lam"]
        gap = r2 * lam / (2 * (1 + lam))
        assert row["sup_gap"] == pytest.approx(gap.max(), abs=1e-10)
        assert row["mean_gap"] == pytest.approx(gap.mean(), abs=1e-10)


def test_convergence_check_passes_for_distance():
    m = Hyperboloid(2)
    pts = m.random_point(m.origin(), 3.0, np.random.default_rng(4), size=100)
    report = check_convergence(m, distance(m), [1.0, 0.1, 0.01], pts, EnvelopeParams(1.0),
                               radius=3.0)
    assert report.passed
    assert [r["lam"] for r in report.params["rows"]] == [0.01, 0.1, 1.0]


# ---------------------------------------------------------------------------
# Minimizers and symmetry
# ---------------------------------------------------------------------------


def test_minimizers_are_preserved_for_distance_and_indicator():
    from riemoreau.envelope import ball_grid

    m = Hyperboloid(2)
    grid, _, h = ball_grid(m, m.origin(), 1.5, 6.0, 800)
    for f in (distance(m), builtin_field(m, "indicator_ball", radius=0.5)):
        report = check_minimizer_preservation(m, f, [0.1, 1.0], grid, h, EnvelopeParams(1.0))
        assert report.passed, report.summary_line()


def test_constant_fields_keep_every_minimizer():
    m = Euclidean(2)
    grid = np.random.default_rng(5).uniform(-1, 1, size=(30, 2))
    report = check_minimizer_preservation(m, constant(m, 1.0), [0.5], grid, 0.1,
                                          EnvelopeParams(1.0))
    assert report.passed


def test_identity_symmetry_is_exact():
    m = Hyperboloid(2)
    pts = m.random_point(m.origin(), 2.0, np.random.default_rng(6), size=20)
    report = check_symmetry(m, distance(m), IDENTITY, 0.5, pts, EnvelopeParams(1.0))
    assert report.worst_violation == 0.0


@pytest.mark.parametrize("case", ["hyperboloid", "cylinder"])
def test_declared_symmetries_carry_over_to_the_envelope(case):
    if case == "hyperboloid":
        m = Hyperboloid(2)
        f = builtin_field(m, "indicator_ball", radius=1.0)
    else:
        m = Cylinder()
        f = builtin_field(m, "squared_distance_to_circle")
    pts = m.random_point(m.origin(), 1.5, np.random.default_rng(7), size=20)
    for iso in f.symmetries:
        assert check_symmetry(m, f, iso, 0.7, pts, EnvelopeParams(1.0)).passed


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def test_finite_difference_gradient_of_squared_distance():
    m = Hyperboloid(2)
    p = m.origin()
    f = squared_distance(m, p)
    for x in m.random_point(p, 2.0, np.random.default_rng(8), size=10):
        fd = finite_difference_gradient(m, f, x, 1e-5)
        exact = -m.log(x, p)
        assert float(m.norm(x, fd - exact)) < 1e-8


def test_gradient_check_passes_on_smooth_and_nonsmooth_fields():
    m = Hyperboloid(2)
    pts = m.random_point(m.origin(), 2.0, np.random.default_rng(9), size=20)
    for f in (distance(m), builtin_field(m, "indicator_ball", radius=1.0)):
        assert check_gradient(m, f, 0.5, pts, EnvelopeParams(1.0)).passed


@pytest.mark.parametrize("m", [Hyperboloid(2), Euclidean(2), PoincareHalfPlane()],
                         ids=lambda m: m.name)
def test_c1_ladder_respects_the_comparison_bound(m):
    pts = m.random_point(m.origin(), 2.0, np.random.default_rng(10), size=10)
    for f in (distance(m), builtin_field(m, "indicator_ball", radius=0.0)):
        report = check_c1(m, f, 0.5, pts, EnvelopeParams(1.0))
        assert report.passed, report.summary_line()


def test_localization_check_passes():
    m = Hyperboloid(2)
    f = builtin_field(m, "indicator_ball", radius=1.0)
    rng = np.random.default_rng(11)
    xs = f.domain.sample(rng, 5)
    report = check_localization(m, f, xs, [0.1, 0.5, 1.0, 2.0, 0.3], EnvelopeParams(1.0))
    assert report.passed


# ---------------------------------------------------------------------------
# Reports and bundles
# ---------------------------------------------------------------------------


def test_report_json_schema():
    rep = CheckReport("demo", "Euclidean(2)", "f", 3, -math.inf, 1e-7,
                      [{"x": np.array([1.0, 2.0]), "flag": np.bool_(True)}], {"lam": 0.5})
    doc = json.loads(reports_to_json([rep]))
    (entry,) = doc["reports"]
    assert set(entry) == {"check_name", "model", "field", "params", "samples",
                          "worst_violation", "tolerance", "pass", "witnesses"}
    assert entry["worst_violation"] == "-inf"
    assert entry["pass"] is True
    assert entry["witnesses"][0]["x"] == [1.0, 2.0]


def test_report_pass_rule_is_exact():
    assert CheckReport("a", "m", "f", 1, 1e-7, 1e-7).passed
    assert not CheckReport("a", "m", "f", 1, 1.0000001e-7, 1e-7).passed


@settings(max_examples=50, deadline=None)
@given(k=st.floats(0.01, 10), R=st.floats(0.0, 5.0), r=st.floats(0.05, 1.5))
def test_select_lambda0_solves_the_radius_equation(k, R, r):
    lam0 = select_lambda0(k, R, r)
    assert 0 < lam0 < 1 / (2 * k)

    def radius(lam):
        return math.sqrt(lam * (2 * k + k * (1 + 2 * R * R)) / (1 - 2 * lam * k))

    assert radius(lam0) == pytest.approx(r, rel=1e-9)
    assert radius(0.9 * lam0) < r


def test_select_lambda0_is_unbounded_without_a_convexity_radius():
    assert select_lambda0(1.0, 1.0, math.inf) == math.inf


def test_cartan_hadamard_bundle_passes_and_is_reproducible():
    m = Hyperboloid(2)
    f = distance(m)
    a = run_bundle("cartan-hadamard", m, f, [0.5, 1.0], radius=1.5, samples=12, seed=3)
    b = run_bundle("cartan-hadamard", m, f, [0.5, 1.0], radius=1.5, samples=12, seed=3)
    assert all(r.passed for r in a), [r.summary_line() for r in a if not r.passed]
    assert reports_to_json(a) == reports_to_json(b)


def test_main_corollary_bundle_on_the_sphere():
    m = Sphere()
    reports = run_bundle("main-corollary", m, squared_distance(m), [0.05, 10.0], radius=0.3,
                         samples=10)
    assert all(r.passed for r in reports)
    # the large lambda is dropped in favour of ones below the bounded-region threshold
    assert all(r.params.get("lambdas", [0.05]) == [0.05] for r in reports
               if r.check_name == "order-monotonicity")


def test_bundle_errors():
    with pytest.raises(ValueError, match="Cartan-Hadamard"):
        run_bundle("cartan-hadamard", Sphere(), squared_distance(Sphere()), [0.1])
    with pytest.raises(ValueError, match="unknown bundle"):
        run_bundle("nope", Euclidean(2), squared_distance(Euclidean(2)), [0.1])
