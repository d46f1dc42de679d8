import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from riemoreau.manifolds import (
    CutLocusError,
    Cylinder,
    Euclidean,
    GeodesicSegment,
    GeometryError,
    Hyperboloid,
    PoincareHalfPlane,
    Sphere,
    acosh1p,
    make_model,
    minkowski,
    product_dist,
)

ALL_MODELS = [Euclidean(1), Euclidean(2), Euclidean(3), Hyperboloid(1), Hyperboloid(2),
              Hyperboloid(3), PoincareHalfPlane(), Cylinder(), Sphere()]
IDS = [m.name for m in ALL_MODELS]


def sample_radius(m):
    # stay inside the injectivity domain on the compact-ish models
    return 1.2 if not m.cartan_hadamard else 2.5


# ---------------------------------------------------------------------------
# ODE oracles
# ---------------------------------------------------------------------------


def hyperboloid_ode(t, state, n):
    x, v, w = state[:n], state[n:2 * n], state[2 * n:]
    # geodesic: x'' = <x', x'>_L x ; transport: W' = <W, x'>_L x
    return np.concatenate([v, minkowski(v, v) * x, minkowski(w, v) * x])


def sphere_ode(t, state):
    x, v, w = state[:3], state[3:6], state[6:]
    return np.concatenate([v, -np.dot(v, v) * x, -np.dot(w, v) * x])


def halfplane_ode(t, s):
    x, y, dx, dy, wx, wy = s
    return [dx, dy, 2 * dx * dy / y, (dy * dy - dx * dx) / y,
            (dx * wy + dy * wx) / y, (-dx * wx + dy * wy) / y]


def integrate(fun, y0, args=()):
    sol = solve_ivp(fun, (0.0, 1.0), y0, args=args, rtol=1e-12, atol=1e-12, method="DOP853")
    assert sol.success
    return sol.y[:, -1]


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_hyperboloid_exp_and_transport_match_ode(dim):
    m = Hyperboloid(dim)
    rng = np.random.default_rng(dim)
    for _ in range(5):
        p = m.random_point(m.origin(), 1.5, rng)
        v = m.random_unit_tangent(p, rng) * 1.3
        w = m.random_unit_tangent(p, rng)
        end = integrate(hyperboloid_ode, np.concatenate([p, v, w]), (dim + 1,))
        q = m.exp(p, v)
        assert np.allclose(q, end[:dim + 1], atol=1e-9)
        if dim > 1:
            assert np.allclose(m.parallel_transport(p, q, w), end[2 * (dim + 1):], atol=1e-9)


def test_sphere_exp_and_transport_match_ode():
    m = Sphere()
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = m.random_point(m.origin(), 1.0, rng)
        v = m.random_unit_tangent(p, rng) * 2.0
        w = m.random_unit_tangent(p, rng)
        end = integrate(sphere_ode, np.concatenate([p, v, w]))
        q = m.exp(p, v)
        assert np.allclose(q, end[:3], atol=1e-9)
        assert np.allclose(m.parallel_transport(p, q, w), end[6:], atol=1e-9)


def test_halfplane_exp_and_transport_match_christoffel_ode():
    m = PoincareHalfPlane()
    rng = np.random.default_rng(4)
    for _ in range(5):
        p = m.random_point(m.origin(), 1.5, rng)
        v = m.random_unit_tangent(p, rng) * 1.7
        w = m.random_unit_tangent(p, rng)
        end = integrate(halfplane_ode, np.concatenate([p, v, w]))
        q = m.exp(p, v)
        assert np.allclose(q, end[:2], atol=1e-9)
        assert np.allclose(m.parallel_transport(p, q, w), end[4:], atol=1e-9)


# ---------------------------------------------------------------------------
# Documented examples
# ---------------------------------------------------------------------------


def test_euclidean_exp_and_log_examples():
    m = Euclidean(2)
    assert np.allclose(m.exp([0.0, 0.0], [1.0, 0.0], 2.0), [2.0, 0.0])
    v = m.log([1.0, 1.0], [4.0, 5.0])
    assert np.allclose(v, [3.0, 4.0])
    assert m.norm([1.0, 1.0], v) == pytest.approx(5.0)


def test_sphere_half_turn_reaches_antipode():
    m = Sphere()
    north = m.origin()
    v = m.tangent_basis(north)[0]
    assert np.allclose(m.exp(north, v, math.pi), [0.0, 0.0, -1.0], atol=1e-12)


@pytest.mark.parametrize("s", [0.1, 1.0, 3.0])
def test_hyperboloid_1d_exp_is_cosh_sinh(s):
    m = Hyperboloid(1)
    v = m.tangent_basis(m.origin())[0]
    assert np.allclose(m.exp(m.origin(), v, s), [math.cosh(s), math.sinh(s)], rtol=1e-13)


def test_hyperboloid_distance_example():
    m = Hyperboloid(2)
    q = np.array([math.cosh(1.0), math.sinh(1.0), 0.0])
    assert m.dist(m.origin(), q) == pytest.approx(1.0, abs=1e-14)


def test_hyperboloid_distance_matches_path_length():
    m = Hyperboloid(2)
    rng = np.random.default_rng(5)
    p, q = m.random_point(m.origin(), 2.0, rng, size=2)
    seg = m.geodesic(p, q)
    t = np.linspace(0.0, 1.0, 20001)
    pts = seg(t)
    steps = np.diff(pts, axis=0)
    length = np.sum(np.sqrt(np.maximum(minkowski(steps, steps), 0.0)))
    assert length == pytest.approx(float(m.dist(p, q)), rel=1e-7)


def test_cylinder_examples():
    m = Cylinder()
    assert m.dist([0.0, 0.0], [1.5 * math.pi, 0.0]) == pytest.approx(math.pi / 2)
    assert np.allclose(m.log([0.0, 0.0], [math.pi - 0.1, 0.0]), [math.pi - 0.1, 0.0])
    with pytest.raises(CutLocusError, match="cylinder"):
        m.log([0.0, 0.0], [math.pi, 0.3])


def test_cylinder_distance_matches_brute_force_wrap():
    m = Cylinder()
    rng = np.random.default_rng(6)
    p = np.column_stack([rng.uniform(-10, 10, 500), rng.normal(size=500)])
    q = np.column_stack([rng.uniform(-10, 10, 500), rng.normal(size=500)])
    ks = np.arange(-5, 6)
    brute = np.min(np.hypot(q[:, None, 0] - p[:, None, 0] + 2 * math.pi * ks,
                            (q[:, 1] - p[:, 1])[:, None]), axis=1)
    assert np.allclose(m.dist(p, q), brute, atol=1e-12)


def test_sphere_antipode_log_raises():
    m = Sphere()
    with pytest.raises(CutLocusError, match="sphere"):
        m.log(m.origin(), -m.origin())


def test_dimension_mismatch_is_rejected():
    with pytest.raises(GeometryError):
        Hyperboloid(2).exp(np.zeros(2), np.zeros(2))


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
def test_distance_to_self_is_zero(m):
    p = m.random_point(m.origin(), 1.0, np.random.default_rng(0))
    assert float(m.dist(p, p)) <= 1e-12


def test_acosh1p_small_arguments():
    mp = pytest.importorskip("mpmath")
    for u in [1e-30, 1e-14, 1e-9, 1e-6, 1e-3, 0.5, 10.0, 1e6]:
        with mp.workdps(50):
            exact = float(mp.acosh(1 + mp.mpf(u)))
        assert float(acosh1p(u)) == pytest.approx(exact, rel=1e-14)


def test_make_model_rejects_unknown_names():
    with pytest.raises(GeometryError):
        make_model("torus")


# ---------------------------------------------------------------------------
# Structural facts
# ---------------------------------------------------------------------------


def test_curvature_flags():
    signs = {m.name: (m.curvature_sign, m.cartan_hadamard) for m in ALL_MODELS}
    assert signs["hyperboloid(2)"] == (-1, True)
    assert signs["halfplane"] == (-1, True)
    assert signs["euclidean(2)"] == (0, True)
    assert signs["cylinder"] == (0, False)
    assert signs["sphere"] == (1, False)


def angle_sum(m, a, b, c):
    total = 0.0
    for p, q, r in ((a, b, c), (b, c, a), (c, a, b)):
        u, v = m.log(p, q), m.log(p, r)
        cos = m.inner(p, u, v) / (m.norm(p, u) * m.norm(p, v))
        total += math.acos(float(np.clip(cos, -1.0, 1.0)))
    return total


@pytest.mark.parametrize("m", [Euclidean(2), Hyperboloid(2), PoincareHalfPlane(), Cylinder(),
                               Sphere()], ids=lambda m: m.name)
def test_curvature_sign_from_triangle_angle_sums(m):
    rng = np.random.default_rng(7)
    center = m.random_point(m.origin(), 0.5, rng)
    basis = m.tangent_basis(center)
    excess = []
    for k in range(5):
        phase = rng.uniform(0, 2 * math.pi)
        verts = [m.exp(center, 0.4 * (math.cos(phase + j * 2.1) * basis[0]
                                      + math.sin(phase + j * 2.1) * basis[1])) for j in range(3)]
        excess.append(angle_sum(m, *verts) - math.pi)
    excess = np.array(excess)
    if m.curvature_sign > 0:
        assert np.all(excess > 1e-4)
    elif m.curvature_sign < 0:
        assert np.all(excess < -1e-4)
    else:
        assert np.all(np.abs(excess) < 1e-10)


@pytest.mark.parametrize("m", [Sphere(), Cylinder()], ids=lambda m: m.name)
def test_balls_below_convexity_radius_are_convex(m):
    rng = np.random.default_rng(8)
    r = 0.98 * m.convexity_radius()
    c = m.origin()
    a = m.random_point(c, r, rng, size=2000)
    b = m.random_point(c, r, rng, size=2000)
    mids = m.exp(a, 0.5 * m.log(a, b))
    assert np.all(m.dist(c, mids) <= r + 1e-12)


def test_sphere_ball_beyond_convexity_radius_is_not_convex():
    m = Sphere()
    r = 2.0
    colat = r - 0.01
    a = np.array([math.sin(colat), 0.0, math.cos(colat)])
    b = np.array([math.sin(colat) * math.cos(0.5), math.sin(colat) * math.sin(0.5),
                  math.cos(colat)])
    mid = m.exp(a, 0.5 * m.log(a, b))
    assert m.dist(m.origin(), mid) > r


def test_cylinder_ball_beyond_convexity_radius_is_not_convex():
    m = Cylinder()
    a, b = np.array([math.pi / 2 + 0.05, 0.0]), np.array([-math.pi / 2 - 0.05, 0.0])
    r = math.pi / 2 + 0.06
    assert m.dist(m.origin(), a) < r and m.dist(m.origin(), b) < r
    mid = m.exp(a, 0.5 * m.log(a, b))
    assert m.dist(m.origin(), mid) > r


def test_convexity_radii():
    assert Euclidean(2).convexity_radius() == math.inf
    assert Hyperboloid(2).convexity_radius() == math.inf
    assert PoincareHalfPlane().convexity_radius() == math.inf
    assert Sphere().convexity_radius() == pytest.approx(math.pi / 2)
    assert Cylinder().convexity_radius() == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
def test_tangent_basis_is_orthonormal(m):
    p = m.random_point(m.origin(), 1.0, np.random.default_rng(9))
    B = m.tangent_basis(p)
    gram = np.array([[m.inner(p, u, v) for v in B] for u in B])
    assert np.allclose(gram, np.eye(m.dim), atol=1e-12)
    for v in B:
        m.check_tangent(p, v)


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
def test_triangle_inequality_on_random_triples(m):
    rng = np.random.default_rng(10)
    p, q, r = (m.random_point(m.origin(), 2.0, rng, size=1000) for _ in range(3))
    assert np.all(m.dist(p, r) <= m.dist(p, q) + m.dist(q, r) + 1e-10)


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
def test_geodesic_segment_endpoints_and_constant_speed(m):
    rng = np.random.default_rng(11)
    p, q = m.random_point(m.origin(), 1.0, rng, size=2)
    seg = m.geodesic(p, q)
    assert np.allclose(seg(0.0), p, atol=1e-9) and np.allclose(seg(1.0), q, atol=1e-9)
    t = np.linspace(0.0, 0.99, 12)
    h = 0.01
    step = m.dist(seg(t), seg(t + h))
    assert np.allclose(step, h * seg.length, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
def test_product_geodesic_midpoint(m):
    # (gamma(t), sigma(t)) is a geodesic of M x M: the midpoint halves the product distance
    rng = np.random.default_rng(12)
    for _ in range(20):
        g = GeodesicSegment(m, *m.random_point(m.origin(), 1.0, rng, size=2))
        s = GeodesicSegment(m, *m.random_point(m.origin(), 1.0, rng, size=2))
        a, mid, b = (g(0.0), s(0.0)), (g(0.5), s(0.5)), (g(1.0), s(1.0))
        total = product_dist(m, a, b)
        assert product_dist(m, a, mid) == pytest.approx(0.5 * total, abs=1e-9)
        assert product_dist(m, mid, b) == pytest.approx(0.5 * total, abs=1e-9)


def test_sphere_transport_of_velocity_is_velocity():
    m = Sphere()
    rng = np.random.default_rng(13)
    p, q = m.random_point(m.origin(), 1.0, rng, size=2)
    v = m.log(p, q)
    assert np.allclose(m.parallel_transport(p, q, v), -m.log(q, p), atol=1e-12)


def test_euclidean_transport_is_identity():
    m = Euclidean(3)
    v = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(m.parallel_transport(np.zeros(3), np.ones(3), v), v)


# ---------------------------------------------------------------------------
# Property tests
# ---------------------------------------------------------------------------

coords = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3)
seeds = st.integers(0, 2**31 - 1)


def point_and_vector(m, seed, c, scale):
    rng = np.random.default_rng(seed)
    p = m.random_point(m.origin(), sample_radius(m), rng)
    v = m.from_chart(p, np.asarray(c[:m.dim]) * scale)
    return p, v


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
@settings(max_examples=40, deadline=None)
@given(seed=seeds, c=coords)
def test_log_inverts_exp(m, seed, c):
    # |v| < convexity radius keeps q inside the injectivity domain
    p, v = point_and_vector(m, seed, c, 0.85)
    q = m.exp(p, v)
    assert np.allclose(m.log(p, q), v, atol=1e-8)
    assert float(m.norm(p, m.log(p, q))) == pytest.approx(float(m.dist(p, q)), abs=1e-9)
    assert np.allclose(m.exp(p, m.log(p, q)), q, atol=1e-9)


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
@settings(max_examples=40, deadline=None)
@given(seed=seeds, c1=coords, c2=coords, c3=coords)
def test_transport_is_an_isometry_and_invertible(m, seed, c1, c2, c3):
    p, step = point_and_vector(m, seed, c1, 0.85)
    q = m.exp(p, step)
    u = m.from_chart(p, np.asarray(c2[:m.dim]))
    v = m.from_chart(p, np.asarray(c3[:m.dim]))
    Lu, Lv = m.parallel_transport(p, q, u), m.parallel_transport(p, q, v)
    assert float(m.inner(q, Lu, Lv)) == pytest.approx(float(m.inner(p, u, v)), abs=1e-8)
    assert np.allclose(m.parallel_transport(q, p, Lu), u, atol=1e-9)
    m.check_tangent(q, Lu, tol=1e-9)


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
@settings(max_examples=40, deadline=None)
@given(seed=seeds, c=coords, t=st.floats(0.0, 1.0))
def test_geodesics_are_minimizing_below_injectivity(m, seed, c, t):
    p, v = point_and_vector(m, seed, c, 0.85)
    assert float(m.dist(p, m.exp(p, v, t))) == pytest.approx(t * float(m.norm(p, v)), abs=1e-8)


@pytest.mark.parametrize("m", ALL_MODELS, ids=IDS)
@settings(max_examples=30, deadline=None)
@given(seed=seeds, c1=coords, c2=coords)
def test_inner_product_is_symmetric_and_cauchy_schwarz(m, seed, c1, c2):
    p, u = point_and_vector(m, seed, c1, 1.0)
    v = m.from_chart(p, np.asarray(c2[:m.dim]))
    assert float(m.inner(p, u, v)) == pytest.approx(float(m.inner(p, v, u)), abs=1e-12)
    assert abs(float(m.inner(p, u, v))) <= float(m.norm(p, u) * m.norm(p, v)) + 1e-12
    assert float(m.norm(p, 0.0 * u)) == 0.0


def sample_isometries():
    e2, h2, hp, cyl, sph = Euclidean(2), Hyperboloid(2), PoincareHalfPlane(), Cylinder(), Sphere()
    q = h2.random_point(h2.origin(), 1.0, np.random.default_rng(1))
    return [
        (e2, e2.rotation_about(np.array([0.3, -1.0]), 0.9)),
        (e2, e2.translation(np.array([2.0, -1.0]))),
        (e2, e2.reflection_about(np.array([0.5, 0.5]))),
        (h2, h2.rotation_about(q, 1.1)),
        (h2, h2.rotation_about(h2.origin(), 2.0)),
        (hp, hp.rotation_about(np.array([0.4, 2.0]), 0.7)),
        (hp, hp.dilation(3.0)),
        (hp, hp.translation(-1.5)),
        (cyl, cyl.theta_translation(2.5)),
        (cyl, cyl.z_translation(-0.4)),
        (cyl, cyl.z_reflection()),
        (sph, sph.rotation(np.array([1.0, 2.0, 0.5]), 0.8)),
    ]


@pytest.mark.parametrize("m, iso", sample_isometries(), ids=lambda v: getattr(v, "name", None)
                         or getattr(v, "description", None))
@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_isometries_preserve_distance_and_inner_products(m, iso, seed):
    rng = np.random.default_rng(seed)
    p, q = m.random_point(m.origin(), 2.0 if m.cartan_hadamard else 1.2, rng, size=2)
    assert float(m.dist(iso(p), iso(q))) == pytest.approx(float(m.dist(p, q)), abs=1e-9)
    u, v = m.log(p, q), m.random_unit_tangent(p, rng)
    Tu, Tv = iso.apply_tangent(p, u), iso.apply_tangent(p, v)
    assert float(m.inner(iso(p), Tu, Tv)) == pytest.approx(float(m.inner(p, u, v)), abs=1e-9)
    # the differential carries log_p q to log_Tp Tq
    assert np.allclose(m.log(iso(p), iso(q)), Tu, atol=1e-8)
