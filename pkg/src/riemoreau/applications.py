"""Distance-to-set smoothing, convex-body approximation, the sphere
counterexample search and the Hamilton-Jacobi table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .envelope import EnvelopeParams, ParameterError, hj_residual, moreau_envelope_batch
from .fields import ConvexSetOracle, geodesic_segment_set
from .manifolds import Hyperboloid, ManifoldModel, Sphere
from .verification import CheckReport


class NotCartanHadamardError(ValueError):
    """Raised when a construction needs nonpositive curvature and simple connectivity."""


def _require_ch(model):
    if not model.cartan_hadamard:
        raise NotCartanHadamardError(
            f"{model.name} is not Cartan-Hadamard; d(., C)^2 need not be convex there "
            "(see sphere_counterexample)"
        )


def dist_to_set_sq(model, C: ConvexSetOracle, x):
    """``d(x, C)^2`` and its gradient ``-2 log_x(proj_C x)``."""
    _require_ch(model)
    x = np.asarray(x, dtype=float)
    y = C.project(x)
    d = float(model.dist(x, y))
    if d == 0.0:
        return 0.0, np.zeros_like(x)
    return d * d, -2.0 * model.log(x, y)


@dataclass
class ConvexBody:
    """``D = {x : d(x, C) <= radius}`` with the sampled property reports."""

    model: ManifoldModel
    core: ConvexSetOracle
    radius: float
    reports: list = field(default_factory=list)

    def contains(self, x):
        return self.core.distance(np.asarray(x, float)) <= self.radius + 1e-12

    @property
    def passed(self):
        return all(r.passed for r in self.reports)


def convex_body_approx(model, C, margin, samples=200, seed=0):
    """Thicken ``C`` by ``margin`` (half the gap to the boundary of ``U``)."""
    _require_ch(model)
    r = float(margin)
    if not r > 0:
        raise ParameterError("the thickening radius must be positive")
    rng = np.random.default_rng(seed)
    body = ConvexBody(model, C, r)

    core = C.sample(rng, samples)
    miss = np.where(body.contains(core), 0.0, C.distance(core))
    body.reports.append(CheckReport("core-inside-body", model.name, C.description, samples,
                                    float(np.max(miss)), 0.0, [], {"radius": r}))

    # points spread around C; those in D must stay well inside U = {d < 2r}
    seeds = C.sample(rng, samples)
    dirs = np.array([model.random_unit_tangent(s, rng) for s in seeds])
    pts = model.exp(seeds, dirs * (3.0 * r * rng.random(samples))[:, None])
    d = C.distance(pts)
    inside = d <= r
    excess = np.where(inside, d - r, -np.inf)
    body.reports.append(CheckReport("body-inside-neighbourhood", model.name, C.description,
                                    int(inside.sum()), float(np.max(excess, initial=-r)), 0.0,
                                    [], {"radius": r, "outer": 2 * r}))

    # boundary points along normal geodesics leaving C
    outside = pts[d > 1e-6]
    proj = C.project(outside)
    v = model.log(proj, outside)
    v = v / model.norm(proj, v)[:, None]
    bnd = model.exp(proj, r * v)
    grad_norms = np.array([model.norm(b, dist_to_set_sq(model, C, b)[1]) for b in bnd])
    level_err = np.abs(C.distance(bnd) - r)
    viol = np.maximum(level_err - 1e-8, -grad_norms)
    body.reports.append(CheckReport("boundary-gradient-nonzero", model.name, C.description,
                                    len(bnd), float(np.max(viol, initial=-math.inf)), 0.0,
                                    [{"min_gradient_norm": float(np.min(grad_norms, initial=0))}],
                                    {"radius": r}))
    return body


# ---------------------------------------------------------------------------
# Counterexample search
# ---------------------------------------------------------------------------


def _unit_normal(model, p, t):
    # unit tangent at p orthogonal to t (2-dimensional models)
    for b in model.tangent_basis(p):
        n = b - model.inner(p, b, t) * t
        nn = float(model.norm(p, n))
        if nn > 1e-6:
            return n / nn
    raise ValueError("could not build a normal vector")


def convexity_violation_search(model, start, end, positions=None, offsets=None, angles=None,
                               half_lengths=None, tol=1e-9):
    """Search geodesics near the segment ``[start, end]`` for a midpoint-convexity
    violation of ``t -> d(gamma(t), C)^2``.

    The family: from a point at parameter ``s`` on the segment's extension,
    step ``offset`` along the normal, then run a geodesic of half-length
    ``delta`` at ``angle`` to the segment direction. Returns a report whose
    worst violation is the largest raw margin found.
    """
    positions = np.linspace(-0.3, 1.3, 17) if positions is None else positions
    offsets = np.array([-0.3, -0.2, -0.1, -0.05, 0.05, 0.1, 0.2, 0.3]) if offsets is None \
        else np.asarray(offsets, float)
    angles = np.linspace(0.0, math.pi, 9)[:-1] if angles is None else angles
    half_lengths = np.array([0.05, 0.1, 0.2, 0.3]) if half_lengths is None else half_lengths
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    C = geodesic_segment_set(model, start, end)
    length = float(model.dist(start, end))
    if length > 0:
        vel = model.log(start, end)
    else:
        vel = model.tangent_basis(start)[0] * 0.0
        positions = np.array([0.0])
    apexes, dirs = [], []
    meta = []
    for s in positions:
        base = model.exp(start, s * vel)
        if length > 0:
            t = model.parallel_transport(start, base, vel) / length
        else:
            t = model.tangent_basis(start)[0]
        n = _unit_normal(model, base, t)
        for a in offsets:
            apex = model.exp(base, a * n)
            t_a = model.parallel_transport(base, apex, t)
            n_a = model.parallel_transport(base, apex, n)
            for th in angles:
                apexes.append(apex)
                dirs.append(math.cos(th) * t_a + math.sin(th) * n_a)
                meta.append((float(s), float(a), float(th)))
    apexes = np.array(apexes)
    dirs = np.array(dirs)
    best = (-math.inf, None)
    count = 0
    for delta in half_lengths:
        left = model.exp(apexes, -delta * dirs)
        right = model.exp(apexes, delta * dirs)
        g = [C.distance(p) ** 2 for p in (left, apexes, right)]
        raw = g[1] - 0.5 * (g[0] + g[2])
        count += len(raw)
        i = int(np.argmax(raw))
        if raw[i] > best[0]:
            best = (float(raw[i]), {
                "apex": apexes[i], "direction": dirs[i], "t0": -float(delta),
                "t1": float(delta), "margin": float(raw[i]),
                "values": [g[0][i], g[1][i], g[2][i]],
                "position": meta[i][0], "offset": meta[i][1], "angle": meta[i][2],
            })
    return CheckReport("set-distance-midpoint-convexity", model.name,
                       f"d(., {C.description})^2", count, best[0], tol,
                       [best[1]] if best[1] is not None else [],
                       {"segment_length": length})


def sphere_counterexample(eps=0.5):
    """Equatorial segment of length ``eps`` on the unit sphere and a witness
    geodesic along which ``d(., C)^2`` fails midpoint convexity."""
    if not 0 < eps < 1:
        raise ParameterError("the segment length must lie in (0, 1)")
    m = Sphere()
    a = np.array([math.cos(-eps / 2), math.sin(-eps / 2), 0.0])
    b = np.array([math.cos(eps / 2), math.sin(eps / 2), 0.0])
    return convexity_violation_search(m, a, b)


def hyperboloid_control(eps=0.5):
    """The same search around a segment of length ``eps`` in ``Hyperboloid(2)``."""
    m = Hyperboloid(2)
    o = m.origin()
    e = m.tangent_basis(o)[0]
    return convexity_violation_search(m, m.exp(o, -eps / 2 * e), m.exp(o, eps / 2 * e))


# ---------------------------------------------------------------------------
# Hamilton-Jacobi
# ---------------------------------------------------------------------------


def hj_demo(model, f, times, points, params: EnvelopeParams, h=1e-4):
    """Rows ``{t, x, u, grad, residual}`` of the Hopf-Lax solution on a grid."""
    _require_ch(model)
    points = np.asarray(points, dtype=float)
    rows = []
    for t in times:
        res = moreau_envelope_batch(model, f, points, params.with_lam(t))
        resid = hj_residual(model, f, t, points, h, params)
        for x, r, e in zip(points, res, np.atleast_1d(resid)):
            rows.append({"t": float(t), "x": x, "u": r.value, "grad": r.gradient,
                         "residual": float(e)})
    return rows
