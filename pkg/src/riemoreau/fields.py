"""Extended-real scalar fields with the metadata the envelope solver uses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .manifolds import GeometryError, Hyperboloid, ManifoldModel, minkowski


class FieldError(ValueError):
    """Bad field parameters."""


class MetadataMissingError(FieldError):
    """A certified constant was requested but the field carries no witness."""


# ---------------------------------------------------------------------------
# Convex sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConvexSetOracle:
    """Closed convex set given by a membership test and a nearest-point map.

    ``contains`` and ``project`` broadcast over leading axes. ``sample``
    draws points of the set and is used by the checks and brute-force
    oracles.
    """

    model: ManifoldModel
    contains: Callable
    project: Callable
    sample: Callable
    description: str = "convex set"

    def distance(self, x):
        return self.model.dist(x, self.project(x))


def geodesic_ball(model, center, radius, tol=1e-9):
    """Closed geodesic ball ``B(center, radius)``; ``radius = 0`` gives a point."""
    center = np.asarray(center, dtype=float)
    radius = float(radius)
    if radius < 0:
        raise FieldError("ball radius must be nonnegative")
    if not model.cartan_hadamard and radius >= model.convexity_radius(center):
        raise FieldError(f"ball of radius {radius} is not convex on {model.name}")

    def contains(x):
        return model.dist(center, x) <= radius + tol

    def project(x):
        x = np.asarray(x, dtype=float)
        d = model.dist(center, x)
        if radius == 0.0:
            return np.broadcast_to(center, x.shape).copy()
        out = np.where((d <= radius)[..., None], x, 0.0)
        outside = d > radius
        if np.any(outside):
            v = model.log(center, x)
            scale = np.where(outside, radius / np.where(outside, d, 1.0), 1.0)
            out = np.where(outside[..., None], model.exp(center, v * scale[..., None]), out)
        return out

    def sample(rng, n):
        return model.random_point(center, radius, rng, size=n) if radius > 0 else \
            np.repeat(center[None, :], n, axis=0)

    return ConvexSetOracle(model, contains, project, sample,
                           f"ball(center={center.tolist()}, radius={radius:g})")


def _batched_bisect(slope, lo, hi, iters=60):
    # vectorized bisection for the sign change of a nondecreasing slope on [lo, hi];
    # rows whose slope keeps one sign end at the matching bracket end
    a, b = np.array(lo, dtype=float), np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        up = slope(mid) > 0.0
        b = np.where(up, mid, b)
        a = np.where(up, a, mid)
    return 0.5 * (a + b)


def geodesic_segment_set(model, a, b, samples=129, tol=1e-9):
    """Closed geodesic segment ``[a, b]`` as a convex set.

    Nearest points come from dense sampling of the segment followed by
    bisection on the derivative of ``s -> d(seg(s), x)^2 / 2`` in the
    segment parameter.
    """
    seg = model.geodesic(a, b)
    length = seg.length
    grid = np.linspace(0.0, 1.0, samples)
    step = grid[1] - grid[0]

    def nearest_param(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        pts = seg(grid)
        d = model.dist(flat[:, None, :], pts[None, :, :])
        k = np.argmin(d, axis=1)
        lo = np.clip(grid[k] - step, 0.0, 1.0)
        hi = np.clip(grid[k] + step, 0.0, 1.0)

        def slope(s):
            pts = seg(s)
            vel = model.parallel_transport(seg.start, pts, seg.velocity)
            return -model.inner(pts, model.log(pts, flat), vel)

        s = _batched_bisect(slope, lo, hi)
        # endpoints are exact candidates
        for end in (0.0, 1.0):
            better = model.dist(seg(np.full_like(s, end)), flat) < model.dist(seg(s), flat)
            s = np.where(better, end, s)
        return s.reshape(x.shape[:-1])

    def project(x):
        if length == 0.0:
            return np.broadcast_to(np.asarray(a, float), np.shape(x)).copy()
        return seg(nearest_param(x))

    def contains(x):
        x = np.asarray(x, dtype=float)
        return model.dist(project(x), x) <= tol

    def sample(rng, n):
        return seg(rng.random(n))

    out = ConvexSetOracle(model, contains, project, sample,
                          f"segment({np.asarray(a).tolist()} -> {np.asarray(b).tolist()})")
    object.__setattr__(out, "segment", seg)
    return out


def cylinder_circle(model, z0=0.0, tol=1e-9):
    """The closed geodesic ``{z = z0}`` on the cylinder."""

    def contains(x):
        return np.abs(np.asarray(x)[..., 1] - z0) <= tol

    def project(x):
        x = np.array(x, dtype=float)
        x[..., 1] = z0
        return x

    def sample(rng, n):
        return np.stack([rng.random(n) * 2 * math.pi, np.full(n, z0)], axis=-1)

    return ConvexSetOracle(model, contains, project, sample, f"circle(z={z0:g})")


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScalarField:
    """An extended-real function ``f: M -> R u {+inf}`` with metadata.

    Attributes
    ----------
    func : callable
        Vectorized evaluation on an array of points.
    gradient : callable, optional
        Riemannian gradient (a subgradient witness at kinks), vectorized.
    smooth : bool
        Whether ``gradient`` is continuous away from ``landmarks``, so
        gradient descent can refine; otherwise a simplex search is used.
    domain : ConvexSetOracle, optional
        Set where ``func`` is finite; enables projected refinement.
    minoration : (c, x0), optional
        Certified bound ``f(x) >= -(c/2)(1 + d(x, x0)^2)``.
    lipschitz : callable, optional
        Map from ball radius to a Lipschitz constant on that ball.
    symmetries : list of Isometry
    landmarks : list of points
        Kinks and other special points handed to the solver as candidates.
    minimizers : ConvexSetOracle or list of points or "all", optional
    """

    model: ManifoldModel
    func: Callable
    name: str = "field"
    gradient: Optional[Callable] = None
    smooth: bool = False
    domain: Optional[ConvexSetOracle] = None
    minoration: Optional[tuple] = None
    lipschitz: Optional[Callable] = None
    symmetries: Sequence = field(default_factory=tuple)
    landmarks: Sequence = field(default_factory=tuple)
    minimizers: object = None
    convex: bool = True

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def subgradient_at(self, x):
        if self.gradient is None:
            return None
        return self.gradient(np.asarray(x, dtype=float))

    def with_symmetries(self, *isos):
        return replace(self, symmetries=tuple(self.symmetries) + tuple(isos))


def squared_distance(model, center=None, weight=1.0):
    """``x -> (weight / 2) d(x, center)^2``."""
    p = model.origin() if center is None else np.asarray(center, dtype=float)
    w = float(weight)
    if w <= 0:
        raise FieldError("weight must be positive")

    def func(x):
        return 0.5 * w * model.dist(x, p) ** 2

    def grad(x):
        return -w * model.log(x, p)

    syms = []
    if model.dim >= 2 and "rotation" in model.isometries():
        syms = [model.rotation_about(p, a) for a in (0.7, math.pi / 2, 2.0)]
    return ScalarField(model, func, f"squared_distance(w={w:g})", grad, True,
                       minoration=(0.0, p), lipschitz=lambda r: w * r,
                       symmetries=tuple(syms), landmarks=(p,), minimizers=[p])


def distance(model, center=None):
    """``x -> d(x, center)``; 1-Lipschitz, kink at the center."""
    p = model.origin() if center is None else np.asarray(center, dtype=float)

    def func(x):
        return model.dist(x, p)

    def grad(x):
        v = -model.log(x, p)
        d = model.dist(x, p)[..., None]
        return np.where(d > 0, v / np.where(d > 0, d, 1.0), 0.0)

    syms = []
    if model.dim >= 2 and "rotation" in model.isometries():
        syms = [model.rotation_about(p, a) for a in (0.7, math.pi / 2, 2.0)]
    return ScalarField(model, func, "distance", grad, True,
                       minoration=(0.0, p), lipschitz=lambda r: 1.0,
                       symmetries=tuple(syms), landmarks=(p,), minimizers=[p])


def indicator(model, convex_set):
    """``delta_C``: 0 on ``C``, ``+inf`` elsewhere."""
    anchor = convex_set.project(model.origin())

    def func(x):
        return np.where(convex_set.contains(x), 0.0, np.inf)

    def grad(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return ScalarField(model, func, f"indicator[{convex_set.description}]", grad, True,
                       domain=convex_set, minoration=(0.0, anchor),
                       minimizers=convex_set)


def squared_distance_to_set(model, convex_set, weight=1.0):
    """``x -> (weight / 2) d(x, C)^2`` via the set's projection."""
    w = float(weight)

    def func(x):
        return 0.5 * w * convex_set.distance(x) ** 2

    def grad(x):
        return -w * model.log(x, convex_set.project(x))

    anchor = convex_set.project(model.origin())
    return ScalarField(model, func, f"squared_distance_to[{convex_set.description}]", grad,
                       True, minoration=(0.0, anchor), minimizers=convex_set)


def constant(model, value=0.0):
    v = float(value)

    def func(x):
        return np.full(np.shape(x)[:-1], v)

    def grad(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return ScalarField(model, func, f"constant({v:g})", grad, True,
                       minoration=(max(0.0, -2.0 * v), model.origin()),
                       lipschitz=lambda r: 0.0, minimizers="all")


def linear(model, coeffs, offset=0.0):
    """Affine function ``a . x + b`` on a Euclidean model."""
    if not model.name.startswith("euclidean"):
        raise FieldError("linear fields live on Euclidean models only")
    a = np.asarray(coeffs, dtype=float)
    if a.shape != (model.dim,):
        raise FieldError(f"need {model.dim} coefficients")
    b = float(offset)
    zero = model.origin()

    def func(x):
        return np.asarray(x) @ a + b

    def grad(x):
        return np.broadcast_to(a, np.shape(x)).copy()

    c = 2.0 * (np.linalg.norm(a) + abs(b))
    return ScalarField(model, func, "linear", grad, True, minoration=(c, zero),
                       lipschitz=lambda r: float(np.linalg.norm(a)))


def busemann(model, base=None, direction=None):
    """Busemann function of the ray ``t -> exp(base, t * direction)`` on the hyperboloid.

    Closed form ``b(x) = log(-<x, base + direction>_L)`` for unit ``direction``.
    """
    if not isinstance(model, Hyperboloid):
        raise FieldError("busemann fields are implemented on the hyperboloid")
    p = model.origin() if base is None else np.asarray(base, dtype=float)
    if direction is None:
        v = model.tangent_basis(p)[0]
    else:
        v = model.project_tangent(p, np.asarray(direction, dtype=float))
        nv = float(model.norm(p, v))
        if nv == 0:
            raise FieldError("direction must be nonzero")
        v = v / nv
    w = p + v

    def func(x):
        return np.log(-minkowski(x, w))

    def grad(x):
        x = np.asarray(x, dtype=float)
        return w / minkowski(x, w)[..., None] + x

    return ScalarField(model, func, "busemann", grad, True, minoration=(2.0, p),
                       lipschitz=lambda r: 1.0)


def max_of(*fields):
    """Pointwise maximum of finitely many fields; refined derivative-free."""
    if not fields:
        raise FieldError("max_of needs at least one field")
    model = fields[0].model

    def func(x):
        return np.max(np.stack([f(x) for f in fields]), axis=0)

    grad = None
    if all(f.gradient is not None for f in fields):
        def grad(x):
            x = np.asarray(x, dtype=float)
            vals = np.stack([f(x) for f in fields])
            grads = np.stack([f.gradient(x) for f in fields])
            k = np.argmax(vals, axis=0)
            return np.take_along_axis(grads, k[None, ..., None], axis=0)[0]

    minos = [f.minoration for f in fields if f.minoration is not None]
    mino = min(minos, key=lambda m: m[0]) if minos else None
    lips = [f.lipschitz for f in fields]
    lip = None
    if all(lp is not None for lp in lips):
        def lip(r):
            return max(lp(r) for lp in lips)

    marks = tuple(m for f in fields for m in f.landmarks)
    return ScalarField(model, func, "max(" + ", ".join(f.name for f in fields) + ")",
                       grad, False, minoration=mino, lipschitz=lip, landmarks=marks,
                       convex=all(f.convex for f in fields))


def builtin_field(model, name, **params):
    """Construct a named builtin field.

    Names: ``squared_distance``, ``distance``, ``indicator_ball``,
    ``indicator_segment``, ``squared_distance_to_circle``, ``constant``,
    ``linear``, ``busemann``, ``max`` (with ``parts``: list of (name, params)).
    """
    allowed = FIELD_PARAMS.get(name)
    if allowed is None:
        raise FieldError(f"unknown field {name!r}")
    extra = sorted(set(params) - allowed)
    if extra:
        raise FieldError(f"field {name!r} takes no parameter {extra[0]!r}; "
                         f"allowed: {', '.join(sorted(allowed)) or 'none'}")
    try:
        if name == "squared_distance":
            return squared_distance(model, params.get("center"), params.get("weight", 1.0))
        if name == "distance":
            return distance(model, params.get("center"))
        if name == "indicator_ball":
            center = params.get("center", model.origin())
            f = indicator(model, geodesic_ball(model, center, params.get("radius", 1.0)))
            if model.dim >= 2 and "rotation" in model.isometries():
                f = f.with_symmetries(*[model.rotation_about(center, a) for a in (0.7, 2.0)])
            return f
        if name == "indicator_segment":
            return indicator(model, geodesic_segment_set(model, params["start"], params["end"]))
        if name == "squared_distance_to_circle":
            f = squared_distance_to_set(model, cylinder_circle(model, params.get("z0", 0.0)),
                                        params.get("weight", 1.0))
            return f.with_symmetries(*[model.theta_translation(a) for a in (0.5, 1.0, 3.0)])
        if name == "constant":
            return constant(model, params.get("value", 0.0))
        if name == "linear":
            return linear(model, params["coeffs"], params.get("offset", 0.0))
        if name == "busemann":
            return busemann(model, params.get("base"), params.get("direction"))
        if name == "max":
            return max_of(*[builtin_field(model, n, **p) for n, p in params["parts"]])
    except (KeyError, TypeError, GeometryError) as exc:
        raise FieldError(f"bad parameters for field {name!r}: {exc}") from exc
    raise FieldError(f"unknown field {name!r}")


FIELD_PARAMS = {
    "squared_distance": {"center", "weight"},
    "distance": {"center"},
    "indicator_ball": {"center", "radius"},
    "indicator_segment": {"start", "end"},
    "squared_distance_to_circle": {"z0", "weight"},
    "constant": {"value"},
    "linear": {"coeffs", "offset"},
    "busemann": {"base", "direction"},
    "max": {"parts"},
}
FIELD_NAMES = tuple(FIELD_PARAMS)


# ---------------------------------------------------------------------------
# Quadratic minoration
# ---------------------------------------------------------------------------


def quadratic_minoration(f, x0, zeta=None):
    """Constant ``c = 2 (|zeta| + |f(x0)|)`` for a subgradient ``zeta`` at ``x0``.

    With that ``c``, ``f(x) >= -(c/2)(1 + d(x, x0)^2)`` for convex ``f`` on a
    model where minimizing geodesics exist.
    """
    x0 = np.asarray(x0, dtype=float)
    if zeta is None:
        zeta = f.subgradient_at(x0)
    if zeta is None:
        raise MetadataMissingError(f"{f.name} has no subgradient witness at {x0.tolist()}")
    fx0 = float(f(x0))
    if not math.isfinite(fx0):
        raise MetadataMissingError(f"{f.name} is infinite at the base point")
    return 2.0 * (float(f.model.norm(x0, zeta)) + abs(fx0))


def fit_minoration(f, x0, rng=None, radii=(0.5, 1, 2, 4, 8), per_radius=64):
    """Heuristic ``c`` from sampling ``f`` on spheres of growing radius; not certified."""
    rng = np.random.default_rng(0) if rng is None else rng
    m = f.model
    x0 = np.asarray(x0, dtype=float)
    c = 0.0
    for r in radii:
        if not m.cartan_hadamard:
            r = min(r, 0.99 * math.pi)
        u = m.random_unit_tangent(x0, rng, size=per_radius)
        pts = m.exp(x0, u * r)
        vals = f(pts)
        vals = vals[np.isfinite(vals)]
        if vals.size:
            c = max(c, float(np.max(-2.0 * vals / (1.0 + r * r))))
    fx0 = float(f(x0))
    if math.isfinite(fx0):
        c = max(c, -2.0 * fx0)
    return c
