"""Closed-form model manifolds.

Points and tangent vectors are plain numpy arrays in each model's chart.
Every operation broadcasts over leading axes, so ``exp(p, v)`` accepts a
single point with a stack of ``(k, D)`` tangents and returns ``(k, D)``.

Models
------
Euclidean(n)        coordinates in R^n
Hyperboloid(n)      ambient coordinates in R^{n+1}, <p, p>_L = -1, p0 > 0
PoincareHalfPlane   (x, y) with y > 0, metric (dx^2 + dy^2) / y^2
Cylinder            (theta, z), theta taken mod 2*pi, flat metric
Sphere              unit vectors in R^3
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi

# Distance to the cut locus below which log/transport refuse to answer.
CUT_LOCUS_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid point, tangent or dimension for a model."""


class CutLocusError(GeometryError):
    """The minimizing geodesic between two points is not unique."""


def acosh1p(u):
    """``arccosh(1 + u)`` for ``u >= 0``, accurate as ``u -> 0``.

    Uses ``arccosh(1 + u) = 2 asinh(sqrt(u / 2))``, which has no cancellation.
    """
    return 2.0 * np.arcsinh(np.sqrt(0.5 * np.maximum(u, 0.0)))


def _sinhc(x):
    # sinh(x) / x with the removable singularity filled in
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(xs) / xs)


def _sinc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(xs) / xs)


def _as_array(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class Isometry:
    """An isometry of a model onto itself.

    ``apply_tangent(p, v)`` pushes a tangent ``v`` at ``p`` forward to
    ``apply(p)``.
    """

    apply: Callable
    apply_tangent: Callable
    description: str = "isometry"

    def __call__(self, p):
        return self.apply(p)


def linear_isometry(matrix, description):
    """Isometry given by a matrix acting on ambient/chart coordinates."""
    mat = _as_array(matrix)

    def apply(p):
        return _as_array(p) @ mat.T

    def apply_tangent(p, v):
        return _as_array(v) @ mat.T

    return Isometry(apply, apply_tangent, description)


class ManifoldModel:
    """Base class for the closed-form model geometries.

    Subclasses supply ``exp``, ``log``, ``dist``, ``inner``,
    ``parallel_transport``, ``tangent_basis`` and the validation hooks.
    """

    name = "manifold"
    dim = 0
    ambient_dim = 0
    curvature_sign = 0
    cartan_hadamard = False

    # -- validation -----------------------------------------------------
    def _check_shape(self, x, what="point"):
        x = _as_array(x)
        if x.shape[-1:] != (self.ambient_dim,):
            raise GeometryError(
                f"{self.name}: expected {what} with {self.ambient_dim} "
                f"coordinates, got shape {x.shape}"
            )
        return x

    def check_point(self, p, tol=1e-10):
        """Raise ``GeometryError`` unless ``p`` satisfies the model constraint."""
        self._check_shape(p)

    def check_tangent(self, p, v, tol=1e-10):
        self._check_shape(p)
        self._check_shape(v, "tangent")

    def project_point(self, x):
        """Pull a nearly-valid point back onto the model."""
        return _as_array(x)

    def project_tangent(self, p, v):
        return _as_array(v)

    # -- metric ---------------------------------------------------------
    def inner(self, p, u, v):
        return np.sum(_as_array(u) * _as_array(v), axis=-1)

    def norm(self, p, v):
        return np.sqrt(np.maximum(self.inner(p, v, v), 0.0))

    def origin(self):
        raise NotImplementedError

    def tangent_basis(self, p):
        """Orthonormal basis of the tangent space at a single point, shape (dim, D)."""
        raise NotImplementedError

    def convexity_radius(self, p=None):
        return math.inf

    def exp(self, p, v, t=1.0):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def dist(self, p, q):
        raise NotImplementedError

    def parallel_transport(self, p, q, v):
        raise NotImplementedError

    # -- conveniences ---------------------------------------------------
    def geodesic(self, p, q):
        return GeodesicSegment(self, _as_array(p), _as_array(q))

    def from_chart(self, p, coeffs):
        """Tangent vector(s) at ``p`` with the given coordinates in ``tangent_basis(p)``."""
        return _as_array(coeffs) @ self.tangent_basis(p)

    def to_chart(self, p, v):
        basis = self.tangent_basis(p)
        return np.stack([self.inner(p, v, b) for b in basis], axis=-1)

    def random_unit_tangent(self, p, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        c = rng.standard_normal(shape)
        c /= np.linalg.norm(c, axis=-1, keepdims=True)
        return self.from_chart(p, c)

    def random_point(self, center, radius, rng, size=None):
        """Uniform-in-chart-radius sample of the geodesic ball ``B(center, radius)``."""
        n = 1 if size is None else size
        u = self.random_unit_tangent(center, rng, size=n)
        r = radius * rng.random(n) ** (1.0 / self.dim)
        pts = self.exp(center, u * r[:, None])
        return pts[0] if size is None else pts

    def isometries(self):
        """Named isometry constructors available on this model."""
        return {}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"

    def __eq__(self, other):
        return type(self) is type(other) and self.dim == other.dim

    def __hash__(self):
        return hash((type(self).__name__, self.dim))


@dataclass(frozen=True, eq=False)
class GeodesicSegment:
    """Constant-speed geodesic ``t -> exp(start, t * velocity)`` on ``[0, 1]``."""

    model: ManifoldModel
    start: np.ndarray
    end: np.ndarray
    velocity: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "velocity", self.model.log(self.start, self.end))

    @classmethod
    def from_velocity(cls, model, start, velocity):
        seg = object.__new__(cls)
        start = _as_array(start)
        velocity = _as_array(velocity)
        object.__setattr__(seg, "model", model)
        object.__setattr__(seg, "start", start)
        object.__setattr__(seg, "velocity", velocity)
        object.__setattr__(seg, "end", model.exp(start, velocity))
        return seg

    @property
    def length(self):
        return float(self.model.norm(self.start, self.velocity))

    def __call__(self, t):
        t = _as_array(t)
        return self.model.exp(self.start, self.velocity * t[..., None])


def product_dist(model, a, b):
    """Distance in ``M x M`` between pairs ``a = (x0, y0)`` and ``b = (x1, y1)``."""
    return np.hypot(model.dist(a[0], b[0]), model.dist(a[1], b[1]))


# ---------------------------------------------------------------------------
# Euclidean
# ---------------------------------------------------------------------------


class Euclidean(ManifoldModel):
    curvature_sign = 0
    cartan_hadamard = True

    def __init__(self, dim=2):
        if int(dim) < 1:
            raise GeometryError("Euclidean dimension must be >= 1")
        self.dim = int(dim)
        self.ambient_dim = self.dim
        self.name = f"euclidean({self.dim})"

    def origin(self):
        return np.zeros(self.dim)

    def tangent_basis(self, p):
        return np.eye(self.dim)

    def exp(self, p, v, t=1.0):
        p = self._check_shape(p)
        v = self._check_shape(v, "tangent")
        return p + t * v

    def log(self, p, q):
        return self._check_shape(q) - self._check_shape(p)

    def dist(self, p, q):
        d = self._check_shape(q) - self._check_shape(p)
        return np.sqrt(np.sum(d * d, axis=-1))

    def parallel_transport(self, p, q, v):
        return np.broadcast_to(_as_array(v), np.broadcast_shapes(
            _as_array(v).shape, _as_array(q).shape)).copy()

    def rotation_about(self, p, angle, axes=(0, 1)):
        """Rotation by ``angle`` in the plane of two coordinate axes, fixing ``p``."""
        if self.dim < 2:
            raise GeometryError("rotations need dimension >= 2")
        p = _as_array(p)
        i, j = axes
        rot = np.eye(self.dim)
        c, s = math.cos(angle), math.sin(angle)
        rot[i, i], rot[i, j], rot[j, i], rot[j, j] = c, -s, s, c
        return Isometry(
            lambda x: (_as_array(x) - p) @ rot.T + p,
            lambda x, v: _as_array(v) @ rot.T,
            f"rotation by {angle:g} about {p.tolist()}",
        )

    def translation(self, offset):
        off = _as_array(offset)
        return Isometry(lambda x: _as_array(x) + off, lambda x, v: _as_array(v),
                        f"translation by {off.tolist()}")

    def reflection_about(self, p):
        """Point reflection ``x -> 2p - x``."""
        p = _as_array(p)
        return Isometry(lambda x: 2 * p - _as_array(x), lambda x, v: -_as_array(v),
                        f"point reflection about {p.tolist()}")

    def isometries(self):
        return {"rotation": self.rotation_about, "translation": self.translation,
                "reflection": self.reflection_about}


# ---------------------------------------------------------------------------
# Hyperboloid
# ---------------------------------------------------------------------------


def minkowski(u, v):
    u, v = _as_array(u), _as_array(v)
    return np.sum(u[..., 1:] * v[..., 1:], axis=-1) - u[..., 0] * v[..., 0]


class Hyperboloid(ManifoldModel):
    """Upper sheet of ``-x0^2 + x1^2 + ... + xn^2 = -1``; curvature -1."""

    curvature_sign = -1
    cartan_hadamard = True

    def __init__(self, dim=2):
        if int(dim) < 1:
            raise GeometryError("Hyperboloid dimension must be >= 1")
        self.dim = int(dim)
        self.ambient_dim = self.dim + 1
        self.name = f"hyperboloid({self.dim})"

    def origin(self):
        o = np.zeros(self.ambient_dim)
        o[0] = 1.0
        return o

    def check_point(self, p, tol=1e-10):
        p = self._check_shape(p)
        scale = 1.0 + np.sum(p * p, axis=-1)
        if np.any(np.abs(minkowski(p, p) + 1.0) > tol * scale) or np.any(p[..., 0] <= 0):
            raise GeometryError(f"{self.name}: point off the upper sheet: {p}")

    def check_tangent(self, p, v, tol=1e-10):
        self.check_point(p)
        v = self._check_shape(v, "tangent")
        scale = (1.0 + np.linalg.norm(p, axis=-1)) * (1.0 + np.linalg.norm(v, axis=-1))
        if np.any(np.abs(minkowski(p, v)) > tol * scale):
            raise GeometryError(f"{self.name}: vector not tangent at base point")

    def project_point(self, x):
        x = _as_array(x)
        out = x.copy()
        out[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
        return out

    def project_tangent(self, p, v):
        p, v = _as_array(p), _as_array(v)
        return v + minkowski(p, v)[..., None] * p

    def inner(self, p, u, v):
        return minkowski(u, v)

    def from_chart(self, p, coeffs):
        return _as_array(coeffs) @ self.tangent_basis(p)

    def boost(self, p):
        """Lorentz matrix sending the origin to ``p``; its columns 1..n span T_p."""
        p = _as_array(p)
        n = self.dim
        b = np.empty((n + 1, n + 1))
        b[0, 0] = p[0]
        b[0, 1:] = p[1:]
        b[1:, 0] = p[1:]
        b[1:, 1:] = np.eye(n) + np.outer(p[1:], p[1:]) / (1.0 + p[0])
        return b

    def tangent_basis(self, p):
        return self.boost(p)[:, 1:].T.copy()

    def exp(self, p, v, t=1.0):
        p = self._check_shape(p)
        v = self._check_shape(v, "tangent") * t
        nv = np.sqrt(np.maximum(minkowski(v, v), 0.0))[..., None]
        q = np.cosh(nv) * p + _sinhc(nv) * v
        return self.project_point(q)

    def _half_gap(self, p, q):
        # u with cosh(d) = 1 + u, computed from the Minkowski norm of p - q
        w = _as_array(q) - _as_array(p)
        return np.maximum(0.5 * minkowski(w, w), 0.0)

    def dist(self, p, q):
        p = self._check_shape(p)
        q = self._check_shape(q)
        return acosh1p(self._half_gap(p, q))

    def log(self, p, q):
        p = self._check_shape(p)
        q = self._check_shape(q)
        d = self.dist(p, q)[..., None]
        u = q + minkowski(p, q)[..., None] * p
        # |u|_L = sinh(d)
        return u / _sinhc(d)

    def parallel_transport(self, p, q, v):
        p, q, v = _as_array(p), _as_array(q), _as_array(v)
        coef = minkowski(q, v) / (1.0 - minkowski(p, q))
        return v + coef[..., None] * (p + q)

    def rotation_about(self, p, angle, axes=(1, 2)):
        """Rotation by ``angle`` about ``p`` in the tangent plane of two spatial axes."""
        if self.dim < 2:
            raise GeometryError("rotations need dimension >= 2")
        b = self.boost(p)
        eta = np.diag([-1.0] + [1.0] * self.dim)
        b_inv = eta @ b.T @ eta
        i, j = axes
        rot = np.eye(self.ambient_dim)
        c, s = math.cos(angle), math.sin(angle)
        rot[i, i], rot[i, j], rot[j, i], rot[j, j] = c, -s, s, c
        iso = linear_isometry(b @ rot @ b_inv, f"rotation by {angle:g} about {np.asarray(p).tolist()}")
        return Isometry(lambda x: self.project_point(iso.apply(x)), iso.apply_tangent,
                        iso.description)

    def isometries(self):
        return {"rotation": self.rotation_about}


# ---------------------------------------------------------------------------
# Poincare half-plane
# ---------------------------------------------------------------------------


def halfplane_to_hyperboloid(p):
    p = _as_array(p)
    x, y = p[..., 0], p[..., 1]
    s = x * x + y * y
    return np.stack([(s + 1.0) / (2.0 * y), x / y, (s - 1.0) / (2.0 * y)], axis=-1)


def hyperboloid_to_halfplane(X):
    X = _as_array(X)
    y = 1.0 / (X[..., 0] - X[..., 2])
    return np.stack([X[..., 1] * y, y], axis=-1)


def _halfplane_push(p, v):
    # differential of halfplane_to_hyperboloid at p applied to v
    p, v = _as_array(p), _as_array(v)
    x, y = p[..., 0], p[..., 1]
    dx, dy = v[..., 0], v[..., 1]
    y2 = 2.0 * y * y
    d0 = (x / y) * dx + ((y * y - x * x - 1.0) / y2) * dy
    d1 = dx / y - (x / (y * y)) * dy
    d2 = (x / y) * dx + ((y * y - x * x + 1.0) / y2) * dy
    return np.stack([d0, d1, d2], axis=-1)


def _halfplane_pull(X, V):
    # differential of hyperboloid_to_halfplane at X applied to V
    X, V = _as_array(X), _as_array(V)
    w = X[..., 0] - X[..., 2]
    dw = V[..., 0] - V[..., 2]
    dy = -dw / (w * w)
    dx = V[..., 1] / w - X[..., 1] * dw / (w * w)
    return np.stack([dx, dy], axis=-1)


class PoincareHalfPlane(ManifoldModel):
    """Upper half-plane with metric ``(dx^2 + dy^2) / y^2``.

    Distances use the half-plane formula directly; exp, log and transport
    go through the explicit isometry onto ``Hyperboloid(2)``.
    """

    curvature_sign = -1
    cartan_hadamard = True

    def __init__(self, dim=2):
        if int(dim) != 2:
            raise GeometryError("the half-plane model is 2-dimensional")
        self.dim = 2
        self.ambient_dim = 2
        self.name = "halfplane"
        self._h = Hyperboloid(2)

    def origin(self):
        return np.array([0.0, 1.0])

    def check_point(self, p, tol=1e-10):
        p = self._check_shape(p)
        if np.any(p[..., 1] <= 0):
            raise GeometryError(f"halfplane: y must be positive, got {p}")

    def check_tangent(self, p, v, tol=1e-10):
        self.check_point(p)
        self._check_shape(v, "tangent")

    def inner(self, p, u, v):
        y = _as_array(p)[..., 1]
        return np.sum(_as_array(u) * _as_array(v), axis=-1) / (y * y)

    def tangent_basis(self, p):
        return _as_array(p)[1] * np.eye(2)

    def dist(self, p, q):
        p = self._check_shape(p)
        q = self._check_shape(q)
        dd = np.sum((p - q) ** 2, axis=-1)
        return acosh1p(dd / (2.0 * p[..., 1] * q[..., 1]))

    def exp(self, p, v, t=1.0):
        p = self._check_shape(p)
        v = self._check_shape(v, "tangent") * t
        X = halfplane_to_hyperboloid(p)
        Y = self._h.exp(X, _halfplane_push(p, v))
        return hyperboloid_to_halfplane(Y)

    def log(self, p, q):
        p = self._check_shape(p)
        q = self._check_shape(q)
        X = halfplane_to_hyperboloid(p)
        return _halfplane_pull(X, self._h.log(X, halfplane_to_hyperboloid(q)))

    def parallel_transport(self, p, q, v):
        X = halfplane_to_hyperboloid(p)
        Y = halfplane_to_hyperboloid(q)
        W = self._h.parallel_transport(X, Y, _halfplane_push(p, v))
        return _halfplane_pull(Y, W)

    def rotation_about(self, p, angle):
        rot = self._h.rotation_about(halfplane_to_hyperboloid(p), angle)

        def apply(x):
            return hyperboloid_to_halfplane(rot.apply(halfplane_to_hyperboloid(x)))

        def apply_tangent(x, v):
            X = halfplane_to_hyperboloid(x)
            return _halfplane_pull(rot.apply(X), rot.apply_tangent(X, _halfplane_push(x, v)))

        return Isometry(apply, apply_tangent, rot.description)

    def dilation(self, factor):
        """``(x, y) -> factor * (x, y)``, fixing the point (0, 1) only when factor == 1."""
        k = float(factor)
        return Isometry(lambda x: k * _as_array(x), lambda x, v: k * _as_array(v),
                        f"dilation by {k:g}")

    def translation(self, offset):
        off = np.array([float(offset), 0.0])
        return Isometry(lambda x: _as_array(x) + off, lambda x, v: _as_array(v),
                        f"horizontal translation by {float(offset):g}")

    def isometries(self):
        return {"rotation": self.rotation_about, "dilation": self.dilation,
                "translation": self.translation}


# ---------------------------------------------------------------------------
# Cylinder S^1 x R
# ---------------------------------------------------------------------------


def wrap_angle(a):
    """Map angles to ``[-pi, pi)``."""
    return np.mod(_as_array(a) + math.pi, TWO_PI) - math.pi


class Cylinder(ManifoldModel):
    """Flat cylinder ``S^1 x R`` in coordinates ``(theta, z)``."""

    curvature_sign = 0
    cartan_hadamard = False

    def __init__(self, dim=2):
        if int(dim) != 2:
            raise GeometryError("the cylinder model is 2-dimensional")
        self.dim = 2
        self.ambient_dim = 2
        self.name = "cylinder"

    def origin(self):
        return np.zeros(2)

    def project_point(self, x):
        x = _as_array(x).copy()
        x[..., 0] = np.mod(x[..., 0], TWO_PI)
        return x

    def tangent_basis(self, p):
        return np.eye(2)

    def convexity_radius(self, p=None):
        return math.pi / 2

    def exp(self, p, v, t=1.0):
        p = self._check_shape(p)
        v = self._check_shape(v, "tangent")
        return self.project_point(p + t * v)

    def _offsets(self, p, q):
        p = self._check_shape(p)
        q = self._check_shape(q)
        dtheta = wrap_angle(q[..., 0] - p[..., 0])
        return dtheta, q[..., 1] - p[..., 1]

    def dist(self, p, q):
        dtheta, dz = self._offsets(p, q)
        return np.hypot(dtheta, dz)

    def log(self, p, q):
        dtheta, dz = self._offsets(p, q)
        if np.any(math.pi - np.abs(dtheta) < CUT_LOCUS_TOL):
            raise CutLocusError("cylinder: points are at theta-offset pi (cut locus)")
        return np.stack([dtheta, dz], axis=-1)

    def parallel_transport(self, p, q, v):
        self.log(p, q)
        return np.broadcast_to(_as_array(v), np.broadcast_shapes(
            _as_array(v).shape, _as_array(q).shape)).copy()

    def theta_translation(self, delta):
        d = float(delta)
        return Isometry(lambda x: self.project_point(_as_array(x) + np.array([d, 0.0])),
                        lambda x, v: _as_array(v), f"theta translation by {d:g}")

    def z_translation(self, delta):
        d = float(delta)
        return Isometry(lambda x: _as_array(x) + np.array([0.0, d]),
                        lambda x, v: _as_array(v), f"z translation by {d:g}")

    def z_reflection(self):
        flip = np.array([1.0, -1.0])
        return Isometry(lambda x: _as_array(x) * flip, lambda x, v: _as_array(v) * flip,
                        "reflection z -> -z")

    def isometries(self):
        return {"theta_translation": self.theta_translation,
                "z_translation": self.z_translation,
                "z_reflection": lambda: self.z_reflection()}


# ---------------------------------------------------------------------------
# Sphere S^2
# ---------------------------------------------------------------------------


class Sphere(ManifoldModel):
    """Unit sphere in R^3; curvature +1."""

    curvature_sign = 1
    cartan_hadamard = False

    def __init__(self, dim=2):
        if int(dim) != 2:
            raise GeometryError("the sphere model is 2-dimensional")
        self.dim = 2
        self.ambient_dim = 3
        self.name = "sphere"

    def origin(self):
        return np.array([0.0, 0.0, 1.0])

    def check_point(self, p, tol=1e-10):
        p = self._check_shape(p)
        if np.any(np.abs(np.linalg.norm(p, axis=-1) - 1.0) > tol):
            raise GeometryError(f"sphere: point not of unit norm: {p}")

    def check_tangent(self, p, v, tol=1e-10):
        self.check_point(p)
        v = self._check_shape(v, "tangent")
        if np.any(np.abs(np.sum(p * v, axis=-1)) > tol * (1.0 + np.linalg.norm(v, axis=-1))):
            raise GeometryError("sphere: vector not tangent at base point")

    def project_point(self, x):
        x = _as_array(x)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def project_tangent(self, p, v):
        p, v = _as_array(p), _as_array(v)
        return v - np.sum(p * v, axis=-1, keepdims=True) * p

    def tangent_basis(self, p):
        p = _as_array(p)
        axis = np.zeros(3)
        axis[np.argmin(np.abs(p))] = 1.0
        e1 = axis - np.dot(axis, p) * p
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(p, e1)
        return np.stack([e1, e2])

    def convexity_radius(self, p=None):
        return math.pi / 2

    def exp(self, p, v, t=1.0):
        p = self._check_shape(p)
        v = self._check_shape(v, "tangent") * t
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        return self.project_point(np.cos(nv) * p + _sinc(nv) * v)

    def dist(self, p, q):
        p = self._check_shape(p)
        q = self._check_shape(q)
        cross = np.linalg.norm(np.cross(p, q), axis=-1)
        return np.arctan2(cross, np.sum(p * q, axis=-1))

    def log(self, p, q):
        p = self._check_shape(p)
        q = self._check_shape(q)
        d = self.dist(p, q)
        if np.any(math.pi - d < CUT_LOCUS_TOL):
            raise CutLocusError("sphere: antipodal points (cut locus)")
        u = q - np.sum(p * q, axis=-1, keepdims=True) * p
        return u / _sinc(d)[..., None]

    def parallel_transport(self, p, q, v):
        p, q, v = _as_array(p), _as_array(q), _as_array(v)
        if np.any(math.pi - self.dist(p, q) < CUT_LOCUS_TOL):
            raise CutLocusError("sphere: antipodal points (cut locus)")
        coef = np.sum(q * v, axis=-1) / (1.0 + np.sum(p * q, axis=-1))
        return v - coef[..., None] * (p + q)

    def rotation(self, axis, angle):
        axis = _as_array(axis) / np.linalg.norm(axis)
        k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        rot = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)
        iso = linear_isometry(rot, f"rotation by {angle:g} about axis {axis.tolist()}")
        return Isometry(lambda x: self.project_point(iso.apply(x)), iso.apply_tangent,
                        iso.description)

    def rotation_about(self, p, angle):
        return self.rotation(p, angle)

    def isometries(self):
        return {"rotation": self.rotation_about}


MODELS = {
    "euclidean": Euclidean,
    "hyperboloid": Hyperboloid,
    "halfplane": PoincareHalfPlane,
    "cylinder": Cylinder,
    "sphere": Sphere,
}


def make_model(name, dim=2):
    """Build a model by name (``euclidean``, ``hyperboloid``, ``halfplane``, ``cylinder``, ``sphere``)."""
    try:
        cls = MODELS[name.lower()]
    except KeyError:
        raise GeometryError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(dim)
