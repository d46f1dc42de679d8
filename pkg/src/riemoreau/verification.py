"""Sampled property checks for Moreau envelopes on model manifolds.

Each check returns a :class:`CheckReport`; ``passed`` is exactly
``worst_violation <= tolerance``. All sampling is driven by explicit seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envelope import (EnvelopeParams, ball_grid, localization_radius, moreau_envelope_batch,
                       _minoration_constant)
from .fields import ConvexSetOracle, ScalarField
from .manifolds import GeodesicSegment, ManifoldModel

DEFAULT_ATOL = 1e-7
DEFAULT_RTOL = 1e-7


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class CheckReport:
    check_name: str
    model: str
    field: str
    samples: int
    worst_violation: float
    tolerance: float
    witnesses: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.worst_violation <= self.tolerance)

    def to_dict(self):
        return _jsonable({
            "check_name": self.check_name,
            "model": self.model,
            "field": self.field,
            "params": self.params,
            "samples": self.samples,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "witnesses": self.witnesses,
        })

    def summary_line(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag} {self.check_name} model={self.model} field={self.field} "
                f"samples={self.samples} worst={self.worst_violation:.3e} "
                f"tol={self.tolerance:.3e}")


def reports_to_json(reports):
    """Canonical JSON document for a list of reports."""
    return json.dumps({"reports": [r.to_dict() for r in reports]}, sort_keys=True, indent=2) + "\n"


def reports_to_text(reports):
    return "".join(r.summary_line() + "\n" for r in reports)


def _worst(violations, k=3):
    order = np.argsort(-np.asarray(violations), kind="stable")
    return order[:k]


@dataclass(frozen=True)
class GeodesicSamplePlan:
    """Random geodesic segments inside ``B(center, radius)``."""

    count: int = 100
    length_range: tuple = (0.05, 1.0)
    seed: int = 0
    center: Optional[tuple] = None
    radius: float = 1.0

    def region_center(self, model):
        return model.origin() if self.center is None else np.asarray(self.center, float)

    def segments(self, model, rng=None):
        rng = np.random.default_rng(self.seed) if rng is None else rng
        c = self.region_center(model)
        lo, hi = self.length_range
        out = []
        while len(out) < self.count:
            start = model.random_point(c, self.radius, rng)
            u = model.random_unit_tangent(start, rng)
            length = lo + (hi - lo) * rng.random()
            for _ in range(50):
                end = model.exp(start, length * u)
                if model.dist(c, end) <= self.radius:
                    break
                length *= 0.7
            else:
                continue
            out.append(GeodesicSegment.from_velocity(model, start, length * u))
        return out

    def points(self, model, n=None, rng=None):
        rng = np.random.default_rng(self.seed + 1) if rng is None else rng
        return model.random_point(self.region_center(model), self.radius, rng,
                                  size=self.count if n is None else n)


def envelope_function(model, f, params):
    """Array of points -> array of ``f_lam`` values, solved as one batch."""

    def g(points):
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        vals = np.array([r.value for r in moreau_envelope_batch(model, f, flat, params)])
        return vals.reshape(pts.shape[:-1])

    g.name = f"envelope[{f.name}, lam={params.lam:g}]"
    return g


def _values(model, f, points, params):
    return np.array([r.value for r in moreau_envelope_batch(model, f, points, params)])


def _name(g):
    return getattr(g, "name", None) or getattr(g, "__name__", "function")


# ---------------------------------------------------------------------------
# Convexity
# ---------------------------------------------------------------------------


def check_midpoint_convexity(model, g, plan=None, segments=None, atol=DEFAULT_ATOL,
                             rtol=DEFAULT_RTOL, name="midpoint-convexity"):
    """Worst scaled value of ``g(mid) - (g(start) + g(end)) / 2`` over sampled geodesics.

    The raw violation of each segment is divided by ``1 + rtol/atol * max|g|``
    so that the pass rule reads ``worst <= atol``.
    """
    segs = segments if segments is not None else plan.segments(model)
    starts = np.array([s.start for s in segs])
    ends = np.array([s.end for s in segs])
    mids = np.array([s(0.5) for s in segs])
    vals = g(np.concatenate([starts, mids, ends]))
    n = len(segs)
    g0, gm, g1 = vals[:n], vals[n:2 * n], vals[2 * n:]
    raw = gm - 0.5 * (g0 + g1)
    mag = np.maximum(np.maximum(np.abs(g0), np.abs(g1)), np.abs(gm))
    scaled = raw / (1.0 + (rtol / atol) * mag)
    witnesses = [{"start": starts[i], "end": ends[i], "values": [g0[i], gm[i], g1[i]],
                  "raw_violation": raw[i]} for i in _worst(scaled)]
    params = {"atol": atol, "rtol": rtol}
    if plan is not None:
        params.update(count=plan.count, seed=plan.seed, radius=plan.radius)
    return CheckReport(name, model.name, _name(g), n, float(np.max(scaled)), atol,
                       witnesses, params)


def parallel_meridians(model, separation=0.5, half_length=0.5):
    """Two meridian arcs of the sphere symmetric about the equator."""
    def meridian(lon):
        start = np.array([math.cos(-half_length) * math.cos(lon),
                          math.cos(-half_length) * math.sin(lon), math.sin(-half_length)])
        end = np.array([math.cos(half_length) * math.cos(lon),
                        math.cos(half_length) * math.sin(lon), math.sin(half_length)])
        return model.geodesic(start, end)

    return meridian(0.0), meridian(separation)


def check_distance_joint_convexity(model, plan=None, pairs=None, atol=DEFAULT_ATOL,
                                   rtol=DEFAULT_RTOL):
    """Midpoint convexity of ``t -> d(b1(t), b2(t))`` for pairs of geodesics."""
    if pairs is None:
        rng = np.random.default_rng(plan.seed)
        first = plan.segments(model, rng)
        second = plan.segments(model, rng)
        pairs = list(zip(first, second))
    t = np.array([0.0, 0.5, 1.0])
    raws, scaled, wit = [], [], []
    for b1, b2 in pairs:
        ell = model.dist(b1(t), b2(t))
        raw = ell[1] - 0.5 * (ell[0] + ell[2])
        raws.append(raw)
        scaled.append(raw / (1.0 + (rtol / atol) * float(np.max(np.abs(ell)))))
        wit.append({"b1": [b1.start, b1.end], "b2": [b2.start, b2.end], "ell": ell,
                    "raw_violation": raw})
    worst = _worst(scaled)
    params = {"atol": atol, "rtol": rtol}
    if plan is not None:
        params.update(count=plan.count, seed=plan.seed, radius=plan.radius)
    return CheckReport("distance-joint-convexity", model.name, "d(b1(t), b2(t))", len(pairs),
                       float(np.max(scaled)), atol, [wit[i] for i in worst], params)


# ---------------------------------------------------------------------------
# Order, convergence, minimizers, symmetry
# ---------------------------------------------------------------------------


def check_order(model, f, lambdas, points, params, tol=1e-10):
    """``f_lam <= f`` and ``lam1 < lam2 => f_lam2 <= f_lam1`` on the sample points."""
    lams = sorted(float(v) for v in lambdas)
    points = np.asarray(points, dtype=float)
    fvals = f(points)
    table = np.array([_values(model, f, points, params.with_lam(lam)) for lam in lams])
    with np.errstate(invalid="ignore"):
        above_f = np.where(np.isfinite(fvals), table - fvals, -np.inf)
    mono = table[1:] - table[:-1] if len(lams) > 1 else np.full((1, len(points)), -np.inf)
    viol = np.maximum(np.max(above_f, axis=0), np.max(mono, axis=0))
    wit = [{"x": points[i], "f": fvals[i], "envelope": table[:, i]} for i in _worst(viol)]
    return CheckReport("order-monotonicity", model.name, f.name, len(points),
                       float(np.max(viol)), tol, wit, {"lambdas": lams})


def lambda_sweep(model, f, lambdas, points, params):
    """Rows ``(lam, sup_gap, mean_gap)`` of ``f - f_lam`` over the finite sample points."""
    points = np.asarray(points, dtype=float)
    fvals = f(points)
    keep = np.isfinite(fvals)
    rows = []
    for lam in lambdas:
        env = _values(model, f, points[keep], params.with_lam(lam))
        gap = fvals[keep] - env
        rows.append({"lam": float(lam), "sup_gap": float(np.max(gap)) if gap.size else 0.0,
                     "mean_gap": float(np.mean(gap)) if gap.size else 0.0})
    return rows


def check_convergence(model, f, lambdas, points, params, radius=None, tol=1e-6):
    """Gaps are nonnegative, nondecreasing in ``lam``, and below ``L^2 lam / 2`` when
    a Lipschitz constant is known."""
    rows = lambda_sweep(model, f, sorted(lambdas), points, params)
    viol = []
    for i, row in enumerate(rows):
        v = -row["sup_gap"]
        if i > 0:
            v = max(v, rows[i - 1]["sup_gap"] - row["sup_gap"])
        if f.lipschitz is not None:
            lip = f.lipschitz(radius if radius is not None else 1.0)
            v = max(v, row["sup_gap"] - lip ** 2 * row["lam"] / 2.0)
        viol.append(v)
    i = int(np.argmax(viol))
    return CheckReport("convergence", model.name, f.name, len(points), float(viol[i]), tol,
                       [rows[i]], {"rows": rows})


def _dist_to_minimizers(model, minimizers, pts):
    if isinstance(minimizers, ConvexSetOracle):
        return minimizers.distance(pts)
    mins = np.asarray(minimizers, dtype=float).reshape(-1, pts.shape[-1])
    return np.min(np.stack([model.dist(pts, m) for m in mins]), axis=0)


def check_minimizer_preservation(model, f, lambdas, grid_points, resolution, params,
                                 minimizers=None, tol=1e-9):
    """Grid argmin of ``f_lam`` sits within ``resolution`` of the minimizers of ``f``
    and ``f_lam = f`` on minimizers."""
    minimizers = f.minimizers if minimizers is None else minimizers
    pts = np.asarray(grid_points, dtype=float)
    worst, wit = -math.inf, []
    for lam in lambdas:
        p = params.with_lam(lam)
        env = _values(model, f, pts, p)
        low = env.min()
        arg = pts[env <= low + tol]
        if isinstance(minimizers, str) and minimizers == "all":
            v = float(np.max(np.abs(env - f(pts)))) - tol
        else:
            reach = float(np.max(_dist_to_minimizers(model, minimizers, arg))) - resolution
            if isinstance(minimizers, ConvexSetOracle):
                probes = minimizers.sample(np.random.default_rng(params.seed), 8)
            else:
                probes = np.asarray(minimizers, float).reshape(-1, pts.shape[-1])
            same = float(np.max(np.abs(_values(model, f, probes, p) - f(probes))))
            v = max(reach, same - tol)
        if v > worst:
            worst = v
            wit = [{"lam": lam, "grid_min": low, "argmin_count": int(np.sum(env <= low + tol))}]
    return CheckReport("minimizer-preservation", model.name, f.name, len(pts), worst, 0.0,
                       wit, {"lambdas": list(lambdas), "resolution": resolution})


def check_symmetry(model, f, iso, lam, points, params, tol=1e-8):
    """``|f_lam(T x) - f_lam(x)|`` over the sample points."""
    p = params.with_lam(lam)
    pts = np.asarray(points, dtype=float)
    moved = np.array([iso.apply(x) for x in pts])
    vals = _values(model, f, np.concatenate([moved, pts]), p)
    diffs = np.abs(vals[: len(pts)] - vals[len(pts):])
    wit = [{"x": pts[i], "diff": diffs[i]} for i in _worst(diffs)]
    return CheckReport("symmetry", model.name, f.name, len(pts), float(diffs.max()), tol, wit,
                       {"isometry": iso.description, "lam": lam})


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def _fd_stencil(model, x, h):
    basis = model.tangent_basis(x)
    return basis, np.concatenate([model.exp(x, h * basis), model.exp(x, -h * basis)])


def finite_difference_gradient(model, g, x, h=1e-5):
    """Central differences of ``g`` along the geodesics ``exp(x, +-h e_i)``.

    ``g`` maps an array of points to an array of values.
    """
    x = np.asarray(x, dtype=float)
    basis, pts = _fd_stencil(model, x, h)
    vals = np.asarray(g(pts), dtype=float)
    n = len(basis)
    return ((vals[:n] - vals[n:]) / (2.0 * h)) @ basis


def check_gradient(model, f, lam, points, params, h=1e-5, tol=1e-5):
    """Relative error of the envelope gradient against central differences.

    Points whose proximal point is not certified unique are skipped.
    """
    p = params.with_lam(lam)
    points = np.asarray(points, dtype=float)
    base = moreau_envelope_batch(model, f, points, p)
    keep = [i for i, r in enumerate(base) if r.minimizer_unique]
    stencils = [_fd_stencil(model, points[i], h) for i in keep]
    n = model.dim
    vals = _values(model, f, np.concatenate([s[1] for s in stencils]), p) if keep else []
    errs, wit = [], []
    for j, i in enumerate(keep):
        chunk = vals[2 * n * j: 2 * n * (j + 1)]
        fd = ((chunk[:n] - chunk[n:]) / (2.0 * h)) @ stencils[j][0]
        grad = base[i].gradient
        diff = float(model.norm(points[i], fd - grad))
        scale = max(float(model.norm(points[i], grad)), 1e-3)
        errs.append(diff / scale)
        wit.append({"x": points[i], "gradient": grad, "finite_difference": fd})
    errs = np.array(errs) if errs else np.array([0.0])
    return CheckReport("gradient-vs-finite-difference", model.name, f.name, len(wit),
                       float(errs.max()), tol, [wit[i] for i in _worst(errs)] if wit else [],
                       {"lam": lam, "h": h})


def _gradient_lipschitz_bound(model, lam, reach):
    # Hessian comparison for d^2/2: eigenvalues <= D coth D when K >= -1, <= 1 when K >= 0
    if model.curvature_sign < 0:
        d = max(reach, 1e-12)
        return (d / math.tanh(d)) / lam
    return 1.0 / lam


def check_c1(model, f, lam, points, params, ladder=(1e-1, 1e-2, 1e-3, 1e-4), rng=None,
             tol=1e-7):
    """Gradient-continuity modulus ``|L_{x'x} grad(x') - grad(x)|`` on shrinking pairs.

    Passes when the modulus stays below ``K * dist(x, x')`` at every rung,
    where ``K`` is ``1/lam`` on flat models and ``D coth D / lam`` on
    curvature -1 models (``D`` the largest distance to a proximal point).
    """
    rng = np.random.default_rng(params.seed) if rng is None else rng
    p = params.with_lam(lam)
    points = np.asarray(points, dtype=float)
    ladder = [float(s) for s in ladder]
    dirs = np.array([model.random_unit_tangent(x, rng) for x in points])
    rungs = np.concatenate([model.exp(points, s * dirs) for s in ladder])
    res = moreau_envelope_batch(model, f, np.concatenate([points, rungs]), p)
    n = len(points)
    worst, wit = -math.inf, []
    for i, x in enumerate(points):
        base = res[i]
        reach = float(model.dist(x, base.prox_point))
        mods = []
        for k in range(len(ladder)):
            other = res[n * (k + 1) + i]
            xk = rungs[n * k + i]
            reach = max(reach, float(model.dist(xk, other.prox_point)))
            back = model.parallel_transport(xk, x, other.gradient)
            mods.append(float(model.norm(x, back - base.gradient)))
        bound = _gradient_lipschitz_bound(model, lam, reach)
        v = max(m - bound * s * (1.0 + 1e-3) for m, s in zip(mods, ladder))
        if v > worst:
            worst = v
            wit = [{"x": x, "ladder": ladder, "modulus": mods, "bound": bound,
                    "ratios": [m / s for m, s in zip(mods, ladder)]}]
    return CheckReport("c1-gradient-continuity", model.name, f.name, n, worst, tol, wit,
                       {"lam": lam, "ladder": ladder})


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------


def check_localization(model, f, xs, lams, params, global_radius=None, density=16.0):
    """Brute-force global grid argmin lies in the localization ball (up to resolution)."""
    c, x0, _ = _minoration_constant(f, params, np.random.default_rng(params.seed))
    worst, wit = -math.inf, []
    h_max = 0.0
    for x, lam in zip(np.asarray(xs, float), lams):
        fx = float(f(x))
        r = localization_radius(fx, lam, c, float(model.dist(x, x0)), params.eta)
        big = global_radius if global_radius is not None else max(3.0 * r, r + 2.0)
        if not model.cartan_hadamard:
            big = min(big, math.pi)
        grid, coords, h = ball_grid(model, x, big, density, 40000)
        h_max = max(h_max, h)
        vals = f(grid) + model.dist(x, grid) ** 2 / (2.0 * lam)
        i = int(np.argmin(vals))
        d_best = float(np.linalg.norm(coords[i]))
        inside = np.linalg.norm(coords, axis=1) <= r + h
        ball_inf = float(np.min(vals[inside]))
        v = (d_best - r) / h
        if v > worst:
            worst = v
            wit = [{"x": x, "lam": lam, "radius": r, "argmin_dist": d_best,
                    "global_inf": float(vals[i]), "ball_inf": ball_inf, "h": h}]
    # violation in units of grid cells; one cell is the resolution allowance
    return CheckReport("localization", model.name, f.name, len(lams), worst, 1.0, wit,
                       {"c": c, "density": density})


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------


def select_lambda0(k, region_radius, convex_radius):
    """Largest ``lam0`` with ``sqrt(lam (2k + k(1 + 2R^2)) / (1 - 2 lam k)) < r``."""
    if math.isinf(convex_radius) or k <= 0:
        return math.inf
    r2 = convex_radius ** 2
    return r2 / (k * (3.0 + 2.0 * region_radius ** 2) + 2.0 * k * r2)


def run_bundle(bundle, model, f, lambdas, center=None, radius=1.0, samples=20, seed=0,
               params=None, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL):
    """Run a named group of checks and return their reports.

    Bundles: ``main-corollary``, ``cartan-hadamard``, ``localization``,
    ``symmetry``, ``c1``.
    """
    params = params or EnvelopeParams(lam=float(lambdas[0]), seed=seed)
    center = model.origin() if center is None else np.asarray(center, float)
    plan = GeodesicSamplePlan(samples, (0.05, min(1.0, radius)), seed, tuple(center), radius)
    rng = np.random.default_rng(seed)
    points = model.random_point(center, radius, rng, size=samples)
    if f.domain is not None:
        # keep half of the samples inside the set so order/convergence see finite values
        inner = f.domain.sample(rng, samples // 2)
        points = np.vstack([points[: samples - len(inner)], inner])
    lams = [float(v) for v in lambdas]
    reports = []
    if bundle == "localization":
        c = f.minoration[0] if f.minoration is not None else 0.0
        lam_cap = 1.0 / (2.0 * c) if c > 0 else math.inf
        use = [lam for lam in lams if lam < lam_cap] or [0.5 * lam_cap]
        finite = points[np.isfinite(f(points))]
        lam_seq = [use[i % len(use)] for i in range(len(finite))]
        return [check_localization(model, f, finite, lam_seq, params)]
    if bundle == "symmetry":
        return [check_symmetry(model, f, iso, lam, points, params)
                for iso in f.symmetries for lam in lams]
    if bundle == "c1":
        return [check_c1(model, f, lam, points, params) for lam in lams]
    if bundle not in ("main-corollary", "cartan-hadamard"):
        raise ValueError(f"unknown bundle {bundle!r}")
    if bundle == "cartan-hadamard" and not model.cartan_hadamard:
        raise ValueError(f"{model.name} is not a Cartan-Hadamard model")
    if bundle == "main-corollary":
        if f.domain is not None:
            raise ValueError("the bounded-region bundle needs a finite-valued field")
        probe = model.random_point(center, 2.0 * radius, rng, size=256)
        k = float(np.max(np.abs(f(probe))))
        lam0 = select_lambda0(k, radius, model.convexity_radius(center))
        lams = [lam for lam in lams if lam < lam0] or [0.5 * lam0]
    reports.append(check_order(model, f, lams, points, params))
    if f.domain is None:
        reports.append(check_convergence(model, f, lams, points, params, radius=radius))
    if f.minimizers is not None:
        grid_h = radius / 4.0
        grid, _, h = ball_grid(model, center, radius, 1.0 / grid_h, 400)
        reports.append(check_minimizer_preservation(model, f, lams, grid, h, params))
    for iso in f.symmetries[:1]:
        reports.append(check_symmetry(model, f, iso, lams[0], points[: max(4, samples // 4)],
                                      params))
    for lam in lams:
        g = envelope_function(model, f, params.with_lam(lam))
        reports.append(check_midpoint_convexity(model, g, plan, atol=atol, rtol=rtol,
                                                name="envelope-midpoint-convexity"))
    reports.append(check_c1(model, f, lams[0], points[: max(4, samples // 4)], params))
    return reports
