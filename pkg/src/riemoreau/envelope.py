"""Moreau envelopes ``f_lam(x) = inf_y f(y) + d(x, y)^2 / (2 lam)`` on model manifolds.

The infimum is localized to a geodesic ball whose radius comes from a
quadratic minoration of ``f``, searched on an exp-chart grid, and the best
cells are refined locally (projected Riemannian gradient descent with
Barzilai-Borwein steps, or a simplex search for fields without a usable
gradient).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .fields import ScalarField, fit_minoration
from .manifolds import ManifoldModel


class ParameterError(ValueError):
    """Invalid envelope parameters (for instance ``lam >= 1 / (2c)``)."""


class InfeasibleError(RuntimeError):
    """No point with a finite objective was found."""


@dataclass(frozen=True)
class EnvelopeParams:
    lam: float
    eta: float = 1e-3
    grid_density: float = 8.0
    refine_tol: float = 1e-10
    max_refine_iters: int = 200
    multistart_count: int = 16
    seed: int = 0
    max_doublings: int = 5
    max_grid_points: int = 1500
    c: Optional[float] = None

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ParameterError(f"lambda must be positive and finite, got {self.lam}")
        if not self.eta > 0:
            raise ParameterError("eta must be positive")
        if not self.grid_density > 0:
            raise ParameterError("grid_density must be positive")
        if self.multistart_count < 1 or self.max_refine_iters < 1:
            raise ParameterError("multistart_count and max_refine_iters must be >= 1")
        if self.c is not None and self.c < 0:
            raise ParameterError("c must be nonnegative")

    def with_lam(self, lam):
        return replace(self, lam=float(lam))


@dataclass
class EnvelopeResult:
    value: float
    prox_point: np.ndarray
    gradient: np.ndarray
    radius_used: float
    minimizer_unique: bool
    evals: int
    status: str
    c: float = 0.0
    iterations: int = 0

    @property
    def gradient_is_witness(self):
        """True when the gradient is only a superdifferential element."""
        return not self.minimizer_unique


def localization_radius(fx, lam, c=0.0, dist_x0=0.0, eta=1e-3):
    """Radius of a ball around ``x`` that contains every near-minimizer.

    ``fx`` is ``f(x)`` or any finite upper bound of ``f_lam(x)``; ``c`` and
    ``dist_x0`` describe the minoration ``f >= -(c/2)(1 + d(., x0)^2)``.
    """
    if not math.isfinite(fx):
        raise ParameterError("the radius needs a finite anchor value")
    if lam <= 0 or eta <= 0:
        raise ParameterError("lambda and eta must be positive")
    if c > 0 and lam >= 1.0 / (2.0 * c):
        raise ParameterError(f"lambda={lam} must be below 1/(2c) = {1.0 / (2.0 * c)}")
    num = 2.0 * fx + 2.0 * eta + c * (2.0 * dist_x0 ** 2 + 1.0)
    return math.sqrt(max(lam * num / (1.0 - 2.0 * lam * c), 0.0))


def envelope_gradient(model, x, y, lam):
    """``-log_x(y) / lam``: the gradient of ``d(., y)^2 / (2 lam)`` at ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        return np.zeros_like(x)
    return -model.log(x, y) / lam


def _minoration_constant(f, params, rng):
    if params.c is not None:
        x0 = f.minoration[1] if f.minoration is not None else f.model.origin()
        return float(params.c), np.asarray(x0, float), True
    if f.minoration is not None:
        c, x0 = f.minoration
        return float(c), np.asarray(x0, float), True
    x0 = f.model.origin()
    return fit_minoration(f, x0, rng), x0, False


def _lattice(n, radii, density, max_points):
    """Integer lattice shared by a batch of balls and the per-ball spacing.

    Each ball gets spacing ``1 / density`` unless the lattice would exceed
    ``max_points`` cells, in which case the spacing grows to fit the ball.
    """
    h0 = 1.0 / density
    cap = max(3, int(math.floor(max_points ** (1.0 / n))))
    cap = cap if cap % 2 == 1 else cap - 1
    need = int(math.floor(float(np.max(radii)) / h0))
    k = min(need, (cap - 1) // 2)
    ticks = np.arange(-k, k + 1)
    lat = np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), axis=-1).reshape(-1, n)
    if k == 0:
        h = np.full(radii.shape, h0)
    else:
        h = np.where(np.floor(radii / h0) <= k, h0, radii / k)
    return lat.astype(float), k, h


def ball_grid(model, x, radius, density, max_points=1500):
    """Exp-chart lattice of ``B(x, radius)``: points, chart coordinates, spacing."""
    x = np.asarray(x, dtype=float)
    lat, _, h = _lattice(model.dim, np.array([float(radius)]), density, max_points)
    coords = lat * h[0]
    coords = coords[np.linalg.norm(coords, axis=1) <= radius + 1e-12]
    return model.exp(x, model.from_chart(x, coords)), coords, float(h[0])


def _bases(model, xs):
    return np.stack([model.tangent_basis(x) for x in xs])


def _chart(model, xs, bases, coords):
    # exp-chart points: rows of xs with coordinates of shape (rows, ..., dim)
    extra = coords.ndim - 2
    v = np.einsum("r...k,rkd->r...d", coords, bases)
    base = xs.reshape(xs.shape[:1] + (1,) * extra + xs.shape[1:])
    return model.exp(np.broadcast_to(base, v.shape), v)


class _Objective:
    """``y -> f(y) + d(x, y)^2 / (2 lam)`` with per-row evaluation counters."""

    def __init__(self, model, f, lam, rows):
        self.model, self.f, self.lam = model, f, lam
        self.evals = np.zeros(rows, dtype=int)

    def __call__(self, y, x, owner=None):
        if owner is not None:
            np.add.at(self.evals, owner, 1)
        with np.errstate(invalid="ignore", over="ignore"):
            return self.f(y) + self.model.dist(x, y) ** 2 / (2.0 * self.lam)

    def grad(self, y, x):
        return self.f.gradient(y) - self.model.log(y, x) / self.lam


def _project(f, y):
    if f.domain is None:
        return y
    return f.domain.project(y)


def _refine_gradient(obj, starts, xs, owner, params, max_move, landmarks=()):
    """Batched projected Riemannian gradient descent with BB steps and backtracking.

    Row ``j`` minimizes the objective anchored at ``xs[j]``. Steps never move
    farther than ``max_move[j]``; a run that lands on a landmark stops there,
    since landmarks are scored separately. Returns the refined points, their
    values and the iteration at which each run stopped.
    """
    m, f = obj.model, obj.f
    marks = np.asarray(landmarks, dtype=float).reshape(-1, m.ambient_dim)
    y = starts.copy()
    fy = obj(y, xs, owner)
    k = y.shape[0]
    step = np.full(k, float(obj.lam))
    active = np.isfinite(fy)
    stop_at = np.zeros(k, dtype=int)
    g = np.zeros_like(y)
    if np.any(active):
        g[active] = obj.grad(y[active], xs[active])
    for it in range(1, params.max_refine_iters + 1):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        ya, xa, ga, fa, sa = y[idx], xs[idx], g[idx], fy[idx], step[idx].copy()
        gn = m.norm(ya, ga)
        sa = np.minimum(sa, max_move[idx] / np.maximum(gn, 1e-300))
        accepted = np.zeros(idx.size, dtype=bool)
        y_new = ya.copy()
        f_new = fa.copy()
        for _ in range(40):
            sel = np.flatnonzero(~accepted)
            if sel.size == 0:
                break
            trial = _project(f, m.exp(ya[sel], -sa[sel, None] * ga[sel]))
            ft = obj(trial, xa[sel], owner[idx[sel]])
            moved = m.dist(ya[sel], trial)
            ok = np.isfinite(ft) & (ft <= fa[sel] - 1e-4 * moved ** 2 / sa[sel])
            y_new[sel[ok]] = trial[ok]
            f_new[sel[ok]] = ft[ok]
            accepted[sel[ok]] = True
            sa[sel[~ok]] *= 0.5
        moved = m.dist(ya, y_new)
        # no measurable decrease left in floating point
        flat = (fa - f_new) <= 8.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(fa))
        stalled = ~accepted | (moved == 0.0) | flat
        g_new = obj.grad(y_new, xa)
        # gradient mapping norm on the accepted step
        gmap = np.where(accepted, moved / np.maximum(sa, 1e-300), 0.0)
        # BB step from transported differences
        s_vec = -m.parallel_transport(ya, y_new, sa[:, None] * ga)
        y_vec = g_new - m.parallel_transport(ya, y_new, ga)
        sy = m.inner(y_new, s_vec, y_vec)
        ss = m.inner(y_new, s_vec, s_vec)
        bb = np.where(sy > 0, ss / np.where(sy > 0, sy, 1.0), 2.0 * sa)
        y[idx], fy[idx], g[idx] = y_new, f_new, g_new
        step[idx] = np.clip(bb, 1e-12 * obj.lam, 1e6 * obj.lam)
        if f.domain is None:
            done = m.norm(y_new, g_new) <= params.refine_tol
        else:
            done = gmap <= params.refine_tol
        for mk in marks:
            done |= m.dist(y_new, mk) <= 1e-9
        finished = idx[done | stalled]
        active[finished] = False
        stop_at[finished] = it
    stop_at[active] = params.max_refine_iters
    return y, fy, stop_at


def _refine_simplex(obj, starts, xs, owner, h, tol):
    """Derivative-free refinement in the exp chart of each start."""
    m = obj.model
    out_y, out_f, iters = [], [], []
    for y0, x, o, hj in zip(starts, xs, owner, h):
        basis = m.tangent_basis(y0)

        def chart(a, y0=y0, basis=basis):
            return m.exp(y0, np.atleast_1d(a) @ basis)

        def fun(a, x=x, o=o, chart=chart):
            v = float(obj(chart(a), x, o))
            return v if math.isfinite(v) else 1e300

        if m.dim == 1:
            res = minimize_scalar(fun, bounds=(-2 * hj, 2 * hj), method="bounded",
                                  options={"xatol": 1e-3 * tol, "maxiter": 500})
            a = np.array([res.x])
        else:
            simplex = np.vstack([np.zeros(m.dim), 0.5 * hj * np.eye(m.dim)])
            res = minimize(fun, np.zeros(m.dim), method="Nelder-Mead",
                           options={"initial_simplex": simplex, "xatol": tol,
                                    "fatol": 1e-2 * tol, "maxiter": 400 * m.dim})
            a = res.x
        y = chart(a)
        fy = float(obj(y, x, o))
        f0 = float(obj(y0, x, o))
        out_y.append(y if fy <= f0 else y0)
        out_f.append(min(fy, f0))
        iters.append(int(res.nit))
    return np.array(out_y), np.array(out_f), np.array(iters, dtype=int)


def _local_minima(values, k, n, count):
    """Per row, lattice indices of the best cells no worse than their neighbours.

    ``values`` has shape ``(rows, (2k+1)**n)`` with ``inf`` outside the ball.
    Returns an index array of shape ``(rows, count)`` and a validity mask.
    """
    rows = values.shape[0]
    side = 2 * k + 1
    cube = values.reshape((rows,) + (side,) * n)
    padded = np.pad(cube, [(0, 0)] + [(1, 1)] * n, constant_values=np.inf)
    is_min = np.isfinite(cube)
    for shift in np.ndindex(*(3,) * n):
        if all(s == 1 for s in shift):
            continue
        window = padded[(slice(None),) + tuple(slice(s, s + side) for s in shift)]
        is_min &= cube <= window
    score = np.where(is_min.reshape(rows, -1), values, np.inf)
    order = np.argsort(score, axis=1, kind="stable")[:, :count]
    best = np.take_along_axis(score, order, axis=1)
    return order, np.isfinite(best)


def _solve_rows(model, f, xs, radii, cand, cand_vals, params, obj, rows):
    """One localized search for a subset of rows; returns per-row best points."""
    n = model.dim
    lam = params.lam
    lat, k, h = _lattice(n, radii, params.grid_density, params.max_grid_points)
    bases = _bases(model, xs)
    coords = lat[None, :, :] * h[:, None, None]
    inside = np.linalg.norm(lat, axis=1)[None, :] * h[:, None] <= radii[:, None] + 1e-12
    pts = _chart(model, xs, bases, coords)
    vals = np.full(inside.shape, np.inf)
    sub = np.nonzero(inside)
    vals[sub] = obj(pts[sub], xs[sub[0]])
    obj.evals[rows] += inside.sum(axis=1)

    count = params.multistart_count
    order, valid = _local_minima(vals, k, n, count)
    r_idx, s_idx = np.nonzero(valid)
    cells = order[r_idx, s_idx]
    shift = np.random.default_rng(params.seed).uniform(-0.125, 0.125, size=(count, n))
    jit_coords = coords[r_idx, cells] + shift[s_idx] * h[r_idx, None]
    jittered = _chart(model, xs[r_idx], bases[r_idx], jit_coords[:, None, :])[:, 0]
    plain = pts[r_idx, cells]
    keep = np.isfinite(obj(jittered, xs[r_idx], rows[r_idx]))
    starts = np.where(keep[:, None], jittered, plain)
    owner = r_idx

    # exact candidates (x, its projection, landmarks) are refined as well
    nc = cand.shape[1]
    c_r, c_j = np.nonzero(np.isfinite(cand_vals))
    starts = np.vstack([starts, cand[c_r, c_j]])
    owner = np.concatenate([owner, c_r])
    iters = np.zeros(len(xs), dtype=int)
    if len(starts):
        if f.gradient is not None and f.smooth:
            ys, fs, it = _refine_gradient(obj, starts, xs[owner], rows[owner], params,
                                          radii[owner], f.landmarks)
        else:
            ys, fs, it = _refine_simplex(obj, starts, xs[owner], rows[owner], h[owner],
                                          params.refine_tol)
        np.maximum.at(iters, owner, it)
    else:
        ys, fs = np.zeros((0, model.ambient_dim)), np.zeros(0)

    best_y = np.full(xs.shape, np.nan)
    best_f = np.full(len(xs), np.inf)
    unique = np.ones(len(xs), dtype=bool)
    all_owner = np.concatenate([owner, np.repeat(np.arange(len(xs)), nc)])
    all_y = np.vstack([ys, cand.reshape(-1, cand.shape[-1])])
    all_f = np.concatenate([fs, cand_vals.reshape(-1)])
    all_f = np.where(np.isfinite(all_f), all_f, np.inf)
    for i in range(len(xs)):
        mine = np.flatnonzero(all_owner == i)
        fi = all_f[mine]
        j = int(np.argmin(fi))
        if not math.isfinite(fi[j]):
            continue
        best_y[i], best_f[i] = all_y[mine[j]], fi[j]
        tol = 10.0 * params.refine_tol * max(1.0, abs(fi[j]))
        near = fi <= fi[j] + tol
        far = model.dist(all_y[mine], best_y[i]) > 10.0 * h[i]
        unique[i] = not np.any(near & far)
    return best_y, best_f, unique, h, iters


def moreau_envelope_batch(model: ManifoldModel, f: ScalarField, xs, params: EnvelopeParams,
                          chunk_points=200_000):
    """Envelope results at every row of ``xs``.

    Rows are solved independently; batching only shares the array work. A
    row whose best point lies on the boundary of its search ball has its
    radius doubled and is solved again.
    """
    xs = np.asarray(xs, dtype=float)
    model._check_shape(xs)
    if xs.ndim != 2:
        raise ParameterError("moreau_envelope_batch expects a 2-d array of points")
    N = xs.shape[0]
    lam = params.lam
    c, x0, certified = _minoration_constant(f, params, np.random.default_rng(params.seed))
    if c > 0 and lam >= 1.0 / (2.0 * c):
        raise ParameterError(f"lambda={lam} must be below 1/(2c) = {1.0 / (2.0 * c):g}")
    obj = _Objective(model, f, lam, N)
    everything = np.arange(N)

    fx = np.asarray(f(xs), dtype=float) if N else np.zeros(0)
    proj = xs.copy()
    missing = ~np.isfinite(fx)
    if np.any(missing):
        if f.domain is None:
            i = int(np.flatnonzero(missing)[0])
            raise InfeasibleError(f"{f.name}(x) = +inf at row {i} and the field has no "
                                  "projection oracle")
        proj[missing] = f.domain.project(xs[missing])
    marks = [np.asarray(p, float) for p in f.landmarks]
    cand = np.stack([xs, proj] + [np.broadcast_to(p, xs.shape) for p in marks], axis=1)
    cand_vals = obj(cand, xs[:, None, :], None)
    obj.evals += cand.shape[1]
    upper = np.where(missing, cand_vals[:, 1], fx)
    # the projection column only matters where x itself is infeasible
    cand_vals[~missing, 1] = np.inf
    bad = ~np.isfinite(upper)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InfeasibleError(f"{f.name}: projection of row {i} has infinite value")

    dx0 = model.dist(xs, x0) if N else np.zeros(0)
    h0 = 1.0 / params.grid_density
    radii = np.array([localization_radius(u, lam, c, d, params.eta)
                      for u, d in zip(upper, dx0)]) + h0
    best_y = np.full(xs.shape, np.nan)
    best_f = np.full(N, np.inf)
    unique = np.ones(N, dtype=bool)
    iters = np.zeros(N, dtype=int)
    status = np.full(N, "certified" if certified else "heuristic-c", dtype=object)

    cells = max(3, int(math.floor(params.max_grid_points ** (1.0 / model.dim)))) ** model.dim
    per_chunk = max(1, chunk_points // cells)
    todo = everything
    for attempt in range(params.max_doublings + 1):
        if todo.size == 0:
            break
        again = []
        for lo in range(0, todo.size, per_chunk):
            rows = todo[lo:lo + per_chunk]
            by, bf, un, h, it = _solve_rows(model, f, xs[rows], radii[rows], cand[rows],
                                            cand_vals[rows], params, obj, rows)
            best_y[rows], best_f[rows], unique[rows] = by, bf, un
            iters[rows] = np.maximum(iters[rows], it)
            found = np.isfinite(bf)
            inside = np.zeros(rows.size, dtype=bool)
            if np.any(found):
                inside[found] = model.dist(xs[rows[found]], by[found]) <= \
                    radii[rows[found]] - 0.5 * h[found]
            again.append(rows[~inside])
        todo = np.concatenate(again)
        if todo.size and attempt == params.max_doublings:
            status[todo] = "boundary-hit"
            break
        radii[todo] *= 2.0
    if np.any(~np.isfinite(best_f)):
        i = int(np.flatnonzero(~np.isfinite(best_f))[0])
        raise InfeasibleError(f"no finite objective value near row {i} "
                              f"within radius {radii[i]:g}")
    # prefer the exact point x when it ties with the best candidate
    tie = cand_vals[:, 0] <= best_f
    best_y[tie], best_f[tie] = xs[tie], cand_vals[tie, 0]
    out = []
    for i in range(N):
        grad = envelope_gradient(model, xs[i], best_y[i], lam)
        out.append(EnvelopeResult(float(best_f[i]), best_y[i], grad, float(radii[i]),
                                  bool(unique[i]), int(obj.evals[i]), str(status[i]), c,
                                  int(iters[i])))
    return out


def moreau_envelope(model: ManifoldModel, f: ScalarField, x, params: EnvelopeParams):
    """Value, proximal point and gradient of the Moreau envelope of ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    model._check_shape(x)
    if x.ndim != 1:
        raise ParameterError("moreau_envelope takes a single point; use moreau_envelope_batch")
    return moreau_envelope_batch(model, f, x[None, :], params)[0]


def prox_point(model, f, x, params):
    return moreau_envelope(model, f, x, params).prox_point


def envelope_results(model, f, points, params, threads=1):
    """Envelope results at each row of ``points``, in input order.

    With ``threads > 1`` the rows are split into contiguous blocks solved
    concurrently; the output does not depend on the thread count.
    """
    points = np.asarray(points, dtype=float)
    if threads and threads > 1 and len(points) > 1:
        from concurrent.futures import ThreadPoolExecutor

        blocks = np.array_split(np.arange(len(points)), min(threads, len(points)))
        with ThreadPoolExecutor(threads) as pool:
            parts = pool.map(lambda b: moreau_envelope_batch(model, f, points[b], params), blocks)
            return [r for part in parts for r in part]
    return moreau_envelope_batch(model, f, points, params)


def envelope_values(model, f, points, params, threads=1):
    """Envelope values at each row of ``points``, in input order."""
    return np.array([r.value for r in envelope_results(model, f, points, params, threads)])


def hopf_lax(model, f, t, x, params):
    """``u(t, x) = f_t(x)`` for ``t > 0`` and ``u(0, x) = f(x)``.

    ``x`` may be one point or an array of points.
    """
    if t < 0:
        raise ParameterError("time must be nonnegative")
    x = np.asarray(x, dtype=float)
    if t == 0:
        out = np.asarray(f(x), dtype=float)
    else:
        res = moreau_envelope_batch(model, f, x.reshape(-1, x.shape[-1]), params.with_lam(t))
        out = np.array([r.value for r in res]).reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out


def hj_residual(model, f, t, x, h, params):
    """``|du/dt + |grad_x u|^2 / 2|`` with a central difference in time.

    ``x`` may be one point or an array of points.
    """
    if t <= 0:
        raise ParameterError("time must be positive")
    if not 0 < h < t:
        raise ParameterError("need 0 < h < t")
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, x.shape[-1])
    res = moreau_envelope_batch(model, f, flat, params.with_lam(t))
    du_dt = (hopf_lax(model, f, t + h, flat, params)
             - hopf_lax(model, f, t - h, flat, params)) / (2 * h)
    grads = np.array([r.gradient for r in res])
    out = np.abs(du_dt + 0.5 * model.norm(flat, grads) ** 2).reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out
