"""Hybrid region/edge active contours by per-segment geodesic replacement.

One evolution step linearizes the region term of a piecewise-constant
segmentation energy at the current closed curve, converts it into a
divergence-constrained vector field on a tubular neighborhood of the
curve, bounds that field into a Randers drift, and then replaces each
inter-vertex subpath of the curve with the globally minimal geodesic of
the resulting metric inside the subpath's own Voronoi cell of the tube.
Concatenating the replacements yields the next curve; the prescribed
vertices stay exactly fixed.

The area-to-boundary conversion rests on Green's theorem: with the drift
set to the quarter-turned bounded field, the asymmetric part of a closed
curve's metric length equals the integral of the field's divergence over
the enclosed region, so shortening curves trades boundary length against
the linearized region gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import (
    DegenerateRegion,
    SegmentTraceFailed,
    SelfIntersecting,
    SolverDiverged,
    MinPathError,
)
from .features import remap_bounded
from .grid import (
    Grid2,
    Polyline,
    ScalarField,
    VectorField2,
    curve_is_simple,
    rasterize_region,
    resample_arclength,
)
from .metrics import Metric2, curve_length, make_isotropic, make_region_randers
from .eikonal import SolveRequest, solve
from .tracing import TraceConfig, backtrack

_KINDS = ("chan_vese", "balloon_inflate", "balloon_deflate")


@dataclass(frozen=True)
class RegionGradient:
    """Pointwise linearization of the region term at the current curve.

    rho < 0 marks pixels the region wants to absorb, rho > 0 pixels it
    wants to shed.
    """

    rho: ScalarField
    kind: str
    means: tuple | None = None


@dataclass
class EvolutionState:
    """A closed curve anchored at fixed vertices, plus step bookkeeping.

    vertices are ordered along the curve; the curve is simple, closed and
    passes within half a cell of every vertex in order.  history collects
    one record per completed step (hausdorff gap, surrogate lengths,
    hybrid energy, means).
    """

    vertices: np.ndarray
    curve: Polyline
    k: int
    tube_radius: float
    alpha_tilde: float | None
    potential: ScalarField
    means: tuple | None = None
    history: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (m, 2)")
        if self.vertices.shape[0] < 3:
            raise ValueError("need at least 3 vertices")
        if not self.curve.closed:
            raise ValueError("evolution curve must be closed")
        if not self.tube_radius >= 2.0:
            raise ValueError("tube_radius must be at least 2 cells")
        _vertex_order_on_curve(self.curve, self.vertices)


def _dense_points(curve: Polyline, step: float = 0.25) -> np.ndarray:
    if curve.length() <= step:
        return curve.points[:, :2]
    return resample_arclength(curve, step).points[:, :2]


def _vertex_order_on_curve(curve: Polyline, vertices: np.ndarray) -> np.ndarray:
    """Dense-point index of each vertex; must be cyclically increasing."""
    dense = _dense_points(curve)
    tree = cKDTree(dense)
    dist, idx = tree.query(vertices)
    if float(np.max(dist)) > 0.5:
        raise ValueError(
            f"curve passes {float(np.max(dist)):.3g} cells from a vertex (max allowed 0.5)"
        )
    rolled = (idx - idx[0]) % dense.shape[0]
    if np.any(np.diff(rolled) <= 0):
        raise ValueError("vertices are not in order along the curve")
    return idx


def chan_vese_means(img: ScalarField, mask: np.ndarray) -> tuple:
    """Mean gray level inside (mask=1) and outside (mask=0) the region."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.values.shape:
        raise ValueError("mask shape must match the image")
    n_in = int(mask.sum())
    if n_in == 0 or n_in == mask.size:
        raise DegenerateRegion("region mask needs both interior and exterior pixels")
    vals = img.values
    return float(vals[mask].mean()), float(vals[~mask].mean())


def region_gradient(img: ScalarField, mask: np.ndarray, kind: str = "chan_vese") -> RegionGradient:
    """Linearized region force: negative where the region should grow."""
    if kind == "chan_vese":
        mu_in, mu_out = chan_vese_means(img, mask)
        rho = (img.values - mu_in) ** 2 - (img.values - mu_out) ** 2
        return RegionGradient(ScalarField(img.grid, rho), kind, (mu_in, mu_out))
    if kind == "balloon_inflate":
        return RegionGradient(ScalarField(img.grid, np.full(img.grid.shape, -1.0)), kind)
    if kind == "balloon_deflate":
        return RegionGradient(ScalarField(img.grid, np.full(img.grid.shape, 1.0)), kind)
    raise ValueError(f"unknown region gradient kind {kind!r}; expected one of {_KINDS}")


def _curve_distance_field(curve: Polyline, grid: Grid2, step: float = 0.25) -> np.ndarray:
    """Per-node distance to the curve via a densely resampled point cloud.

    Resampling at a quarter cell keeps the error below step/2, well inside
    the half-cell tolerance the tube contract allows.
    """
    dense = _dense_points(curve, step)
    tree = cKDTree(dense)
    s = grid.spacing
    xs, ys = np.meshgrid(np.arange(grid.width) * s, np.arange(grid.height) * s)
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    dist, _ = tree.query(pts)
    return dist.reshape(grid.shape)


def tubular_neighborhood(curve: Polyline, r: float, grid: Grid2) -> np.ndarray:
    """Mask of nodes strictly closer than r to the curve."""
    if not r >= 2.0:
        raise ValueError("tube radius must be at least 2 cells")
    return _curve_distance_field(curve, grid) < r


def solve_divergence_field(rho: ScalarField, mask: np.ndarray, rtol: float = 1e-8) -> VectorField2:
    """Minimal-norm field whose central-difference divergence is rho on mask.

    The minimizer of the L2 norm among fields with prescribed divergence
    is curl-free, so it is the gradient of a potential u solving a Poisson
    problem grounded to u = 0 outside the mask.  Because the divergence is
    later taken by central differences of the returned field, u satisfies
    the matching wide-stencil Laplacian (spacing 2h), which makes div of
    the result equal rho on interior nodes up to solver tolerance.
    """
    grid = rho.grid
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError("mask shape must match the field grid")
    h, w = grid.shape
    n = int(mask.sum())
    theta = np.zeros(grid.shape + (2,))
    if n == 0 or not np.any(rho.values[mask] != 0.0):
        return VectorField2(grid, theta)

    index = -np.ones(grid.shape, dtype=np.int64)
    iy, ix = np.nonzero(mask)
    index[iy, ix] = np.arange(n)
    s = grid.spacing

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    data = [np.ones(n)]
    for dy, dx in ((0, 2), (0, -2), (2, 0), (-2, 0)):
        ny = iy + dy
        nx = ix + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        ok[ok] &= mask[ny[ok], nx[ok]]
        rows.append(np.arange(n)[ok])
        cols.append(index[ny[ok], nx[ok]])
        data.append(np.full(int(ok.sum()), -0.25))
    mat = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    b = -rho.values[iy, ix] * s * s

    max_iter = 10 * n
    u, info = spla.cg(mat, b, rtol=rtol, atol=0.0, maxiter=max_iter)
    if info > 0:
        raise SolverDiverged(
            f"conjugate gradients did not reach rtol={rtol:g} in {max_iter} iterations"
        )
    # the stop rule bounds the 2-norm; the divergence contract is pointwise,
    # so polish once more if the worst row residual is still too large
    resid = mat @ u - b
    bound = 1e-7 * float(np.max(np.abs(b))) if np.max(np.abs(b)) > 0 else 0.0
    if float(np.max(np.abs(resid))) > bound:
        u, info = spla.cg(mat, b, x0=u, rtol=rtol * 1e-3, atol=0.0, maxiter=max_iter)
        if info > 0:
            raise SolverDiverged("conjugate gradient polish pass did not converge")

    full_u = np.zeros(grid.shape)
    full_u[iy, ix] = u
    theta[:, 1:-1, 0] = (full_u[:, 2:] - full_u[:, :-2]) / (2.0 * s)
    theta[:, -1, 0] = (full_u[:, -1] - full_u[:, -2]) / s
    theta[:, 0, 0] = (full_u[:, 1] - full_u[:, 0]) / s
    theta[1:-1, :, 1] = (full_u[2:, :] - full_u[:-2, :]) / (2.0 * s)
    theta[-1, :, 1] = (full_u[-1, :] - full_u[-2, :]) / s
    theta[0, :, 1] = (full_u[1, :] - full_u[0, :]) / s
    theta[~mask] = 0.0
    return VectorField2(grid, theta)


def divergence(field: VectorField2) -> np.ndarray:
    """Central-difference divergence (NaN on the one-cell border)."""
    v = field.values
    s = field.grid.spacing
    out = np.full(field.grid.shape, np.nan)
    out[1:-1, 1:-1] = (v[1:-1, 2:, 0] - v[1:-1, :-2, 0] + v[2:, 1:-1, 1] - v[:-2, 1:-1, 1]) / (
        2.0 * s
    )
    return out


def remap_field(theta: VectorField2, alpha_tilde: float) -> VectorField2:
    """Bound the divergence field below unit norm, keeping directions."""
    if not alpha_tilde > 0:
        raise ValueError("alpha_tilde must be positive")
    return remap_bounded(theta, alpha_tilde)


def hausdorff_distance(a: Polyline, b: Polyline, step: float = 0.5) -> float:
    """Symmetric Hausdorff gap between two curves, resampled at step."""
    pa = _dense_points(a, step)
    pb = _dense_points(b, step)
    ta = cKDTree(pa)
    tb = cKDTree(pb)
    d_ab, _ = tb.query(pa)
    d_ba, _ = ta.query(pb)
    return float(max(d_ab.max(), d_ba.max()))


def _adaptive_gain(theta: VectorField2, mask: np.ndarray) -> float:
    norms = np.linalg.norm(theta.values[mask], axis=-1)
    norms = norms[norms > 1e-12]
    if norms.size == 0:
        return 1.0
    return 1.0 / float(np.median(norms))


def _disk_mask(grid: Grid2, center: np.ndarray, radius: float) -> np.ndarray:
    s = grid.spacing
    xs, ys = np.meshgrid(np.arange(grid.width) * s, np.arange(grid.height) * s)
    return np.hypot(xs - center[0], ys - center[1]) <= radius


def _split_subpaths(curve: Polyline, vertices: np.ndarray) -> list:
    """Dense subpath point lists from each vertex to its successor."""
    dense = _dense_points(curve)
    idx = _vertex_order_on_curve(curve, vertices)
    m = vertices.shape[0]
    n = dense.shape[0]
    parts = []
    for i in range(m):
        a = idx[i]
        b = idx[(i + 1) % m]
        if a < b:
            pts = dense[a : b + 1]
        else:
            pts = np.vstack([dense[a:], dense[: b + 1]])
        pts = np.vstack([vertices[i], pts, vertices[(i + 1) % m]])
        parts.append(pts)
    return parts


def _segment_metric_domain(
    vor: np.ndarray, i: int, core: np.ndarray, grid: Grid2, qa: np.ndarray, qb: np.ndarray
) -> np.ndarray:
    domain = (vor == i) & core
    domain |= _disk_mask(grid, qa, 1.5)
    domain |= _disk_mask(grid, qb, 1.5)
    return domain


def _segment_crossing(p, q, r, s):
    """Interior intersection point of segments pq and rs, or None."""
    dq = q - p
    ds = s - r
    denom = dq[0] * ds[1] - dq[1] * ds[0]
    if abs(denom) < 1e-30:
        return None
    dr = r - p
    t = (dr[0] * ds[1] - dr[1] * ds[0]) / denom
    u = (dr[0] * dq[1] - dr[1] * dq[0]) / denom
    if 1e-12 < t < 1.0 - 1e-12 and 1e-12 < u < 1.0 - 1e-12:
        return p + t * dq
    return None


def _strip_micro_loops(
    points: np.ndarray,
    anchors: np.ndarray,
    span: int = 6,
    extent: float = 1.5,
) -> np.ndarray:
    """Excise sub-pixel self-loops left by descent jitter.

    Traced polylines occasionally double back by a fraction of a cell and
    cross their own previous sub-segment.  Any crossing between segments at
    most `span` apart whose enclosed loop spans less than `extent` cells is
    collapsed onto the intersection point.  Loops containing an anchor
    vertex are left alone, as are large-scale crossings.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in points]
    for _ in range(64):
        m = len(pts)
        found = None
        for i in range(m - 2):
            for j in range(i + 2, min(i + 1 + span, m - 1)):
                x = _segment_crossing(pts[i], pts[i + 1], pts[j], pts[j + 1])
                if x is None:
                    continue
                loop = np.stack(pts[i + 1 : j + 1])
                if float(np.ptp(loop, axis=0).max()) > extent:
                    continue
                near_anchor = np.min(
                    np.linalg.norm(loop[:, None, :] - anchors[None, :, :], axis=-1)
                )
                if near_anchor < 1e-9:
                    continue
                found = (i, j, x)
                break
            if found:
                break
        if not found:
            break
        i, j, x = found
        pts[i + 1 : j + 1] = [x]
    return np.stack(pts)


def evolve_step(
    state: EvolutionState,
    img: ScalarField,
    kind: str = "chan_vese",
    cfg: TraceConfig | None = None,
    resample_vertices: bool = False,
) -> EvolutionState:
    """One curve-evolution step: linearize, solve, remap, retrace, stitch.

    The returned state's curve is simple, closed, passes through every
    vertex in order, and stays inside the current curve's tube.
    """
    grid = img.grid
    if state.potential.grid.shape != grid.shape:
        raise ValueError("edge potential and image must share a grid")
    vertices = state.vertices
    curve = state.curve

    mask = rasterize_region(curve, grid)
    grad = region_gradient(img, mask, kind)
    d_field = _curve_distance_field(curve, grid)
    tube = d_field < state.tube_radius
    theta = solve_divergence_field(grad.rho, tube)
    gain = state.alpha_tilde if state.alpha_tilde is not None else _adaptive_gain(theta, tube)
    varpi = remap_field(theta, gain)
    metric = make_region_randers(state.potential, varpi)

    subpaths = _split_subpaths(curve, vertices)
    m = len(subpaths)
    tube_flat = np.nonzero(tube)
    tube_pts = np.stack(
        [tube_flat[1] * grid.spacing, tube_flat[0] * grid.spacing], axis=1
    )
    dists = np.empty((m, tube_pts.shape[0]))
    for i, pts in enumerate(subpaths):
        dists[i] = cKDTree(pts).query(tube_pts)[0]
    vor = np.full(grid.shape, -1, dtype=np.int64)
    vor[tube_flat] = np.argmin(dists, axis=0)

    # erode the solve domain by one cell so interpolated path points stay
    # strictly inside the tube even between nodes
    core = d_field < state.tube_radius - 1.0
    segments = []
    for i in range(m):
        qa = vertices[i]
        qb = vertices[(i + 1) % m]
        domain = _segment_metric_domain(vor, i, core, grid, qa, qb)
        request = SolveRequest(
            seeds=qa[None, :],
            stop="first_reached",
            targets=qb[None, :],
            domain=domain,
        )
        try:
            dmap = solve(metric, request)
            piece = backtrack(dmap, metric, qb, cfg)
        except MinPathError as exc:
            raise SegmentTraceFailed(
                f"segment {i} failed inside its cell: {exc}", segment=i
            ) from exc
        pts = piece.points
        if float(np.linalg.norm(pts[0] - qa)) > 1e-9:
            pts = np.vstack([qa, pts])
        segments.append(pts)

    stitched = []
    for pts in segments:
        body = pts[:-1]
        if stitched and float(np.linalg.norm(body[0] - stitched[-1][-1])) <= 1e-9:
            body = body[1:]
        if body.shape[0]:
            stitched.append(body)
    new_pts = np.vstack(stitched)
    keep = np.ones(new_pts.shape[0], dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(new_pts, axis=0), axis=1) > 1e-9
    new_pts = _strip_micro_loops(new_pts[keep], vertices)
    new_curve = Polyline(new_pts, closed=True)
    if not curve_is_simple(new_curve):
        raise SelfIntersecting("stitched evolution curve crosses itself")

    gap = hausdorff_distance(curve, new_curve)
    surrogate_old = curve_length(metric, curve)
    surrogate_new = curve_length(metric, new_curve)
    new_mask = rasterize_region(new_curve, grid)
    if kind == "chan_vese":
        mu_in, mu_out = chan_vese_means(img, new_mask)
        data_term = float(
            np.sum((img.values[new_mask] - mu_in) ** 2)
            + np.sum((img.values[~new_mask] - mu_out) ** 2)
        )
        means = (mu_in, mu_out)
    else:
        sign = -1.0 if kind == "balloon_inflate" else 1.0
        data_term = sign * float(new_mask.sum())
        means = state.means
    edge_term = curve_length(make_isotropic(state.potential), new_curve)
    record = {
        "k": state.k,
        "hausdorff": gap,
        "surrogate_old": surrogate_old,
        "surrogate_new": surrogate_new,
        "energy": data_term + edge_term,
        "max_drift": float(np.max(np.linalg.norm(varpi.values, axis=-1))),
        "means": means,
    }

    new_vertices = vertices
    if resample_vertices:
        # re-place the anchors at equal arc length, keeping vertex 0 where
        # the new curve passes closest to its old position
        dense = _dense_points(new_curve)
        start = int(cKDTree(dense).query(vertices[0])[1])
        rolled = np.roll(dense, -start, axis=0)
        seg = np.linalg.norm(np.diff(np.vstack([rolled, rolled[:1]]), axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg[:-1])])
        total = float(cum[-1] + seg[-1])
        picks = np.searchsorted(cum, np.arange(m) * total / m, side="left")
        new_vertices = rolled[np.clip(picks, 0, rolled.shape[0] - 1)]

    return EvolutionState(
        vertices=new_vertices,
        curve=new_curve,
        k=state.k + 1,
        tube_radius=state.tube_radius,
        alpha_tilde=state.alpha_tilde,
        potential=state.potential,
        means=means,
        history=state.history + [record],
    )


def initial_state(
    vertices: np.ndarray,
    img: ScalarField,
    potential: ScalarField | None = None,
    tube_radius: float = 12.0,
    alpha_tilde: float | None = None,
) -> EvolutionState:
    """Polygon through the vertices as the starting closed curve."""
    vertices = np.asarray(vertices, dtype=float)
    if potential is None:
        potential = ScalarField(img.grid, np.ones(img.grid.shape))
    poly = Polyline(vertices.copy(), closed=True)
    if not curve_is_simple(poly):
        raise SelfIntersecting("initial polygon crosses itself")
    return EvolutionState(
        vertices=vertices,
        curve=poly,
        k=1,
        tube_radius=tube_radius,
        alpha_tilde=alpha_tilde,
        potential=potential,
    )


def run_evolution(
    vertices: np.ndarray,
    img: ScalarField,
    kind: str = "chan_vese",
    potential: ScalarField | None = None,
    tube_radius: float = 12.0,
    alpha_tilde: float | None = None,
    max_iters: int = 50,
    tol: float = 0.5,
    cfg: TraceConfig | None = None,
    resample_vertices: bool = False,
    on_step=None,
) -> EvolutionState:
    """Iterate evolve_step until successive curves differ by less than tol.

    A failing segment solve widens the tube by x1.5 (at most twice) before
    the failure propagates.  When given, on_step(state) is called with the
    initial state and again after every completed iteration.
    """
    state = initial_state(vertices, img, potential, tube_radius, alpha_tilde)
    if on_step is not None:
        on_step(state)
    for _ in range(max_iters):
        for attempt in range(3):
            try:
                state = evolve_step(state, img, kind, cfg, resample_vertices)
                break
            except (SegmentTraceFailed, SelfIntersecting):
                if attempt == 2:
                    raise
                state = replace(state, tube_radius=state.tube_radius * 1.5)
        if on_step is not None:
            on_step(state)
        if state.history[-1]["hausdorff"] < tol:
            break
    return state
