"""Fast-marching distance maps on plane grids and orientation-lifted grids.

The solver propagates a front from seed points outward, accepting nodes in
order of increasing arrival cost and updating neighbors through two-point
simplex Hopf-Lax minimizations (see kernels).  Strongly asymmetric or
anisotropic metrics bend characteristics outside the 8-neighbor cone, so a
wider 16-offset stencil is selected automatically when the metric's
directional cost ratio exceeds a threshold.

Seeds and targets are physical points, not node indices.  A seed that does
not coincide with a node initializes the nodes of its surrounding cell with
the exact metric length of the connecting segment, so sub-pixel seed
placement does not bias the map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SeedOutsideGrid
from .grid import Grid2, LiftedGrid3
from .kernels import solve2, solve3
from .metrics import LiftedMetric3, Metric2, evaluate, evaluate_lifted

_STENCIL_RATIO_THRESHOLD = 2.0


def stencil_offsets_2d(n_offsets: int) -> np.ndarray:
    """Symmetric stencil offsets (k, 2) as (dx, dy) index displacements."""
    if n_offsets == 8:
        offs = [
            (dx, dy)
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
            if (dx, dy) != (0, 0)
        ]
    elif n_offsets == 16:
        offs = [(dx, dy) for dx in range(-2, 3) for dy in range(-2, 3)]
        offs = [
            (dx, dy)
            for dx, dy in offs
            if (dx, dy) != (0, 0)
            and max(abs(dx), abs(dy)) <= 2
            and np.gcd(abs(dx), abs(dy)) == 1
        ]
    else:
        raise ValueError(f"unsupported stencil size {n_offsets}; use 8 or 16")
    return np.array(sorted(offs), dtype=np.int64)


def stencil_offsets_3d() -> np.ndarray:
    """All 26 nonzero offsets of the unit cube as (dx, dy, dtheta_index)."""
    offs = [
        (dx, dy, dt)
        for dt in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
        if (dx, dy, dt) != (0, 0, 0)
    ]
    return np.array(sorted(offs), dtype=np.int64)


def _adjacency(offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """CSR simplex-partner table for the update kernels.

    When node z is accepted and x = z + offsets[k] is updated, the valid
    simplices seen from x pair z (which sits at offset -offsets[k] from x)
    with every other stencil offset at Chebyshev distance <= 1 from it.
    Opposite offsets always differ by >= 2 in some coordinate, so no
    simplex segment can pass through x itself.
    """
    k = offsets.shape[0]
    neg = np.empty(k, dtype=np.int64)
    index = {tuple(o): i for i, o in enumerate(offsets.tolist())}
    for i, o in enumerate(offsets.tolist()):
        neg[i] = index[tuple(-c for c in o)]
    rows: list[list[int]] = []
    for i in range(k):
        anchor = offsets[neg[i]]
        row = [
            j
            for j in range(k)
            if j != neg[i] and np.max(np.abs(offsets[j] - anchor)) <= 1
        ]
        rows.append(row)
    ptr = np.zeros(k + 1, dtype=np.int64)
    for i, row in enumerate(rows):
        ptr[i + 1] = ptr[i] + len(row)
    idx = np.array([j for row in rows for j in row], dtype=np.int64)
    return idx, ptr


def _midpoint_tables(offsets: np.ndarray) -> tuple[np.ndarray, ...]:
    """Nodes flanking the midpoint of each offset longer than one cell.

    An edge along such an offset is disallowed when either flanking node
    is masked, so thin obstacle walls stay impassable to knight moves.
    Coordinates are relative to the edge source.
    """
    k = offsets.shape[0]
    flag = np.zeros(k, dtype=np.uint8)
    m1 = np.zeros((k, 2), dtype=np.int64)
    m2 = np.zeros((k, 2), dtype=np.int64)
    for i, (dx, dy) in enumerate(offsets.tolist()):
        if max(abs(dx), abs(dy)) <= 1:
            continue
        flag[i] = 1
        m1[i] = (int(np.floor(dx / 2.0)), int(np.floor(dy / 2.0)))
        m2[i] = (int(np.ceil(dx / 2.0)), int(np.ceil(dy / 2.0)))
    return flag, m1[:, 0].copy(), m1[:, 1].copy(), m2[:, 0].copy(), m2[:, 1].copy()


@dataclass
class SolveRequest:
    """Solver configuration.

    seeds: (k, 2) or (k, 3) physical points (x, y) or (x, y, theta).
    labels: optional per-seed integer labels; defaults to the seed index.
    stop: "none" runs to exhaustion; "first_reached" stops once every
        target (plus a two-node margin around it, enough for interpolation
        and descent) is accepted; "distance_cap" stops at max_distance.
    stencil: "auto", 8, or 16 for plane grids (lifted grids always use the
        26-offset cube stencil).
    max_reinsertions: how many times a node may be re-opened after
        acceptance when a strictly better value appears.
    domain: optional boolean mask, True where travel is allowed.
    """

    seeds: np.ndarray
    labels: np.ndarray | None = None
    stop: str = "none"
    targets: np.ndarray | None = None
    max_distance: float | None = None
    stencil: int | str = "auto"
    max_reinsertions: int = 3
    domain: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.seeds = np.atleast_2d(np.asarray(self.seeds, dtype=np.float64))
        if self.stop not in ("none", "first_reached", "distance_cap"):
            raise ValueError(f"unknown stop mode {self.stop!r}")
        if self.stop == "first_reached":
            if self.targets is None:
                raise ValueError("first_reached stop requires targets")
            self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if self.stop == "distance_cap" and self.max_distance is None:
            raise ValueError("distance_cap stop requires max_distance")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (self.seeds.shape[0],):
                raise ValueError("labels must match the number of seeds")


@dataclass
class DistanceMap:
    """Result of a fast-marching solve.

    values holds arrival costs with np.inf at unreached nodes.  labels
    holds the propagated seed label (-1 where unreached), realizing the
    geodesic Voronoi partition of the seed set.  parent1/parent2/parent_t
    record the upwind simplex each node's value came from (flat indices,
    -1 when absent), and accept_order the acceptance rank (-1 if never
    accepted).
    """

    grid: Grid2 | LiftedGrid3
    values: np.ndarray
    labels: np.ndarray
    accept_order: np.ndarray
    parent1: np.ndarray
    parent2: np.ndarray
    parent_t: np.ndarray
    seeds: np.ndarray
    domain: np.ndarray
    stencil_size: int = 0
    accepted_count: int = 0

    @property
    def lifted(self) -> bool:
        return self.values.ndim == 3


def _point_to_frac(grid: Grid2, points: np.ndarray) -> np.ndarray:
    frac = points / grid.spacing
    lo_ok = np.all(frac >= -1e-9, axis=1)
    hi_ok = (frac[:, 0] <= grid.width - 1 + 1e-9) & (
        frac[:, 1] <= grid.height - 1 + 1e-9
    )
    bad = ~(lo_ok & hi_ok)
    if np.any(bad):
        p = points[int(np.argmax(bad))]
        raise SeedOutsideGrid(f"point ({p[0]:g}, {p[1]:g}) is outside the grid")
    return np.clip(frac, 0.0, [grid.width - 1, grid.height - 1])


def _point_to_frac_lifted(grid: LiftedGrid3, points: np.ndarray) -> np.ndarray:
    if points.shape[1] != 3:
        raise SeedOutsideGrid("lifted solves need (x, y, theta) points")
    frac = points.copy()
    frac[:, 0] /= grid.spacing
    frac[:, 1] /= grid.spacing
    frac[:, 2] = np.mod(frac[:, 2], 2.0 * np.pi) / grid.theta_spacing
    lo_ok = np.all(frac[:, :2] >= -1e-9, axis=1)
    hi_ok = (frac[:, 0] <= grid.width - 1 + 1e-9) & (
        frac[:, 1] <= grid.height - 1 + 1e-9
    )
    bad = ~(lo_ok & hi_ok)
    if np.any(bad):
        p = points[int(np.argmax(bad))]
        raise SeedOutsideGrid(f"point ({p[0]:g}, {p[1]:g}) is outside the grid")
    frac[:, 0] = np.clip(frac[:, 0], 0.0, grid.width - 1)
    frac[:, 1] = np.clip(frac[:, 1], 0.0, grid.height - 1)
    return frac


def _axis_nodes(f: float, n: int) -> list[int]:
    """Cell nodes bracketing fractional coordinate f on a clamped axis."""
    if abs(f - round(f)) < 1e-9:
        return [int(round(f))]
    j0 = int(np.floor(f))
    return sorted({max(0, min(j0, n - 1)), max(0, min(j0 + 1, n - 1))})


def _axis_nodes_periodic(f: float, n: int) -> list[int]:
    if abs(f - round(f)) < 1e-9:
        return [int(round(f)) % n]
    j0 = int(np.floor(f)) % n
    return sorted({j0, (j0 + 1) % n})


def _segment_clear_2d(domain: np.ndarray | None, a: np.ndarray, b: np.ndarray) -> bool:
    """True when the segment a-b (fractional indices) avoids masked cells."""
    if domain is None:
        return True
    length = float(np.hypot(*(b - a)))
    steps = max(1, int(np.ceil(length / 0.45)))
    for t in np.linspace(1.0 / steps, 1.0, steps):
        p = a + t * (b - a)
        i = int(round(p[1]))
        j = int(round(p[0]))
        if not domain[i, j]:
            return False
    return True


def _seed_entries_2d(
    metric: Metric2,
    frac: np.ndarray,
    labels: np.ndarray,
    domain: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial heap entries for each seed.

    Every node within three cells of the seed position (one past the
    stencil reach) is initialized with the exact metric cost of the
    straight connecting segment, sampled at its midpoint.  Without this
    block the first ring of nodes around the seed only sees polyline
    detours through closer nodes, an O(spacing) error that then
    propagates outward; with it the near field is exact for constant
    metrics and second-order for smooth ones, and the front starts where
    the point-source curvature is mild.  A node-coincident seed
    contributes its own zero entry as part of the block.
    """
    grid = metric.grid
    nodes: list[int] = []
    vals: list[float] = []
    labs: list[int] = []
    for s in range(frac.shape[0]):
        fx, fy = frac[s]
        xs = range(max(0, int(np.floor(fx)) - 3), min(grid.width, int(np.ceil(fx)) + 4))
        ys = range(max(0, int(np.floor(fy)) - 3), min(grid.height, int(np.ceil(fy)) + 4))
        corners = np.array([(jx, jy) for jy in ys for jx in xs], dtype=np.float64)
        point = np.array([fx, fy]) * grid.spacing
        vecs = corners * grid.spacing - point
        mids = point + 0.5 * vecs
        costs = evaluate(metric, mids, vecs)
        for (jx, jy), cost in zip(corners.astype(int), costs):
            if not _segment_clear_2d(domain, np.array([fx, fy]), np.array([jx, jy], dtype=float)):
                continue
            nodes.append(jy * grid.width + jx)
            vals.append(float(cost))
            labs.append(int(labels[s]))
    return (
        np.array(nodes, dtype=np.int64),
        np.array(vals, dtype=np.float64),
        np.array(labs, dtype=np.int32),
    )


def _segment_clear_3d(
    domain: np.ndarray | None, a: np.ndarray, b: np.ndarray, nt: int
) -> bool:
    """Segment check on (x, y, theta-index) triples with periodic theta."""
    if domain is None:
        return True
    d = b - a
    d[2] = (d[2] + nt / 2.0) % nt - nt / 2.0
    steps = max(1, int(np.ceil(float(np.max(np.abs(d))) / 0.45)))
    for t in np.linspace(1.0 / steps, 1.0, steps):
        p = a + t * d
        ti = int(round(p[2])) % nt
        i = int(round(p[1]))
        j = int(round(p[0]))
        if not domain[ti, i, j]:
            return False
    return True


def _seed_entries_3d(
    metric: LiftedMetric3,
    frac: np.ndarray,
    labels: np.ndarray,
    domain: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial heap entries for lifted seeds; see _seed_entries_2d.

    The cube stencil reaches one cell, so seeds initialize the
    surrounding block of one extra node per axis (theta periodic).
    """
    grid = metric.grid
    nt, hh, ww = grid.shape
    dth = grid.theta_spacing
    nodes: list[int] = []
    vals: list[float] = []
    labs: list[int] = []
    for s in range(frac.shape[0]):
        fx, fy, ft = frac[s]
        xs = range(max(0, int(np.floor(fx)) - 1), min(ww, int(np.ceil(fx)) + 2))
        ys = range(max(0, int(np.floor(fy)) - 1), min(hh, int(np.ceil(fy)) + 2))
        ts = sorted({(t + nt) % nt for t in range(int(np.floor(ft)) - 1, int(np.ceil(ft)) + 2)})
        point = np.array([fx * grid.spacing, fy * grid.spacing, ft * dth])
        corners = []
        vecs = []
        for t in ts:
            dt = t * dth - point[2]
            dt = (dt + np.pi) % (2.0 * np.pi) - np.pi
            for jy in ys:
                for jx in xs:
                    corners.append((jx, jy, t))
                    vecs.append(
                        (jx * grid.spacing - point[0], jy * grid.spacing - point[1], dt)
                    )
        vecs = np.array(vecs, dtype=np.float64)
        pts = np.tile(point, (vecs.shape[0], 1)) + 0.5 * vecs
        pts[:, 2] = np.mod(pts[:, 2], 2.0 * np.pi)
        costs = evaluate_lifted(metric, pts, vecs)
        for (jx, jy, t), cost in zip(corners, costs):
            tt = ft + ((t - ft + nt / 2.0) % nt - nt / 2.0)
            if not _segment_clear_3d(
                domain, np.array([fx, fy, ft]), np.array([jx, jy, tt], dtype=float), nt
            ):
                continue
            nodes.append((t * hh + jy) * ww + jx)
            vals.append(float(cost))
            labs.append(int(labels[s]))
    return (
        np.array(nodes, dtype=np.int64),
        np.array(vals, dtype=np.float64),
        np.array(labs, dtype=np.int32),
    )


def _margin_flags_2d(grid: Grid2, frac: np.ndarray, domain: np.ndarray) -> np.ndarray:
    """Nodes within two cells of each target; used by first_reached stops."""
    flags = np.zeros(grid.height * grid.width, dtype=np.uint8)
    for fx, fy in frac:
        j0, i0 = int(np.floor(fx)), int(np.floor(fy))
        for i in range(max(0, i0 - 2), min(grid.height, i0 + 4)):
            for j in range(max(0, j0 - 2), min(grid.width, j0 + 4)):
                flags[i * grid.width + j] = 1
    flags &= domain
    return flags


def _margin_flags_3d(
    grid: LiftedGrid3, frac: np.ndarray, domain: np.ndarray
) -> np.ndarray:
    nt, hh, ww = grid.shape
    flags = np.zeros(nt * hh * ww, dtype=np.uint8)
    for fx, fy, ft in frac:
        j0, i0, t0 = int(np.floor(fx)), int(np.floor(fy)), int(np.floor(ft))
        for dt in range(-2, 4):
            t = (t0 + dt) % nt
            for i in range(max(0, i0 - 2), min(hh, i0 + 4)):
                for j in range(max(0, j0 - 2), min(ww, j0 + 4)):
                    flags[(t * hh + i) * ww + j] = 1
    flags &= domain
    return flags


def _auto_stencil(metric: Metric2) -> int:
    """Pick 8 or 16 offsets from the worst-case directional cost ratio.

    The unit-speed cost in direction u lies between
    sqrt(lmin) * (1 - |omega|_{M^-1}) and sqrt(lmax) + |omega|, where
    lmin/lmax are the tensor eigenvalue fields.  A ratio above the
    threshold means characteristics can leave the 8-neighbor cone.
    """
    m11 = metric.tensor.values[..., 0]
    m12 = metric.tensor.values[..., 1]
    m22 = metric.tensor.values[..., 2]
    mean = 0.5 * (m11 + m22)
    rad = np.sqrt((0.5 * (m11 - m22)) ** 2 + m12**2)
    lmax = mean + rad
    lmin = np.maximum(mean - rad, 1e-300)
    wnorm = np.hypot(metric.omega.values[..., 0], metric.omega.values[..., 1])
    det = m11 * m22 - m12**2
    winv = (
        m22 * metric.omega.values[..., 0] ** 2
        - 2.0 * m12 * metric.omega.values[..., 0] * metric.omega.values[..., 1]
        + m11 * metric.omega.values[..., 1] ** 2
    ) / det
    slowest = np.sqrt(lmin) * (1.0 - np.sqrt(np.clip(winv, 0.0, None)))
    fastest = np.sqrt(lmax) + wnorm
    ratio = fastest / np.maximum(slowest, 1e-300)
    return 16 if float(np.max(ratio)) > _STENCIL_RATIO_THRESHOLD else 8


def _domain_flat(grid, domain: np.ndarray | None) -> np.ndarray:
    if domain is None:
        return np.ones(int(np.prod(grid.shape)), dtype=np.uint8)
    dom = np.asarray(domain)
    if dom.shape != grid.shape:
        raise ValueError(f"domain shape {dom.shape} != grid shape {grid.shape}")
    return np.ascontiguousarray(dom.astype(np.uint8).ravel())


def _run_2d(metric: Metric2, request: SolveRequest, offsets: np.ndarray) -> DistanceMap:
    grid = metric.grid
    n = grid.width * grid.height
    adj_idx, adj_ptr = _adjacency(offsets)
    midflag, m1x, m1y, m2x, m2y = _midpoint_tables(offsets)
    labels_in = request.labels
    if labels_in is None:
        labels_in = np.arange(request.seeds.shape[0], dtype=np.int32)
    frac = _point_to_frac(grid, request.seeds)
    domain = _domain_flat(grid, request.domain)
    dom2 = None if request.domain is None else domain.reshape(grid.shape).astype(bool)
    seed_nodes, seed_vals, seed_labels = _seed_entries_2d(
        metric, frac, labels_in, dom2
    )

    stop_mode = {"none": 0, "first_reached": 1, "distance_cap": 2}[request.stop]
    if stop_mode == 1:
        tfrac = _point_to_frac(grid, request.targets)
        is_stop = _margin_flags_2d(grid, tfrac, domain)
    else:
        is_stop = np.zeros(n, dtype=np.uint8)
    n_stop = int(np.sum(is_stop == 1))
    if stop_mode == 1 and n_stop == 0:
        stop_mode = 0
    dmax = float(request.max_distance) if request.max_distance is not None else np.inf

    dist = np.full(n, np.inf)
    labels = np.full(n, -1, dtype=np.int32)
    state = np.zeros(n, dtype=np.uint8)
    parent1 = np.full(n, -1, dtype=np.int64)
    parent2 = np.full(n, -1, dtype=np.int64)
    parent_t = np.zeros(n, dtype=np.float64)
    accept_order = np.full(n, -1, dtype=np.int64)
    reins = np.zeros(n, dtype=np.int32)

    tensor = metric.tensor.values
    omega = metric.omega.values
    count = solve2(
        np.ascontiguousarray(tensor[..., 0].ravel()),
        np.ascontiguousarray(tensor[..., 1].ravel()),
        np.ascontiguousarray(tensor[..., 2].ravel()),
        np.ascontiguousarray(omega[..., 0].ravel()),
        np.ascontiguousarray(omega[..., 1].ravel()),
        grid.width,
        grid.height,
        grid.spacing,
        np.ascontiguousarray(offsets[:, 0]),
        np.ascontiguousarray(offsets[:, 1]),
        adj_idx,
        adj_ptr,
        midflag,
        m1x,
        m1y,
        m2x,
        m2y,
        seed_nodes,
        seed_vals,
        seed_labels,
        domain,
        stop_mode,
        is_stop,
        n_stop,
        dmax,
        request.max_reinsertions,
        dist,
        labels,
        state,
        parent1,
        parent2,
        parent_t,
        accept_order,
        reins,
    )
    shape = grid.shape
    values = dist.reshape(shape)
    values[state.reshape(shape) != 2] = np.inf
    return DistanceMap(
        grid=grid,
        values=values,
        labels=np.where(state == 2, labels, -1).reshape(shape).astype(np.int32),
        accept_order=accept_order.reshape(shape),
        parent1=parent1.reshape(shape),
        parent2=parent2.reshape(shape),
        parent_t=parent_t.reshape(shape),
        seeds=request.seeds.copy(),
        domain=domain.reshape(shape).astype(bool),
        stencil_size=offsets.shape[0],
        accepted_count=int(count),
    )


def solve(metric: Metric2, request: SolveRequest) -> DistanceMap:
    """Compute the geodesic distance map of a plane Randers metric."""
    if request.seeds.shape[1] != 2:
        raise SeedOutsideGrid("plane solves need (x, y) seed points")
    if request.stencil == "auto":
        size = _auto_stencil(metric)
    else:
        size = int(request.stencil)
    offsets = stencil_offsets_2d(size)
    return _run_2d(metric, request, offsets)


def randers_node_arrays(
    metric: LiftedMetric3,
) -> tuple[np.ndarray, ...]:
    """Per-node diagonal Randers decomposition of the lifted metric.

    The analytic cost sqrt(lam^2 |u|^2 + 2 a lam nu^2) - (lam - 1) <u, p>
    scaled by the data term C equals the Randers form with
    M = C^2 diag(lam^2, lam^2, 2 a lam) and
    omega = -C (lam - 1) (cos t, sin t, 0).
    """
    grid = metric.grid
    nt, hh, ww = grid.shape
    thetas = grid.thetas()
    if metric.cost is None:
        c = np.ones((nt, hh, ww))
    else:
        c = metric.cost.values
    lam = metric.lam
    m1 = (c * lam) ** 2
    m3 = c**2 * (2.0 * metric.alpha * lam)
    wx = -c * (lam - 1.0) * np.cos(thetas)[:, None, None]
    wy = -c * (lam - 1.0) * np.sin(thetas)[:, None, None]
    wz = np.zeros_like(c)
    return m1, m1.copy(), m3, wx, wy, wz


def solve_lifted(metric: LiftedMetric3, request: SolveRequest) -> DistanceMap:
    """Compute the distance map of an orientation-lifted bending metric."""
    grid = metric.grid
    nt, hh, ww = grid.shape
    n = nt * hh * ww
    offsets = stencil_offsets_3d()
    adj_idx, adj_ptr = _adjacency(offsets)
    labels_in = request.labels
    if labels_in is None:
        labels_in = np.arange(request.seeds.shape[0], dtype=np.int32)
    frac = _point_to_frac_lifted(grid, request.seeds)
    domain = _domain_flat(grid, request.domain)
    dom3 = None if request.domain is None else domain.reshape(grid.shape).astype(bool)
    seed_nodes, seed_vals, seed_labels = _seed_entries_3d(
        metric, frac, labels_in, dom3
    )

    stop_mode = {"none": 0, "first_reached": 1, "distance_cap": 2}[request.stop]
    if stop_mode == 1:
        tfrac = _point_to_frac_lifted(grid, request.targets)
        is_stop = _margin_flags_3d(grid, tfrac, domain)
    else:
        is_stop = np.zeros(n, dtype=np.uint8)
    n_stop = int(np.sum(is_stop == 1))
    if stop_mode == 1 and n_stop == 0:
        stop_mode = 0
    dmax = float(request.max_distance) if request.max_distance is not None else np.inf

    dist = np.full(n, np.inf)
    labels = np.full(n, -1, dtype=np.int32)
    state = np.zeros(n, dtype=np.uint8)
    parent1 = np.full(n, -1, dtype=np.int64)
    parent2 = np.full(n, -1, dtype=np.int64)
    parent_t = np.zeros(n, dtype=np.float64)
    accept_order = np.full(n, -1, dtype=np.int64)
    reins = np.zeros(n, dtype=np.int32)

    m1, m2, m3, wx, wy, wz = randers_node_arrays(metric)
    count = solve3(
        np.ascontiguousarray(m1.ravel()),
        np.ascontiguousarray(m2.ravel()),
        np.ascontiguousarray(m3.ravel()),
        np.ascontiguousarray(wx.ravel()),
        np.ascontiguousarray(wy.ravel()),
        np.ascontiguousarray(wz.ravel()),
        ww,
        hh,
        nt,
        grid.spacing,
        grid.theta_spacing,
        np.ascontiguousarray(offsets[:, 0]),
        np.ascontiguousarray(offsets[:, 1]),
        np.ascontiguousarray(offsets[:, 2]),
        adj_idx,
        adj_ptr,
        seed_nodes,
        seed_vals,
        seed_labels,
        domain,
        stop_mode,
        is_stop,
        n_stop,
        dmax,
        request.max_reinsertions,
        dist,
        labels,
        state,
        parent1,
        parent2,
        parent_t,
        accept_order,
        reins,
    )
    shape = grid.shape
    values = dist.reshape(shape)
    values[state.reshape(shape) != 2] = np.inf
    return DistanceMap(
        grid=grid,
        values=values,
        labels=np.where(state == 2, labels, -1).reshape(shape).astype(np.int32),
        accept_order=accept_order.reshape(shape),
        parent1=parent1.reshape(shape),
        parent2=parent2.reshape(shape),
        parent_t=parent_t.reshape(shape),
        seeds=request.seeds.copy(),
        domain=domain.reshape(shape).astype(bool),
        stencil_size=offsets.shape[0],
        accepted_count=int(count),
    )


def voronoi_labels(dmap: DistanceMap) -> np.ndarray:
    """Geodesic Voronoi partition: per-node winning seed label, -1 unreached."""
    return dmap.labels.copy()


def residual(dmap: DistanceMap, metric: Metric2 | LiftedMetric3) -> np.ndarray:
    """Pointwise defect |norm_{M^-1}(grad D - omega) - 1| of the arrival map.

    The exact arrival function satisfies this identity wherever it is
    smooth.  Nodes where a central difference is unavailable or unreliable
    are NaN: grid boundary (non-periodic axes), unreached nodes, nodes with
    an unreached or masked 4-neighbor, and seed cells.
    """
    v = dmap.values
    finite = np.isfinite(v) & dmap.domain
    if not dmap.lifted:
        grid = dmap.grid
        s = grid.spacing
        out = np.full(v.shape, np.nan)
        ok = np.zeros(v.shape, dtype=bool)
        ok[1:-1, 1:-1] = (
            finite[1:-1, 1:-1]
            & finite[1:-1, :-2]
            & finite[1:-1, 2:]
            & finite[:-2, 1:-1]
            & finite[2:, 1:-1]
        )
        gx = np.zeros_like(v)
        gy = np.zeros_like(v)
        safe = np.where(np.isfinite(v), v, 0.0)
        gx[:, 1:-1] = (safe[:, 2:] - safe[:, :-2]) / (2.0 * s)
        gy[1:-1, :] = (safe[2:, :] - safe[:-2, :]) / (2.0 * s)
        vx = gx - metric.omega.values[..., 0]
        vy = gy - metric.omega.values[..., 1]
        m11 = metric.tensor.values[..., 0]
        m12 = metric.tensor.values[..., 1]
        m22 = metric.tensor.values[..., 2]
        det = m11 * m22 - m12**2
        quad = (m22 * vx**2 - 2.0 * m12 * vx * vy + m11 * vy**2) / det
        res = np.abs(np.sqrt(np.clip(quad, 0.0, None)) - 1.0)
        for fx, fy in dmap.seeds[:, :2] / s:
            j0, i0 = int(np.floor(fx)), int(np.floor(fy))
            ok[max(0, i0 - 1) : i0 + 3, max(0, j0 - 1) : j0 + 3] = False
        out[ok] = res[ok]
        return out

    grid = dmap.grid
    s = grid.spacing
    dth = grid.theta_spacing
    out = np.full(v.shape, np.nan)
    ok = np.zeros(v.shape, dtype=bool)
    fup = np.roll(finite, -1, axis=0)
    fdn = np.roll(finite, 1, axis=0)
    ok[:, 1:-1, 1:-1] = (
        finite[:, 1:-1, 1:-1]
        & finite[:, 1:-1, :-2]
        & finite[:, 1:-1, 2:]
        & finite[:, :-2, 1:-1]
        & finite[:, 2:, 1:-1]
        & fup[:, 1:-1, 1:-1]
        & fdn[:, 1:-1, 1:-1]
    )
    safe = np.where(np.isfinite(v), v, 0.0)
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    gt = (np.roll(safe, -1, axis=0) - np.roll(safe, 1, axis=0)) / (2.0 * dth)
    gx[:, :, 1:-1] = (safe[:, :, 2:] - safe[:, :, :-2]) / (2.0 * s)
    gy[:, 1:-1, :] = (safe[:, 2:, :] - safe[:, :-2, :]) / (2.0 * s)
    m1, m2, m3, wx, wy, wz = randers_node_arrays(metric)
    vx = gx - wx
    vy = gy - wy
    vt = gt - wz
    quad = vx**2 / m1 + vy**2 / m2 + vt**2 / m3
    res = np.abs(np.sqrt(quad) - 1.0)
    for fx, fy, ft in _point_to_frac_lifted(grid, dmap.seeds):
        j0, i0, t0 = int(np.floor(fx)), int(np.floor(fy)), int(np.floor(ft))
        for dt in range(-1, 3):
            ok[(t0 + dt) % grid.n_theta, max(0, i0 - 1) : i0 + 3, max(0, j0 - 1) : j0 + 3] = False
    out[ok] = res[ok]
    return out
