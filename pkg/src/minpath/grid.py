"""Grids, sampled fields and polylines.

Conventions used across the package:

- Points are ``(x, y)`` with the origin at the top-left pixel center,
  x growing rightward and y growing downward.  Angles theta are measured
  counterclockwise from the +x axis, in radians.
- Arrays are indexed ``[row, col] = [y, x]`` (C order).  Lifted arrays are
  indexed ``[theta, y, x]``.
- A node ``(t, i, j)`` sits at physical coordinates
  ``(j * spacing, i * spacing, t * 2*pi/n_theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCurve, SelfIntersecting

__all__ = [
    "Grid2",
    "LiftedGrid3",
    "ScalarField",
    "VectorField2",
    "TensorField2",
    "Polyline",
    "sample_bilinear",
    "sample_trilinear_periodic",
    "rasterize_region",
    "resample_arclength",
    "discrete_curvature",
]


@dataclass(frozen=True)
class Grid2:
    """Planar pixel grid, at least 2 nodes per axis."""

    width: int
    height: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("Grid2 needs width >= 2 and height >= 2")
        if not self.spacing > 0:
            raise ValueError("Grid2 spacing must be positive")

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    @property
    def n_nodes(self) -> int:
        return self.width * self.height

    def contains(self, points: np.ndarray) -> np.ndarray:
        """True where (x, y) lies inside the grid rectangle."""
        p = np.asarray(points, dtype=float)
        x, y = p[..., 0], p[..., 1]
        s = self.spacing
        return (
            (x >= 0.0)
            & (x <= (self.width - 1) * s)
            & (y >= 0.0)
            & (y <= (self.height - 1) * s)
        )


@dataclass(frozen=True)
class LiftedGrid3:
    """Orientation-lifted grid: a Grid2 crossed with a periodic theta axis."""

    width: int
    height: int
    n_theta: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("LiftedGrid3 needs width >= 2 and height >= 2")
        if self.n_theta < 8:
            raise ValueError("LiftedGrid3 needs n_theta >= 8")
        if not self.spacing > 0:
            raise ValueError("LiftedGrid3 spacing must be positive")

    @property
    def theta_spacing(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @property
    def shape(self) -> tuple:
        return (self.n_theta, self.height, self.width)

    @property
    def n_nodes(self) -> int:
        return self.width * self.height * self.n_theta

    @property
    def base(self) -> Grid2:
        return Grid2(self.width, self.height, self.spacing)

    def thetas(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.theta_spacing

    def contains(self, points: np.ndarray) -> np.ndarray:
        """True where (x, y) lies inside the base rectangle; theta is periodic."""
        p = np.asarray(points, dtype=float)
        return self.base.contains(p[..., :2])


def _check_values(grid, values, trailing):
    values = np.ascontiguousarray(np.asarray(values, dtype=float))
    want = grid.shape + trailing
    if values.shape != want:
        raise ValueError(f"field values have shape {values.shape}, expected {want}")
    return values


@dataclass
class ScalarField:
    """Scalar samples on a Grid2 (h, w) or LiftedGrid3 (t, h, w)."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, ())


@dataclass
class VectorField2:
    """Planar vector samples, components (vx, vy) in the trailing axis."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, (2,))


@dataclass
class TensorField2:
    """Symmetric positive definite 2x2 tensors, stored as (m11, m12, m22)."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, (3,))
        m11 = self.values[..., 0]
        m22 = self.values[..., 2]
        det = m11 * m22 - self.values[..., 1] ** 2
        if not (np.all(m11 > 0) and np.all(det > 0)):
            raise ValueError("TensorField2 must be SPD at every node")


@dataclass
class Polyline:
    """Ordered points (n, 2) or (n, 3); closed curves have an implicit last-to-first edge.

    Consecutive duplicate points are rejected; a closed curve that repeats its
    first point at the end is normalized by dropping the repeat.
    """

    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError("Polyline points must have shape (n, 2) or (n, 3)")
        if pts.shape[0] < 1:
            raise ValueError("Polyline needs at least one point")
        if self.closed and pts.shape[0] > 1:
            if float(np.linalg.norm(pts[-1] - pts[0])) <= 1e-12:
                pts = pts[:-1]
        if pts.shape[0] > 1:
            gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            if np.any(gaps <= 0.0):
                raise ValueError("Polyline has consecutive duplicate points")
        if self.closed and pts.shape[0] < 3:
            raise ValueError("closed Polyline needs at least 3 distinct points")
        self.points = pts

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def edges(self) -> np.ndarray:
        """Edge vectors, including the closing edge for closed curves."""
        pts = self.points
        if self.closed:
            return np.vstack([np.diff(pts, axis=0), (pts[0] - pts[-1])[None, :]])
        return np.diff(pts, axis=0)

    def length(self) -> float:
        """Total chord length of the spatial (x, y) projection."""
        e = self.edges()[:, :2]
        return float(np.sum(np.linalg.norm(e, axis=1)))

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1].copy(), self.closed)


def sample_bilinear(f, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation on a Grid2 field; out-of-bounds points clamp.

    Accepts ScalarField, VectorField2 or TensorField2; trailing component
    axes are interpolated independently.  Output shape is
    ``points.shape[:-1] + component_shape``.
    """
    grid = f.grid
    vals = f.values
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)

    s = grid.spacing
    x = np.clip(p[..., 0] / s, 0.0, grid.width - 1.0)
    y = np.clip(p[..., 1] / s, 0.0, grid.height - 1.0)
    j0 = np.clip(np.floor(x).astype(np.int64), 0, grid.width - 2)
    i0 = np.clip(np.floor(y).astype(np.int64), 0, grid.height - 2)
    fx = x - j0
    fy = y - i0

    comp = vals.shape[2:]
    fx = fx.reshape(fx.shape + (1,) * len(comp))
    fy = fy.reshape(fy.shape + (1,) * len(comp))
    v00 = vals[i0, j0]
    v01 = vals[i0, j0 + 1]
    v10 = vals[i0 + 1, j0]
    v11 = vals[i0 + 1, j0 + 1]
    out = (
        v00 * (1 - fx) * (1 - fy)
        + v01 * fx * (1 - fy)
        + v10 * (1 - fx) * fy
        + v11 * fx * fy
    )
    return out[0] if single else out


def sample_trilinear_periodic(f: ScalarField, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation on a LiftedGrid3 scalar field.

    (x, y) clamp at the rectangle; theta wraps with period 2*pi, so
    sampling at theta and theta + 2*pi agree exactly.
    """
    grid = f.grid
    vals = f.values
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)

    s = grid.spacing
    x = np.clip(p[..., 0] / s, 0.0, grid.width - 1.0)
    y = np.clip(p[..., 1] / s, 0.0, grid.height - 1.0)
    t = np.mod(p[..., 2], 2.0 * np.pi) / grid.theta_spacing

    j0 = np.clip(np.floor(x).astype(np.int64), 0, grid.width - 2)
    i0 = np.clip(np.floor(y).astype(np.int64), 0, grid.height - 2)
    k0 = np.floor(t).astype(np.int64) % grid.n_theta
    k1 = (k0 + 1) % grid.n_theta
    fx = x - j0
    fy = y - i0
    ft = t - np.floor(t)

    def plane(k):
        v00 = vals[k, i0, j0]
        v01 = vals[k, i0, j0 + 1]
        v10 = vals[k, i0 + 1, j0]
        v11 = vals[k, i0 + 1, j0 + 1]
        return (
            v00 * (1 - fx) * (1 - fy)
            + v01 * fx * (1 - fy)
            + v10 * (1 - fx) * fy
            + v11 * fx * fy
        )

    out = plane(k0) * (1 - ft) + plane(k1) * ft
    return out[0] if single else out


def _segment_pairs_intersect(p1, p2, q1, q2):
    """Vectorized proper-crossing test between segment sets (broadcast over rows)."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]
        ) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)

    def on_segment(a, b, c):
        # c collinear with a-b and inside its bounding box, excluding endpoints a, b
        inside = (
            (c[..., 0] >= np.minimum(a[..., 0], b[..., 0]))
            & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
            & (c[..., 1] >= np.minimum(a[..., 1], b[..., 1]))
            & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))
        )
        at_end = (np.all(c == a, axis=-1)) | (np.all(c == b, axis=-1))
        return inside & ~at_end

    touch = (
        ((d1 == 0) & on_segment(q1, q2, p1))
        | ((d2 == 0) & on_segment(q1, q2, p2))
        | ((d3 == 0) & on_segment(p1, p2, q1))
        | ((d4 == 0) & on_segment(p1, p2, q2))
    )
    return proper | touch


def curve_is_simple(curve: Polyline) -> bool:
    """True when no two non-adjacent edges cross or touch at interior points."""
    pts = curve.points[:, :2]
    n = pts.shape[0]
    if curve.closed:
        a = pts
        b = np.roll(pts, -1, axis=0)
    else:
        a = pts[:-1]
        b = pts[1:]
    m = a.shape[0]
    if m < 2:
        return True
    # bounding boxes for a cheap prefilter
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    for i in range(m - 1):
        js = np.arange(i + 1, m)
        # adjacent edges share an endpoint by construction
        js = js[js != i + 1]
        if curve.closed and i == 0:
            js = js[js != m - 1]
        if js.size == 0:
            continue
        box = (
            (lo[js, 0] <= hi[i, 0])
            & (hi[js, 0] >= lo[i, 0])
            & (lo[js, 1] <= hi[i, 1])
            & (hi[js, 1] >= lo[i, 1])
        )
        js = js[box]
        if js.size == 0:
            continue
        hit = _segment_pairs_intersect(a[i], b[i], a[js], b[js])
        if np.any(hit):
            return False
    return True


def rasterize_region(curve: Polyline, grid: Grid2) -> np.ndarray:
    """Even-odd rasterization of a closed simple curve onto pixel centers.

    Returns a boolean (h, w) mask.  Raises SelfIntersecting when the curve
    crosses itself.
    """
    if not curve.closed:
        raise DegenerateCurve("rasterize_region needs a closed curve")
    if not curve_is_simple(curve):
        raise SelfIntersecting("curve crosses itself")

    pts = curve.points[:, :2] / grid.spacing
    a = pts
    b = np.roll(pts, -1, axis=0)
    y1, y2 = a[:, 1], b[:, 1]
    x1, x2 = a[:, 0], b[:, 0]
    mask = np.zeros((grid.height, grid.width), dtype=bool)
    cols = np.arange(grid.width, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = (x2 - x1) / (y2 - y1)
    for i in range(grid.height):
        cy = float(i)
        straddle = (y1 <= cy) != (y2 <= cy)
        if not np.any(straddle):
            continue
        xints = x1[straddle] + (cy - y1[straddle]) * slope[straddle]
        xints.sort()
        counts = np.searchsorted(xints, cols, side="left")
        mask[i] = (counts % 2) == 1
    return mask


def _cumulative_lengths(pts: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        seg = np.vstack([np.diff(pts, axis=0), (pts[0] - pts[-1])[None, :]])
    else:
        seg = np.diff(pts, axis=0)
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])


def resample_arclength(curve: Polyline, step: float) -> Polyline:
    """Resample to equal arc-length spacing close to ``step``.

    Arc length is measured on the spatial (x, y) projection; for lifted
    curves theta rides along as an interpolated channel (unwrapped first,
    wrapped back to [0, 2*pi) at the end).  The interval count is
    ``round(L / step)``, so endpoints of open curves are preserved exactly.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if curve.n_points < 2:
        raise DegenerateCurve("cannot resample a single point")
    pts = curve.points
    spatial = pts[:, :2]
    cum = _cumulative_lengths(spatial, curve.closed)
    total = float(cum[-1])
    if total < step:
        raise DegenerateCurve(f"curve length {total:.3g} is shorter than step {step:.3g}")

    if curve.closed:
        work = np.vstack([pts, pts[0]])
    else:
        work = pts
    channels = [work[:, 0], work[:, 1]]
    if pts.shape[1] == 3:
        theta = work[:, 2].copy()
        theta = np.unwrap(theta)
        channels.append(theta)

    k = max(1, int(round(total / step)))
    if curve.closed:
        svals = np.arange(k) * (total / k)
    else:
        svals = np.linspace(0.0, total, k + 1)
        svals[-1] = total  # guard against accumulation drift
    out = np.stack([np.interp(svals, cum, ch) for ch in channels], axis=1)
    if pts.shape[1] == 3:
        out[:, 2] = np.mod(out[:, 2], 2.0 * np.pi)
    if not curve.closed:
        out[0, :2] = pts[0, :2]
        out[-1, :2] = pts[-1, :2]
    return Polyline(out, curve.closed)


def discrete_curvature(curve: Polyline) -> np.ndarray:
    """Signed curvature at interior vertices: turn angle over mean edge length.

    Tangent angles are unwrapped, so multiple loops do not alias.  For a
    closed curve every vertex is interior and the output has n values; open
    curves yield n - 2 values for vertices 1..n-2.  Positive sign matches a
    counterclockwise turn in (x, y) algebra.
    """
    if curve.n_points < 3:
        raise DegenerateCurve("curvature needs at least 3 points")
    e = curve.edges()[:, :2]
    lengths = np.linalg.norm(e, axis=1)
    ang = np.unwrap(np.arctan2(e[:, 1], e[:, 0]))
    if curve.closed:
        turn = np.empty(curve.n_points)
        ds = np.empty(curve.n_points)
        prev = np.roll(np.arange(curve.n_points), 1)
        raw = ang - ang[prev]
        # wrap each turn to (-pi, pi]; the roll breaks global unwrapping
        turn = (raw + np.pi) % (2.0 * np.pi) - np.pi
        ds = 0.5 * (lengths + lengths[prev])
        return turn / ds
    turn = np.diff(ang)
    turn = (turn + np.pi) % (2.0 * np.pi) - np.pi
    ds = 0.5 * (lengths[:-1] + lengths[1:])
    return turn / ds
