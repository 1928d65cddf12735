"""Geodesic extraction by descent through a solved distance map.

The minimizing curve from seed to target is recovered by integrating the
descent ODE backwards from the target: at each point the step direction is
the unit vector v maximizing <grad D, v> / F(x, v), which reduces to the
normalized (co-)gradient for symmetric metrics but stays correct for
asymmetric Randers and orientation-lifted costs.  The maximization runs
over a uniform direction sample (circle in 2D, Fibonacci sphere in 3D)
followed by golden-section refinement of the best bracket.

The arrival field is interpolated multilinearly with unreached (+inf)
corners dropped and the remaining weights renormalized, so descent works
right up to the edge of an early-stopped solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaxStepsExceeded, StuckDescent, UnreachedTarget
from .grid import Grid2, LiftedGrid3, Polyline, sample_bilinear
from .metrics import LiftedMetric3, Metric2
from .eikonal import DistanceMap

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TraceConfig:
    """Descent integration settings.

    step is the advance per integration step in cells; capture_radius is
    the distance at which a seed counts as reached (theta measured in
    radians on lifted grids).  max_steps None means a budget derived from
    the grid diagonal.  Ten successive step halvings that all fail to
    decrease the arrival value raise StuckDescent.
    """

    step: float = 0.25
    max_steps: int | None = None
    capture_radius: float = 1.0
    integrator: str = "heun"
    direction_samples: int = 64
    refine_iters: int = 20

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.capture_radius > 0:
            raise ValueError("capture_radius must be positive")
        if self.integrator not in ("euler", "heun", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.direction_samples < 8:
            raise ValueError("need at least 8 direction samples")


def _interp_holes_2d(values: np.ndarray, grid: Grid2, p: np.ndarray) -> float:
    """Bilinear sample dropping +inf corners (renormalized weights)."""
    fx = min(max(p[0] / grid.spacing, 0.0), grid.width - 1.0)
    fy = min(max(p[1] / grid.spacing, 0.0), grid.height - 1.0)
    j0 = int(np.floor(fx))
    i0 = int(np.floor(fy))
    j1 = min(j0 + 1, grid.width - 1)
    i1 = min(i0 + 1, grid.height - 1)
    ax = fx - j0
    ay = fy - i0
    total = 0.0
    acc = 0.0
    for (ii, jj, wgt) in (
        (i0, j0, (1 - ax) * (1 - ay)),
        (i0, j1, ax * (1 - ay)),
        (i1, j0, (1 - ax) * ay),
        (i1, j1, ax * ay),
    ):
        v = values[ii, jj]
        if np.isfinite(v) and wgt > 0.0:
            total += wgt
            acc += wgt * v
    if total <= 1e-12:
        return np.inf
    return acc / total


def _interp_holes_3d(values: np.ndarray, grid: LiftedGrid3, p: np.ndarray) -> float:
    """Trilinear sample, theta periodic, dropping +inf corners."""
    nt, hh, ww = grid.shape
    fx = min(max(p[0] / grid.spacing, 0.0), ww - 1.0)
    fy = min(max(p[1] / grid.spacing, 0.0), hh - 1.0)
    ft = (p[2] % _TWO_PI) / grid.theta_spacing
    j0 = int(np.floor(fx))
    i0 = int(np.floor(fy))
    t0 = int(np.floor(ft)) % nt
    j1 = min(j0 + 1, ww - 1)
    i1 = min(i0 + 1, hh - 1)
    t1 = (t0 + 1) % nt
    ax = fx - j0
    ay = fy - i0
    at = ft - np.floor(ft)
    total = 0.0
    acc = 0.0
    for tt, wt in ((t0, 1 - at), (t1, at)):
        for (ii, jj, wgt) in (
            (i0, j0, (1 - ax) * (1 - ay)),
            (i0, j1, ax * (1 - ay)),
            (i1, j0, (1 - ax) * ay),
            (i1, j1, ax * ay),
        ):
            w = wt * wgt
            v = values[tt, ii, jj]
            if np.isfinite(v) and w > 0.0:
                total += w
                acc += w * v
    if total <= 1e-12:
        return np.inf
    return acc / total


def _value_at(dmap: DistanceMap, p: np.ndarray) -> float:
    if dmap.lifted:
        return _interp_holes_3d(dmap.values, dmap.grid, p)
    return _interp_holes_2d(dmap.values, dmap.grid, p)


def _gradient(dmap: DistanceMap, p: np.ndarray, h: float = 0.5) -> np.ndarray:
    """Central differences of the interpolated field, one-sided at holes."""
    dim = p.shape[0]
    g = np.zeros(dim)
    v0 = None
    for axis in range(dim):
        step = np.zeros(dim)
        step[axis] = h
        vp = _value_at(dmap, p + step)
        vm = _value_at(dmap, p - step)
        if np.isfinite(vp) and np.isfinite(vm):
            g[axis] = (vp - vm) / (2.0 * h)
        else:
            if v0 is None:
                v0 = _value_at(dmap, p)
            if np.isfinite(vp) and np.isfinite(v0):
                g[axis] = (vp - v0) / h
            elif np.isfinite(vm) and np.isfinite(v0):
                g[axis] = (v0 - vm) / h
            else:
                g[axis] = 0.0
    return g


def _golden_max(f, a: float, b: float, iters: int) -> float:
    """Abscissa of the maximum of unimodal f on [a, b]."""
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = f(x1)
    f2 = f(x2)
    for _ in range(iters):
        if f1 < f2:
            a = x1
            x1, f1 = x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b = x2
            x2, f2 = x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n)
    z = 1.0 - 2.0 * (k + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _descent_direction_2d(
    metric: Metric2, g: np.ndarray, p: np.ndarray, cfg: TraceConfig
) -> np.ndarray:
    """Unit v maximizing <g, v> / F(p, v); the step moves along -v."""
    m = sample_bilinear(metric.tensor, p)
    w = sample_bilinear(metric.omega, p)

    def score(phi: float) -> float:
        vx, vy = np.cos(phi), np.sin(phi)
        quad = m[0] * vx * vx + 2.0 * m[1] * vx * vy + m[2] * vy * vy
        f = np.sqrt(quad) + w[0] * vx + w[1] * vy
        return (g[0] * vx + g[1] * vy) / f

    phis = np.linspace(0.0, _TWO_PI, cfg.direction_samples, endpoint=False)
    vx = np.cos(phis)
    vy = np.sin(phis)
    quad = m[0] * vx * vx + 2.0 * m[1] * vx * vy + m[2] * vy * vy
    f = np.sqrt(quad) + w[0] * vx + w[1] * vy
    scores = (g[0] * vx + g[1] * vy) / f
    k = int(np.argmax(scores))
    span = _TWO_PI / cfg.direction_samples
    phi = _golden_max(score, phis[k] - span, phis[k] + span, cfg.refine_iters)
    return np.array([np.cos(phi), np.sin(phi)])


def _descent_direction_3d(
    metric: LiftedMetric3, g: np.ndarray, p: np.ndarray, cfg: TraceConfig
) -> np.ndarray:
    """Lifted analog over a Fibonacci sphere sample.

    The positive data-driven cost multiplier scales F uniformly at fixed
    p, so it drops out of the argmax and only the analytic part is used.
    """
    lam = metric.lam
    two_al = 2.0 * metric.alpha * lam
    ct, st = np.cos(p[2]), np.sin(p[2])

    def score_vec(v: np.ndarray) -> np.ndarray:
        quad = lam * lam * (v[..., 0] ** 2 + v[..., 1] ** 2) + two_al * v[..., 2] ** 2
        f = np.sqrt(quad) - (lam - 1.0) * (v[..., 0] * ct + v[..., 1] * st)
        return (v @ g) / f

    dirs = _fibonacci_sphere(cfg.direction_samples)
    k = int(np.argmax(score_vec(dirs)))
    best = dirs[k]
    az = float(np.arctan2(best[1], best[0]))
    el = float(np.arcsin(np.clip(best[2], -1.0, 1.0)))
    span = float(np.sqrt(4.0 * np.pi / cfg.direction_samples))

    def v_of(azim: float, elev: float) -> np.ndarray:
        ce = np.cos(elev)
        return np.array([ce * np.cos(azim), ce * np.sin(azim), np.sin(elev)])

    for half_span in (span, 0.35 * span):
        az = _golden_max(
            lambda a: float(score_vec(v_of(a, el))), az - half_span, az + half_span,
            cfg.refine_iters,
        )
        el = _golden_max(
            lambda e: float(score_vec(v_of(az, e))),
            max(el - half_span, -0.5 * np.pi),
            min(el + half_span, 0.5 * np.pi),
            cfg.refine_iters,
        )
    return v_of(az, el)


def _clamp_point(grid, p: np.ndarray) -> np.ndarray:
    q = p.copy()
    if isinstance(grid, LiftedGrid3):
        q[0] = min(max(q[0], 0.0), (grid.width - 1) * grid.spacing)
        q[1] = min(max(q[1], 0.0), (grid.height - 1) * grid.spacing)
        q[2] = q[2] % _TWO_PI
    else:
        q[0] = min(max(q[0], 0.0), (grid.width - 1) * grid.spacing)
        q[1] = min(max(q[1], 0.0), (grid.height - 1) * grid.spacing)
    return q


def _seed_distance(p: np.ndarray, seeds: np.ndarray, lifted: bool) -> tuple[float, int]:
    if lifted:
        d2 = (seeds[:, 0] - p[0]) ** 2 + (seeds[:, 1] - p[1]) ** 2
        dth = np.abs(seeds[:, 2] - p[2]) % _TWO_PI
        dth = np.minimum(dth, _TWO_PI - dth)
        dist = np.sqrt(d2 + dth**2)
    else:
        dist = np.hypot(seeds[:, 0] - p[0], seeds[:, 1] - p[1])
    k = int(np.argmin(dist))
    return float(dist[k]), k


def backtrack(
    dmap: DistanceMap,
    metric: Metric2 | LiftedMetric3,
    target,
    cfg: TraceConfig | None = None,
) -> Polyline:
    """Integrate the descent ODE from target back to the nearest seed.

    Returns the path oriented seed -> target (the natural direction of the
    extracted geodesic); its last point is the exact target and its first
    lies within cfg.capture_radius of a seed.  The arrival value along the
    trace decreases strictly at every accepted step.
    """
    if cfg is None:
        cfg = TraceConfig()
    lifted = dmap.lifted
    grid = dmap.grid
    target = np.asarray(target, dtype=float)
    if target.shape != ((3,) if lifted else (2,)):
        raise ValueError("target dimensionality does not match the distance map")
    p = _clamp_point(grid, target)
    value = _value_at(dmap, p)
    if not np.isfinite(value):
        raise UnreachedTarget(
            f"target at {tuple(round(float(c), 3) for c in target)} has no finite arrival value"
        )
    if lifted:
        diag = np.sqrt(
            ((grid.width - 1) * grid.spacing) ** 2
            + ((grid.height - 1) * grid.spacing) ** 2
            + np.pi**2
        )
    else:
        diag = np.hypot((grid.width - 1) * grid.spacing, (grid.height - 1) * grid.spacing)
    max_steps = cfg.max_steps if cfg.max_steps is not None else max(1000, int(8 * diag / cfg.step))

    def velocity(q: np.ndarray) -> np.ndarray:
        g = _gradient(dmap, q)
        if not np.any(np.isfinite(g)) or float(np.linalg.norm(g)) <= 1e-15:
            return np.zeros_like(q)
        if lifted:
            return -_descent_direction_3d(metric, g, q, cfg)
        return -_descent_direction_2d(metric, g, q, cfg)

    if lifted:
        ring = _fibonacci_sphere(cfg.direction_samples)
    else:
        phis = np.linspace(0.0, _TWO_PI, cfg.direction_samples, endpoint=False)
        ring = np.stack([np.cos(phis), np.sin(phis)], axis=1)

    points = [p.copy()]
    seeds = dmap.seeds
    for _ in range(max_steps):
        d_seed, k_seed = _seed_distance(p, seeds, lifted)
        if d_seed <= cfg.capture_radius:
            seed_pt = seeds[k_seed].astype(float)
            if d_seed > 1e-12:
                points.append(seed_pt)
            path = Polyline(np.array(points[::-1]))
            return path
        accepted = False
        for halving in range(5):
            h = cfg.step / (2.0**halving)
            v1 = velocity(p)
            if float(np.linalg.norm(v1)) <= 1e-15:
                break
            if cfg.integrator == "euler":
                q = p + h * v1
            elif cfg.integrator == "heun":
                v2 = velocity(_clamp_point(grid, p + h * v1))
                q = p + 0.5 * h * (v1 + v2)
            else:  # rk4
                v2 = velocity(_clamp_point(grid, p + 0.5 * h * v1))
                v3 = velocity(_clamp_point(grid, p + 0.5 * h * v2))
                v4 = velocity(_clamp_point(grid, p + h * v3))
                q = p + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
            q = _clamp_point(grid, q)
            new_value = _value_at(dmap, q)
            if np.isfinite(new_value) and new_value < value - 1e-15:
                p = q
                value = new_value
                points.append(p.copy())
                accepted = True
                break
        if not accepted:
            # the interpolated field is exactly flat inside cells with a
            # single reached corner and can form node-scale basins along
            # jagged masked walls, which blinds the gradient; probe the
            # sampled directions on the values themselves, growing the
            # radius up to a couple of cells, before giving up
            for mult in (0.5, 1.0, 2.0, 4.0, 8.0):
                h = cfg.step * mult
                best_q = None
                best_v = value - 1e-15
                for u in ring:
                    q = _clamp_point(grid, p + h * u)
                    nv = _value_at(dmap, q)
                    if nv < best_v:
                        best_q = q
                        best_v = nv
                if best_q is not None:
                    p = best_q
                    value = best_v
                    points.append(p.copy())
                    accepted = True
                    break
        if not accepted:
            raise StuckDescent(
                "arrival value failed to decrease in 10 attempts "
                "(integrator halvings plus direction-ring probes)",
                point=tuple(float(c) for c in p),
            )
    raise MaxStepsExceeded(
        f"descent did not reach a seed within {max_steps} steps"
    )


def trace_between(
    metric: Metric2 | LiftedMetric3,
    source,
    target,
    cfg: TraceConfig | None = None,
    stop_early: bool = True,
) -> Polyline:
    """Solve from source with an early stop at target, then backtrack."""
    from .eikonal import SolveRequest, solve, solve_lifted

    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    stop = "first_reached" if stop_early else "none"
    request = SolveRequest(
        seeds=source[None, :],
        stop=stop,
        targets=target[None, :] if stop_early else None,
    )
    if isinstance(metric, LiftedMetric3):
        dmap = solve_lifted(metric, request)
    else:
        dmap = solve(metric, request)
    return backtrack(dmap, metric, target, cfg)


def project_lifted(path: Polyline) -> Polyline:
    """Drop the orientation coordinate of a lifted path for 2D consumers.

    Points that only moved in theta collapse; consecutive duplicates are
    removed so the result is a valid plane polyline.
    """
    pts = np.asarray(path.points, dtype=float)
    if pts.shape[1] == 2:
        return path
    plane = pts[:, :2]
    keep = [0]
    for i in range(1, plane.shape[0]):
        if float(np.max(np.abs(plane[i] - plane[keep[-1]]))) > 1e-9:
            keep.append(i)
    if len(keep) == 1:
        return Polyline(plane[[0]])
    return Polyline(plane[keep], closed=False)
