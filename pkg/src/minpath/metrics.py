"""Planar and orientation-lifted path metrics.

Every planar metric is stored in the common Randers form

    F(x, u) = sqrt(<u, M(x) u>) + <omega(x), u>

with M symmetric positive definite and <omega, M^-1 omega> < 1 everywhere
(isotropic: M = P^2 Id, omega = 0; Riemannian: omega = 0).  The lifted
elastica metric keeps its analytic form

    F_lam(x^, u~) = C(x^) (sqrt(lam^2 |u|^2 + 2 a lam nu^2)
                           - (lam - 1) <u, (cos t, sin t)>)

with u~ = (u, nu), nu in radians, and an optional positive multiplier C.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteMetric, NotPositiveDefinite
from .features import rotate90
from .grid import (
    Grid2,
    LiftedGrid3,
    Polyline,
    ScalarField,
    TensorField2,
    VectorField2,
    sample_bilinear,
    sample_trilinear_periodic,
)

__all__ = [
    "Metric2",
    "LiftedMetric3",
    "evaluate",
    "evaluate_lifted",
    "check_positive_definiteness",
    "make_isotropic",
    "make_alignment_randers",
    "make_alignment_riemannian",
    "make_region_randers",
    "make_elastica",
    "curve_length",
    "elastica_energy",
    "randers_cost",
]


def randers_cost(m11, m12, m22, wx, wy, ux, uy):
    """One shared Randers evaluation: sqrt(<u, M u>) + <w, u>.

    Scalar or numpy-broadcastable arguments; the solver kernels compile this
    same function, so node updates and point evaluation cannot drift apart.
    """
    quad = ux * (m11 * ux + m12 * uy) + uy * (m12 * ux + m22 * uy)
    return np.sqrt(quad) + wx * ux + wy * uy


@dataclass
class Metric2:
    """Planar metric in canonical Randers storage.

    ``kind`` is one of isotropic, riemannian, randers and only records how
    the metric was built; evaluation always goes through (tensor, omega).
    """

    grid: Grid2
    tensor: TensorField2
    omega: VectorField2
    kind: str = "randers"

    def __post_init__(self):
        if self.tensor.grid.shape != self.grid.shape or self.omega.grid.shape != self.grid.shape:
            raise ValueError("metric fields must live on the metric grid")
        if not (np.all(np.isfinite(self.tensor.values)) and np.all(np.isfinite(self.omega.values))):
            raise NonFiniteMetric("metric fields contain non-finite entries")
        check_positive_definiteness(self)

    @property
    def is_symmetric(self) -> bool:
        return not np.any(self.omega.values)


def _pd_values_2d(metric: Metric2) -> np.ndarray:
    m = metric.tensor.values
    w = metric.omega.values
    det = m[..., 0] * m[..., 2] - m[..., 1] ** 2
    # <w, M^-1 w> via the adjugate
    quad = (
        m[..., 2] * w[..., 0] ** 2
        - 2.0 * m[..., 1] * w[..., 0] * w[..., 1]
        + m[..., 0] * w[..., 1] ** 2
    )
    return quad / det


def check_positive_definiteness(metric) -> float:
    """Grid max of <omega, M^-1 omega>; raises when the bound >= 1 fails.

    For the lifted elastica metric the value is the analytic (1 - 1/lam)^2,
    independent of position and of the cost multiplier.
    """
    if isinstance(metric, LiftedMetric3):
        value = (1.0 - 1.0 / metric.lam) ** 2 if metric.lam > 1.0 else 0.0
        return value
    vals = _pd_values_2d(metric)
    idx = int(np.argmax(vals))
    worst = float(vals.flat[idx])
    if not worst < 1.0:
        node = np.unravel_index(idx, vals.shape)
        raise NotPositiveDefinite(
            f"<omega, M^-1 omega> = {worst:.6g} >= 1 at node (y={node[0]}, x={node[1]})",
            node=(int(node[1]), int(node[0])),
            value=worst,
        )
    return worst


def make_isotropic(potential: ScalarField) -> Metric2:
    """F(x, u) = P(x) |u| with P > 0."""
    p = potential.values
    if not np.all(p > 0):
        raise ValueError("isotropic potential must be positive")
    grid = potential.grid
    tens = np.zeros(grid.shape + (3,))
    tens[..., 0] = p**2
    tens[..., 2] = p**2
    omega = np.zeros(grid.shape + (2,))
    return Metric2(grid, TensorField2(grid, tens), VectorField2(grid, omega), kind="isotropic")


def make_alignment_randers(xi_tilde: VectorField2) -> Metric2:
    """Asymmetric edge-alignment metric F(x, u) = |u| - <u, xi~(x)>.

    Moving along xi~ is cheap, against it expensive; needs |xi~| < 1.
    """
    grid = xi_tilde.grid
    tens = np.zeros(grid.shape + (3,))
    tens[..., 0] = 1.0
    tens[..., 2] = 1.0
    return Metric2(
        grid, TensorField2(grid, tens), VectorField2(grid, -xi_tilde.values), kind="randers"
    )


def make_alignment_riemannian(xi_tilde: VectorField2) -> Metric2:
    """Symmetric alignment metric with tensor Id - xi~ xi~^T.

    Eigenvalues are 1 across xi~ and 1 - |xi~|^2 along it, so motion along
    the edge tangent is cheap in both directions.
    """
    grid = xi_tilde.grid
    v = xi_tilde.values
    tens = np.zeros(grid.shape + (3,))
    tens[..., 0] = 1.0 - v[..., 0] ** 2
    tens[..., 1] = -v[..., 0] * v[..., 1]
    tens[..., 2] = 1.0 - v[..., 1] ** 2
    omega = np.zeros(grid.shape + (2,))
    return Metric2(grid, TensorField2(grid, tens), VectorField2(grid, omega), kind="riemannian")


def make_region_randers(potential: ScalarField, varpi: VectorField2) -> Metric2:
    """Region-force metric F(x, u) = P(x) |u| + <rot90(varpi(x)), u>.

    The quarter-turned bounded field varpi carries the region gradient; its
    flux across a closed curve equals the enclosed divergence, which is how
    area terms become curve length terms.  Needs |varpi| < P pointwise.
    """
    if potential.grid.shape != varpi.grid.shape:
        raise ValueError("potential and varpi must share a grid")
    p = potential.values
    if not np.all(p > 0):
        raise ValueError("potential must be positive")
    grid = potential.grid
    tens = np.zeros(grid.shape + (3,))
    tens[..., 0] = p**2
    tens[..., 2] = p**2
    omega = rotate90(varpi.values)
    return Metric2(grid, TensorField2(grid, tens), VectorField2(grid, omega), kind="randers")


@dataclass
class LiftedMetric3:
    """Finsler elastica metric on an orientation-lifted grid.

    lam >= 1 controls the asymmetry (reverse or sideways motion costs up to
    2 lam - 1 per unit length), alpha > 0 weighs squared curvature.  The
    optional cost field multiplies the whole metric and must be positive.
    """

    grid: LiftedGrid3
    lam: float = 100.0
    alpha: float = 1.0
    cost: ScalarField | None = None

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError("lam must be >= 1")
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if self.cost is not None:
            if self.cost.grid.shape != self.grid.shape:
                raise ValueError("cost field must live on the metric grid")
            if not np.all(np.isfinite(self.cost.values)):
                raise NonFiniteMetric("cost field contains non-finite entries")
            if not np.all(self.cost.values > 0):
                raise ValueError("cost field must be positive")


def make_elastica(
    grid: LiftedGrid3,
    lam: float = 100.0,
    alpha: float = 1.0,
    psi: ScalarField | None = None,
    form: str = "exp",
    beta: float = 1.0,
) -> LiftedMetric3:
    """Elastica metric, optionally modulated by an orientation score psi >= 0.

    form="exp" uses exp(-beta psi / max psi) (low cost on strong features);
    form="linear" uses 1 + beta psi / max psi.  A zero score leaves the
    metric unmodulated.
    """
    cost = None
    if psi is not None:
        if psi.grid.shape != grid.shape:
            raise ValueError("psi must live on the metric grid")
        top = float(np.max(np.abs(psi.values)))
        if top > 0:
            scaled = psi.values / top
            if form == "exp":
                vals = np.exp(-beta * scaled)
            elif form == "linear":
                vals = 1.0 + beta * scaled
            else:
                raise ValueError(f"unknown cost form {form!r}")
            cost = ScalarField(grid, vals)
    return LiftedMetric3(grid, lam=lam, alpha=alpha, cost=cost)


def evaluate(metric: Metric2, points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """F(x, u) with metric fields sampled bilinearly at x."""
    m = sample_bilinear(metric.tensor, points)
    w = sample_bilinear(metric.omega, points)
    u = np.asarray(vectors, dtype=float)
    return randers_cost(
        m[..., 0], m[..., 1], m[..., 2], w[..., 0], w[..., 1], u[..., 0], u[..., 1]
    )


def evaluate_lifted(metric: LiftedMetric3, points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """F_lam(x^, u~) at lifted points (x, y, theta), u~ = (ux, uy, nu)."""
    p = np.asarray(points, dtype=float)
    u = np.asarray(vectors, dtype=float)
    theta = p[..., 2]
    lam, alpha = metric.lam, metric.alpha
    spatial = u[..., 0] ** 2 + u[..., 1] ** 2
    quad = np.sqrt(lam**2 * spatial + 2.0 * alpha * lam * u[..., 2] ** 2)
    drift = (lam - 1.0) * (u[..., 0] * np.cos(theta) + u[..., 1] * np.sin(theta))
    base = quad - drift
    if metric.cost is not None:
        base = base * sample_trilinear_periodic(metric.cost, p)
    return base


def curve_length(metric, curve: Polyline) -> float:
    """Metric length by the midpoint rule over polyline segments.

    Closed curves include the closing segment.  For lifted curves the theta
    component of each segment is wrapped to (-pi, pi] and the midpoint theta
    follows the short way around.
    """
    pts = curve.points
    if curve.n_points < 2:
        return 0.0
    if curve.closed:
        a = pts
        b = np.vstack([pts[1:], pts[:1]])
    else:
        a = pts[:-1]
        b = pts[1:]
    if isinstance(metric, LiftedMetric3):
        dtheta = (b[:, 2] - a[:, 2] + np.pi) % (2.0 * np.pi) - np.pi
        u = np.stack([b[:, 0] - a[:, 0], b[:, 1] - a[:, 1], dtheta], axis=1)
        mid = np.stack(
            [
                0.5 * (a[:, 0] + b[:, 0]),
                0.5 * (a[:, 1] + b[:, 1]),
                np.mod(a[:, 2] + 0.5 * dtheta, 2.0 * np.pi),
            ],
            axis=1,
        )
        return float(np.sum(evaluate_lifted(metric, mid, u)))
    u = b[:, :2] - a[:, :2]
    mid = 0.5 * (a[:, :2] + b[:, :2])
    return float(np.sum(evaluate(metric, mid, u)))


def elastica_energy(curve: Polyline, alpha: float) -> float:
    """Bending energy: integral of (1 + alpha kappa^2) ds in the stiff limit.

    For lifted curves the turning angle comes from the theta channel; for
    planar curves it comes from consecutive edge directions.  Discretized as
    sum of |dx| + alpha dtheta^2 / |dx| per step (lifted) or per vertex
    (planar, with the mean adjacent edge length as ds).
    """
    pts = curve.points
    if curve.closed:
        nxt = np.vstack([pts[1:], pts[:1]])
    else:
        nxt = pts[1:]
        pts = pts[:-1]
    dx = nxt[:, :2] - pts[:, :2]
    seg = np.linalg.norm(dx, axis=1)
    if curve.points.shape[1] == 3:
        dtheta = (nxt[:, 2] - pts[:, 2] + np.pi) % (2.0 * np.pi) - np.pi
        return float(np.sum(seg + alpha * dtheta**2 / seg))
    ang = np.arctan2(dx[:, 1], dx[:, 0])
    if curve.closed:
        turn = (ang - np.roll(ang, 1) + np.pi) % (2.0 * np.pi) - np.pi
        ds = 0.5 * (seg + np.roll(seg, 1))
        return float(np.sum(seg) + alpha * np.sum(turn**2 / ds))
    turn = (np.diff(ang) + np.pi) % (2.0 * np.pi) - np.pi
    ds = 0.5 * (seg[:-1] + seg[1:])
    return float(np.sum(seg) + alpha * np.sum(turn**2 / ds))
