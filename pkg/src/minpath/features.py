"""Image-derived features: smoothed gradients, edge potentials, alignment
vector fields and orientation scores on the lifted grid.

Images are numpy arrays in [0, 1], gray ``(h, w)`` or color ``(h, w, 3)``.
All filters use sampled Gaussian kernels truncated at radius ceil(4 sigma)
with reflective padding; first and second derivative kernels are moment
normalized so ramps and quadratics respond exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Grid2, LiftedGrid3, ScalarField, VectorField2

__all__ = [
    "image_grid",
    "gaussian_gradient",
    "gradient_magnitude",
    "edge_potential",
    "alignment_vector",
    "remap_bounded",
    "orientation_score_edge",
    "orientation_score_tube",
    "TubeScore",
    "rotate90",
]


def rotate90(v: np.ndarray) -> np.ndarray:
    """Counterclockwise quarter turn in (x, y) algebra: (a, b) -> (-b, a)."""
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def image_grid(image: np.ndarray) -> Grid2:
    return Grid2(width=image.shape[1], height=image.shape[0])


def _channels(image: np.ndarray) -> list:
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        return [img]
    if img.ndim == 3 and img.shape[2] in (3, 4):
        return [img[..., c] for c in range(min(img.shape[2], 3))]
    raise ValueError("image must be (h, w) or (h, w, 3)")


def _gauss_kernels(sigma: float):
    """Smoothing, first and second derivative kernels with exact moments."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    radius = int(np.ceil(4.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=float)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    smooth = g / g.sum()
    # correlation weights for d/dx of the smoothed signal: w[t] = G'(-t)
    d1 = t * g / sigma**2
    d1 = d1 / np.sum(t * d1)
    d2 = (t**2 / sigma**4 - 1.0 / sigma**2) * g
    d2 = d2 - d2.mean()
    d2 = d2 * (2.0 / np.sum(t**2 * d2))
    return smooth, d1, d2


def _sep(channel, wx, wy):
    out = ndimage.correlate1d(channel, wx, axis=1, mode="reflect")
    return ndimage.correlate1d(out, wy, axis=0, mode="reflect")


def _channel_gradient(channel: np.ndarray, sigma: float) -> np.ndarray:
    smooth, d1, _ = _gauss_kernels(sigma)
    gx = _sep(channel, d1, smooth)
    gy = _sep(channel, smooth, d1)
    return np.stack([gx, gy], axis=-1)


def gaussian_gradient(image: np.ndarray, sigma: float) -> VectorField2:
    """Gradient of the Gaussian-smoothed image.

    Color images use the channel sum, so the result is the gradient of the
    summed smoothed channels.
    """
    chans = _channels(image)
    total = sum(_channel_gradient(c, sigma) for c in chans)
    return VectorField2(image_grid(image), total)


def gradient_magnitude(image: np.ndarray, sigma: float) -> ScalarField:
    """Sum over channels of the smoothed gradient norms (one term for gray)."""
    chans = _channels(image)
    mag = np.zeros(chans[0].shape)
    for c in chans:
        g = _channel_gradient(c, sigma)
        mag += np.hypot(g[..., 0], g[..., 1])
    return ScalarField(image_grid(image), mag)


def edge_potential(field: ScalarField, kind: str, beta: float = 1.0, c2: float = 1.0) -> ScalarField:
    """Scalar potential P > 0 from a feature field.

    exp_gap:  P = exp(beta (max g - g)), so inf P = 1 at the strongest edge;
    exp_neg:  P = exp(-beta g);
    gray_offset: P = c2 + I applied to the image itself, c2 > 0.
    """
    g = field.values
    if kind == "exp_gap":
        vals = np.exp(beta * (g.max() - g))
    elif kind == "exp_neg":
        vals = np.exp(-beta * g)
    elif kind == "gray_offset":
        if not c2 > 0:
            raise ValueError("gray_offset needs c2 > 0")
        vals = c2 + g
    else:
        raise ValueError(f"unknown potential kind {kind!r}")
    return ScalarField(field.grid, vals)


def _smaller_eigenvector(a, b, c):
    """Unit eigenvector of [[a, b], [b, c]] for the smaller eigenvalue."""
    half_gap = 0.5 * (a - c)
    root = np.hypot(half_gap, b)
    lam_min = 0.5 * (a + c) - root
    # two candidate representations; pick the better conditioned one
    v1 = np.stack([b, lam_min - a], axis=-1)
    v2 = np.stack([lam_min - c, b], axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    use2 = n2 > n1
    v = np.where(use2[..., None], v2, v1)
    n = np.where(use2, n2, n1)
    ok = n > 1e-30
    v = np.where(ok[..., None], v / np.where(ok, n, 1.0)[..., None], 0.0)
    return v


def alignment_vector(image: np.ndarray, sigma: float, mode: str = "sum") -> VectorField2:
    """Edge-tangent vector field xi, perpendicular to the local gradient.

    mode="sum": xi is the quarter-turned sum of channel gradients.
    mode="eigen": xi = g * v where v is the unit eigenvector of the
    structure matrix W W^T for its smaller eigenvalue, g the summed channel
    gradient norm; the sign of v is fixed to agree with the quarter-turned
    summed gradient.  Gray images are treated as three identical channels.
    """
    chans = _channels(image)
    grads = [_channel_gradient(c, sigma) for c in chans]
    if mode == "sum":
        wbar = sum(grads)
        vals = rotate90(wbar)
        return VectorField2(image_grid(image), vals)
    if mode == "eigen":
        if len(grads) == 1:
            grads = grads * 3
        a = sum(g[..., 0] ** 2 for g in grads)
        b = sum(g[..., 0] * g[..., 1] for g in grads)
        c = sum(g[..., 1] ** 2 for g in grads)
        v = _smaller_eigenvector(a, b, c)
        wbar = sum(grads)
        ref = rotate90(wbar)
        sign = np.where(np.sum(v * ref, axis=-1) < 0.0, -1.0, 1.0)
        g = sum(np.hypot(gr[..., 0], gr[..., 1]) for gr in grads)
        vals = v * (sign * g)[..., None]
        return VectorField2(image_grid(image), vals)
    raise ValueError(f"unknown alignment mode {mode!r}")


def remap_bounded(xi: VectorField2, beta: float) -> VectorField2:
    """Rescale xi to norm phi(beta |xi|) with phi(a) = 1 - exp(-a).

    The result keeps directions and has norm strictly below 1 everywhere,
    which is what Randers positive definiteness needs.  beta = 0 yields the
    zero field.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    norm = np.linalg.norm(xi.values, axis=-1)
    phi = -np.expm1(-beta * norm)
    # phi < 1 holds in exact arithmetic but rounds to 1.0 for large inputs;
    # keep a strict margin so downstream definiteness checks stay valid
    phi = np.minimum(phi, 1.0 - 1e-9)
    scale = np.where(norm > 0.0, phi / np.where(norm > 0.0, norm, 1.0), 0.0)
    return VectorField2(xi.grid, xi.values * scale[..., None])


def orientation_score_edge(image: np.ndarray, sigma: float, n_theta: int) -> ScalarField:
    """First-order steerable edge score on the lifted grid.

    psi(x, theta) = sum over channels of |<(cos theta, sin theta), grad_i>|;
    pi-periodic by construction.
    """
    chans = _channels(image)
    grads = [_channel_gradient(c, sigma) for c in chans]
    grid = LiftedGrid3(image.shape[1], image.shape[0], n_theta)
    thetas = grid.thetas()
    psi = np.zeros(grid.shape)
    for k, th in enumerate(thetas):
        ct, st = np.cos(th), np.sin(th)
        for g in grads:
            psi[k] += np.abs(ct * g[..., 0] + st * g[..., 1])
    return ScalarField(grid, psi)


@dataclass
class TubeScore:
    """Tube orientation score psi on the lifted grid and the selected scale map."""

    psi: ScalarField
    scale: ScalarField


def _disk_kernel(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    t = np.arange(-r, r + 1, dtype=float)
    dx, dy = np.meshgrid(t, t)
    return (dx**2 + dy**2 <= radius**2 + 1e-9).astype(float)


def orientation_score_tube(
    image: np.ndarray, sigma: float, radii, n_theta: int
) -> TubeScore:
    """Optimally oriented flux score for dark tubes on a bright background.

    For each radius the smoothed image Hessian is averaged over a disk; the
    radius maximizing the larger eigenvalue wins (smallest radius on ties),
    and psi(x, theta) is the response of that Hessian along the unit normal
    n_theta = (-sin theta, cos theta), clipped at zero.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim == 3:
        img = img.mean(axis=2)
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")

    smooth, d1, d2 = _gauss_kernels(sigma)
    hxx = _sep(img, d2, smooth)
    hyy = _sep(img, smooth, d2)
    hxy = _sep(_sep(img, d1, smooth), smooth, d1)

    best_eta = None
    best_idx = None
    q_per_r = []
    for idx, r in enumerate(radii):
        disk = _disk_kernel(r)
        qxx = ndimage.convolve(hxx, disk, mode="reflect")
        qxy = ndimage.convolve(hxy, disk, mode="reflect")
        qyy = ndimage.convolve(hyy, disk, mode="reflect")
        q_per_r.append((qxx, qxy, qyy))
        half_gap = 0.5 * (qxx - qyy)
        eta2 = 0.5 * (qxx + qyy) + np.hypot(half_gap, qxy)
        if best_eta is None:
            best_eta = eta2
            best_idx = np.zeros(eta2.shape, dtype=np.int64)
        else:
            better = eta2 > best_eta  # strict: ties keep the smaller radius
            best_eta = np.where(better, eta2, best_eta)
            best_idx = np.where(better, idx, best_idx)

    qxx = np.choose(best_idx, [q[0] for q in q_per_r])
    qxy = np.choose(best_idx, [q[1] for q in q_per_r])
    qyy = np.choose(best_idx, [q[2] for q in q_per_r])

    grid = LiftedGrid3(img.shape[1], img.shape[0], n_theta)
    psi = np.zeros(grid.shape)
    for k, th in enumerate(grid.thetas()):
        nx, ny = -np.sin(th), np.cos(th)
        resp = nx * nx * qxx + 2.0 * nx * ny * qxy + ny * ny * qyy
        psi[k] = np.maximum(resp, 0.0)

    scale = np.asarray(radii)[best_idx]
    return TubeScore(
        psi=ScalarField(grid, psi),
        scale=ScalarField(Grid2(img.shape[1], img.shape[0]), scale),
    )
