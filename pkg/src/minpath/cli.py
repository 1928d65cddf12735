"""Batch command-line interface.

Commands: features, distance, path, segment, residual, serve.
All outputs are deterministic: identical inputs give byte-identical files.
Exit codes: 0 success, 2 validation error (bad arguments, unreadable or
ill-formed inputs), 3 runtime error (solver or tracing failure).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from .errors import (
    CorruptFile,
    DegenerateCurve,
    DegenerateRegion,
    HeaderMismatch,
    MinPathError,
    NonFiniteMetric,
    NotPositiveDefinite,
    SeedOutsideGrid,
    SelfIntersecting,
    UnsupportedFormat,
)
from .eikonal import DistanceMap, SolveRequest, residual, solve, solve_lifted
from .evolution import run_evolution
from .features import (
    alignment_vector,
    edge_potential,
    gradient_magnitude,
    orientation_score_edge,
    remap_bounded,
)
from .grid import Grid2, LiftedGrid3, Polyline, ScalarField
from .metrics import (
    LiftedMetric3,
    make_alignment_randers,
    make_alignment_riemannian,
    make_elastica,
    make_isotropic,
)
from .tracing import trace_between

_VALIDATION_ERRORS = (
    ValueError,
    FileNotFoundError,
    IsADirectoryError,
    UnsupportedFormat,
    CorruptFile,
    HeaderMismatch,
    NotPositiveDefinite,
    NonFiniteMetric,
    SeedOutsideGrid,
    DegenerateCurve,
    DegenerateRegion,
    # user-supplied polygons are checked up front; crossing input is a
    # validation problem, not a solver failure
    SelfIntersecting,
)

# gradient smoothing used by the segment command's edge potential
_SEGMENT_SIGMA = 1.5


def _parse_point(text: str, name: str) -> np.ndarray:
    try:
        parts = [float(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise ValueError(f"{name} must be comma-separated numbers: {text!r}") from exc
    if len(parts) not in (2, 3):
        raise ValueError(f"{name} must be x,y or x,y,theta: {text!r}")
    return np.asarray(parts)


def _parse_vertices(text: str) -> np.ndarray:
    rows = []
    for chunk in text.split(":"):
        pt = _parse_point(chunk, "--vertices entry")
        if pt.shape[0] != 2:
            raise ValueError(f"--vertices entries must be x,y: {chunk!r}")
        rows.append(pt)
    if len(rows) < 3:
        raise ValueError("--vertices needs at least three x,y pairs")
    return np.stack(rows)


def _gray(image: np.ndarray) -> np.ndarray:
    return image.mean(axis=2) if image.ndim == 3 else image


def _check_planar_point(point: np.ndarray, name: str, lifted: bool) -> np.ndarray:
    if lifted and point.shape[0] != 3:
        raise ValueError(f"{name} needs x,y,theta for the elastica metric")
    if not lifted and point.shape[0] != 2:
        raise ValueError(f"{name} must be x,y for planar metrics")
    return point


def _build_metric(image: np.ndarray, args):
    """Metric from the shared --metric/--sigma/--beta/--lambda/--alpha/--ntheta flags."""
    if args.metric == "iso":
        g = gradient_magnitude(image, args.sigma)
        return make_isotropic(edge_potential(g, "exp_gap", args.beta))
    if args.metric in ("riem-align", "randers-align"):
        xi = alignment_vector(image, args.sigma, mode="sum")
        xi_tilde = remap_bounded(xi, args.beta)
        if args.metric == "riem-align":
            return make_alignment_riemannian(xi_tilde)
        return make_alignment_randers(xi_tilde)
    if args.metric == "elastica":
        psi = orientation_score_edge(_gray(image), args.sigma, args.ntheta)
        return make_elastica(
            psi.grid, lam=args.lam, alpha=args.alpha, psi=psi, beta=args.beta
        )
    raise ValueError(f"unknown metric {args.metric!r}")


def _add_metric_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--metric",
        required=True,
        choices=["iso", "riem-align", "randers-align", "elastica"],
        help="metric family built from the image",
    )
    sub.add_argument("--sigma", type=float, default=2.0, help="gradient smoothing, pixels")
    sub.add_argument("--beta", type=float, default=1.0, help="feature strength")
    sub.add_argument(
        "--lambda", dest="lam", type=float, default=100.0, help="elastica stiffness"
    )
    sub.add_argument(
        "--alpha", type=float, default=1.0, help="elastica curvature weight"
    )
    sub.add_argument(
        "--ntheta", type=int, default=60, help="orientation samples (elastica)"
    )


def _solve_distance(metric, seed: np.ndarray, target: np.ndarray | None) -> DistanceMap:
    if target is None:
        request = SolveRequest(seeds=seed[None, :])
    else:
        request = SolveRequest(
            seeds=seed[None, :], stop="first_reached", targets=target[None, :]
        )
    if isinstance(metric, LiftedMetric3):
        return solve_lifted(metric, request)
    return solve(metric, request)


def cmd_features(args) -> None:
    if args.out_g is None and args.out_xi is None:
        raise ValueError("nothing to do: pass --out-g and/or --out-xi")
    image = mio.load_image(args.image)
    if args.out_g is not None:
        mio.save_field(gradient_magnitude(image, args.sigma), args.out_g)
    if args.out_xi is not None:
        mio.save_field(alignment_vector(image, args.sigma, mode=args.color_mode), args.out_xi)


def cmd_distance(args) -> None:
    image = mio.load_image(args.image)
    metric = _build_metric(image, args)
    lifted = isinstance(metric, LiftedMetric3)
    seed = _check_planar_point(_parse_point(args.seed, "--seed"), "--seed", lifted)
    target = None
    if args.stop_at is not None:
        target = _check_planar_point(
            _parse_point(args.stop_at, "--stop-at"), "--stop-at", lifted
        )
    dmap = _solve_distance(metric, seed, target)
    mio.save_field(ScalarField(metric.grid, dmap.values), args.out)


def cmd_path(args) -> None:
    image = mio.load_image(args.image)
    metric = _build_metric(image, args)
    lifted = isinstance(metric, LiftedMetric3)
    seed = _check_planar_point(_parse_point(args.seed, "--seed"), "--seed", lifted)
    target = _check_planar_point(_parse_point(args.target, "--target"), "--target", lifted)
    path = trace_between(metric, seed, target)
    mio.save_path(path, args.out)
    if args.overlay is not None:
        mio.save_overlay(image, [path], args.overlay)


def cmd_segment(args) -> None:
    image = mio.load_image(args.image)
    gray = _gray(image)
    img_field = ScalarField(Grid2(gray.shape[1], gray.shape[0]), gray)
    vertices = _parse_vertices(args.vertices)
    potential = None
    if args.beta != 0.0:
        g = gradient_magnitude(gray, _SEGMENT_SIGMA)
        potential = edge_potential(g, "exp_gap", args.beta)

    frames_dir = None
    if args.frames is not None:
        frames_dir = Path(args.frames)
        frames_dir.mkdir(parents=True, exist_ok=True)

    def on_step(state) -> None:
        if frames_dir is None:
            return
        stem = frames_dir / f"frame_{state.k - 1:03d}"
        mio.save_path(state.curve, stem.with_suffix(".json"))
        mio.save_overlay(gray, [state.curve], stem.with_suffix(".png"))

    final = run_evolution(
        vertices,
        img_field,
        potential=potential,
        tube_radius=args.r,
        alpha_tilde=args.alpha,
        max_iters=args.max_iters,
        on_step=on_step,
    )
    mio.save_path(final.curve, args.out)
    for rec in final.history:
        print(
            f"iter {rec['k']}: hausdorff_step={rec['hausdorff']:.4f} "
            f"energy={rec['energy']:.6f} max_drift={rec['max_drift']:.4f}",
            file=sys.stderr,
        )


def cmd_residual(args) -> None:
    image = mio.load_image(args.image)
    metric = _build_metric(image, args)
    lifted = isinstance(metric, LiftedMetric3)
    dfield = mio.load_field(args.dfield)
    if not isinstance(dfield, ScalarField):
        raise ValueError("distance file must hold a scalar field")
    if dfield.grid.shape != metric.grid.shape:
        raise HeaderMismatch(
            f"distance field shape {dfield.grid.shape} does not match "
            f"the metric grid {metric.grid.shape}"
        )
    values = dfield.values.astype(np.float64)
    seeds = np.zeros((0, 3 if lifted else 2))
    if args.seed is not None:
        seed = _check_planar_point(_parse_point(args.seed, "--seed"), "--seed", lifted)
        seeds = seed[None, :]
    flat = np.zeros(values.size, dtype=np.int64)
    dmap = DistanceMap(
        grid=metric.grid,
        values=values,
        labels=np.zeros(values.shape, dtype=np.int32),
        accept_order=flat,
        parent1=flat,
        parent2=flat,
        parent_t=flat,
        seeds=seeds,
        domain=np.ones(values.shape, dtype=bool),
    )
    res = residual(dmap, metric)
    mio.save_field(ScalarField(metric.grid, res), args.out)


def cmd_serve(args) -> None:
    import uvicorn

    from .service import create_app

    app = create_app(cors_origin=args.cors_origin)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minpath",
        description="Geodesic minimal paths on images: distance maps, "
        "path tracing and region-driven curve evolution.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("features", help="edge strength and alignment fields")
    p.add_argument("image")
    p.add_argument("--sigma", type=float, required=True, help="gradient smoothing, pixels")
    p.add_argument("--color-mode", choices=["sum", "eigen"], default="sum")
    p.add_argument("--out-g", default=None, help="edge-strength field output")
    p.add_argument("--out-xi", default=None, help="alignment vector field output")
    p.set_defaults(func=cmd_features)

    p = subs.add_parser("distance", help="solve a front-propagation distance map")
    p.add_argument("image")
    _add_metric_flags(p)
    p.add_argument("--seed", required=True, help="x,y or x,y,theta")
    p.add_argument("--stop-at", default=None, help="stop once this point is reached")
    p.add_argument("--out", required=True, help="distance field output")
    p.set_defaults(func=cmd_distance)

    p = subs.add_parser("path", help="trace the minimal path between two points")
    p.add_argument("image")
    _add_metric_flags(p)
    p.add_argument("--seed", required=True, help="x,y or x,y,theta")
    p.add_argument("--target", required=True, help="x,y or x,y,theta")
    p.add_argument("--out", required=True, help="path JSON output")
    p.add_argument("--overlay", default=None, help="optional overlay image (.png/.svg)")
    p.set_defaults(func=cmd_path)

    p = subs.add_parser("segment", help="region-driven closed-curve evolution")
    p.add_argument("image")
    p.add_argument("--vertices", required=True, help="x1,y1:x2,y2:... (at least 3)")
    p.add_argument("--r", type=float, default=12.0, help="tube radius, pixels")
    p.add_argument(
        "--alpha",
        type=float,
        default=None,
        help="drift gain; omitted = adaptive (median drive becomes 1)",
    )
    p.add_argument(
        "--beta",
        type=float,
        default=0.0,
        help="edge-potential strength; 0 = uniform potential",
    )
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out", required=True, help="final curve JSON output")
    p.add_argument("--frames", default=None, help="directory for per-iteration curves")
    p.set_defaults(func=cmd_segment)

    p = subs.add_parser("residual", help="pointwise optimality defect of a distance field")
    p.add_argument("dfield", help="distance field file")
    p.add_argument("image")
    _add_metric_flags(p)
    p.add_argument("--seed", default=None, help="seed used for the solve (masked out)")
    p.add_argument("--out", required=True, help="residual field output")
    p.set_defaults(func=cmd_residual)

    p = subs.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--cors-origin", default="*")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"minpath {args.command}: {exc}", file=sys.stderr)
        return 2
    except MinPathError as exc:
        print(f"minpath {args.command}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
