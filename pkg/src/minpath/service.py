"""Session-oriented HTTP API for interactive minimal paths and region evolution.

All routes live under /api/v1.  A session owns one uploaded image plus the
derived state: cached feature fields, the active metric, the last distance
map, and an optional running curve evolution.  Computation is synchronous
and bounded by hard grid caps (512x512 pixels, 96 orientations) so requests
stay at interactive latency.  Requests on one session are serialized by a
per-session lock; a second concurrent request receives 423 after a bounded
wait.  Unreached values are transported as JSON null.
"""

from __future__ import annotations

import math
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from typing import Any

import numpy as np
from fastapi import FastAPI, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from pydantic import BaseModel, Field

from . import io as mio
from .eikonal import DistanceMap, SolveRequest, solve, solve_lifted
from .errors import (
    CorruptFile,
    DegenerateCurve,
    DegenerateRegion,
    MinPathError,
    NotPositiveDefinite,
    SeedOutsideGrid,
    SegmentTraceFailed,
    SelfIntersecting,
    UnsupportedFormat,
)
from .evolution import EvolutionState, evolve_step, initial_state
from .features import (
    alignment_vector,
    edge_potential,
    gradient_magnitude,
    orientation_score_edge,
    orientation_score_tube,
    remap_bounded,
)
from .grid import Grid2, LiftedGrid3, Polyline, ScalarField
from .metrics import (
    LiftedMetric3,
    Metric2,
    check_positive_definiteness,
    make_alignment_randers,
    make_alignment_riemannian,
    make_elastica,
    make_isotropic,
)
from .tracing import _value_at, backtrack

MAX_SIDE = 512
MAX_THETA = 96
PREVIEW_SIDE = 256

# gradient smoothing for the evolution endpoints' optional edge potential
_EVOLUTION_SIGMA = 1.5

_METRIC_PARAMS = {
    "iso": {"sigma", "beta"},
    "riem-align": {"sigma", "beta"},
    "randers-align": {"sigma", "beta"},
    "elastica": {"sigma", "beta", "lambda", "alpha", "n_theta"},
    "elastica-tube": {"sigma", "beta", "lambda", "alpha", "n_theta", "radii"},
}


@dataclass
class Session:
    id: str
    image: np.ndarray
    lock: threading.Lock = dc_field(default_factory=threading.Lock)
    metric: Metric2 | LiftedMetric3 | None = None
    metric_kind: str | None = None
    psi: ScalarField | None = None
    dmap: DistanceMap | None = None
    evolution: EvolutionState | None = None
    evolution_kind: str = "chan_vese"

    @property
    def gray(self) -> np.ndarray:
        return self.image.mean(axis=2) if self.image.ndim == 3 else self.image


class MetricBody(BaseModel):
    kind: str
    params: dict[str, Any] = Field(default_factory=dict)


class StopSpec(BaseModel):
    mode: str = "none"
    target: list[float] | None = None
    max_distance: float | None = None


class DistanceBody(BaseModel):
    seed: list[float]
    stop: StopSpec = Field(default_factory=StopSpec)


class PathBody(BaseModel):
    target: list[float]


class EvolutionBody(BaseModel):
    vertices: list[list[float]]
    r: float = 12.0
    alpha: float | None = None
    beta: float = 0.0
    kind: str = "chan_vese"


class TubePathBody(BaseModel):
    source: list[float]
    target: list[float]


def _bad(message: str, extra: dict | None = None) -> HTTPException:
    detail: dict[str, Any] = {"message": message}
    if extra:
        detail.update(extra)
    return HTTPException(status_code=422, detail=detail)


def _point(values: list[float], name: str, lifted: bool) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    want = 3 if lifted else 2
    if arr.ndim != 1 or arr.shape[0] != want:
        kind = "x, y, theta" if lifted else "x, y"
        raise _bad(f"{name} must be [{kind}]")
    if not np.all(np.isfinite(arr)):
        raise _bad(f"{name} must be finite")
    return arr


def _json_value(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _preview(values: np.ndarray) -> dict:
    """Transport-sized view of a distance field.

    Lifted maps are first reduced by the min over orientations (the
    arrival time at a pixel regardless of direction), then max-pooled
    down to at most PREVIEW_SIDE per axis.  Unreached cells are null.
    """
    arr = values.min(axis=0) if values.ndim == 3 else values
    h, w = arr.shape
    cell = max(1, math.ceil(max(h, w) / PREVIEW_SIDE))
    ph, pw = math.ceil(h / cell), math.ceil(w / cell)
    padded = np.full((ph * cell, pw * cell), -np.inf)
    padded[:h, :w] = arr
    pooled = padded.reshape(ph, cell, pw, cell).max(axis=(1, 3))
    rows = [[_json_value(v) for v in row] for row in pooled]
    return {"width": pw, "height": ph, "cell": cell, "values": rows}


def _curve_json(curve: Polyline) -> dict:
    return {
        "closed": bool(curve.closed),
        "points": [[float(c) for c in q] for q in curve.points],
    }


def _metric_param(params: dict, key: str, default, minimum=None):
    value = params.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _bad(f"parameter {key} must be a number")
    value = float(value)
    if minimum is not None and not value > minimum:
        raise _bad(f"parameter {key} must be > {minimum}")
    return value


class ServiceState:
    def __init__(self, lock_timeout: float) -> None:
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()
        self.lock_timeout = lock_timeout

    def get(self, session_id: str) -> Session:
        with self.registry_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail={"message": "unknown session"})
        return session


class _Held:
    """Per-session exclusive access with a bounded wait."""

    def __init__(self, state: ServiceState, session_id: str) -> None:
        self.session = state.get(session_id)
        self.timeout = state.lock_timeout

    def __enter__(self) -> Session:
        if not self.session.lock.acquire(timeout=self.timeout):
            raise HTTPException(
                status_code=423,
                detail={"message": "session is busy with another request"},
            )
        return self.session

    def __exit__(self, *exc) -> None:
        self.session.lock.release()


def _build_metric(session: Session, kind: str, params: dict):
    """Metric plus the orientation score it was built from (lifted kinds)."""
    allowed = _METRIC_PARAMS.get(kind)
    if allowed is None:
        raise _bad(f"unknown metric kind {kind!r}")
    unknown = set(params) - allowed
    if unknown:
        raise _bad(f"unknown parameters for {kind}: {sorted(unknown)}")
    sigma = _metric_param(params, "sigma", 2.0, minimum=0.0)
    beta = _metric_param(params, "beta", 1.0)
    gray = session.gray

    if kind == "iso":
        g = gradient_magnitude(session.image, sigma)
        return make_isotropic(edge_potential(g, "exp_gap", beta)), None
    if kind in ("riem-align", "randers-align"):
        xi = alignment_vector(session.image, sigma, mode="sum")
        xi_tilde = remap_bounded(xi, beta)
        if kind == "riem-align":
            return make_alignment_riemannian(xi_tilde), None
        return make_alignment_randers(xi_tilde), None

    lam = _metric_param(params, "lambda", 100.0, minimum=1.0)
    alpha = _metric_param(params, "alpha", 1.0, minimum=0.0)
    n_theta = int(_metric_param(params, "n_theta", 60, minimum=7.0))
    if n_theta > MAX_THETA:
        raise HTTPException(
            status_code=413,
            detail={"message": f"n_theta {n_theta} exceeds the cap of {MAX_THETA}"},
        )
    if kind == "elastica":
        psi = orientation_score_edge(gray, sigma, n_theta)
    else:
        radii = params.get("radii", [2.0, 3.0, 4.0, 5.0])
        if not isinstance(radii, list) or not radii:
            raise _bad("parameter radii must be a non-empty list of numbers")
        score = orientation_score_tube(gray, sigma, radii, n_theta)
        psi = score.psi
    metric = make_elastica(psi.grid, lam=lam, alpha=alpha, psi=psi, beta=beta)
    return metric, psi


def create_app(cors_origin: str = "*", lock_timeout: float = 1.0) -> FastAPI:
    app = FastAPI(title="minpath service", version="1")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = ServiceState(lock_timeout)
    app.state.service = state

    @app.post("/api/v1/sessions")
    def create_session(image: UploadFile):
        data = image.file.read()
        try:
            decoded = mio.decode_image(data, image.filename or "<upload>")
        except UnsupportedFormat as exc:
            raise HTTPException(status_code=415, detail={"message": str(exc)})
        except CorruptFile as exc:
            raise HTTPException(status_code=415, detail={"message": str(exc)})
        h, w = decoded.shape[:2]
        if h > MAX_SIDE or w > MAX_SIDE:
            raise HTTPException(
                status_code=413,
                detail={"message": f"image {w}x{h} exceeds the {MAX_SIDE}px cap"},
            )
        session = Session(id=uuid.uuid4().hex, image=decoded)
        with state.registry_lock:
            state.sessions[session.id] = session
        return {"id": session.id, "width": w, "height": h}

    @app.get("/api/v1/sessions/{session_id}")
    def session_info(session_id: str):
        with _Held(state, session_id) as session:
            h, w = session.image.shape[:2]
            return {
                "id": session.id,
                "width": w,
                "height": h,
                "metric": session.metric_kind,
                "has_distance": session.dmap is not None,
                "evolution_k": None if session.evolution is None else session.evolution.k,
            }

    @app.delete("/api/v1/sessions/{session_id}")
    def delete_session(session_id: str):
        state.get(session_id)
        with state.registry_lock:
            state.sessions.pop(session_id, None)
        return {"ok": True}

    @app.put("/api/v1/sessions/{session_id}/metric")
    def put_metric(session_id: str, body: MetricBody):
        with _Held(state, session_id) as session:
            try:
                metric, psi = _build_metric(session, body.kind, body.params)
                pd_max = check_positive_definiteness(metric)
            except NotPositiveDefinite as exc:
                raise _bad(str(exc), {"node": list(exc.node), "value": exc.value})
            except ValueError as exc:
                raise _bad(str(exc))
            session.metric = metric
            session.metric_kind = body.kind
            session.psi = psi
            # stale results refer to the previous metric
            session.dmap = None
            return {"ok": True, "pd_max": pd_max}

    @app.post("/api/v1/sessions/{session_id}/distance")
    def post_distance(session_id: str, body: DistanceBody):
        with _Held(state, session_id) as session:
            if session.metric is None:
                raise HTTPException(
                    status_code=409, detail={"message": "configure a metric first"}
                )
            metric = session.metric
            lifted = isinstance(metric, LiftedMetric3)
            seed = _point(body.seed, "seed", lifted)
            stop = body.stop
            kwargs: dict[str, Any] = {}
            if stop.mode == "first_reached":
                if stop.target is None:
                    raise _bad("stop.target is required for first_reached")
                kwargs["targets"] = _point(stop.target, "stop.target", lifted)[None, :]
            elif stop.mode == "distance_cap":
                if stop.max_distance is None or stop.max_distance <= 0:
                    raise _bad("stop.max_distance must be positive")
                kwargs["max_distance"] = float(stop.max_distance)
            elif stop.mode != "none":
                raise _bad(f"unknown stop mode {stop.mode!r}")
            try:
                request = SolveRequest(seeds=seed[None, :], stop=stop.mode, **kwargs)
                dmap = solve_lifted(metric, request) if lifted else solve(metric, request)
            except SeedOutsideGrid as exc:
                raise _bad(str(exc))
            session.dmap = dmap
            finite = dmap.values[np.isfinite(dmap.values)]
            return {
                "lifted": lifted,
                "stats": {
                    "min": _json_value(finite.min()) if finite.size else None,
                    "max": _json_value(finite.max()) if finite.size else None,
                    "reached_fraction": float(finite.size / dmap.values.size),
                },
                "preview": _preview(dmap.values),
            }

    @app.get("/api/v1/sessions/{session_id}/distance/full")
    def get_distance_full(session_id: str):
        with _Held(state, session_id) as session:
            if session.dmap is None:
                raise HTTPException(
                    status_code=409, detail={"message": "no distance computed"}
                )
            field = ScalarField(session.dmap.grid, session.dmap.values)
            return Response(
                content=mio.field_bytes(field),
                media_type="application/octet-stream",
            )

    @app.post("/api/v1/sessions/{session_id}/path")
    def post_path(session_id: str, body: PathBody):
        with _Held(state, session_id) as session:
            if session.dmap is None:
                raise HTTPException(
                    status_code=409, detail={"message": "no distance computed"}
                )
            lifted = isinstance(session.metric, LiftedMetric3)
            target = _point(body.target, "target", lifted)
            try:
                path = backtrack(session.dmap, session.metric, target)
            except MinPathError as exc:
                raise _bad(str(exc))
            return {"points": _curve_json(path)["points"]}

    @app.post("/api/v1/sessions/{session_id}/tube-path")
    def post_tube_path(session_id: str, body: TubePathBody):
        with _Held(state, session_id) as session:
            metric = session.metric
            if metric is None or not isinstance(metric, LiftedMetric3):
                raise HTTPException(
                    status_code=409,
                    detail={"message": "configure a lifted (elastica family) metric first"},
                )
            if session.psi is None:
                raise HTTPException(
                    status_code=409,
                    detail={"message": "the active metric carries no orientation score"},
                )
            source = _point(body.source, "source", lifted=False)
            target = _point(body.target, "target", lifted=False)
            grid: LiftedGrid3 = metric.grid
            thetas = grid.thetas()

            def candidates(p: np.ndarray) -> list[float]:
                ix = int(round(p[0] / grid.spacing))
                iy = int(round(p[1] / grid.spacing))
                if not (0 <= ix < grid.width and 0 <= iy < grid.height):
                    raise _bad(f"point ({p[0]}, {p[1]}) is outside the grid")
                best = int(np.argmax(session.psi.values[:, iy, ix]))
                theta = float(thetas[best])
                return [theta, float((theta + np.pi) % (2.0 * np.pi))]

            src_lifts = [np.array([*source, th]) for th in candidates(source)]
            tgt_lifts = [np.array([*target, th]) for th in candidates(target)]

            pairs = []
            maps = []
            for s in src_lifts:
                request = SolveRequest(
                    seeds=s[None, :],
                    stop="first_reached",
                    targets=np.stack(tgt_lifts),
                )
                try:
                    dmap = solve_lifted(metric, request)
                except SeedOutsideGrid as exc:
                    raise _bad(str(exc))
                maps.append(dmap)
                for t in tgt_lifts:
                    pairs.append(
                        {
                            "source_theta": float(s[2]),
                            "target_theta": float(t[2]),
                            "distance": _json_value(_value_at(dmap, t)),
                        }
                    )
            usable = [
                (i, p["distance"]) for i, p in enumerate(pairs) if p["distance"] is not None
            ]
            if not usable:
                raise _bad("no orientation pair reached the target")
            best = min(usable, key=lambda item: (item[1], item[0]))[0]
            win_map = maps[best // len(tgt_lifts)]
            win_target = tgt_lifts[best % len(tgt_lifts)]
            try:
                path = backtrack(win_map, metric, win_target)
            except MinPathError as exc:
                raise _bad(str(exc))
            return {
                "pairs": pairs,
                "best": best,
                "points": _curve_json(path)["points"],
            }

    @app.post("/api/v1/sessions/{session_id}/evolution")
    def post_evolution(session_id: str, body: EvolutionBody):
        with _Held(state, session_id) as session:
            vertices = np.asarray(body.vertices, dtype=np.float64)
            if vertices.ndim != 2 or vertices.shape[1] != 2 or vertices.shape[0] < 3:
                raise _bad("vertices must be at least three [x, y] pairs")
            if body.kind not in ("chan_vese", "balloon_inflate", "balloon_deflate"):
                raise _bad(f"unknown evolution kind {body.kind!r}")
            gray = session.gray
            grid = Grid2(gray.shape[1], gray.shape[0])
            img = ScalarField(grid, gray)
            potential = None
            if body.beta != 0.0:
                g = gradient_magnitude(gray, _EVOLUTION_SIGMA)
                potential = edge_potential(g, "exp_gap", body.beta)
            try:
                evo = initial_state(
                    vertices,
                    img,
                    potential=potential,
                    tube_radius=body.r,
                    alpha_tilde=body.alpha,
                )
            except (ValueError, SelfIntersecting, DegenerateCurve, DegenerateRegion) as exc:
                raise _bad(str(exc))
            session.evolution = evo
            session.evolution_kind = body.kind
            return {
                "k": evo.k,
                "tube_radius": evo.tube_radius,
                "curve": _curve_json(evo.curve),
            }

    @app.post("/api/v1/sessions/{session_id}/evolution/step")
    def post_evolution_step(session_id: str):
        with _Held(state, session_id) as session:
            if session.evolution is None:
                raise HTTPException(
                    status_code=409, detail={"message": "start an evolution first"}
                )
            gray = session.gray
            img = ScalarField(Grid2(gray.shape[1], gray.shape[0]), gray)
            try:
                evo = evolve_step(session.evolution, img, session.evolution_kind)
            except SegmentTraceFailed as exc:
                raise _bad(str(exc), {"segment": exc.segment})
            except (MinPathError, ValueError) as exc:
                raise _bad(str(exc))
            session.evolution = evo
            record = evo.history[-1]
            return {
                "k": evo.k,
                "curve": _curve_json(evo.curve),
                "hausdorff_step": record["hausdorff"],
                "energy": record["energy"],
                "max_drift": record["max_drift"],
            }

    return app
