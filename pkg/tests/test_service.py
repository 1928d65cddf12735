"""HTTP service: sessions, metrics, distance/path, evolution, tube paths."""

import io as stdio

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from minpath.service import create_app


def png_bytes(arr: np.ndarray) -> bytes:
    buf = stdio.BytesIO()
    Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8), mode="L").save(
        buf, format="PNG"
    )
    return buf.getvalue()


def disk_array(n=64, radius=18, inside=0.2, outside=0.8):
    ys, xs = np.mgrid[0:n, 0:n]
    return np.where(np.hypot(xs - n / 2, ys - n / 2) <= radius, inside, outside)


def bar_array(w=64, h=48, y=24, half=2, dark=0.15, bright=0.85):
    ys = np.arange(h)[:, None]
    return np.where(np.abs(ys - y) <= half, dark, bright) * np.ones((h, w))


@pytest.fixture()
def client():
    app = create_app()
    with TestClient(app) as c:
        yield c


def upload(client, arr) -> str:
    resp = client.post(
        "/api/v1/sessions", files={"image": ("img.png", png_bytes(arr), "image/png")}
    )
    assert resp.status_code == 200, resp.text
    return resp.json()["id"]


class TestSessions:
    def test_create_reports_dimensions(self, client):
        resp = client.post(
            "/api/v1/sessions",
            files={"image": ("d.png", png_bytes(disk_array(48)), "image/png")},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["width"] == 48 and body["height"] == 48
        assert isinstance(body["id"], str) and body["id"]

    def test_ids_are_unique(self, client):
        a = upload(client, disk_array(16))
        b = upload(client, disk_array(16))
        assert a != b

    def test_unsupported_format_415(self, client):
        resp = client.post(
            "/api/v1/sessions", files={"image": ("x.txt", b"hello", "text/plain")}
        )
        assert resp.status_code == 415

    def test_truncated_image_415(self, client):
        data = png_bytes(disk_array(32))[:40]
        resp = client.post(
            "/api/v1/sessions", files={"image": ("x.png", data, "image/png")}
        )
        assert resp.status_code == 415

    def test_oversize_image_413(self, client):
        data = b"P5 600 4 255\n" + bytes(600 * 4)
        resp = client.post(
            "/api/v1/sessions", files={"image": ("x.pgm", data, "image/x-pgm")}
        )
        assert resp.status_code == 413

    def test_unknown_session_404(self, client):
        resp = client.put(
            "/api/v1/sessions/ghost/metric", json={"kind": "iso", "params": {}}
        )
        assert resp.status_code == 404

    def test_info_and_delete(self, client):
        sid = upload(client, disk_array(32))
        info = client.get(f"/api/v1/sessions/{sid}").json()
        assert info["metric"] is None and info["has_distance"] is False
        assert client.delete(f"/api/v1/sessions/{sid}").json() == {"ok": True}
        assert client.get(f"/api/v1/sessions/{sid}").status_code == 404

    def test_cors_header_present(self, client):
        resp = client.options(
            "/api/v1/sessions",
            headers={
                "Origin": "http://example.test",
                "Access-Control-Request-Method": "POST",
            },
        )
        assert resp.headers.get("access-control-allow-origin") == "*"


class TestMetric:
    def test_stiffness_bound_for_lifted_metric(self, client):
        sid = upload(client, disk_array())
        resp = client.put(
            f"/api/v1/sessions/{sid}/metric",
            json={"kind": "elastica", "params": {"lambda": 100, "n_theta": 24}},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["ok"] is True
        # the asymmetry bound of the lifted metric is exactly (1 - 1/lambda)^2
        assert body["pd_max"] == pytest.approx(0.9801, abs=1e-12)

    def test_unknown_kind_422(self, client):
        sid = upload(client, disk_array())
        resp = client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "warp"})
        assert resp.status_code == 422

    def test_unknown_parameter_422(self, client):
        sid = upload(client, disk_array())
        resp = client.put(
            f"/api/v1/sessions/{sid}/metric",
            json={"kind": "iso", "params": {"gamma": 3}},
        )
        assert resp.status_code == 422

    def test_ntheta_cap_413(self, client):
        sid = upload(client, disk_array())
        resp = client.put(
            f"/api/v1/sessions/{sid}/metric",
            json={"kind": "elastica", "params": {"n_theta": 128}},
        )
        assert resp.status_code == 413


class TestDistanceAndPath:
    def test_distance_requires_metric(self, client):
        sid = upload(client, disk_array())
        resp = client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [5, 5]})
        assert resp.status_code == 409

    def test_path_requires_distance(self, client):
        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        resp = client.post(f"/api/v1/sessions/{sid}/path", json={"target": [5, 5]})
        assert resp.status_code == 409

    def test_distance_stats_and_preview(self, client):
        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        resp = client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [32, 32]})
        assert resp.status_code == 200
        body = resp.json()
        assert body["lifted"] is False
        assert body["stats"]["min"] == pytest.approx(0.0, abs=1e-9)
        assert body["stats"]["reached_fraction"] == 1.0
        pv = body["preview"]
        assert pv["width"] == 64 and pv["height"] == 64 and pv["cell"] == 1
        assert pv["values"][32][32] == pytest.approx(0.0, abs=1e-9)

    def test_early_stop_preview_has_nulls(self, client):
        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        resp = client.post(
            f"/api/v1/sessions/{sid}/distance",
            json={
                "seed": [10, 10],
                "stop": {"mode": "first_reached", "target": [14, 10]},
            },
        )
        body = resp.json()
        assert body["stats"]["reached_fraction"] < 1.0
        flat = [v for row in body["preview"]["values"] for v in row]
        assert any(v is None for v in flat)

    def test_preview_pools_large_grids(self, client):
        sid = upload(client, np.full((300, 300), 0.5))
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        resp = client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [150, 150]})
        pv = resp.json()["preview"]
        assert pv["cell"] == 2
        assert pv["width"] == 150 and pv["height"] == 150

    def test_path_reaches_both_endpoints(self, client):
        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [12, 32]})
        resp = client.post(f"/api/v1/sessions/{sid}/path", json={"target": [52, 32]})
        assert resp.status_code == 200
        pts = np.asarray(resp.json()["points"])
        assert np.allclose(pts[0], [12, 32], atol=1e-6)
        assert np.allclose(pts[-1], [52, 32], atol=1e-6)

    def test_path_is_deterministic(self, client):
        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso", "params": {"beta": 2}})
        client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [10, 12]})
        a = client.post(f"/api/v1/sessions/{sid}/path", json={"target": [50, 40]}).json()
        b = client.post(f"/api/v1/sessions/{sid}/path", json={"target": [50, 40]}).json()
        assert a == b

    def test_new_metric_invalidates_distance(self, client):
        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [10, 10]})
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso", "params": {"beta": 3}})
        resp = client.post(f"/api/v1/sessions/{sid}/path", json={"target": [20, 20]})
        assert resp.status_code == 409

    def test_full_distance_field_roundtrip(self, client, tmp_path):
        from minpath import io as mio

        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        post = client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [32, 32]})
        resp = client.get(f"/api/v1/sessions/{sid}/distance/full")
        assert resp.status_code == 200
        f = tmp_path / "d.f32"
        f.write_bytes(resp.content)
        field = mio.load_field(f)
        assert field.values.shape == (64, 64)
        assert field.values[32, 32] == pytest.approx(0.0, abs=1e-9)
        assert post.json()["stats"]["max"] == pytest.approx(
            float(field.values.max()), rel=1e-6
        )

    def test_seed_outside_grid_422(self, client):
        sid = upload(client, disk_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        resp = client.post(f"/api/v1/sessions/{sid}/distance", json={"seed": [500, 5]})
        assert resp.status_code == 422

    def test_sessions_are_isolated(self, client):
        a = upload(client, np.full((48, 48), 0.5))
        b = upload(client, disk_array(48, radius=14))
        client.put(f"/api/v1/sessions/{a}/metric", json={"kind": "iso"})
        before = client.post(
            f"/api/v1/sessions/{a}/distance", json={"seed": [24, 24]}
        ).json()
        # hammer session b with different settings
        client.put(f"/api/v1/sessions/{b}/metric", json={"kind": "iso", "params": {"beta": 4}})
        client.post(f"/api/v1/sessions/{b}/distance", json={"seed": [5, 5]})
        client.post(f"/api/v1/sessions/{b}/path", json={"target": [40, 40]})
        after = client.post(
            f"/api/v1/sessions/{a}/distance", json={"seed": [24, 24]}
        ).json()
        assert before == after


class TestEvolution:
    def test_flow_converges_on_disk(self, client):
        sid = upload(client, disk_array(72, radius=20))
        angles = 0.5 + 2 * np.pi * np.arange(3) / 3
        verts = [[36 + 20 * float(np.cos(a)), 36 + 20 * float(np.sin(a))] for a in angles]
        resp = client.post(
            f"/api/v1/sessions/{sid}/evolution", json={"vertices": verts, "r": 10}
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["k"] == 1 and body["curve"]["closed"] is True

        gaps = []
        for _ in range(8):
            step = client.post(f"/api/v1/sessions/{sid}/evolution/step")
            assert step.status_code == 200, step.text
            data = step.json()
            gaps.append(data["hausdorff_step"])
            if data["hausdorff_step"] < 0.5:
                break
        assert gaps[-1] < 0.5, f"did not settle: {gaps}"
        pts = np.asarray(data["curve"]["points"])
        dist = np.abs(np.hypot(pts[:, 0] - 36, pts[:, 1] - 36) - 20.0)
        assert float(dist.max()) < 3.0

    def test_bad_vertices_422(self, client):
        sid = upload(client, disk_array())
        resp = client.post(
            f"/api/v1/sessions/{sid}/evolution", json={"vertices": [[1, 1], [2, 2]]}
        )
        assert resp.status_code == 422

    def test_step_requires_start(self, client):
        sid = upload(client, disk_array())
        resp = client.post(f"/api/v1/sessions/{sid}/evolution/step")
        assert resp.status_code == 409


class TestTubePath:
    def test_requires_lifted_metric(self, client):
        sid = upload(client, bar_array())
        client.put(f"/api/v1/sessions/{sid}/metric", json={"kind": "iso"})
        resp = client.post(
            f"/api/v1/sessions/{sid}/tube-path",
            json={"source": [8, 24], "target": [56, 24]},
        )
        assert resp.status_code == 409

    def test_four_pairs_and_best_path(self, client):
        sid = upload(client, bar_array())
        resp = client.put(
            f"/api/v1/sessions/{sid}/metric",
            json={
                "kind": "elastica-tube",
                "params": {"sigma": 1.5, "radii": [1.5, 2.5], "n_theta": 24, "lambda": 10, "alpha": 2},
            },
        )
        assert resp.status_code == 200, resp.text
        resp = client.post(
            f"/api/v1/sessions/{sid}/tube-path",
            json={"source": [8, 24], "target": [56, 24]},
        )
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert len(body["pairs"]) == 4
        dists = [p["distance"] for p in body["pairs"]]
        finite = [d for d in dists if d is not None]
        assert finite, "at least one orientation pair must connect"
        assert dists[body["best"]] == min(finite)
        pts = np.asarray(body["points"])
        assert pts.shape[1] == 3
        assert np.allclose(pts[0, :2], [8, 24], atol=1e-6)
        assert np.allclose(pts[-1, :2], [56, 24], atol=1e-6)
        # the traced tube path stays on the dark bar
        assert float(np.abs(pts[:, 1] - 24).max()) <= 2.5

    def test_pair_orientations_differ_by_pi(self, client):
        sid = upload(client, bar_array())
        client.put(
            f"/api/v1/sessions/{sid}/metric",
            json={
                "kind": "elastica-tube",
                "params": {"sigma": 1.5, "radii": [1.5, 2.5], "n_theta": 24, "lambda": 10},
            },
        )
        body = client.post(
            f"/api/v1/sessions/{sid}/tube-path",
            json={"source": [8, 24], "target": [56, 24]},
        ).json()
        src = sorted({p["source_theta"] for p in body["pairs"]})
        tgt = sorted({p["target_theta"] for p in body["pairs"]})
        assert len(src) == 2 and len(tgt) == 2
        assert src[1] - src[0] == pytest.approx(np.pi, abs=1e-9)
        assert tgt[1] - tgt[0] == pytest.approx(np.pi, abs=1e-9)


class TestConcurrency:
    def test_busy_session_423(self):
        app = create_app(lock_timeout=0.05)
        with TestClient(app) as client:
            sid = upload(client, disk_array(32))
            session = app.state.service.sessions[sid]
            assert session.lock.acquire()
            try:
                resp = client.get(f"/api/v1/sessions/{sid}")
                assert resp.status_code == 423
            finally:
                session.lock.release()
            assert client.get(f"/api/v1/sessions/{sid}").status_code == 200
