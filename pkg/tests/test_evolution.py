"""Tests for the hybrid region/edge curve evolution building blocks."""

import heapq

import numpy as np
import pytest

from minpath.errors import DegenerateRegion, SelfIntersecting
from minpath.evolution import (
    EvolutionState,
    chan_vese_means,
    divergence,
    evolve_step,
    hausdorff_distance,
    initial_state,
    region_gradient,
    remap_field,
    run_evolution,
    solve_divergence_field,
    tubular_neighborhood,
)
from minpath.grid import (
    Grid2,
    Polyline,
    ScalarField,
    VectorField2,
    rasterize_region,
)
from minpath.metrics import curve_length, evaluate, make_region_randers


def disk_image(grid, center, radius, inside=0.2, outside=0.8, noise=0.0, seed=0):
    xs, ys = np.meshgrid(np.arange(grid.width, dtype=float), np.arange(grid.height, dtype=float))
    vals = np.where(np.hypot(xs - center[0], ys - center[1]) <= radius, inside, outside)
    if noise > 0:
        vals = vals + np.random.default_rng(seed).normal(0.0, noise, size=vals.shape)
    return ScalarField(grid, vals)


def circle_vertices(center, radius, n, phase=0.5):
    t = phase + 2.0 * np.pi * np.arange(n) / n
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)


def circle_curve(center, radius, n=240):
    return Polyline(circle_vertices(center, radius, n, phase=0.0), closed=True)


def point_segment_distance(points, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    t = np.clip((points - a) @ d / (d @ d), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * d), axis=1)


def polyline_distance_oracle(curve, grid):
    """Exact per-node distance to a polyline by brute force over segments."""
    xs, ys = np.meshgrid(np.arange(grid.width, dtype=float), np.arange(grid.height, dtype=float))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    p = curve.points
    segs = list(zip(p[:-1], p[1:]))
    if curve.closed:
        segs.append((p[-1], p[0]))
    best = np.full(pts.shape[0], np.inf)
    for a, b in segs:
        best = np.minimum(best, point_segment_distance(pts, a, b))
    return best.reshape(grid.shape)


class TestMeans:
    def test_binary_image_exact_means(self):
        grid = Grid2(16, 16)
        vals = np.zeros(grid.shape)
        vals[4:9, 3:10] = 1.0
        mask = vals == 1.0
        assert chan_vese_means(ScalarField(grid, vals), mask) == (1.0, 0.0)

    def test_constant_image(self):
        grid = Grid2(12, 12)
        img = ScalarField(grid, np.full(grid.shape, 0.37))
        mu_in, mu_out = chan_vese_means(img, np.eye(12, dtype=bool))
        assert mu_in == pytest.approx(0.37)
        assert mu_out == pytest.approx(0.37)

    def test_half_disk_mask_matches_pixel_sum_oracle(self):
        grid = Grid2(64, 64)
        img = disk_image(grid, (32, 32), 20)
        xs, ys = np.meshgrid(np.arange(64.0), np.arange(64.0))
        in_disk = np.hypot(xs - 32, ys - 32) <= 20
        mask = in_disk & (xs < 32)
        mu_in, mu_out = chan_vese_means(img, mask)
        assert mu_in == pytest.approx(0.2, abs=1e-12)
        oracle = float(img.values[~mask].sum() / (~mask).sum())
        assert mu_out == pytest.approx(oracle, abs=1e-12)

    def test_degenerate_masks(self):
        grid = Grid2(8, 8)
        img = ScalarField(grid, np.ones(grid.shape))
        with pytest.raises(DegenerateRegion):
            chan_vese_means(img, np.zeros(grid.shape, dtype=bool))
        with pytest.raises(DegenerateRegion):
            chan_vese_means(img, np.ones(grid.shape, dtype=bool))


class TestRegionGradient:
    def test_matches_direct_formula(self):
        grid = Grid2(20, 20)
        rng = np.random.default_rng(3)
        img = ScalarField(grid, rng.uniform(0, 1, grid.shape))
        mask = rng.uniform(0, 1, grid.shape) > 0.5
        grad = region_gradient(img, mask)
        mu_in, mu_out = chan_vese_means(img, mask)
        want = (img.values - mu_in) ** 2 - (img.values - mu_out) ** 2
        np.testing.assert_allclose(grad.rho.values, want, atol=1e-12)
        assert grad.means == (mu_in, mu_out)

    def test_known_values(self):
        # means 4 (inside: pixels 3 and 5) and 0 (outside); at the I=5 pixel
        # the pull is (5-4)^2 - (5-0)^2 = -24
        grid = Grid2(4, 2)
        vals = np.array([[3.0, 5.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
        mask = np.zeros(grid.shape, dtype=bool)
        mask[0, 0] = mask[0, 1] = True
        grad = region_gradient(ScalarField(grid, vals), mask)
        assert grad.rho.values[0, 1] == pytest.approx(-24.0)
        # a pixel at the midpoint gray 2 is equidistant from both means
        assert (2.0 - 4.0) ** 2 - (2.0 - 0.0) ** 2 == pytest.approx(0.0)

    def test_sign_convention(self):
        grid = Grid2(16, 16)
        img = disk_image(grid, (8, 8), 5)
        xs, ys = np.meshgrid(np.arange(16.0), np.arange(16.0))
        mask = np.hypot(xs - 8, ys - 8) <= 3.0
        grad = region_gradient(img, mask)
        # dark pixels (match mu_in) want in, bright pixels want out
        assert grad.rho.values[8, 8] < 0
        assert grad.rho.values[0, 0] > 0

    def test_balloon_kinds(self):
        grid = Grid2(8, 8)
        img = ScalarField(grid, np.ones(grid.shape))
        mask = np.zeros(grid.shape, dtype=bool)
        mask[2:5, 2:5] = True
        assert np.all(region_gradient(img, mask, "balloon_inflate").rho.values == -1.0)
        assert np.all(region_gradient(img, mask, "balloon_deflate").rho.values == 1.0)
        with pytest.raises(ValueError):
            region_gradient(img, mask, "antigravity")


class TestTube:
    def test_stadium_band_matches_brute_force(self):
        grid = Grid2(48, 40)
        seg = Polyline(np.array([[10.0, 20.0], [30.0, 20.0]]))
        mask = tubular_neighborhood(seg, 3.0, grid)
        exact = polyline_distance_oracle(seg, grid)
        # agree wherever the exact distance is clear of the threshold
        decisive = np.abs(exact - 3.0) > 0.15
        np.testing.assert_array_equal(mask[decisive], exact[decisive] < 3.0)

    def test_thin_band_is_an_annulus(self):
        grid = Grid2(64, 64)
        ring = circle_curve((32, 32), 20)
        mask = tubular_neighborhood(ring, 3.0, grid)
        assert not mask[32, 32]
        assert not mask[22, 32] and not mask[42, 32]
        assert mask[32, 52] and mask[32, 12]
        exact = polyline_distance_oracle(ring, grid)
        decisive = np.abs(exact - 3.0) > 0.15
        np.testing.assert_array_equal(mask[decisive], exact[decisive] < 3.0)

    def test_curve_nodes_are_inside(self):
        grid = Grid2(40, 40)
        curve = Polyline(np.array([[5.2, 6.7], [30.4, 8.1], [20.0, 30.5]]), closed=True)
        mask = tubular_neighborhood(curve, 2.0, grid)
        for x, y in curve.points:
            assert mask[int(round(y)), int(round(x))]

    def test_radius_validation(self):
        grid = Grid2(16, 16)
        seg = Polyline(np.array([[2.0, 2.0], [10.0, 10.0]]))
        with pytest.raises(ValueError):
            tubular_neighborhood(seg, 1.0, grid)


class TestDivergenceSolve:
    @staticmethod
    def interior(mask):
        # the identity div(grad u) = rho needs central differences at the
        # node and its 4 neighbors, so stay 2 cells clear of the grid edge
        ok = mask.copy()
        ok[:2, :] = ok[-2:, :] = False
        ok[:, :2] = ok[:, -2:] = False
        ok[1:, :] &= mask[:-1, :]
        ok[:-1, :] &= mask[1:, :]
        ok[:, 1:] &= mask[:, :-1]
        ok[:, :-1] &= mask[:, 1:]
        return ok

    def test_zero_source_gives_zero_field(self):
        grid = Grid2(32, 32)
        mask = np.zeros(grid.shape, dtype=bool)
        mask[8:24, 8:24] = True
        theta = solve_divergence_field(ScalarField(grid, np.zeros(grid.shape)), mask)
        assert np.all(theta.values == 0.0)

    def test_divergence_matches_source_on_random_domains(self):
        rng = np.random.default_rng(11)
        for trial in range(3):
            grid = Grid2(64, 64)
            xs, ys = np.meshgrid(np.arange(64.0), np.arange(64.0))
            mask = np.zeros(grid.shape, dtype=bool)
            for _ in range(3):
                cx, cy = rng.uniform(14, 50, 2)
                rr = rng.uniform(8, 16)
                mask |= np.hypot(xs - cx, ys - cy) < rr
            rho = np.sin(xs / rng.uniform(4, 9)) * np.cos(ys / rng.uniform(4, 9))
            theta = solve_divergence_field(ScalarField(grid, rho), mask)
            div = divergence(theta)
            inner = self.interior(mask)
            gap = np.abs(div[inner] - rho[inner])
            assert float(gap.max()) <= 1e-6 * float(np.abs(rho).max())
            assert np.all(theta.values[~mask] == 0.0)

    def test_radial_disk_matches_analytic_solution(self):
        # constant source c on a disk: the potential is c(r^2 - R^2)/4, so
        # the field is radial with magnitude c r / 2
        grid = Grid2(101, 101)
        xs, ys = np.meshgrid(np.arange(101.0), np.arange(101.0))
        r = np.hypot(xs - 50, ys - 50)
        mask = r <= 40.0
        theta = solve_divergence_field(ScalarField(grid, np.ones(grid.shape)), mask)
        norm = np.linalg.norm(theta.values, axis=-1)
        band = (r >= 5.0) & (r <= 15.0)
        rel = np.abs(norm[band] - r[band] / 2.0) / (r[band] / 2.0)
        assert float(rel.max()) <= 0.02
        # direction is radial
        rad = np.stack([(xs - 50) / np.maximum(r, 1e-9), (ys - 50) / np.maximum(r, 1e-9)], axis=-1)
        cos = np.sum(theta.values * rad, axis=-1) / np.maximum(norm, 1e-12)
        assert float(cos[band].min()) >= 0.99


class TestRemap:
    def test_zero_stays_zero(self):
        grid = Grid2(8, 8)
        out = remap_field(VectorField2(grid, np.zeros(grid.shape + (2,))), 2.0)
        assert np.all(out.values == 0.0)

    def test_unit_argument_value(self):
        grid = Grid2(8, 8)
        vals = np.zeros(grid.shape + (2,))
        vals[..., 0] = 2.0
        out = remap_field(VectorField2(grid, vals), 0.5)
        assert np.allclose(np.linalg.norm(out.values, axis=-1), 1.0 - np.exp(-1.0))

    def test_strict_unit_bound_and_direction(self):
        grid = Grid2(16, 16)
        rng = np.random.default_rng(4)
        vals = rng.normal(0, 50.0, grid.shape + (2,))
        out = remap_field(VectorField2(grid, vals), 3.0)
        norms = np.linalg.norm(out.values, axis=-1)
        assert float(norms.max()) < 1.0
        dots = np.sum(out.values * vals, axis=-1)
        assert np.all(dots >= 0.0)

    def test_monotone_in_magnitude(self):
        grid = Grid2(4, 4)
        sizes = np.linspace(0.1, 5.0, 16).reshape(4, 4)
        vals = np.zeros(grid.shape + (2,))
        vals[..., 1] = sizes
        out = np.linalg.norm(remap_field(VectorField2(grid, vals), 1.0).values, axis=-1)
        order = np.argsort(sizes.ravel())
        assert np.all(np.diff(out.ravel()[order]) > 0.0)

    def test_gain_validation(self):
        grid = Grid2(4, 4)
        with pytest.raises(ValueError):
            remap_field(VectorField2(grid, np.zeros(grid.shape + (2,))), 0.0)


class TestFluxIdentity:
    def test_closed_curve_flux_equals_enclosed_divergence(self):
        # with the drift set to the quarter-turn of a bounded field, the
        # asymmetric part of the closed-curve length is the enclosed
        # divergence; checked against the analytic value for a linear field
        grid = Grid2(64, 64)
        xs, ys = np.meshgrid(np.arange(64.0), np.arange(64.0))
        beta = 0.02
        vals = np.zeros(grid.shape + (2,))
        vals[..., 0] = beta * (xs - 32.0)
        vals[..., 1] = beta * (ys - 32.0)
        varpi = VectorField2(grid, vals)
        pot = ScalarField(grid, np.ones(grid.shape))
        metric = make_region_randers(pot, varpi)
        ring = circle_curve((32, 32), 18.0, n=360)
        total = curve_length(metric, ring)
        flux = total - ring.length()
        analytic = 2.0 * beta * np.pi * 18.0**2
        assert flux == pytest.approx(analytic, rel=0.02)
        mask = rasterize_region(ring, grid)
        div = divergence(varpi)
        area_integral = float(np.nansum(np.where(mask, div, 0.0)))
        assert flux == pytest.approx(area_integral, rel=0.03)
        assert flux > 0


class TestEvolveStep:
    def test_zero_force_straightens_to_chords(self):
        # constant image means rho = 0, so the metric is Euclidean and each
        # segment must come back as the straight chord between its vertices
        grid = Grid2(64, 64)
        img = ScalarField(grid, np.full(grid.shape, 0.5))
        vertices = np.array([[16.0, 16.0], [48.0, 16.0], [32.0, 48.0]])
        bumps = []
        for i in range(3):
            a = vertices[i]
            b = vertices[(i + 1) % 3]
            mid = 0.5 * (a + b)
            out = mid - np.array([32.0, 27.0])
            bumps.extend([a, mid + 4.0 * out / np.linalg.norm(out)])
        start = EvolutionState(
            vertices=vertices,
            curve=Polyline(np.array(bumps), closed=True),
            k=1,
            tube_radius=8.0,
            alpha_tilde=None,
            potential=ScalarField(grid, np.ones(grid.shape)),
        )
        new = evolve_step(start, img)
        for i in range(3):
            a = vertices[i]
            b = vertices[(i + 1) % 3]
            pts = new.curve.points
            close = point_segment_distance(pts, a, b)
            # every chord is realized: some stretch of the new curve hugs it
            assert np.all(np.min(close) <= 0.5)
        assert np.array_equal(new.vertices, vertices)
        assert new.k == 2

    def test_step_moves_toward_disk_boundary(self):
        grid = Grid2(96, 96)
        center = (48.0, 48.0)
        img = disk_image(grid, center, 28.0)
        vertices = circle_vertices(center, 28.0, 3)
        state = initial_state(vertices, img, tube_radius=12.0)
        truth = circle_curve(center, 28.0)
        before = hausdorff_distance(state.curve, truth)
        new = evolve_step(state, img)
        after = hausdorff_distance(new.curve, truth)
        assert after < before
        # the new curve stays inside the previous curve's tube
        old_dist = polyline_distance_oracle(state.curve, grid)
        for x, y in new.curve.points:
            assert old_dist[int(round(y)), int(round(x))] < 12.0 + 0.71
        # the per-step surrogate objective did not get worse
        rec = new.history[-1]
        assert rec["surrogate_new"] <= rec["surrogate_old"] + 1e-6
        assert rec["max_drift"] < 1.0

    def test_self_intersecting_initial_polygon_rejected(self):
        grid = Grid2(32, 32)
        img = ScalarField(grid, np.ones(grid.shape))
        bowtie = np.array([[5.0, 5.0], [25.0, 25.0], [25.0, 5.0], [5.0, 25.0]])
        with pytest.raises(SelfIntersecting):
            initial_state(bowtie, img)

    def test_state_validation(self):
        grid = Grid2(32, 32)
        img = ScalarField(grid, np.ones(grid.shape))
        with pytest.raises(ValueError):
            initial_state(np.array([[4.0, 4.0], [20.0, 4.0]]), img)
        tri = np.array([[4.0, 4.0], [20.0, 4.0], [12.0, 20.0]])
        with pytest.raises(ValueError):
            initial_state(tri, img, tube_radius=1.0)
        # curve must pass near every vertex
        with pytest.raises(ValueError):
            EvolutionState(
                vertices=np.array([[4.0, 4.0], [20.0, 4.0], [30.0, 28.0]]),
                curve=Polyline(tri, closed=True),
                k=1,
                tube_radius=8.0,
                alpha_tilde=None,
                potential=ScalarField(grid, np.ones(grid.shape)),
            )


class TestRunEvolution:
    def test_disk_converges_to_truth(self):
        grid = Grid2(96, 96)
        center = (48.0, 48.0)
        img = disk_image(grid, center, 28.0)
        vertices = circle_vertices(center, 28.0, 3)
        final = run_evolution(vertices, img, tube_radius=12.0, max_iters=30)
        truth = circle_curve(center, 28.0)
        assert hausdorff_distance(final.curve, truth) <= 2.0
        assert final.history[-1]["hausdorff"] < 0.5
        assert len(final.history) <= 30
        for rec in final.history:
            assert rec["max_drift"] < 1.0

    def test_boundary_initialization_converges_fast(self):
        grid = Grid2(96, 96)
        center = (48.0, 48.0)
        img = disk_image(grid, center, 28.0)
        vertices = circle_vertices(center, 28.0, 12)
        final = run_evolution(vertices, img, tube_radius=8.0, max_iters=10)
        assert len(final.history) <= 3
        truth = circle_curve(center, 28.0)
        assert hausdorff_distance(final.curve, truth) <= 1.5

    def test_balloon_inflates_on_uniform_image(self):
        grid = Grid2(64, 64)
        img = ScalarField(grid, np.full(grid.shape, 0.5))
        vertices = circle_vertices((32.0, 32.0), 8.0, 3)
        state = initial_state(vertices, img, tube_radius=6.0)
        areas = [_polygon_area(state.curve)]
        for _ in range(2):
            state = evolve_step(state, img, kind="balloon_inflate")
            areas.append(_polygon_area(state.curve))
        assert areas[1] > areas[0]
        assert areas[2] > areas[1]


def _polygon_area(curve):
    pts = curve.points
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


class TestSegmentOptimality:
    def test_masked_randers_solve_matches_dijkstra_oracle(self):
        # the building blocks of one evolution segment: a region-force
        # Randers metric on a Voronoi cell of the tube, solved seed->target,
        # must match a dense-graph Dijkstra oracle on the same mask
        grid = Grid2(72, 72)
        center = (36.0, 36.0)
        img = disk_image(grid, center, 20.0)
        vertices = circle_vertices(center, 20.0, 3)
        state = initial_state(vertices, img, tube_radius=10.0)
        mask = rasterize_region(state.curve, grid)
        grad = region_gradient(img, mask)
        tube = tubular_neighborhood(state.curve, 10.0, grid)
        theta = solve_divergence_field(grad.rho, tube)
        norms = np.linalg.norm(theta.values[tube], axis=-1)
        gain = 1.0 / float(np.median(norms[norms > 1e-12]))
        varpi = remap_field(theta, gain)
        metric = make_region_randers(ScalarField(grid, np.ones(grid.shape)), varpi)

        from minpath.eikonal import SolveRequest, solve
        from minpath.tracing import backtrack

        qa = vertices[0]
        qb = vertices[1]
        domain = tube.copy()
        request = SolveRequest(seeds=qa[None, :], stop="first_reached", targets=qb[None, :], domain=domain)
        dmap = solve(metric, request)
        iy, ix = int(round(qb[1])), int(round(qb[0]))
        got = float(dmap.values[iy, ix])
        # in this near-degenerate drift regime (1 - |omega| ~ 2e-2 at the
        # wall) a graph oracle converges to the continuum from above as its
        # angular resolution grows: radius 2/3/4 neighborhoods give
        # 8.78/8.67/8.50 here while the solver reads 8.11 from below; the
        # 48-direction oracle is the first one inside the 5% band
        oracle = _masked_dijkstra(metric, domain, qa, qb, radius=4)
        assert got == pytest.approx(oracle, rel=0.05)
        assert got <= _masked_dijkstra(metric, domain, qa, qb, radius=2) + 1e-9
        # the traced polyline rendering carries an extra descent defect in
        # the same regime (finite descent steps across a ~200:1 anisotropic
        # ball); it stays within a documented looser band of the optimum
        path = backtrack(dmap, metric, qb)
        rendered = curve_length(metric, path)
        assert rendered >= got - 1e-6
        assert rendered <= got * 1.30


def _masked_dijkstra(metric, domain, start, goal, radius=2):
    """Reference shortest path on a coprime-offset graph restricted to a mask.

    ``radius`` bounds the Chebyshev length of the offsets: 2 gives the
    classic 16-neighbor graph, 4 gives 48 directions.
    """
    h, w = metric.grid.shape
    offsets = [
        (dx, dy)
        for dx in range(-radius, radius + 1)
        for dy in range(-radius, radius + 1)
        if (dx, dy) != (0, 0) and np.gcd(dx, dy) == 1
    ]
    si = (int(round(start[1])), int(round(start[0])))
    gi = (int(round(goal[1])), int(round(goal[0])))
    dist = {si: 0.0}
    heap = [(0.0, si)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist.get(node, np.inf):
            continue
        if node == gi:
            return d
        iy, ix = node
        for dx, dy in offsets:
            ny, nx = iy + dy, ix + dx
            if not (0 <= ny < h and 0 <= nx < w) or not domain[ny, nx]:
                continue
            mid = np.array([(ix + nx) / 2.0, (iy + ny) / 2.0])
            step = np.array([float(dx), float(dy)])
            nd = d + float(evaluate(metric, mid, step))
            if nd < dist.get((ny, nx), np.inf):
                dist[(ny, nx)] = nd
                heapq.heappush(heap, (nd, (ny, nx)))
    return np.inf
