#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Full-scale acceptance tests.

These are slow and only run with PENETRATION_DEPTH_ACCEPTANCE=1. The scanned
model used next to the subdivided icosphere is read from
PENETRATION_DEPTH_SCANNED_MESH when that variable points to a closed mesh.
"""

import contextlib
import io
import os
import tempfile
import unittest

import numba
import numpy as np
from scipy.optimize import minimize

from penetration_depth.accel import (
    Ray,
    TraversalStats,
    build_bvh,
    closest_hit,
    count_hits,
    set_threads,
)
from penetration_depth.benchmark import BenchmarkHarness
from penetration_depth.cli import main
from penetration_depth.hdist import HdistConfig, Sphere, VertexUniform, point_distances
from penetration_depth.mesh import (
    SceneConfig,
    make_box,
    make_icosphere,
    make_overlap_scene,
    make_tetrahedron,
    subdivide,
)
from penetration_depth.oracle import (
    Verdict,
    brute_pip,
    nearest_distances,
    point_surface_distances,
    point_triangle_distances,
)
from penetration_depth.pip import pip_two_way
from penetration_depth.psurf import build_penetration_surface
from penetration_depth.tests.test_accel import linear_closest, linear_count, random_rays
from penetration_depth.tests.test_hdist import sphere_pair, surfaces
from penetration_depth.tests.test_pip import near_surface_points
from penetration_depth.tests.test_psurf import point_set_from_flags, reference_surface

ENABLED = os.environ.get("PENETRATION_DEPTH_ACCEPTANCE") == "1"
SCANNED_MESH = os.environ.get("PENETRATION_DEPTH_SCANNED_MESH")

LARGE_SPHERE = "builtin:icosphere:6"
SEEDS = tuple(range(10))


def minimize_triangle_distance(point, triangle):
    """Distance to a triangle by numerical minimization over barycentric coordinates."""
    a, b, c = triangle

    def objective(uv):
        gap = a + uv[0] * (b - a) + uv[1] * (c - a) - point
        return gap @ gap

    result = minimize(
        objective,
        x0=np.array([1.0 / 3.0, 1.0 / 3.0]),
        method="SLSQP",
        bounds=[(0.0, 1.0), (0.0, 1.0)],
        constraints=[{"type": "ineq", "fun": lambda uv: 1.0 - uv[0] - uv[1]}],
        options={"ftol": 1e-16, "maxiter": 200},
    )
    return float(np.sqrt(max(result.fun, 0.0)))


@unittest.skipUnless(ENABLED, "set PENETRATION_DEPTH_ACCEPTANCE=1 to run")
class TestPipAgreement(unittest.TestCase):
    """Test case for ray-traced and brute-force inside tests agreeing."""

    def check_agreement(self, mesh, lo, hi, count):
        bvh = build_bvh(mesh)
        tris = mesh.triangle_positions()
        points = np.random.default_rng(0).uniform(lo, hi, (count, 3))
        checked = disagreements = 0
        for point in points:
            verdict = brute_pip(mesh, point).inside
            if verdict is Verdict.ON_SURFACE:
                continue
            checked += 1
            if (verdict is Verdict.INSIDE) != pip_two_way(bvh, point)[0]:
                disagreements += 1
                self.assertLess(point_triangle_distances(point, tris).min(), 1e-6, point)
        self.assertLessEqual(disagreements, checked * 1e-4)

    def test_icospheres(self):
        """Test icospheres of subdivision 3 to 5."""
        for k in (3, 4, 5):
            self.check_agreement(make_icosphere(k), -1.1, 1.1, 25000)

    def test_two_cube_scene(self):
        """Test both cubes of the half-overlapping cube scene."""
        cube_a, cube_b = make_overlap_scene(make_box(), 0.5)
        for cube in (cube_a, cube_b):
            self.check_agreement(cube, (-0.1, -0.1, -0.1), (1.6, 1.1, 1.1), 12500)

    def test_near_surface_points(self):
        """Test 10k points jittered within 1e-7 of an icosphere surface."""
        mesh = make_icosphere(3)
        bvh = build_bvh(mesh)
        for point in near_surface_points(mesh, 10000, 1e-7, seed=1):
            verdict = brute_pip(mesh, point).inside
            if verdict is not Verdict.ON_SURFACE:
                self.assertEqual(pip_two_way(bvh, point)[0], verdict is Verdict.INSIDE, point)


@unittest.skipUnless(ENABLED, "set PENETRATION_DEPTH_ACCEPTANCE=1 to run")
class TestSurfaceEquivalence(unittest.TestCase):
    """Test case for surface generation against the dictionary-based construction."""

    def test_random_flags(self):
        """Test 100 random flag vectors on each of three meshes."""
        boxes = subdivide(subdivide(make_box()))
        meshes = [make_icosphere(3), boxes, subdivide(make_tetrahedron())]
        rng = np.random.default_rng(1)
        for mesh in meshes:
            for _ in range(100):
                flags = rng.random(mesh.vertex_count) < rng.uniform(0.0, 0.5)
                surface = build_penetration_surface(mesh, point_set_from_flags(mesh, flags))
                vertices, triangles = reference_surface(mesh, flags)
                self.assertEqual(
                    set(surface.source_triangle_ids.tolist()),
                    {i for i, t in enumerate(mesh.triangles) if flags[t].any()},
                )
                np.testing.assert_array_equal(surface.vertices, vertices)
                np.testing.assert_array_equal(surface.triangles, triangles)


@unittest.skipUnless(ENABLED, "set PENETRATION_DEPTH_ACCEPTANCE=1 to run")
class TestDistanceOracles(unittest.TestCase):
    """Test case for distances against independent references."""

    def test_point_triangle_against_minimizer(self):
        """Test the closed-form distance against numerical minimization."""
        rng = np.random.default_rng(2)
        for _ in range(100000):
            triangle = rng.standard_normal((3, 3))
            point = rng.standard_normal(3) * 2.0
            exact = point_triangle_distances(point, triangle[None])[0]
            self.assertAlmostEqual(exact, minimize_triangle_distance(point, triangle), delta=1e-7)

    def test_full_rate_bracket(self):
        """Test the bracket for every source point of the sphere pair."""
        surface_a, surface_b = surfaces(*sphere_pair(4))
        config = HdistConfig(strategy=VertexUniform(1.0), dpip_filter=False)
        for sources, target in ((surface_a, surface_b), (surface_b, surface_a)):
            points = sources.point_set
            values = point_distances(points, target, config)
            lower = point_surface_distances(points.positions, target.triangle_positions())
            upper = nearest_distances(points.positions, target.vertices)
            self.assertTrue(np.all(values >= lower - 1e-9))
            self.assertTrue(np.all(values <= upper + 1e-9))
            self.assertLessEqual(lower.max(), values.max() + 1e-9)
            self.assertLessEqual(values.max(), upper.max() + 1e-9)

    def test_bvh_against_linear_scan(self):
        """Test closest hits and hit counts on 10000 random rays per mesh."""
        for mesh in (make_box(), make_icosphere(2), subdivide(make_tetrahedron())):
            bvh = build_bvh(mesh)
            tris = mesh.triangle_positions()
            origins, directions = random_rays(np.random.default_rng(3), 10000)
            for origin, direction in zip(origins, directions):
                ray = Ray(origin, direction)
                hit = closest_hit(bvh, ray)
                expected = linear_closest(tris, origin, direction)
                if expected is None:
                    self.assertIsNone(hit)
                else:
                    self.assertEqual(hit.triangle_id, expected[1])
                    self.assertAlmostEqual(hit.t, expected[0], delta=1e-12)
                self.assertEqual(count_hits(bvh, ray), linear_count(tris, origin, direction))


@unittest.skipUnless(ENABLED, "set PENETRATION_DEPTH_ACCEPTANCE=1 to run")
class TestErrorRates(unittest.TestCase):
    """Test case for depth accuracy on large meshes."""

    @classmethod
    def setUpClass(cls):
        """Set up one harness so each scene loads and runs its oracle once."""
        cls.harness = BenchmarkHarness()
        cls.scenes = [SceneConfig(LARGE_SPHERE, LARGE_SPHERE, overlap_ratio=0.5)]
        if SCANNED_MESH:
            cls.scenes.append(SceneConfig(SCANNED_MESH, SCANNED_MESH, overlap_ratio=0.5))

    def seed_errors(self, scene, strategy_for_seed):
        reports = [
            self.harness.run_scene(scene, HdistConfig(strategy=strategy_for_seed(s)), True)
            for s in SEEDS
        ]
        return [r.error_rate for r in reports], reports

    def test_error_rate(self):
        """Test mean and max error at rate 0.01."""
        for scene in self.scenes:
            errors, _ = self.seed_errors(scene, lambda s: VertexUniform(0.01, s))
            self.assertLessEqual(np.mean(errors), 0.02, scene.path_a)
            self.assertLessEqual(max(errors), 0.06, scene.path_a)

    def test_culling_ablation(self):
        """Test that culling keeps the depth and saves at least 20% of triangle tests."""
        scene = self.scenes[0]
        runs = {}
        for culling in (True, False):
            config = HdistConfig(strategy=VertexUniform(0.01, 0), culling=culling)
            runs[culling] = self.harness.run_scene(scene, config).result
        self.assertEqual(runs[True].depth, runs[False].depth)
        culled, full = runs[True].stats.triangle_tests, runs[False].stats.triangle_tests
        self.assertLessEqual(culled, 0.8 * full)

    def test_rate_monotonicity(self):
        """Test that the seed-mean error does not grow with the rate."""
        scene = self.scenes[0]
        means = []
        for rate in (0.001, 0.005, 0.01, 0.05):
            errors, _ = self.seed_errors(scene, lambda s: VertexUniform(rate, s))
            means.append(np.mean(errors))
        for coarse, fine in zip(means, means[1:]):
            self.assertLessEqual(fine, coarse + 1e-12)

    def test_vertex_beats_sphere(self):
        """Test vertex against sphere sampling at matched ray budgets."""
        scene = self.scenes[0]
        for rate in (0.001, 0.005):
            vertex_errors, reports = self.seed_errors(scene, lambda s: VertexUniform(rate, s))
            stats = TraversalStats()
            for report in reports:
                stats.merge(report.result.stats)
            points = sum(r.result.points_a + r.result.points_b for r in reports)
            count = max(1, round(stats.rays_cast / points))
            sphere_errors, _ = self.seed_errors(scene, lambda s: Sphere(count, s))
            self.assertLessEqual(np.mean(vertex_errors), np.mean(sphere_errors))


@unittest.skipUnless(ENABLED, "set PENETRATION_DEPTH_ACCEPTANCE=1 to run")
class TestDeterminism(unittest.TestCase):
    """Test case for byte-identical reports across thread counts."""

    def test_thread_counts(self):
        """Test the CLI with 1, 4 and all threads."""
        limit = numba.config.NUMBA_NUM_THREADS
        threads = sorted({1, min(4, limit), limit})
        base = ["--mesh-a", "builtin:icosphere:4", "--no-timing", "--stats"]
        self.addCleanup(set_threads, limit)
        with tempfile.TemporaryDirectory() as tmp:
            for flags in (["--rate", "0.05"], ["--strategy", "aabb", "--count", "32"]):
                outputs = []
                for count in threads:
                    out = os.path.join(tmp, f"report_{count}.json")
                    with contextlib.redirect_stderr(io.StringIO()):
                        code = main(base + flags + ["--threads", str(count), "--out", out])
                    self.assertEqual(code, 0)
                    with open(out, "rb") as f:
                        outputs.append(f.read())
                self.assertTrue(all(output == outputs[0] for output in outputs), flags)


if __name__ == "__main__":
    unittest.main()
