#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Tests for the acceleration structure module.
"""

import math
import unittest

import numpy as np

from penetration_depth.accel import (
    LEAF_SIZE,
    Ray,
    TraversalStats,
    build_bvh,
    closest_hit,
    closest_hits,
    count_and_first_hits,
    count_hits,
    intersect_triangle,
    set_threads,
)
from penetration_depth.errors import AccelError
from penetration_depth.mesh import make_box, make_icosphere


def random_rays(rng, count, spread=1.5):
    origins = rng.uniform(-spread, spread, size=(count, 3))
    directions = rng.standard_normal((count, 3))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    return origins, directions


def linear_closest(triangles, origin, direction):
    """Closest hit by testing every triangle; ties go to the smaller id."""
    ray = Ray(origin, direction)
    best = None
    for prim, (v0, v1, v2) in enumerate(triangles):
        t = intersect_triangle(ray, v0, v1, v2)
        if t is not None and (best is None or t < best[0]):
            best = (t, prim)
    return best


def linear_count(triangles, origin, direction):
    ray = Ray(origin, direction)
    return sum(intersect_triangle(ray, *tri) is not None for tri in triangles)


def quad_grid(cells):
    """Triangles of a cells x cells square in z = 0, each cell split along its diagonal."""
    triangles = []
    for i in range(cells):
        for j in range(cells):
            v00, v10 = (i, j, 0), (i + 1, j, 0)
            v01, v11 = (i, j + 1, 0), (i + 1, j + 1, 0)
            triangles.append([v00, v10, v11])
            triangles.append([v00, v11, v01])
    return np.array(triangles, dtype=float)


class TestBuild(unittest.TestCase):
    """Test case for BVH construction."""

    def test_node_layout(self):
        """Test node counts and the root position."""
        bvh = build_bvh(make_box())
        leaves = math.ceil(12 / LEAF_SIZE)
        self.assertEqual(bvh.node_count, 2 * leaves - 1)
        self.assertEqual(bvh.root, bvh.node_count - 1)
        self.assertEqual(sorted(bvh.order.tolist()), list(range(12)))
        np.testing.assert_array_equal(bvh.aabb().min, [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(bvh.aabb().max, [1.0, 1.0, 1.0])

    def test_children_are_bounded(self):
        """Test that every interior box contains its children."""
        bvh = build_bvh(make_icosphere(2))
        for node in range(bvh.node_count):
            left, right, _, count = bvh.links[node]
            if count:
                continue
            for child in (left, right):
                self.assertTrue(np.all(bvh.bounds[node, 0] <= bvh.bounds[child, 0]))
                self.assertTrue(np.all(bvh.bounds[node, 1] >= bvh.bounds[child, 1]))

    def test_single_triangle(self):
        """Test that one triangle gives a single leaf root."""
        bvh = build_bvh(np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], dtype=float))
        self.assertEqual(bvh.node_count, 1)
        self.assertIn("leaf 0", bvh.dump())

    def test_empty(self):
        """Test that an empty triangle set is rejected."""
        with self.assertRaises(AccelError):
            build_bvh(np.zeros((0, 3, 3)))


class TestQueries(unittest.TestCase):
    """Test case for ray queries."""

    def setUp(self):
        """Set up the structures."""
        self.box = build_bvh(make_box())
        self.sphere_mesh = make_icosphere(2)
        self.sphere = build_bvh(self.sphere_mesh)

    def test_closest_hit_from_inside(self):
        """Test a ray from the cube center through a face diagonal."""
        hit = closest_hit(self.box, Ray((0.5, 0.5, 0.5), (1.0, 0.0, 0.0)))
        self.assertEqual(hit.t, 0.5)
        self.assertIn(hit.triangle_id, (10, 11))
        self.assertEqual(count_hits(self.box, Ray((0.5, 0.5, 0.5), (1.0, 0.0, 0.0))), 1)

    def test_count_from_outside(self):
        """Test a ray crossing the cube twice."""
        ray = Ray((2.0, 0.5, 0.5), (-1.0, 0.0, 0.0))
        self.assertEqual(count_hits(self.box, ray), 2)
        self.assertEqual(closest_hit(self.box, ray).t, 1.0)

    def test_miss(self):
        """Test rays that miss."""
        ray = Ray((2.0, 0.5, 0.5), (1.0, 0.0, 0.0))
        self.assertIsNone(closest_hit(self.box, ray))
        self.assertEqual(count_hits(self.box, ray), 0)

    def test_t_max(self):
        """Test that hits beyond t_max are ignored and t_max itself is included."""
        self.assertIsNone(closest_hit(self.box, Ray((0.5, 0.5, 0.5), (1.0, 0.0, 0.0), 0.4)))
        self.assertEqual(closest_hit(self.box, Ray((0.5, 0.5, 0.5), (1, 0, 0), 0.5)).t, 0.5)

    def test_ray_validation(self):
        """Test that invalid rays are rejected."""
        with self.assertRaises(ValueError):
            Ray((0, 0, 0), (1.0, 1.0, 0.0))
        with self.assertRaises(ValueError):
            Ray((0, 0, 0), (1.0, 0.0, 0.0), t_max=0.0)
        ray = Ray.towards((0, 0, 0), (3.0, 4.0, 0.0))
        self.assertAlmostEqual(float(np.linalg.norm(ray.direction)), 1.0, places=15)

    def test_intersect_triangle(self):
        """Test the single triangle test."""
        ray = Ray((0.2, 0.2, 1.0), (0.0, 0.0, -1.0))
        self.assertEqual(intersect_triangle(ray, (0, 0, 0), (1, 0, 0), (0, 1, 0)), 1.0)
        self.assertIsNone(intersect_triangle(ray, (1, 1, 0), (2, 1, 0), (1, 2, 0)))

    def test_shared_edge_hit_once(self):
        """Test that rays through a shared edge hit exactly one triangle."""
        square = np.array(
            [
                [[0, 0, 0], [1, 0, 0], [1, 1, 0]],
                [[0, 0, 0], [1, 1, 0], [0, 1, 0]],
            ],
            dtype=float,
        )
        bvh = build_bvh(square)
        for p in (0.125, 0.25, 0.5, 0.75):
            self.assertEqual(count_hits(bvh, Ray((p, p, 1.0), (0.0, 0.0, -1.0))), 1)
            self.assertEqual(count_hits(bvh, Ray((p, p, -1.0), (0.0, 0.0, 1.0))), 1)

    def test_subdivided_quad_edges_hit_once(self):
        """Test oblique rays aimed at shared edges and vertices of a 4x4 quad."""
        rng = np.random.default_rng(11)
        bvh = build_bvh(quad_grid(4))
        n = 10000
        kind = rng.integers(0, 4, n)
        cell = rng.integers(0, 4, (n, 2)).astype(float)
        s = rng.uniform(0.1, 0.9, n)
        line = rng.integers(1, 4, n).astype(float)
        along = rng.uniform(0.5, 3.5, n)
        targets = np.zeros((n, 3))
        # 0: vertical edges, 1: horizontal edges, 2: cell diagonals, 3: interior vertices
        targets[kind == 0, 0] = line[kind == 0]
        targets[kind == 0, 1] = along[kind == 0]
        targets[kind == 1, 0] = along[kind == 1]
        targets[kind == 1, 1] = line[kind == 1]
        targets[kind == 2, 0] = cell[kind == 2, 0] + s[kind == 2]
        targets[kind == 2, 1] = cell[kind == 2, 1] + s[kind == 2]
        targets[kind == 3, :2] = rng.integers(1, 4, (int((kind == 3).sum()), 2))

        directions = rng.standard_normal((n, 3))
        directions[:, 2] = np.where(rng.random(n) < 0.5, -1.0, 1.0) * (
            0.2 + np.abs(directions[:, 2])
        )
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        origins = targets - 2.0 * directions

        counts, first_t, _ = count_and_first_hits(bvh, origins, directions)
        np.testing.assert_array_equal(np.bincount(counts, minlength=2), [0, n])
        np.testing.assert_allclose(first_t, 2.0, atol=1e-9)

    def test_hits_lie_in_triangle_bounds(self):
        """Test that every hit point lies in its triangle's box inflated by 1e-9."""
        rng = np.random.default_rng(5)
        soup = rng.uniform(-1.0, 1.0, (500, 3, 3))
        for triangles in (soup, self.sphere_mesh.triangle_positions()):
            bvh = build_bvh(triangles)
            origins, directions = random_rays(rng, 1000)
            t, ids = closest_hits(bvh, origins, directions)
            hit = ids >= 0
            self.assertGreater(int(hit.sum()), 0)
            points = origins[hit] + t[hit][:, None] * directions[hit]
            boxes = triangles[ids[hit]]
            self.assertTrue(np.all(points >= boxes.min(axis=1) - 1e-9))
            self.assertTrue(np.all(points <= boxes.max(axis=1) + 1e-9))

    def test_shorter_rays_only_drop_hits(self):
        """Test that lowering t_max keeps the closest hit or removes it."""
        rng = np.random.default_rng(9)
        origins, directions = random_rays(rng, 200)
        limits = (4.0, 2.0, 1.5, 1.0, 0.75, 0.5, 0.25, 0.1)
        for origin, direction in zip(origins, directions):
            full = closest_hit(self.sphere, Ray(origin, direction))
            for t_max in limits:
                hit = closest_hit(self.sphere, Ray(origin, direction, t_max))
                if full is None or t_max < full.t:
                    self.assertIsNone(hit)
                else:
                    self.assertEqual(hit, full)

        counts = [count_and_first_hits(self.sphere, origins, directions, t)[0] for t in limits]
        for longer, shorter in zip(counts, counts[1:]):
            self.assertTrue(np.all(shorter <= longer))

    def test_matches_linear_scan(self):
        """Test closest hits and counts against a scan over all triangles."""
        rng = np.random.default_rng(7)
        origins, directions = random_rays(rng, 200)
        t, ids = closest_hits(self.sphere, origins, directions)
        counts, _, _ = count_and_first_hits(self.sphere, origins, directions)
        triangles = self.sphere_mesh.triangle_positions()
        for i in range(len(origins)):
            expected = linear_closest(triangles, origins[i], directions[i])
            if expected is None:
                self.assertEqual(ids[i], -1)
                self.assertTrue(np.isnan(t[i]))
            else:
                self.assertEqual(int(ids[i]), expected[1])
                self.assertAlmostEqual(float(t[i]), expected[0], delta=1e-12)
            self.assertEqual(int(counts[i]), linear_count(triangles, origins[i], directions[i]))

    def test_parity_from_inside(self):
        """Test that rays from the sphere center cross the surface once."""
        rng = np.random.default_rng(3)
        _, directions = random_rays(rng, 100)
        counts, first_t, _ = count_and_first_hits(self.sphere, np.zeros((100, 3)), directions)
        np.testing.assert_array_equal(counts, np.ones(100, dtype=np.int64))
        self.assertTrue(np.all(first_t <= 1.0))

    def test_batch_matches_single(self):
        """Test that batch queries agree with single queries."""
        rng = np.random.default_rng(11)
        origins, directions = random_rays(rng, 50)
        t, ids = closest_hits(self.sphere, origins, directions)
        for i in range(50):
            hit = closest_hit(self.sphere, Ray(origins[i], directions[i]))
            if hit is None:
                self.assertEqual(ids[i], -1)
            else:
                self.assertEqual((float(t[i]), int(ids[i])), (hit.t, hit.triangle_id))

    def test_stats(self):
        """Test traversal counters."""
        stats = TraversalStats()
        closest_hit(self.sphere, Ray((0, 0, 0), (0, 0, 1)), stats)
        count_hits(self.sphere, Ray((0, 0, 0), (0, 1, 0)), stats)
        self.assertEqual(stats.rays_cast, 2)
        self.assertGreater(stats.node_visits, 0)
        self.assertGreater(stats.triangle_tests, 0)
        self.assertLess(stats.triangle_tests, 2 * self.sphere.triangle_count)

    def test_set_threads_validation(self):
        """Test that invalid thread counts are rejected."""
        with self.assertRaises(ValueError):
            set_threads(0)


if __name__ == "__main__":
    unittest.main()
