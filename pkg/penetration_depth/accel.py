#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Acceleration Structure Module

This module provides a software bounding volume hierarchy with the query
contract of a hardware ray tracing geometry structure: closest-hit and
all-hit-count ray queries with an adjustable maximum ray length.

The tree is built bottom-up over Morton-sorted triangle centroids. Traversal
and the watertight ray/triangle test are numba kernels; the batch entry points
run rays in parallel with per-ray statistics merged after the loop, so results
do not depend on the thread count.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numba
import numpy as np
from numba import njit, prange

from penetration_depth.errors import AccelError
from penetration_depth.mesh import Aabb, TriangleMesh, Vector3

logger = logging.getLogger("penetration_depth.accel")

LEAF_SIZE = 4
MORTON_BITS = 10
STACK_SIZE = 64

# conservative slab test scale, see Ize, "Robust BVH Ray Traversal"
_EPS = np.finfo(np.float64).eps / 2.0
_GAMMA3 = 3.0 * _EPS / (1.0 - 3.0 * _EPS)
_BOX_SCALE = 1.0 + 2.0 * _GAMMA3

# stats columns
NODE_VISITS = 0
TRIANGLE_TESTS = 1
RAYS_CAST = 2


@dataclass(frozen=True, eq=False)
class Ray:
    """
    A ray with unit direction and a maximum parametric length.

    Attributes:
        origin: Ray start point.
        direction: Unit direction (norm within 1e-12 of 1).
        t_max: Positive maximum length; infinity for an unbounded ray.
    """

    origin: np.ndarray
    direction: np.ndarray
    t_max: float = math.inf

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-12:
            raise ValueError(f"Ray direction {direction.tolist()} is not unit length")
        if not self.t_max > 0.0:
            raise ValueError(f"Ray t_max must be positive, got {self.t_max}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "t_max", float(self.t_max))

    @classmethod
    def towards(cls, origin: Vector3, direction: Vector3, t_max: float = math.inf) -> "Ray":
        """Build a ray, normalizing the direction first."""
        d = np.asarray(direction, dtype=np.float64)
        return cls(origin, d / np.linalg.norm(d), t_max)


@dataclass(frozen=True)
class Hit:
    """A ray hit: parametric distance t and the index of the triangle hit."""

    t: float
    triangle_id: int


@dataclass
class TraversalStats:
    """Counters describing the work done by ray queries."""

    node_visits: int = 0
    triangle_tests: int = 0
    rays_cast: int = 0

    def add_counts(self, counts: np.ndarray) -> "TraversalStats":
        """
        Accumulate a counter array.

        Args:
            counts: Either a (3,) array or an (n, 3) array of per-ray counters in
                (node_visits, triangle_tests, rays_cast) column order.

        Returns:
            TraversalStats: self, for chaining.
        """
        totals = np.asarray(counts, dtype=np.int64).reshape(-1, 3).sum(axis=0)
        self.node_visits += int(totals[NODE_VISITS])
        self.triangle_tests += int(totals[TRIANGLE_TESTS])
        self.rays_cast += int(totals[RAYS_CAST])
        return self

    def merge(self, other: "TraversalStats") -> "TraversalStats":
        self.node_visits += other.node_visits
        self.triangle_tests += other.triangle_tests
        self.rays_cast += other.rays_cast
        return self

    def as_dict(self) -> dict:
        return {
            "node_visits": self.node_visits,
            "triangle_tests": self.triangle_tests,
            "rays_cast": self.rays_cast,
        }


@dataclass(frozen=True, eq=False)
class Bvh:
    """
    An immutable binary bounding volume hierarchy over a triangle set.

    Attributes:
        bounds: (nodes, 2, 3) array of node box minima and maxima.
        links: (nodes, 4) int64 array of (left, right, first, count); interior
            nodes have count 0, leaves have left = right = -1 and index
            order[first:first + count].
        order: Morton-sorted permutation of triangle indices.
        triangles: (m, 3, 3) corner positions in the caller's triangle order;
            Hit.triangle_id indexes this array.

    The root is the last node.
    """

    bounds: np.ndarray
    links: np.ndarray
    order: np.ndarray
    triangles: np.ndarray

    @property
    def root(self) -> int:
        return int(self.links.shape[0] - 1)

    @property
    def node_count(self) -> int:
        return int(self.links.shape[0])

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])

    def aabb(self) -> Aabb:
        return Aabb(self.bounds[self.root, 0], self.bounds[self.root, 1])

    def dump(self) -> str:
        """Return an indented text rendering of the tree for inspection."""
        lines: List[str] = []
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            left, right, first, count = (int(v) for v in self.links[node])
            lo, hi = self.bounds[node]
            box = "[{:.6g} {:.6g} {:.6g}] - [{:.6g} {:.6g} {:.6g}]".format(*lo, *hi)
            if count > 0:
                prims = self.order[first : first + count].tolist()
                lines.append(f"{'  ' * depth}leaf {node} {box} triangles={prims}")
            else:
                lines.append(f"{'  ' * depth}node {node} {box}")
                stack.append((right, depth + 1))
                stack.append((left, depth + 1))
        return "\n".join(lines)


TriangleSource = Union[TriangleMesh, np.ndarray]


def _expand_bits(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64)
    v = (v * np.uint64(0x00010001)) & np.uint64(0xFF0000FF)
    v = (v * np.uint64(0x00000101)) & np.uint64(0x0F00F00F)
    v = (v * np.uint64(0x00000011)) & np.uint64(0xC30C30C3)
    v = (v * np.uint64(0x00000005)) & np.uint64(0x49249249)
    return v


def morton_codes(points: np.ndarray) -> np.ndarray:
    """
    Compute 30-bit Morton codes (10 bits per axis) of points over their bounding box.

    Args:
        points: (n, 3) array.

    Returns:
        np.ndarray: (n,) uint64 codes.
    """
    lo = points.min(axis=0)
    extent = points.max(axis=0) - lo
    safe = np.where(extent > 0.0, extent, 1.0)
    scale = np.where(extent > 0.0, float(1 << MORTON_BITS) / safe, 0.0)
    cells = np.clip(np.floor((points - lo) * scale), 0, (1 << MORTON_BITS) - 1).astype(np.uint64)
    x, y, z = (_expand_bits(cells[:, k]) for k in range(3))
    return (x << np.uint64(2)) | (y << np.uint64(1)) | z


def _as_positions(source: TriangleSource) -> np.ndarray:
    if hasattr(source, "triangle_positions"):
        positions = source.triangle_positions()
    else:
        positions = source
    return np.array(positions, dtype=np.float64, order="C", copy=True).reshape(-1, 3, 3)


def build_bvh(source: TriangleSource) -> Bvh:
    """
    Build a BVH over a triangle set.

    Triangles are sorted by the Morton code of their centroid, grouped into
    leaves of up to LEAF_SIZE consecutive triangles, and adjacent nodes are then
    paired level by level until a single root remains.

    Args:
        source: A TriangleMesh, any object with triangle_positions(), or an
            (m, 3, 3) array of triangle corners.

    Returns:
        Bvh: The hierarchy; triangle ids follow the source's triangle order.

    Raises:
        AccelError: If the triangle set is empty.
    """
    tris = _as_positions(source)
    m = tris.shape[0]
    if m == 0:
        raise AccelError("Cannot build a BVH over an empty triangle set")

    order = np.argsort(morton_codes(tris.mean(axis=1)), kind="stable").astype(np.int64)
    tri_min = tris.min(axis=1)[order]
    tri_max = tris.max(axis=1)[order]

    starts = np.arange(0, m, LEAF_SIZE, dtype=np.int64)
    n_leaves = len(starts)
    n_nodes = 2 * n_leaves - 1
    bounds = np.empty((n_nodes, 2, 3), dtype=np.float64)
    links = np.empty((n_nodes, 4), dtype=np.int64)

    bounds[:n_leaves, 0] = np.minimum.reduceat(tri_min, starts, axis=0)
    bounds[:n_leaves, 1] = np.maximum.reduceat(tri_max, starts, axis=0)
    links[:n_leaves, 0] = -1
    links[:n_leaves, 1] = -1
    links[:n_leaves, 2] = starts
    links[:n_leaves, 3] = np.minimum(LEAF_SIZE, m - starts)

    level = np.arange(n_leaves, dtype=np.int64)
    next_id = n_leaves
    while len(level) > 1:
        pairs = len(level) // 2
        left = level[0 : 2 * pairs : 2]
        right = level[1 : 2 * pairs : 2]
        ids = np.arange(next_id, next_id + pairs, dtype=np.int64)
        bounds[ids, 0] = np.minimum(bounds[left, 0], bounds[right, 0])
        bounds[ids, 1] = np.maximum(bounds[left, 1], bounds[right, 1])
        links[ids, 0] = left
        links[ids, 1] = right
        links[ids, 2] = 0
        links[ids, 3] = 0
        next_id += pairs
        level = np.concatenate([ids, level[2 * pairs :]])

    for array in (bounds, links, order, tris):
        array.setflags(write=False)
    logger.debug(f"Built BVH: {m} triangles, {n_leaves} leaves, {n_nodes} nodes")
    return Bvh(bounds=bounds, links=links, order=order, triangles=tris)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def ray_setup(direction):
    """Return the permutation and shear constants of the watertight test."""
    ax = abs(direction[0])
    ay = abs(direction[1])
    az = abs(direction[2])
    if ax >= ay and ax >= az:
        kz = 0
    elif ay >= az:
        kz = 1
    else:
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if direction[kz] < 0.0:
        kx, ky = ky, kx
    sx = direction[kx] / direction[kz]
    sy = direction[ky] / direction[kz]
    sz = 1.0 / direction[kz]
    return kx, ky, kz, sx, sy, sz


@njit(cache=True)
def _owns_edge(ex, ey, sign):
    # tie rule for a point exactly on an edge: the edge direction, taken in the
    # triangle's projected winding, must point up, or left when horizontal
    ex = ex * sign
    ey = ey * sign
    return ey > 0.0 or (ey == 0.0 and ex < 0.0)


@njit(cache=True)
def intersect_sheared(origin, kx, ky, kz, sx, sy, sz, t_max, v0, v1, v2):
    """
    Watertight ray/triangle test on a prepared ray.

    Returns the parametric distance in (0, t_max], or -1.0 for a miss.
    """
    ax = v0[0] - origin[0]
    ay = v0[1] - origin[1]
    az = v0[2] - origin[2]
    bx = v1[0] - origin[0]
    by = v1[1] - origin[1]
    bz = v1[2] - origin[2]
    cx = v2[0] - origin[0]
    cy = v2[1] - origin[1]
    cz = v2[2] - origin[2]
    a = (ax, ay, az)
    b = (bx, by, bz)
    c = (cx, cy, cz)

    a_kz = a[kz]
    b_kz = b[kz]
    c_kz = c[kz]
    px = a[kx] - sx * a_kz
    py = a[ky] - sy * a_kz
    qx = b[kx] - sx * b_kz
    qy = b[ky] - sy * b_kz
    rx = c[kx] - sx * c_kz
    ry = c[ky] - sy * c_kz

    u = rx * qy - ry * qx
    v = px * ry - py * rx
    w = qx * py - qy * px
    det = u + v + w
    if det == 0.0:
        return -1.0
    sign = 1.0 if det > 0.0 else -1.0
    if sign * u < 0.0 or sign * v < 0.0 or sign * w < 0.0:
        return -1.0
    if u == 0.0 and not _owns_edge(rx - qx, ry - qy, sign):
        return -1.0
    if v == 0.0 and not _owns_edge(px - rx, py - ry, sign):
        return -1.0
    if w == 0.0 and not _owns_edge(qx - px, qy - py, sign):
        return -1.0

    t_scaled = u * (sz * a_kz) + v * (sz * b_kz) + w * (sz * c_kz)
    if sign > 0.0:
        if t_scaled <= 0.0 or t_scaled > t_max * det:
            return -1.0
    else:
        if t_scaled >= 0.0 or t_scaled < t_max * det:
            return -1.0
    t = t_scaled / det
    if t <= 0.0 or t > t_max:
        return -1.0
    return t


@njit(cache=True)
def _box_hit(bounds, node, origin, direction, inv, t_max):
    t0 = 0.0
    t1 = t_max
    for k in range(3):
        lo_k = bounds[node, 0, k]
        hi_k = bounds[node, 1, k]
        if direction[k] == 0.0:
            if origin[k] < lo_k or origin[k] > hi_k:
                return False
            continue
        near = (lo_k - origin[k]) * inv[k]
        far = (hi_k - origin[k]) * inv[k]
        if near > far:
            near, far = far, near
        far *= _BOX_SCALE
        if near > t0:
            t0 = near
        if far < t1:
            t1 = far
        if t0 > t1:
            return False
    return True


@njit(cache=True)
def _inverse(direction):
    inv = np.empty(3)
    for k in range(3):
        inv[k] = 1.0 / direction[k] if direction[k] != 0.0 else 0.0
    return inv


@njit(cache=True)
def closest_hit_kernel(bounds, links, order, tris, origin, direction, t_max, stats):
    """
    Closest hit along a ray; ties on t go to the smaller triangle id.

    Returns (t, triangle_id), with triangle_id -1 on a miss. stats is a (3,)
    int64 counter array updated in place.
    """
    kx, ky, kz, sx, sy, sz = ray_setup(direction)
    inv = _inverse(direction)
    best_t = t_max
    best_id = -1
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    stack[0] = links.shape[0] - 1
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        stats[NODE_VISITS] += 1
        if not _box_hit(bounds, node, origin, direction, inv, best_t):
            continue
        count = links[node, 3]
        if count > 0:
            first = links[node, 2]
            for j in range(first, first + count):
                prim = order[j]
                stats[TRIANGLE_TESTS] += 1
                t = intersect_sheared(
                    origin, kx, ky, kz, sx, sy, sz, best_t, tris[prim, 0], tris[prim, 1],
                    tris[prim, 2],
                )
                if t > 0.0:
                    if best_id < 0 or t < best_t or (t == best_t and prim < best_id):
                        best_t = t
                        best_id = prim
        else:
            stack[top] = links[node, 1]
            stack[top + 1] = links[node, 0]
            top += 2
    stats[RAYS_CAST] += 1
    if best_id < 0:
        return -1.0, -1
    return best_t, best_id


@njit(cache=True)
def count_hits_kernel(bounds, links, order, tris, origin, direction, t_max, stats):
    """
    Count every triangle hit in (0, t_max] and report the closest of them.

    Returns (count, first_t, first_id); first_t is -1.0 and first_id -1 when
    nothing is hit.
    """
    kx, ky, kz, sx, sy, sz = ray_setup(direction)
    inv = _inverse(direction)
    hits = 0
    first_t = t_max
    first_id = -1
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    stack[0] = links.shape[0] - 1
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        stats[NODE_VISITS] += 1
        if not _box_hit(bounds, node, origin, direction, inv, t_max):
            continue
        count = links[node, 3]
        if count > 0:
            first = links[node, 2]
            for j in range(first, first + count):
                prim = order[j]
                stats[TRIANGLE_TESTS] += 1
                t = intersect_sheared(
                    origin, kx, ky, kz, sx, sy, sz, t_max, tris[prim, 0], tris[prim, 1],
                    tris[prim, 2],
                )
                if t > 0.0:
                    hits += 1
                    if first_id < 0 or t < first_t or (t == first_t and prim < first_id):
                        first_t = t
                        first_id = prim
        else:
            stack[top] = links[node, 1]
            stack[top + 1] = links[node, 0]
            top += 2
    stats[RAYS_CAST] += 1
    if first_id < 0:
        return hits, -1.0, -1
    return hits, first_t, first_id


@njit(parallel=True, cache=True)
def _count_hits_batch(bounds, links, order, tris, origins, directions, t_max):
    n = origins.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    first_t = np.empty(n, dtype=np.float64)
    first_id = np.empty(n, dtype=np.int64)
    stats = np.zeros((n, 3), dtype=np.int64)
    for i in prange(n):
        c, t, prim = count_hits_kernel(
            bounds, links, order, tris, origins[i], directions[i], t_max[i], stats[i]
        )
        counts[i] = c
        first_t[i] = t
        first_id[i] = prim
    return counts, first_t, first_id, stats


@njit(parallel=True, cache=True)
def _closest_hit_batch(bounds, links, order, tris, origins, directions, t_max):
    n = origins.shape[0]
    hit_t = np.empty(n, dtype=np.float64)
    hit_id = np.empty(n, dtype=np.int64)
    stats = np.zeros((n, 3), dtype=np.int64)
    for i in prange(n):
        t, prim = closest_hit_kernel(
            bounds, links, order, tris, origins[i], directions[i], t_max[i], stats[i]
        )
        hit_t[i] = t
        hit_id[i] = prim
    return hit_t, hit_id, stats


# ---------------------------------------------------------------------------
# Query API
# ---------------------------------------------------------------------------


def _record(stats: Optional[TraversalStats], counts: np.ndarray) -> None:
    if stats is not None:
        stats.add_counts(counts)


def closest_hit(bvh: Bvh, ray: Ray, stats: Optional[TraversalStats] = None) -> Optional[Hit]:
    """
    Find the hit with minimal t in (0, ray.t_max].

    Args:
        bvh: The structure to query.
        ray: The query ray.
        stats: Optional counters to accumulate into.

    Returns:
        Optional[Hit]: The closest hit (ties broken by smaller triangle id), or None.
    """
    counts = np.zeros(3, dtype=np.int64)
    t, prim = closest_hit_kernel(
        bvh.bounds,
        bvh.links,
        bvh.order,
        bvh.triangles,
        ray.origin,
        ray.direction,
        ray.t_max,
        counts,
    )
    _record(stats, counts)
    if prim < 0:
        return None
    return Hit(t=float(t), triangle_id=int(prim))


def count_hits(bvh: Bvh, ray: Ray, stats: Optional[TraversalStats] = None) -> int:
    """
    Count the triangles intersected with t in (0, ray.t_max]; each at most once.

    Args:
        bvh: The structure to query.
        ray: The query ray.
        stats: Optional counters to accumulate into.

    Returns:
        int: The number of intersected triangles.
    """
    counts = np.zeros(3, dtype=np.int64)
    n, _, _ = count_hits_kernel(
        bvh.bounds,
        bvh.links,
        bvh.order,
        bvh.triangles,
        ray.origin,
        ray.direction,
        ray.t_max,
        counts,
    )
    _record(stats, counts)
    return int(n)


def intersect_triangle(ray: Ray, v0: Vector3, v1: Vector3, v2: Vector3) -> Optional[float]:
    """
    Intersect a ray with one triangle using the watertight test.

    Rays crossing the shared edge of two consistently oriented adjacent
    triangles hit exactly one of them.

    Returns:
        Optional[float]: The parametric distance in (0, ray.t_max], or None.
    """
    kx, ky, kz, sx, sy, sz = ray_setup(ray.direction)
    t = intersect_sheared(
        ray.origin,
        kx,
        ky,
        kz,
        sx,
        sy,
        sz,
        ray.t_max,
        np.asarray(v0, dtype=np.float64),
        np.asarray(v1, dtype=np.float64),
        np.asarray(v2, dtype=np.float64),
    )
    return None if t < 0.0 else float(t)


def _batch_arrays(
    origins: np.ndarray, directions: np.ndarray, t_max: Union[float, np.ndarray]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    origins = np.ascontiguousarray(np.asarray(origins, dtype=np.float64).reshape(-1, 3))
    directions = np.ascontiguousarray(np.asarray(directions, dtype=np.float64).reshape(-1, 3))
    if directions.shape[0] == 1 and origins.shape[0] > 1:
        directions = np.ascontiguousarray(np.repeat(directions, origins.shape[0], axis=0))
    if directions.shape != origins.shape:
        raise ValueError("origins and directions must have matching shapes")
    limits = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (origins.shape[0],))
    return origins, directions, np.ascontiguousarray(limits)


def count_and_first_hits(
    bvh: Bvh,
    origins: np.ndarray,
    directions: np.ndarray,
    t_max: Union[float, np.ndarray] = math.inf,
    stats: Optional[TraversalStats] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Run count queries for many rays in parallel.

    Args:
        bvh: The structure to query.
        origins: (n, 3) ray origins.
        directions: (n, 3) unit directions, or a single (3,) direction for all rays.
        t_max: Scalar or (n,) maximum lengths.
        stats: Optional counters to accumulate into.

    Returns:
        Tuple of (counts, first_t, first_id); first_t is NaN where nothing was hit.
    """
    origins, directions, limits = _batch_arrays(origins, directions, t_max)
    if origins.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64)
    counts, first_t, first_id, per_ray = _count_hits_batch(
        bvh.bounds, bvh.links, bvh.order, bvh.triangles, origins, directions, limits
    )
    _record(stats, per_ray)
    first_t = np.where(first_id >= 0, first_t, np.nan)
    return counts, first_t, first_id


def closest_hits(
    bvh: Bvh,
    origins: np.ndarray,
    directions: np.ndarray,
    t_max: Union[float, np.ndarray] = math.inf,
    stats: Optional[TraversalStats] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run closest-hit queries for many rays in parallel.

    Returns:
        Tuple of (t, triangle_id); t is NaN and triangle_id -1 on a miss.
    """
    origins, directions, limits = _batch_arrays(origins, directions, t_max)
    if origins.shape[0] == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    hit_t, hit_id, per_ray = _closest_hit_batch(
        bvh.bounds, bvh.links, bvh.order, bvh.triangles, origins, directions, limits
    )
    _record(stats, per_ray)
    return np.where(hit_id >= 0, hit_t, np.nan), hit_id


def set_threads(count: int) -> None:
    """
    Set the number of threads used by the parallel kernels.

    Raises:
        ValueError: If count is outside 1..numba.config.NUMBA_NUM_THREADS.
    """
    limit = numba.config.NUMBA_NUM_THREADS
    if not 1 <= count <= limit:
        raise ValueError(f"Thread count must be in 1..{limit}, got {count}")
    numba.set_num_threads(count)
    logger.debug(f"Using {count} threads")
