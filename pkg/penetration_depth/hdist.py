#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Hausdorff Distance Module

This module computes the sampled, ray-cast directional Hausdorff distance
between penetration surfaces and combines both directions into the penetration
depth of two overlapping closed meshes.

Every source point casts a set of rays (aimed at sampled target vertices, or
along sampled directions) against the target surface and keeps the closest hit.
Source points run in parallel; the rays of one point run in sequence so that
each ray can be shortened to the best distance found so far (culling).
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from numba import njit, prange

from penetration_depth.accel import Bvh, TraversalStats, build_bvh, closest_hit_kernel
from penetration_depth.mesh import Aabb, TriangleMesh, Vector3, axis_index, require_closed
from penetration_depth.pip import PenetrationPointSet, extract_penetration_points
from penetration_depth.psurf import PenetrationSurface, build_penetration_surface

logger = logging.getLogger("penetration_depth.hdist")

MAX_SEED = 2**64 - 1
AABB_RETRIES = 8
# source points handled per batch by the direction-sampling kernels
CHUNK_SIZE = 4096


def _check_seed(seed: int) -> None:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")


@dataclass(frozen=True)
class VertexUniform:
    """Aim one ray at every stride-th target vertex."""

    rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"Sampling rate must be in (0, 1], got {self.rate}")
        _check_seed(self.seed)

    @property
    def stride(self) -> int:
        return max(1, math.floor(1.0 / self.rate))

    @property
    def offset(self) -> int:
        return self.seed % self.stride

    name = "vertex"


@dataclass(frozen=True)
class Sphere:
    """Cast count rays in directions drawn uniformly on the unit sphere."""

    count: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"Ray count must be positive, got {self.count}")
        _check_seed(self.seed)

    name = "sphere"


@dataclass(frozen=True)
class AabbBox:
    """Cast count rays towards points drawn uniformly in the target surface's box."""

    count: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"Ray count must be positive, got {self.count}")
        _check_seed(self.seed)

    name = "aabb"


@dataclass(frozen=True)
class Hemisphere:
    """Sphere directions restricted to the side opposite the source vertex normal."""

    count: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"Ray count must be positive, got {self.count}")
        _check_seed(self.seed)

    name = "hemisphere"


SamplingStrategy = Union[VertexUniform, Sphere, AabbBox, Hemisphere]


@dataclass(frozen=True)
class HdistConfig:
    """
    Configuration of a Hausdorff distance run.

    Attributes:
        strategy: How rays are sampled per source point.
        culling: Shorten each ray to the best distance found so far for its point.
        dpip_filter: Use each point's d_pip as the initial ray length, and skip
            sampled target vertices farther away than d_pip.
        pip_axis: Axis of the point-in-polyhedron rays.
    """

    strategy: SamplingStrategy = field(default_factory=VertexUniform)
    culling: bool = True
    dpip_filter: bool = True
    pip_axis: str = "x"

    def __post_init__(self):
        if not isinstance(self.strategy, (VertexUniform, Sphere, AabbBox, Hemisphere)):
            raise ValueError(f"Unknown sampling strategy: {self.strategy!r}")
        axis_index(self.pip_axis)


class Status(Enum):
    OK = "Ok"
    NO_OVERLAP = "NoOverlap"


@dataclass(frozen=True)
class HdistResult:
    """
    Penetration depth of two meshes and the directional distances behind it.

    Attributes:
        h_ab: Directional distance from A's penetration surface to B's.
        h_ba: Directional distance from B's penetration surface to A's.
        depth: max(h_ab, h_ba).
        witness_ab: Vertex of A attaining h_ab (None without overlap).
        witness_ba: Vertex of B attaining h_ba (None without overlap).
        stats: Traversal counters of the Hausdorff stage.
        status: Ok, or NoOverlap when a penetration point set is empty.
        pip_stats: Traversal counters of the point-in-polyhedron stage.
        points_a: Number of penetration points of A.
        points_b: Number of penetration points of B.
        surface_triangles_a: Triangles in A's penetration surface.
        surface_triangles_b: Triangles in B's penetration surface.
        timings: Stage wall-clock durations in milliseconds (pip, psg, hdist).
    """

    h_ab: float
    h_ba: float
    depth: float
    witness_ab: Optional[int]
    witness_ba: Optional[int]
    stats: TraversalStats
    status: Status
    pip_stats: TraversalStats = field(default_factory=TraversalStats)
    points_a: int = 0
    points_b: int = 0
    surface_triangles_a: int = 0
    surface_triangles_b: int = 0
    timings: Dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def vertex_targets(query, targets, stride, offset, max_distance):
    """
    Indices of the sampled target vertices for one query point.

    Takes every stride-th vertex starting at offset and drops those farther than
    max_distance. Falls back to the single vertex at offset modulo the vertex
    count when the stride selects nothing, and to the nearest of all target
    vertices when the distance filter removes everything.
    """
    n = targets.shape[0]
    selected = np.empty((n - offset + stride - 1) // stride if offset < n else 1, np.int64)
    k = 0
    for j in range(offset, n, stride):
        selected[k] = j
        k += 1
    if k == 0:
        selected[0] = offset % n
        k = 1

    kept = np.empty(k, np.int64)
    m = 0
    for s in range(k):
        j = selected[s]
        dx = targets[j, 0] - query[0]
        dy = targets[j, 1] - query[1]
        dz = targets[j, 2] - query[2]
        if math.sqrt(dx * dx + dy * dy + dz * dz) <= max_distance:
            kept[m] = j
            m += 1
    if m > 0:
        return kept[:m].copy()

    nearest = 0
    nearest_sq = math.inf
    for j in range(n):
        dx = targets[j, 0] - query[0]
        dy = targets[j, 1] - query[1]
        dz = targets[j, 2] - query[2]
        d = dx * dx + dy * dy + dz * dz
        if d < nearest_sq:
            nearest_sq = d
            nearest = j
    fallback = np.empty(1, np.int64)
    fallback[0] = nearest
    return fallback


@njit(cache=True)
def _aim(query, targets, indices):
    count = indices.shape[0]
    directions = np.zeros((count, 3))
    distances = np.empty(count)
    for s in range(count):
        j = indices[s]
        dx = targets[j, 0] - query[0]
        dy = targets[j, 1] - query[1]
        dz = targets[j, 2] - query[2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        distances[s] = d
        if d > 0.0:
            directions[s, 0] = dx / d
            directions[s, 1] = dy / d
            directions[s, 2] = dz / d
    return directions, distances


@njit(cache=True)
def min_distance_kernel(
    bounds, links, order, tris, query, directions, bounds_per_ray, culling, init_tmax, stats
):
    """
    Minimum closest-hit distance over a sequence of rays from one point.

    bounds_per_ray holds, for every ray, a distance the ray's candidate may not
    exceed even if it misses (the distance to the vertex it aims at, or inf).
    A zero bound means the point coincides with that vertex and no ray is cast.
    Returns init_tmax when no ray produced a finite candidate.
    """
    best = math.inf
    for i in range(directions.shape[0]):
        candidate = bounds_per_ray[i]
        if candidate > 0.0:
            limit = init_tmax
            if culling:
                if best == 0.0:
                    break
                if best < limit:
                    limit = best
            t, prim = closest_hit_kernel(
                bounds, links, order, tris, query, directions[i], limit, stats
            )
            if prim >= 0 and t < candidate:
                candidate = t
        if candidate < best:
            best = candidate
    if best == math.inf:
        return init_tmax
    return best


@njit(parallel=True, cache=True)
def _vertex_strategy_batch(
    bounds, links, order, tris, queries, targets, stride, offset, limits, culling
):
    n = queries.shape[0]
    result = np.empty(n)
    stats = np.zeros((n, 3), dtype=np.int64)
    for i in prange(n):
        indices = vertex_targets(queries[i], targets, stride, offset, limits[i])
        directions, distances = _aim(queries[i], targets, indices)
        result[i] = min_distance_kernel(
            bounds, links, order, tris, queries[i], directions, distances, culling, limits[i],
            stats[i],
        )
    return result, stats


@njit(parallel=True, cache=True)
def _direction_strategy_batch(bounds, links, order, tris, queries, directions, limits, culling):
    n = queries.shape[0]
    result = np.empty(n)
    stats = np.zeros((n, 3), dtype=np.int64)
    unbounded = np.full(directions.shape[1], math.inf)
    for i in prange(n):
        result[i] = min_distance_kernel(
            bounds, links, order, tris, queries[i], directions[i], unbounded, culling, limits[i],
            stats[i],
        )
    return result, stats


# ---------------------------------------------------------------------------
# Direction sampling
# ---------------------------------------------------------------------------


def select_sample_vertices(
    query: Vector3,
    target_vertices: np.ndarray,
    rate: float,
    seed: int,
    dpip: Optional[float] = None,
) -> np.ndarray:
    """
    Indices of the target vertices sampled for one query point.

    Args:
        query: The source point.
        target_vertices: (n, 3) non-empty target vertex positions.
        rate: Sampling rate in (0, 1].
        seed: Selects the offset of the strided selection.
        dpip: Optional distance filter.

    Returns:
        np.ndarray: Non-empty, increasing vertex indices.
    """
    strategy = VertexUniform(rate, seed)
    targets = np.ascontiguousarray(target_vertices, dtype=np.float64).reshape(-1, 3)
    if targets.shape[0] == 0:
        raise ValueError("Target vertex list is empty")
    return vertex_targets(
        np.asarray(query, dtype=np.float64),
        targets,
        strategy.stride,
        strategy.offset,
        math.inf if dpip is None else float(dpip),
    )


def sample_directions_vertex(
    query: Vector3,
    target_vertices: np.ndarray,
    rate: float,
    seed: int,
    dpip: Optional[float] = None,
) -> np.ndarray:
    """
    Unit directions from a query point to its sampled target vertices.

    A sampled vertex that coincides with the query point has no direction and is
    left out. When that leaves nothing, the nearest target vertex that does not
    coincide with the query is aimed at instead.

    Returns:
        np.ndarray: (k, 3) unit directions, k >= 1.

    Raises:
        ValueError: Every target vertex coincides with the query point.
    """
    query = np.asarray(query, dtype=np.float64)
    targets = np.ascontiguousarray(target_vertices, dtype=np.float64).reshape(-1, 3)
    indices = select_sample_vertices(query, targets, rate, seed, dpip)
    directions, distances = _aim(query, targets, indices)
    if np.any(distances > 0.0):
        return directions[distances > 0.0]

    all_distances = np.linalg.norm(targets - query, axis=1)
    apart = np.flatnonzero(all_distances > 0.0)
    if len(apart) == 0:
        raise ValueError("Every target vertex coincides with the query point")
    nearest = apart[np.argmin(all_distances[apart])]
    return (targets[nearest] - query)[None, :] / all_distances[nearest]


def _point_rng(seed: int, point_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, point_id])


def _unit_normals(rng: np.random.Generator, count: int) -> np.ndarray:
    samples = rng.standard_normal((count, 3))
    norms = np.linalg.norm(samples, axis=1)
    while np.any(norms == 0.0):
        redraw = norms == 0.0
        samples[redraw] = rng.standard_normal((int(redraw.sum()), 3))
        norms = np.linalg.norm(samples, axis=1)
    return samples / norms[:, None]


def sample_directions_sphere(count: int, seed: int, point_id: int = 0) -> np.ndarray:
    """
    Draw directions uniformly on the unit sphere.

    The stream is derived from (seed, point_id) alone, so every source point
    gets the same directions regardless of scheduling.

    Returns:
        np.ndarray: (count, 3) unit directions.
    """
    Sphere(count, seed)
    return _unit_normals(_point_rng(seed, point_id), count)


def sample_directions_hemisphere(
    count: int, seed: int, normal: Vector3, point_id: int = 0
) -> np.ndarray:
    """Sphere directions flipped to point away from the given outward normal."""
    directions = sample_directions_sphere(count, seed, point_id)
    normal = np.asarray(normal, dtype=np.float64)
    flip = directions @ normal > 0.0
    directions[flip] *= -1.0
    return directions


def sample_directions_aabb(
    query: Vector3, aabb: Aabb, count: int, seed: int, point_id: int = 0
) -> np.ndarray:
    """
    Directions from a query point to points drawn uniformly in a box.

    Samples equal to the query point are redrawn; if the box is the query point
    itself, the remaining samples are replaced by sphere directions.

    Returns:
        np.ndarray: (count, 3) unit directions.
    """
    AabbBox(count, seed)
    query = np.asarray(query, dtype=np.float64)
    rng = _point_rng(seed, point_id)
    extent = aabb.max - aabb.min
    offsets = aabb.min + rng.random((count, 3)) * extent - query
    norms = np.linalg.norm(offsets, axis=1)
    for _ in range(AABB_RETRIES):
        zero = norms == 0.0
        if not zero.any():
            break
        offsets[zero] = aabb.min + rng.random((int(zero.sum()), 3)) * extent - query
        norms = np.linalg.norm(offsets, axis=1)
    zero = norms == 0.0
    if zero.any():
        offsets[zero] = _unit_normals(rng, int(zero.sum()))
        norms[zero] = 1.0
    return offsets / norms[:, None]


def _sampling_box(query: np.ndarray, surface_box: Aabb, d_pip: float, localize: bool) -> Aabb:
    if not localize or not math.isfinite(d_pip):
        return surface_box
    local = surface_box.intersection(Aabb(query - d_pip, query + d_pip))
    return surface_box if local is None else local


def _strategy_directions(
    sources: PenetrationPointSet,
    target: PenetrationSurface,
    config: HdistConfig,
    rows: slice,
) -> np.ndarray:
    strategy = config.strategy
    ids = sources.vertex_ids[rows]
    positions = sources.positions[rows]
    out = np.empty((len(ids), strategy.count, 3))
    if isinstance(strategy, Sphere):
        for k, vertex_id in enumerate(ids):
            out[k] = sample_directions_sphere(strategy.count, strategy.seed, int(vertex_id))
    elif isinstance(strategy, Hemisphere):
        normals = sources.normals[rows]
        for k, vertex_id in enumerate(ids):
            out[k] = sample_directions_hemisphere(
                strategy.count, strategy.seed, normals[k], int(vertex_id)
            )
    else:
        surface_box = target.aabb()
        d_pip = sources.d_pip[rows]
        for k, vertex_id in enumerate(ids):
            box = _sampling_box(positions[k], surface_box, float(d_pip[k]), config.dpip_filter)
            out[k] = sample_directions_aabb(
                positions[k], box, strategy.count, strategy.seed, int(vertex_id)
            )
    return out


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def min_distance_for_point(
    bvh_target: Bvh,
    query: Vector3,
    directions: np.ndarray,
    culling: bool,
    init_tmax: float = math.inf,
    target_distances: Optional[np.ndarray] = None,
    stats: Optional[TraversalStats] = None,
) -> float:
    """
    Minimum closest-hit distance from one point over a sequence of rays.

    With culling, every ray is limited to the smallest distance found so far
    (starting from init_tmax); without it every ray is limited to init_tmax.
    Both settings return the same value.

    Args:
        bvh_target: Structure over the target surface.
        query: The source point.
        directions: (k, 3) unit directions, cast in order.
        culling: Whether to shorten rays as the minimum improves.
        init_tmax: Initial ray length.
        target_distances: Optional (k,) distances to the vertices the rays aim at;
            each bounds its ray's result even when the ray misses.
        stats: Optional counters to accumulate into.

    Returns:
        float: The minimum, init_tmax when every ray misses (possibly inf).
    """
    directions = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    if directions.shape[0] == 0:
        raise ValueError("At least one ray direction is required")
    if target_distances is None:
        limits = np.full(directions.shape[0], math.inf)
    else:
        limits = np.ascontiguousarray(target_distances, dtype=np.float64)
    counts = np.zeros(3, dtype=np.int64)
    best = min_distance_kernel(
        bvh_target.bounds,
        bvh_target.links,
        bvh_target.order,
        bvh_target.triangles,
        np.asarray(query, dtype=np.float64),
        directions,
        limits,
        bool(culling),
        float(init_tmax),
        counts,
    )
    if stats is not None:
        stats.add_counts(counts)
    return float(best)


def _resolve_misses(
    values: np.ndarray, sources: PenetrationPointSet, target: PenetrationSurface
) -> np.ndarray:
    missed = ~np.isfinite(values)
    if not missed.any():
        return values
    logger.warning(
        f"{sources.source}: {int(missed.sum())} source points hit nothing; using the "
        f"distance to their nearest target vertex"
    )
    for k in np.flatnonzero(missed):
        values[k] = float(np.min(np.linalg.norm(target.vertices - sources.positions[k], axis=1)))
    return values


def point_distances(
    sources: PenetrationPointSet,
    target: PenetrationSurface,
    config: HdistConfig,
    stats: Optional[TraversalStats] = None,
) -> np.ndarray:
    """
    Sampled distance from every source point to the target surface.

    Args:
        sources: Penetration points of one object.
        target: Penetration surface of the other object.
        config: Sampling and culling configuration.
        stats: Optional counters to accumulate into.

    Returns:
        np.ndarray: (k,) finite per-point distances, in source order.
    """
    if sources.is_empty:
        raise ValueError("Source point set is empty")
    if target.is_empty:
        raise ValueError("Target penetration surface is empty")
    bvh = target.bvh
    queries = np.ascontiguousarray(sources.positions, dtype=np.float64)
    if config.dpip_filter:
        limits = np.ascontiguousarray(sources.d_pip, dtype=np.float64)
    else:
        limits = np.full(len(sources), math.inf)

    strategy = config.strategy
    if isinstance(strategy, VertexUniform):
        values, per_point = _vertex_strategy_batch(
            bvh.bounds,
            bvh.links,
            bvh.order,
            bvh.triangles,
            queries,
            np.ascontiguousarray(target.vertices, dtype=np.float64),
            strategy.stride,
            strategy.offset,
            limits,
            config.culling,
        )
        if stats is not None:
            stats.add_counts(per_point)
    else:
        values = np.empty(len(sources))
        for start in range(0, len(sources), CHUNK_SIZE):
            rows = slice(start, start + CHUNK_SIZE)
            directions = _strategy_directions(sources, target, config, rows)
            values[rows], per_point = _direction_strategy_batch(
                bvh.bounds,
                bvh.links,
                bvh.order,
                bvh.triangles,
                queries[rows],
                directions,
                limits[rows],
                config.culling,
            )
            if stats is not None:
                stats.add_counts(per_point)
    return _resolve_misses(values, sources, target)


def directional_hausdorff(
    sources: PenetrationPointSet,
    target: PenetrationSurface,
    config: HdistConfig,
    stats: Optional[TraversalStats] = None,
) -> Tuple[float, int, TraversalStats]:
    """
    Sampled directional Hausdorff distance from a point set to a surface.

    Returns:
        Tuple[float, int, TraversalStats]: The distance, the source vertex
            attaining it (smallest id on ties) and the traversal counters of
            this call.
    """
    local = TraversalStats()
    values = point_distances(sources, target, config, local)
    k = int(np.argmax(values))
    h = float(values[k])
    witness = int(sources.vertex_ids[k])
    logger.info(f"{sources.source}: directional distance {h!r} attained at vertex {witness}")
    logger.debug(f"{sources.source}: traversal {local.as_dict()}")
    if stats is not None:
        stats.merge(local)
    return h, witness, local


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def penetration_depth(
    mesh_a: TriangleMesh, mesh_b: TriangleMesh, config: Optional[HdistConfig] = None
) -> HdistResult:
    """
    Penetration depth of two closed meshes.

    Runs point-in-polyhedron both ways, builds both penetration surfaces and
    takes the larger of the two directional Hausdorff distances between them.

    Args:
        mesh_a: First closed mesh.
        mesh_b: Second closed mesh.
        config: Sampling configuration; defaults to vertex sampling at rate 0.01.

    Returns:
        HdistResult: The depth, with status NoOverlap and depth 0 when either
            object has no vertex inside the other.

    Raises:
        NotClosedError: If either mesh is not closed.
    """
    config = config or HdistConfig()
    require_closed(mesh_a)
    require_closed(mesh_b)
    timings = {}

    start = time.perf_counter()
    bvh_a = build_bvh(mesh_a)
    bvh_b = build_bvh(mesh_b)
    pip_stats = TraversalStats()
    points_a = extract_penetration_points(bvh_b, mesh_a, config.pip_axis, "A", pip_stats)
    points_b = extract_penetration_points(bvh_a, mesh_b, config.pip_axis, "B", pip_stats)
    timings["pip"] = _elapsed_ms(start)

    def no_overlap(surface_a=None, surface_b=None) -> HdistResult:
        logger.info("No penetration between the meshes")
        return HdistResult(
            h_ab=0.0,
            h_ba=0.0,
            depth=0.0,
            witness_ab=None,
            witness_ba=None,
            stats=TraversalStats(),
            status=Status.NO_OVERLAP,
            pip_stats=pip_stats,
            points_a=len(points_a),
            points_b=len(points_b),
            surface_triangles_a=surface_a.triangle_count if surface_a else 0,
            surface_triangles_b=surface_b.triangle_count if surface_b else 0,
            timings=timings,
        )

    if points_a.is_empty or points_b.is_empty:
        return no_overlap()

    start = time.perf_counter()
    surface_a = build_penetration_surface(mesh_a, points_a)
    surface_b = build_penetration_surface(mesh_b, points_b)
    timings["psg"] = _elapsed_ms(start)
    if surface_a.point_set.is_empty or surface_b.point_set.is_empty:
        return no_overlap(surface_a, surface_b)

    start = time.perf_counter()
    stats = TraversalStats()
    h_ab, witness_ab, _ = directional_hausdorff(surface_a.point_set, surface_b, config, stats)
    h_ba, witness_ba, _ = directional_hausdorff(surface_b.point_set, surface_a, config, stats)
    timings["hdist"] = _elapsed_ms(start)

    depth = max(h_ab, h_ba)
    logger.info(f"Penetration depth {depth!r} (h_ab={h_ab!r}, h_ba={h_ba!r})")
    return HdistResult(
        h_ab=h_ab,
        h_ba=h_ba,
        depth=depth,
        witness_ab=witness_ab,
        witness_ba=witness_ba,
        stats=stats,
        status=Status.OK,
        pip_stats=pip_stats,
        points_a=len(surface_a.point_set),
        points_b=len(surface_b.point_set),
        surface_triangles_a=surface_a.triangle_count,
        surface_triangles_b=surface_b.triangle_count,
        timings=timings,
    )
