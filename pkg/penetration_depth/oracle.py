#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Oracle Module

This module provides brute-force reference computations used as ground truth:
linear-scan point-in-polyhedron classification, exact point/triangle distances
and vertex-pair Hausdorff distances. Everything here is plain numpy and shares
no code with the ray tracing path, so that agreement between the two is
evidence rather than a tautology.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from penetration_depth.errors import IndeterminateError
from penetration_depth.mesh import TriangleMesh, Vector3

logger = logging.getLogger("penetration_depth.oracle")

SURFACE_TOLERANCE = 1e-9
GRAZE_TOLERANCE = 1e-12
MAX_RETRIES = 16
# upper bound on the number of pairwise distances held in memory at once
PAIR_BLOCK = 1 << 22


class Verdict(Enum):
    INSIDE = "Inside"
    OUTSIDE = "Outside"
    ON_SURFACE = "OnSurface"


@dataclass(frozen=True)
class OracleVerdict:
    """Outcome of a brute-force inside test."""

    inside: Verdict
    used_perturbation: bool = False


def _segment_distances(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    ap = point - a
    length_sq = np.einsum("ij,ij->i", ab, ab)
    safe = np.where(length_sq > 0.0, length_sq, 1.0)
    t = np.where(length_sq > 0.0, np.einsum("ij,ij->i", ap, ab) / safe, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(ap - t[:, None] * ab, axis=1)


def point_triangle_distances(point: Vector3, triangles: np.ndarray) -> np.ndarray:
    """
    Exact Euclidean distance from one point to each of many closed triangles.

    Args:
        point: The query point.
        triangles: (m, 3, 3) triangle corner positions; degenerate triangles are
            measured as segments or points.

    Returns:
        np.ndarray: (m,) distances.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]

    edges = np.minimum(
        np.minimum(_segment_distances(p, a, b), _segment_distances(p, b, c)),
        _segment_distances(p, c, a),
    )

    normal = np.cross(b - a, c - a)
    norm = np.linalg.norm(normal, axis=1)
    flat = norm > 0.0
    safe = np.where(flat, norm, 1.0)
    unit = normal / safe[:, None]
    height = np.einsum("ij,ij->i", p - a, unit)
    foot = p - height[:, None] * unit

    # the foot lies inside when it is on the inner side of all three edges
    side_ab = np.einsum("ij,ij->i", np.cross(b - a, foot - a), normal)
    side_bc = np.einsum("ij,ij->i", np.cross(c - b, foot - b), normal)
    side_ca = np.einsum("ij,ij->i", np.cross(a - c, foot - c), normal)
    inside = flat & (side_ab >= 0.0) & (side_bc >= 0.0) & (side_ca >= 0.0)
    return np.where(inside, np.minimum(np.abs(height), edges), edges)


def point_triangle_distance(point: Vector3, v0: Vector3, v1: Vector3, v2: Vector3) -> float:
    """Exact Euclidean distance from a point to a closed triangle."""
    return float(point_triangle_distances(point, np.array([[v0, v1, v2]], dtype=np.float64))[0])


def _distance_to_mesh(point: np.ndarray, tris: np.ndarray, within: float) -> float:
    """Distance to the nearest triangle, or inf when every triangle is farther than within."""
    lo = tris.min(axis=1) - within
    hi = tris.max(axis=1) + within
    near = np.all((point >= lo) & (point <= hi), axis=1)
    if not near.any():
        return np.inf
    return float(point_triangle_distances(point, tris[near]).min())


def _crossings(
    origin: np.ndarray, direction: np.ndarray, tris: np.ndarray
) -> Tuple[int, bool]:
    """Count ray/triangle crossings by linear scan; also report whether any was ambiguous."""
    a = tris[:, 0]
    e1 = tris[:, 1] - a
    e2 = tris[:, 2] - a
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    s = origin - a

    parallel = np.abs(det) <= GRAZE_TOLERANCE * np.linalg.norm(e1, axis=1) * np.linalg.norm(
        e2, axis=1
    )
    normal = np.cross(e1, e2)
    plane_gap = np.abs(np.einsum("ij,ij->i", s, normal))
    in_plane = parallel & (plane_gap <= SURFACE_TOLERANCE * np.linalg.norm(normal, axis=1))

    safe = np.where(parallel, 1.0, det)
    u = np.einsum("ij,ij->i", s, pvec) / safe
    qvec = np.cross(s, e1)
    v = (qvec @ direction) / safe
    t = np.einsum("ij,ij->i", e2, qvec) / safe
    w = 1.0 - u - v

    candidate = ~parallel & (t > 0.0)
    margin = np.minimum(np.minimum(u, v), w)
    hit = candidate & (margin >= 0.0)
    grazing = candidate & (np.abs(margin) <= GRAZE_TOLERANCE)
    ambiguous = bool(grazing.any() or in_plane.any())
    return int(np.count_nonzero(hit)), ambiguous


def brute_pip(mesh: TriangleMesh, point: Vector3, seed: int = 0) -> OracleVerdict:
    """
    Classify a point against a closed mesh by linear-scan ray parity.

    The first ray goes along +x. Whenever a ray grazes an edge or vertex, or runs
    in the plane of a triangle, it is recast along a random direction drawn from
    a stream seeded with seed.

    Args:
        mesh: A closed mesh.
        point: The point to classify.
        seed: Seed of the retry direction stream.

    Returns:
        OracleVerdict: Inside, Outside, or OnSurface within 1e-9 of the mesh.

    Raises:
        IndeterminateError: If every retry was ambiguous.
    """
    origin = np.asarray(point, dtype=np.float64).reshape(3)
    tris = mesh.triangle_positions()
    if _distance_to_mesh(origin, tris, SURFACE_TOLERANCE) < SURFACE_TOLERANCE:
        return OracleVerdict(Verdict.ON_SURFACE)

    rng = np.random.default_rng(seed)
    direction = np.array([1.0, 0.0, 0.0])
    for attempt in range(MAX_RETRIES + 1):
        crossings, ambiguous = _crossings(origin, direction, tris)
        if not ambiguous:
            inside = Verdict.INSIDE if crossings % 2 == 1 else Verdict.OUTSIDE
            return OracleVerdict(inside, used_perturbation=attempt > 0)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
    logger.error(f"Inside test of {origin.tolist()} still ambiguous after {MAX_RETRIES} retries")
    raise IndeterminateError(
        f"Could not classify point {origin.tolist()} against {mesh.name!r} "
        f"after {MAX_RETRIES} retries"
    )


def _as_points(points) -> np.ndarray:
    array = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if array.shape[0] == 0:
        raise ValueError("Point list is empty")
    return array


def nearest_distances(points_a, points_b) -> np.ndarray:
    """Distance from every point of A to its nearest point of B, by exhaustive pairs."""
    a = _as_points(points_a)
    b = _as_points(points_b)
    block = max(1, PAIR_BLOCK // b.shape[0])
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], block):
        chunk = a[start : start + block]
        dx = b[None, :, 0] - chunk[:, 0, None]
        dy = b[None, :, 1] - chunk[:, 1, None]
        dz = b[None, :, 2] - chunk[:, 2, None]
        out[start : start + block] = np.sqrt((dx * dx + dy * dy + dz * dz).min(axis=1))
    return out


def brute_hausdorff_vertices(points_a, points_b) -> float:
    """
    Directional Hausdorff distance h(A, B) over all vertex pairs.

    Raises:
        ValueError: If either list is empty.
    """
    return float(nearest_distances(points_a, points_b).max())


def point_surface_distances(points, triangles) -> np.ndarray:
    """Distance from every point to the nearest of the triangles."""
    pts = _as_points(points)
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    if tris.shape[0] == 0:
        raise ValueError("Triangle list is empty")
    return np.array([point_triangle_distances(p, tris).min() for p in pts])


def brute_point_surface_h(points, triangles) -> float:
    """
    Max over points of the distance to the nearest triangle.

    Raises:
        ValueError: If either input is empty.
    """
    return float(point_surface_distances(points, triangles).max())


def classify_vertices(mesh: TriangleMesh, other: TriangleMesh, seed: int = 0) -> np.ndarray:
    """
    Inside flags of a mesh's vertices with respect to another closed mesh.

    Vertices on the other surface count as outside.
    """
    flags = np.zeros(mesh.vertex_count, dtype=bool)
    for i, vertex in enumerate(mesh.vertices):
        flags[i] = brute_pip(other, vertex, seed).inside is Verdict.INSIDE
    return flags


def surface_vertex_ids(mesh: TriangleMesh, flags: np.ndarray) -> np.ndarray:
    """Sorted vertex ids referenced by the triangles with at least one flagged vertex."""
    triangles = mesh.triangles[np.asarray(flags, dtype=bool)[mesh.triangles].any(axis=1)]
    return np.unique(triangles)


def oracle_depth(mesh_a: TriangleMesh, mesh_b: TriangleMesh, seed: int = 0) -> float:
    """
    Vertex-pair ground truth of the penetration depth of two closed meshes.

    Penetration points are classified by brute_pip; each direction measures the
    penetration points of one mesh against the vertices of the other mesh's
    penetration surface.

    Returns:
        float: The larger directional distance, 0.0 when either mesh
            has no vertex inside the other.
    """
    flags_a = classify_vertices(mesh_a, mesh_b, seed)
    flags_b = classify_vertices(mesh_b, mesh_a, seed)
    logger.info(
        f"Oracle classified {int(flags_a.sum())} vertices of A and {int(flags_b.sum())} "
        f"vertices of B as inside"
    )
    if not flags_a.any() or not flags_b.any():
        return 0.0
    h_ab = brute_hausdorff_vertices(
        mesh_a.vertices[flags_a], mesh_b.vertices[surface_vertex_ids(mesh_b, flags_b)]
    )
    h_ba = brute_hausdorff_vertices(
        mesh_b.vertices[flags_b], mesh_a.vertices[surface_vertex_ids(mesh_a, flags_a)]
    )
    logger.debug(f"Oracle h_ab={h_ab!r} h_ba={h_ba!r}")
    return max(h_ab, h_ba)
