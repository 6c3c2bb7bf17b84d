#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Point-in-Polyhedron Module

This module classifies the vertices of one object as inside or outside a
closed second object by ray-cast parity. A vertex is inside only when rays in
both directions along the PIP axis cross the other surface an odd number of
times; the first-hit distance of those rays (d_pip) is kept as an upper bound
on the vertex's distance to the other object.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from penetration_depth.accel import (
    Bvh,
    Ray,
    TraversalStats,
    count_and_first_hits,
    count_hits_kernel,
)
from penetration_depth.mesh import TriangleMesh, Vector3, axis_index, vertex_normals

logger = logging.getLogger("penetration_depth.pip")

DEFAULT_AXIS = (1.0, 0.0, 0.0)


def axis_direction(axis: Union[str, int, Vector3]) -> np.ndarray:
    """
    Resolve an axis name, index or vector into a unit direction.

    Args:
        axis: "x", "y", "z", 0..2, or an explicit non-zero 3-vector.

    Returns:
        np.ndarray: The unit direction.
    """
    if isinstance(axis, (str, int)):
        direction = np.zeros(3)
        direction[axis_index(axis)] = 1.0
        return direction
    direction = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        raise ValueError("PIP axis must be non-zero")
    return direction / norm


@dataclass(frozen=True)
class PenetrationPoint:
    """A vertex of one object found inside the other object."""

    original_vertex_id: int
    position: Tuple[float, float, float]
    d_pip: float


@dataclass(frozen=True, eq=False)
class PenetrationPointSet:
    """
    The vertices of one object classified inside the other.

    Attributes:
        source: Label of the object the vertices belong to ("A" or "B").
        vertex_ids: Strictly increasing original vertex indices of inside vertices.
        positions: (k, 3) positions of those vertices.
        d_pip: (k,) first-hit distances of the PIP rays (minimum of both directions).
        inside_flags: (n,) boolean flag per source vertex.
        normals: (k, 3) outward unit vertex normals of the inside vertices.
    """

    source: str
    vertex_ids: np.ndarray
    positions: np.ndarray
    d_pip: np.ndarray
    inside_flags: np.ndarray
    normals: np.ndarray

    def __len__(self) -> int:
        return int(self.vertex_ids.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    @property
    def points(self) -> List[PenetrationPoint]:
        return [
            PenetrationPoint(int(i), tuple(p), float(d))
            for i, p, d in zip(self.vertex_ids, self.positions.tolist(), self.d_pip)
        ]

    def subset(self, keep: np.ndarray) -> "PenetrationPointSet":
        """
        Return the points selected by a boolean mask over this set.

        The inside flags of dropped points are cleared so that points and flags
        still agree.
        """
        keep = np.asarray(keep, dtype=bool)
        flags = np.zeros_like(self.inside_flags)
        flags[self.vertex_ids[keep]] = True
        return PenetrationPointSet(
            source=self.source,
            vertex_ids=self.vertex_ids[keep],
            positions=self.positions[keep],
            d_pip=self.d_pip[keep],
            inside_flags=flags,
            normals=self.normals[keep],
        )


def pip_one_way(
    bvh: Bvh,
    point: Vector3,
    direction: Vector3,
    stats: Optional[TraversalStats] = None,
) -> Tuple[bool, Optional[float]]:
    """
    Cast one unbounded ray and report its crossing parity.

    Args:
        bvh: Structure over a closed mesh.
        point: Ray origin.
        direction: Unit ray direction.
        stats: Optional counters to accumulate into.

    Returns:
        Tuple[bool, Optional[float]]: Whether the crossing count is odd, and the
            closest-hit distance (None when nothing is hit).
    """
    ray = Ray(point, direction)
    counts = np.zeros(3, dtype=np.int64)
    hits, first_t, first_id = count_hits_kernel(
        bvh.bounds, bvh.links, bvh.order, bvh.triangles, ray.origin, ray.direction, math.inf, counts
    )
    if stats is not None:
        stats.add_counts(counts)
    return bool(hits % 2 == 1), (float(first_t) if first_id >= 0 else None)


def pip_two_way(
    bvh: Bvh,
    point: Vector3,
    axis_direction: Vector3 = DEFAULT_AXIS,
    stats: Optional[TraversalStats] = None,
) -> Tuple[bool, Optional[float]]:
    """
    Classify a point by parity along both directions of an axis.

    Args:
        bvh: Structure over a closed mesh.
        point: The point to classify.
        axis_direction: Unit axis; rays are cast along it and against it.
        stats: Optional counters to accumulate into.

    Returns:
        Tuple[bool, Optional[float]]: Whether the point is inside, and d_pip (the
            smaller of the two first-hit distances) when it is.
    """
    forward = np.asarray(axis_direction, dtype=np.float64)
    odd_forward, hit_forward = pip_one_way(bvh, point, forward, stats)
    odd_backward, hit_backward = pip_one_way(bvh, point, -forward, stats)
    if not (odd_forward and odd_backward):
        return False, None
    # odd parity implies at least one hit each way
    return True, min(hit_forward, hit_backward)


def extract_penetration_points(
    bvh_other: Bvh,
    source_mesh: TriangleMesh,
    axis: Union[str, int, Vector3] = "x",
    source: str = "A",
    stats: Optional[TraversalStats] = None,
) -> PenetrationPointSet:
    """
    Run the two-way test for every vertex of a mesh against another object.

    Vertices are classified independently and in parallel; the result does not
    depend on evaluation order or thread count.

    Args:
        bvh_other: Structure over the other, closed object.
        source_mesh: The mesh whose vertices are classified.
        axis: PIP axis.
        source: Label stored in the result.
        stats: Optional counters to accumulate into.

    Returns:
        PenetrationPointSet: The inside vertices with their d_pip values.
    """
    forward = axis_direction(axis)
    origins = source_mesh.vertices
    count_fwd, first_fwd, _ = count_and_first_hits(bvh_other, origins, forward, math.inf, stats)
    count_bwd, first_bwd, _ = count_and_first_hits(bvh_other, origins, -forward, math.inf, stats)

    flags = (count_fwd % 2 == 1) & (count_bwd % 2 == 1)
    vertex_ids = np.flatnonzero(flags).astype(np.int64)
    d_pip = np.minimum(first_fwd[vertex_ids], first_bwd[vertex_ids])
    normals = vertex_normals(source_mesh)[vertex_ids] if len(vertex_ids) else np.zeros((0, 3))

    logger.info(
        f"{source}: {len(vertex_ids)} of {source_mesh.vertex_count} vertices of "
        f"{source_mesh.name!r} are inside the other object"
    )
    return PenetrationPointSet(
        source=source,
        vertex_ids=vertex_ids,
        positions=origins[vertex_ids].copy(),
        d_pip=d_pip,
        inside_flags=flags,
        normals=normals,
    )
