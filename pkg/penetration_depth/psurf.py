#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Penetration Surface Module

This module turns a penetration point set into a standalone sub-mesh: every
triangle of the source mesh with at least one inside vertex, re-indexed over a
compacted vertex list. The construction runs in three bulk steps (vertex
extraction, compaction and mapping) followed by a BVH build.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from penetration_depth.accel import Bvh, build_bvh
from penetration_depth.errors import SurfaceError
from penetration_depth.mesh import Aabb, PathLike, TriangleMesh, save_obj
from penetration_depth.pip import PenetrationPointSet

logger = logging.getLogger("penetration_depth.psurf")

ABSENT = -1


@dataclass(frozen=True, eq=False)
class SurfaceTriangleList:
    """Triangles with at least one inside vertex, in original order and indices."""

    triangles: np.ndarray
    source_triangle_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.triangles.shape[0])


@dataclass(frozen=True, eq=False)
class VertexIdList:
    """Sorted, duplicate-free original vertex indices referenced by surface triangles."""

    ids: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])


@dataclass(frozen=True, eq=False)
class LookupTable:
    """Original vertex index -> compact index, ABSENT for vertices not on the surface."""

    map: np.ndarray

    def __getitem__(self, index):
        return self.map[index]


@dataclass(frozen=True, eq=False)
class PenetrationSurface:
    """
    A penetration surface with its ray sources and acceleration structure.

    Attributes:
        vertices: (k, 3) compacted vertex positions, including rim vertices that
            are referenced by surface triangles but not inside the other object.
        triangles: (t, 3) triangles re-indexed into vertices.
        point_set: The inside vertices lying on this surface (ray sources).
        bvh: Structure over the remapped triangles; None for an empty surface.
        vertex_ids: Original vertex index of every compacted vertex.
        source_triangle_ids: Original triangle index of every surface triangle.
        lookup: Original -> compact vertex index table.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    point_set: PenetrationPointSet
    bvh: Optional[Bvh]
    vertex_ids: np.ndarray
    source_triangle_ids: np.ndarray
    lookup: LookupTable

    @property
    def is_empty(self) -> bool:
        return self.triangles.shape[0] == 0

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])

    def triangle_positions(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def aabb(self) -> Aabb:
        return Aabb.from_points(self.vertices)

    def to_mesh(self, name: str = "penetration_surface") -> TriangleMesh:
        return TriangleMesh(self.vertices, self.triangles, name=name)


def collect_penetration_triangles(mesh: TriangleMesh, flags: np.ndarray) -> SurfaceTriangleList:
    """
    Select every triangle with at least one flagged vertex, keeping original order.

    Args:
        mesh: The source mesh.
        flags: (n,) boolean inside flag per vertex.

    Returns:
        SurfaceTriangleList: The selected triangles and their original ids.
    """
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != (mesh.vertex_count,):
        raise ValueError(
            f"Expected {mesh.vertex_count} inside flags, got an array of shape {flags.shape}"
        )
    selected = flags[mesh.triangles].any(axis=1)
    ids = np.flatnonzero(selected).astype(np.int64)
    return SurfaceTriangleList(triangles=mesh.triangles[ids], source_triangle_ids=ids)


def extract_unique_vertices(triangle_list: SurfaceTriangleList) -> VertexIdList:
    """Reduce the triangle list's vertex indices to a sorted, duplicate-free list."""
    return VertexIdList(ids=np.unique(triangle_list.triangles.reshape(-1)).astype(np.int64))


def compact_vertices(mesh: TriangleMesh, ids: VertexIdList):
    """
    Gather the listed vertices into a compact array and record where each went.

    Args:
        mesh: The source mesh.
        ids: Original indices to keep.

    Returns:
        Tuple[np.ndarray, LookupTable]: compacted[t] = original[ids[t]], and a
            table with lookup[ids[t]] = t and ABSENT elsewhere.
    """
    table = np.full(mesh.vertex_count, ABSENT, dtype=np.int64)
    table[ids.ids] = np.arange(len(ids), dtype=np.int64)
    return mesh.vertices[ids.ids].copy(), LookupTable(map=table)


def remap_triangles(triangle_list: SurfaceTriangleList, lookup: LookupTable) -> np.ndarray:
    """
    Replace every original vertex index with its compact index.

    Raises:
        SurfaceError: If a referenced vertex has no compact index.
    """
    remapped = lookup.map[triangle_list.triangles]
    if np.any(remapped == ABSENT):
        bad = int(np.argwhere((remapped == ABSENT).any(axis=1))[0, 0])
        logger.error(f"Surface triangle {bad} references a vertex missing from the lookup table")
        raise SurfaceError(
            f"Surface triangle {bad} (source triangle "
            f"{int(triangle_list.source_triangle_ids[bad])}) references a vertex "
            f"with no compact index"
        )
    return remapped


def build_penetration_surface(
    mesh: TriangleMesh, point_set: PenetrationPointSet
) -> PenetrationSurface:
    """
    Build the penetration surface of a mesh from its penetration points.

    Args:
        mesh: The mesh the point set was extracted from.
        point_set: Inside vertices of the mesh.

    Returns:
        PenetrationSurface: The compacted surface; empty (no triangles and no
            BVH) when the point set is empty.
    """
    triangle_list = collect_penetration_triangles(mesh, point_set.inside_flags)
    vertex_list = extract_unique_vertices(triangle_list)
    compacted, lookup = compact_vertices(mesh, vertex_list)
    triangles = remap_triangles(triangle_list, lookup)

    # inside vertices that no triangle references cannot serve as surface points
    on_surface = lookup.map[point_set.vertex_ids] != ABSENT
    sources = point_set if on_surface.all() else point_set.subset(on_surface)

    bvh = build_bvh(compacted[triangles]) if len(triangles) else None
    if bvh is None:
        logger.warning(f"{point_set.source}: penetration surface of {mesh.name!r} is empty")
    else:
        logger.info(
            f"{point_set.source}: penetration surface has {len(triangles)} triangles over "
            f"{len(compacted)} vertices ({len(sources)} ray sources)"
        )
    return PenetrationSurface(
        vertices=compacted,
        triangles=triangles,
        point_set=sources,
        bvh=bvh,
        vertex_ids=vertex_list.ids,
        source_triangle_ids=triangle_list.source_triangle_ids,
        lookup=lookup,
    )


def export_surface_obj(surface: PenetrationSurface, path: PathLike) -> None:
    """Write a penetration surface as Wavefront OBJ for inspection."""
    save_obj(surface.to_mesh(), path)
