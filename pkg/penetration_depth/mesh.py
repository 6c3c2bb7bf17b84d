#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Mesh Module

This module provides the triangle mesh value type, OBJ / ASCII PLY loading and
saving, closedness checks, rigid placement and the construction of benchmark
scenes with a prescribed overlap ratio.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from penetration_depth.errors import MeshError, MeshFormatError, NotClosedError

logger = logging.getLogger("penetration_depth.mesh")

PathLike = Union[str, "os.PathLike[str]"]
Vector3 = Union[Sequence[float], np.ndarray]

AXES = {"x": 0, "y": 1, "z": 2}


def axis_index(axis: Union[str, int]) -> int:
    """
    Convert an axis name or index into an index in 0..2.

    Args:
        axis: One of "x", "y", "z" or 0, 1, 2.

    Returns:
        int: The axis index.
    """
    if isinstance(axis, str):
        try:
            return AXES[axis.lower()]
        except KeyError:
            raise ValueError(f"Unknown axis {axis!r}, expected one of x, y, z") from None
    if axis not in (0, 1, 2):
        raise ValueError(f"Axis index must be 0, 1 or 2, got {axis}")
    return int(axis)


@dataclass(frozen=True, eq=False)
class Aabb:
    """An axis-aligned bounding box with min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"Aabb min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Aabb":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("Cannot bound an empty point set")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    def intersection(self, other: "Aabb") -> Optional["Aabb"]:
        """Return the overlap of two boxes, or None when they are disjoint."""
        lo = np.maximum(self.min, other.min)
        hi = np.minimum(self.max, other.max)
        if np.any(lo > hi):
            return None
        return Aabb(lo, hi)

    def inflate(self, margin: float) -> "Aabb":
        return Aabb(self.min - margin, self.max + margin)

    def contains(self, point: Vector3) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= self.min) and np.all(p <= self.max))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """
    An indexed triangle set.

    Attributes:
        vertices: (n, 3) float64 array of vertex positions, in file order.
        triangles: (m, 3) int64 array of vertex index triples, in file order.
        name: Free-form label used in logs and reports.

    Both arrays are made read-only on construction; the value is safe to share
    between threads.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = field(default="mesh", compare=False)

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64, copy=True)
        triangles = np.array(self.triangles, dtype=np.int64, copy=True)
        if vertices.size == 0:
            vertices = vertices.reshape(0, 3)
        if triangles.size == 0:
            triangles = triangles.reshape(0, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"Vertices must have shape (n, 3), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError(f"Triangles must have shape (m, 3), got {triangles.shape}")
        if not np.all(np.isfinite(vertices)):
            bad = int(np.argwhere(~np.isfinite(vertices).all(axis=1))[0, 0])
            raise MeshError(f"Vertex {bad} has a non-finite coordinate")
        if len(triangles):
            out_of_range = (triangles < 0) | (triangles >= len(vertices))
            if out_of_range.any():
                bad = int(np.argwhere(out_of_range.any(axis=1))[0, 0])
                raise MeshError(
                    f"Triangle {bad} {triangles[bad].tolist()} references a vertex "
                    f"outside 0..{len(vertices) - 1}"
                )
            repeated = (
                (triangles[:, 0] == triangles[:, 1])
                | (triangles[:, 1] == triangles[:, 2])
                | (triangles[:, 2] == triangles[:, 0])
            )
            if repeated.any():
                bad = int(np.argmax(repeated))
                raise MeshError(f"Triangle {bad} {triangles[bad].tolist()} repeats a vertex index")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])

    def aabb(self) -> Aabb:
        return Aabb.from_points(self.vertices)

    def triangle_positions(self) -> np.ndarray:
        """Return a (m, 3, 3) array with the three corner positions of every triangle."""
        return self.vertices[self.triangles]

    def __repr__(self) -> str:
        return (
            f"<TriangleMesh {self.name}: {self.vertex_count} vertices, "
            f"{self.triangle_count} triangles>"
        )


@dataclass(frozen=True)
class SceneConfig:
    """
    Description of a two-object benchmark scene.

    Attributes:
        path_a: Mesh source for object A (path, URL or builtin spec).
        path_b: Mesh source for object B; may equal path_a.
        overlap_ratio: Fractional AABB overlap along the axis, in (0, 1].
        axis: Placement axis, one of "x", "y", "z".
        translation: Explicit translation for B; overrides overlap_ratio when set.
    """

    path_a: str
    path_b: str
    overlap_ratio: float = 0.5
    axis: str = "x"
    translation: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if not 0.0 < self.overlap_ratio <= 1.0:
            raise ValueError(f"overlap_ratio must be in (0, 1], got {self.overlap_ratio}")
        axis_index(self.axis)
        if self.translation is not None:
            if len(self.translation) != 3:
                raise ValueError("translation must have three components")
            object.__setattr__(self, "translation", tuple(float(c) for c in self.translation))


def _parse_obj_index(token: str, vertex_count: int, path: str, line_no: int) -> int:
    head = token.split("/")[0]
    try:
        value = int(head)
    except ValueError:
        raise MeshFormatError(f"Invalid face index {token!r}", path, line_no) from None
    if value == 0:
        raise MeshFormatError(
            "Face index 0 is not valid in OBJ (indices are 1-based)", path, line_no
        )
    # negative indices are relative to the vertices read so far
    return value - 1 if value > 0 else vertex_count + value


def _load_obj(path: str) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    face_lines: List[int] = []

    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise MeshFormatError("Vertex record needs three coordinates", path, line_no)
                try:
                    vertices.append([float(x) for x in tokens[1:4]])
                except ValueError:
                    raise MeshFormatError(
                        f"Invalid vertex coordinates {tokens[1:4]}", path, line_no
                    ) from None
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise MeshFormatError(
                        f"Face has {len(tokens) - 1} vertices, only triangles are supported",
                        path,
                        line_no,
                    )
                faces.append(
                    [_parse_obj_index(t, len(vertices), path, line_no) for t in tokens[1:]]
                )
                face_lines.append(line_no)
            # vn, vt, o, g, s, usemtl, mtllib and other records carry nothing we use

    return (
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
        face_lines,
    )


def _load_ply(path: str) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        lines = f.readlines()

    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("Missing 'ply' magic line", path, 1)

    # (name, count, properties) in header order
    elements: List[Tuple[str, int, List[str]]] = []
    header_end = None
    for line_no, line in enumerate(lines[1:], 2):
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise MeshFormatError(
                    f"Unsupported PLY format {' '.join(tokens[1:])!r}, only ascii is supported",
                    path,
                    line_no,
                )
        elif tokens[0] == "element":
            try:
                elements.append((tokens[1], int(tokens[2]), []))
            except (IndexError, ValueError):
                raise MeshFormatError("Malformed element declaration", path, line_no) from None
        elif tokens[0] == "property":
            if not elements:
                raise MeshFormatError("Property declared before any element", path, line_no)
            elements[-1][2].append(tokens[-1])
        elif tokens[0] == "end_header":
            header_end = line_no
            break
        else:
            raise MeshFormatError(f"Unexpected header record {tokens[0]!r}", path, line_no)

    if header_end is None:
        raise MeshFormatError("Missing end_header", path)

    vertices = np.zeros((0, 3))
    faces = np.zeros((0, 3), dtype=np.int64)
    face_lines: List[int] = []
    cursor = header_end  # index into lines of the first body line
    for name, count, properties in elements:
        body = lines[cursor : cursor + count]
        if len(body) < count:
            raise MeshFormatError(
                f"Expected {count} {name} records, file ends after {len(body)}", path
            )
        if name == "vertex":
            try:
                columns = [properties.index(axis) for axis in ("x", "y", "z")]
            except ValueError:
                raise MeshFormatError("Vertex element lacks x, y, z properties", path) from None
            rows = []
            for offset, line in enumerate(body):
                tokens = line.split()
                try:
                    rows.append([float(tokens[c]) for c in columns])
                except (IndexError, ValueError):
                    raise MeshFormatError(
                        "Malformed vertex record", path, cursor + offset + 1
                    ) from None
            vertices = np.array(rows, dtype=np.float64).reshape(-1, 3)
        elif name == "face":
            rows_f = []
            for offset, line in enumerate(body):
                line_no = cursor + offset + 1
                tokens = line.split()
                try:
                    n = int(tokens[0])
                    if n != 3:
                        raise MeshFormatError(
                            f"Face has {n} vertices, only triangles are supported", path, line_no
                        )
                    if len(tokens) < n + 1:
                        raise MeshFormatError(
                            f"Face record lists {len(tokens) - 1} of {n} indices", path, line_no
                        )
                    rows_f.append([int(t) for t in tokens[1:4]])
                except (IndexError, ValueError):
                    raise MeshFormatError("Malformed face record", path, line_no) from None
                face_lines.append(line_no)
            faces = np.array(rows_f, dtype=np.int64).reshape(-1, 3)
        cursor += count

    return vertices, faces, face_lines


def load_mesh(path: PathLike, format: Optional[str] = None) -> TriangleMesh:
    """
    Load a triangle mesh from a Wavefront OBJ or ASCII PLY file.

    Args:
        path: The file to read.
        format: "obj" or "ply"; guessed from the file extension when omitted.

    Returns:
        TriangleMesh: The mesh, with vertex and triangle order preserved from the file.

    Raises:
        MeshFormatError: If the file does not parse, a face is not a triangle, a face
            references a missing vertex or repeats a vertex index.
        OSError: If the file cannot be read.
    """
    path = os.fspath(path)
    fmt = (format or Path(path).suffix.lstrip(".")).lower()
    if fmt not in ("obj", "ply"):
        raise MeshFormatError(f"Cannot determine mesh format (got {fmt!r})", path)

    logger.debug(f"Loading {fmt.upper()} mesh from {path}")
    vertices, faces, face_lines = _load_obj(path) if fmt == "obj" else _load_ply(path)

    base = 1 if fmt == "obj" else 0
    for face_id, (face, line_no) in enumerate(zip(faces.tolist(), face_lines)):
        for index in face:
            if not 0 <= index < len(vertices):
                raise MeshFormatError(
                    f"Face {face_id} references vertex {index + base} "
                    f"but only {len(vertices)} vertices exist",
                    path,
                    line_no,
                )
        if face[0] == face[1] or face[1] == face[2] or face[2] == face[0]:
            raise MeshFormatError(f"Face {face_id} repeats a vertex index", path, line_no)

    mesh = TriangleMesh(vertices, faces, name=Path(path).stem)
    logger.info(f"Loaded {mesh!r} from {path}")
    return mesh


def save_obj(mesh: TriangleMesh, path: PathLike) -> None:
    """
    Write a mesh as Wavefront OBJ.

    Coordinates are written with repr(), which round-trips float64 values exactly.
    """
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {mesh.name}: {mesh.vertex_count} vertices, {mesh.triangle_count} triangles\n")
        for x, y, z in mesh.vertices.tolist():
            f.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in (mesh.triangles + 1).tolist():
            f.write(f"f {a} {b} {c}\n")
    logger.debug(f"Wrote {mesh!r} to {path}")


def check_closed(mesh: TriangleMesh) -> bool:
    """
    Check whether every undirected edge of the mesh is shared by exactly two triangles.

    Args:
        mesh: The mesh to check.

    Returns:
        bool: True if the mesh is closed.
    """
    if mesh.triangle_count == 0:
        return False
    tris = mesh.triangles
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def require_closed(mesh: TriangleMesh) -> None:
    """Raise NotClosedError unless the mesh is closed."""
    if not check_closed(mesh):
        raise NotClosedError(
            f"Mesh {mesh.name!r} is not closed (some edge is not shared by exactly two triangles)"
        )


def translate_mesh(mesh: TriangleMesh, offset: Vector3, name: Optional[str] = None) -> TriangleMesh:
    """Return a copy of the mesh rigidly translated by offset."""
    delta = np.asarray(offset, dtype=np.float64).reshape(3)
    return TriangleMesh(mesh.vertices + delta, mesh.triangles, name=name or mesh.name)


def make_overlap_scene(
    mesh: TriangleMesh,
    ratio: float,
    axis: Union[str, int] = "x",
    other: Optional[TriangleMesh] = None,
) -> Tuple[TriangleMesh, TriangleMesh]:
    """
    Place two objects so that their AABBs overlap by a fraction of A's extent.

    B (a copy of A unless other is given) is translated along the axis so that the
    overlap of the two boxes along that axis equals ratio times A's extent.

    Args:
        mesh: Object A; left in place.
        ratio: Overlap ratio in (0, 1].
        axis: Placement axis.
        other: Optional distinct object B. Its box minimum along the axis is first
            aligned with A's before the shift.

    Returns:
        Tuple[TriangleMesh, TriangleMesh]: Objects A and B.

    Raises:
        ValueError: If ratio is outside (0, 1].
        MeshError: If A has zero extent along the axis.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"Overlap ratio must be in (0, 1], got {ratio}")
    k = axis_index(axis)
    box_a = mesh.aabb()
    extent = float(box_a.extent[k])
    if extent <= 0.0:
        raise MeshError(f"Mesh {mesh.name!r} has zero extent along axis {'xyz'[k]}")

    source_b = mesh if other is None else other
    offset = np.zeros(3)
    if other is not None:
        offset[k] = box_a.min[k] - source_b.aabb().min[k]
    offset[k] += (1.0 - ratio) * extent

    mesh_b = translate_mesh(source_b, offset, name=f"{source_b.name}_b")
    logger.debug(f"Overlap scene ratio={ratio} axis={'xyz'[k]} offset={offset.tolist()}")
    return mesh, mesh_b


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """
    Compute area-weighted vertex normals.

    Returns:
        np.ndarray: (n, 3) unit normals; zero rows for vertices with no incident area.
    """
    corners = mesh.triangle_positions()
    face_normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    normals = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(normals, mesh.triangles[:, k], face_normals)
    lengths = np.linalg.norm(normals, axis=1)
    nonzero = lengths > 0
    normals[nonzero] /= lengths[nonzero, None]
    return normals


def signed_volume(mesh: TriangleMesh) -> float:
    """Signed enclosed volume; positive for a closed, outward-oriented mesh."""
    corners = mesh.triangle_positions()
    return float(np.einsum("ij,ij->", corners[:, 0], np.cross(corners[:, 1], corners[:, 2])) / 6.0)


# ---------------------------------------------------------------------------
# Built-in closed shapes
# ---------------------------------------------------------------------------

_BOX_TRIANGLES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # z = min
        [4, 5, 6], [4, 6, 7],  # z = max
        [0, 1, 5], [0, 5, 4],  # y = min
        [3, 7, 6], [3, 6, 2],  # y = max
        [0, 4, 7], [0, 7, 3],  # x = min
        [1, 2, 6], [1, 6, 5],  # x = max
    ],
    dtype=np.int64,
)  # fmt: skip


def make_box(lo: Vector3 = (0.0, 0.0, 0.0), hi: Vector3 = (1.0, 1.0, 1.0)) -> TriangleMesh:
    """Return a closed, outward-oriented 12-triangle box spanning lo..hi."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    unit = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
        dtype=np.float64,
    )
    return TriangleMesh(lo + unit * (hi - lo), _BOX_TRIANGLES, name="box")


def make_tetrahedron() -> TriangleMesh:
    """Return the closed corner tetrahedron (0,0,0), (1,0,0), (0,1,0), (0,0,1)."""
    vertices = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    triangles = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]
    return TriangleMesh(vertices, triangles, name="tetrahedron")


def subdivide(mesh: TriangleMesh) -> TriangleMesh:
    """
    Split every triangle into four through shared edge midpoints.

    Closedness and orientation are preserved.
    """
    tris = mesh.triangles
    m = len(tris)
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    unique_edges, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    midpoints = 0.5 * (mesh.vertices[unique_edges[:, 0]] + mesh.vertices[unique_edges[:, 1]])
    mid = mesh.vertex_count + inverse
    ab, bc, ca = mid[:m], mid[m : 2 * m], mid[2 * m :]
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ]
    )
    return TriangleMesh(np.concatenate([mesh.vertices, midpoints]), new_tris, name=mesh.name)


def make_icosphere(
    subdivisions: int = 3, radius: float = 1.0, center: Vector3 = (0.0, 0.0, 0.0)
) -> TriangleMesh:
    """
    Return a closed icosphere with 20 * 4**subdivisions triangles.

    Args:
        subdivisions: Number of 1-to-4 refinement passes.
        radius: Sphere radius.
        center: Sphere center.
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be non-negative")
    t = (1.0 + 5.0**0.5) / 2.0
    vertices = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )  # fmt: skip
    triangles = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )  # fmt: skip
    vertices /= np.linalg.norm(vertices, axis=1)[:, None]
    mesh = TriangleMesh(vertices, triangles)
    for _ in range(subdivisions):
        mesh = subdivide(mesh)
        projected = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1)[:, None]
        mesh = TriangleMesh(projected, mesh.triangles)
    positions = mesh.vertices * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(positions, mesh.triangles, name=f"icosphere{subdivisions}")


def make_builtin(spec: str) -> TriangleMesh:
    """
    Build a mesh from a "builtin:<shape>[:<arg>]" spec.

    Supported shapes: icosphere[:subdivisions], box, tetrahedron.
    """
    parts = spec.split(":")
    if len(parts) < 2 or parts[0] != "builtin":
        raise MeshError(f"Not a builtin mesh spec: {spec!r}")
    shape, args = parts[1], parts[2:]
    try:
        if shape == "icosphere":
            return make_icosphere(int(args[0]) if args else 3)
        if shape == "box":
            return make_box()
        if shape == "tetrahedron":
            return make_tetrahedron()
    except ValueError as error:
        raise MeshError(f"Invalid builtin mesh spec {spec!r}: {error}") from error
    raise MeshError(f"Unknown builtin shape {shape!r} in {spec!r}")
