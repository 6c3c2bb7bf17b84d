"""
Penetration Depth Package

This package estimates the penetration depth of two overlapping closed triangle
meshes as the Hausdorff distance between their penetration surfaces, computed by
ray casting against bounding volume hierarchies.
"""

from .accel import Bvh, Hit, Ray, TraversalStats, build_bvh, closest_hit, count_hits
from .errors import (
    AccelError,
    IndeterminateError,
    MeshDownloadError,
    MeshError,
    MeshFormatError,
    NotClosedError,
    PenetrationDepthError,
    SurfaceError,
)
from .hdist import (
    AabbBox,
    HdistConfig,
    HdistResult,
    Hemisphere,
    Sphere,
    Status,
    VertexUniform,
    directional_hausdorff,
    penetration_depth,
)
from .mesh import SceneConfig, TriangleMesh, check_closed, load_mesh, make_overlap_scene
from .pip import PenetrationPointSet, extract_penetration_points, pip_two_way
from .psurf import PenetrationSurface, build_penetration_surface

__version__ = "0.1.0"
__all__ = [
    "AabbBox",
    "AccelError",
    "Bvh",
    "HdistConfig",
    "HdistResult",
    "Hemisphere",
    "Hit",
    "IndeterminateError",
    "MeshDownloadError",
    "MeshError",
    "MeshFormatError",
    "NotClosedError",
    "PenetrationDepthError",
    "PenetrationPointSet",
    "PenetrationSurface",
    "Ray",
    "SceneConfig",
    "Sphere",
    "Status",
    "SurfaceError",
    "TraversalStats",
    "TriangleMesh",
    "VertexUniform",
    "build_bvh",
    "build_penetration_surface",
    "check_closed",
    "closest_hit",
    "count_hits",
    "directional_hausdorff",
    "extract_penetration_points",
    "load_mesh",
    "make_overlap_scene",
    "penetration_depth",
    "pip_two_way",
]
