#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Errors Module

This module defines the exceptions raised by the penetration depth package.
"""

from typing import Optional


class PenetrationDepthError(Exception):
    """Base class for errors raised on purpose by this package."""

    pass


class MeshError(PenetrationDepthError):
    """Exception raised when a mesh violates one of its invariants."""

    pass


class MeshFormatError(MeshError):
    """
    Exception raised when a mesh file cannot be parsed.

    The message names the file and, when known, the offending line.
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class NotClosedError(MeshError):
    """Exception raised when a closed mesh is required but the mesh has open edges."""

    pass


class AccelError(PenetrationDepthError):
    """Exception raised when an acceleration structure cannot be built."""

    pass


class SurfaceError(PenetrationDepthError):
    """Exception raised when penetration surface generation loses index consistency."""

    pass


class IndeterminateError(PenetrationDepthError):
    """Exception raised when the brute-force inside test cannot reach a verdict."""

    pass


class MeshDownloadError(PenetrationDepthError):
    """Exception raised when a mesh cannot be downloaded."""

    pass
