#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Tests for the MeshCache class.
"""

import gzip
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

import requests

from penetration_depth.datasets import MeshCache
from penetration_depth.errors import MeshDownloadError
from penetration_depth.mesh import load_mesh

TETRAHEDRON_OBJ = b"""v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
"""


def mock_response(payload=b"", error=None):
    response = MagicMock()
    response.__enter__.return_value = response
    if error is not None:
        response.raise_for_status.side_effect = error
    response.iter_content.return_value = [payload[:20], payload[20:]]
    return response


class TestMeshCache(unittest.TestCase):
    """Test case for the MeshCache class."""

    def setUp(self):
        """Set up a cache in a scratch directory with a mocked session."""
        patcher = patch("penetration_depth.datasets.requests.Session")
        self.mock_session = patcher.start()
        self.addCleanup(patcher.stop)
        self.session_instance = MagicMock()
        self.mock_session.return_value = self.session_instance

        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.cache = MeshCache(cache_dir=Path(self.tmp.name) / "meshes")

    def test_fetch_downloads_once(self):
        """Test that a second fetch is served from the cache."""
        url = "https://example.org/meshes/tetra.obj"
        self.session_instance.get.return_value = mock_response(TETRAHEDRON_OBJ)

        path = self.cache.fetch(url)
        self.assertEqual(path.read_bytes(), TETRAHEDRON_OBJ)
        self.assertTrue(path.name.endswith("_tetra.obj"))
        self.assertEqual(self.cache.fetch(url), path)
        self.session_instance.get.assert_called_once_with(url, stream=True, timeout=60.0)
        self.assertEqual(load_mesh(path).triangle_count, 4)

    def test_fetch_unpacks_gzip(self):
        """Test that .gz downloads are decompressed."""
        url = "https://example.org/meshes/tetra.obj.gz"
        self.session_instance.get.return_value = mock_response(gzip.compress(TETRAHEDRON_OBJ))

        path = self.cache.fetch(url)
        self.assertEqual(path.suffix, ".obj")
        self.assertEqual(path.read_bytes(), TETRAHEDRON_OBJ)

    def test_fetch_failure(self):
        """Test that an HTTP error is reported and nothing is cached."""
        url = "https://example.org/meshes/missing.obj"
        error = requests.exceptions.HTTPError("404 Client Error")
        self.session_instance.get.return_value = mock_response(error=error)

        with self.assertRaises(MeshDownloadError):
            self.cache.fetch(url)
        self.assertIsNone(self.cache.get_cached(url))
        self.assertEqual(list(self.cache.cache_dir.glob("tmp*")), [])

    def test_connection_error(self):
        """Test that a connection failure is reported."""
        self.session_instance.get.side_effect = requests.exceptions.ConnectionError("refused")
        with self.assertRaises(MeshDownloadError):
            self.cache.fetch("https://example.org/meshes/tetra.obj")

    def test_missing_file_is_refetched(self):
        """Test that a deleted cache file is not reported as cached."""
        url = "https://example.org/meshes/tetra.obj"
        self.session_instance.get.return_value = mock_response(TETRAHEDRON_OBJ)
        self.cache.fetch(url).unlink()
        self.assertIsNone(self.cache.get_cached(url))

    def test_clear(self):
        """Test clearing the cache."""
        self.assertFalse(self.cache.clear())
        self.session_instance.get.return_value = mock_response(TETRAHEDRON_OBJ)
        self.cache.fetch("https://example.org/meshes/tetra.obj")
        self.assertTrue(self.cache.clear())
        self.assertFalse(self.cache.cache_dir.exists())

    def test_environment_directory(self):
        """Test that the cache directory can come from the environment."""
        with patch.dict("os.environ", {"PENETRATION_DEPTH_CACHE": self.tmp.name}):
            self.assertEqual(MeshCache().cache_dir, Path(self.tmp.name))


if __name__ == "__main__":
    unittest.main()
