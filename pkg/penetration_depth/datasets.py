#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Mesh Cache Module

This module downloads benchmark meshes over HTTP and keeps local copies in a
cache directory so that repeated runs do not fetch them again.
"""

import gzip
import hashlib
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Dict, Optional
from urllib.parse import urlparse

import requests

from penetration_depth.errors import MeshDownloadError

CACHE_ENV = "PENETRATION_DEPTH_CACHE"
INDEX_NAME = "index.json"
CHUNK_BYTES = 1 << 16


class MeshCache:
    """
    A cache of downloaded mesh files.

    Files live in one directory together with a JSON index mapping each source
    URL to its local file name.
    """

    def __init__(self, cache_dir: Optional[str] = None, timeout: float = 60.0):
        """
        Initialize the MeshCache.

        Args:
            cache_dir: Directory for cached files. Defaults to the PENETRATION_DEPTH_CACHE
                       environment variable, then to a folder in the temp directory.
            timeout: HTTP timeout in seconds.
        """
        self.logger = logging.getLogger("penetration_depth.datasets")
        default_dir = Path(tempfile.gettempdir()) / ".penetration_depth_meshes"
        self.cache_dir = Path(cache_dir or os.environ.get(CACHE_ENV) or default_dir)
        self.index_file = self.cache_dir / INDEX_NAME
        self.timeout = timeout
        self.session = requests.Session()

    def _read_index(self) -> Dict[str, str]:
        if not self.index_file.exists():
            return {}
        try:
            with open(self.index_file, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, ValueError) as e:
            self.logger.warning(f"Ignoring unreadable cache index {self.index_file}: {e}")
            return {}

    def _write_index(self, index: Dict[str, str]) -> None:
        with open(self.index_file, "w", encoding="utf-8") as f:
            json.dump(index, f, indent=2, sort_keys=True)

    @staticmethod
    def _file_name(url: str) -> str:
        name = Path(urlparse(url).path).name or "mesh"
        if name.endswith(".gz"):
            name = name[: -len(".gz")]
        digest = hashlib.sha256(url.encode()).hexdigest()[:12]
        return f"{digest}_{name}"

    def get_cached(self, url: str) -> Optional[Path]:
        """
        Get the cached copy of a URL.

        Args:
            url: The source URL.

        Returns:
            Optional[Path]: The local file if it was downloaded before, None otherwise.
        """
        name = self._read_index().get(url)
        if name is None:
            self.logger.debug(f"No cached copy of {url}")
            return None
        path = self.cache_dir / name
        if not path.exists():
            self.logger.debug(f"Cached copy of {url} is missing from {self.cache_dir}")
            return None
        return path

    def fetch(self, url: str) -> Path:
        """
        Return a local copy of a mesh URL, downloading it on first use.

        URLs ending in .gz are decompressed after download.

        Args:
            url: The source URL.

        Returns:
            Path: The local mesh file.

        Raises:
            MeshDownloadError: If the download fails.
        """
        cached = self.get_cached(url)
        if cached is not None:
            self.logger.info(f"Using cached {cached}")
            return cached

        self.cache_dir.mkdir(parents=True, exist_ok=True)
        target = self.cache_dir / self._file_name(url)
        self.logger.info(f"Downloading {url}")
        download = None
        try:
            with self.session.get(url, stream=True, timeout=self.timeout) as response:
                response.raise_for_status()
                with tempfile.NamedTemporaryFile(dir=self.cache_dir, delete=False) as tmp:
                    download = Path(tmp.name)
                    for chunk in response.iter_content(chunk_size=CHUNK_BYTES):
                        tmp.write(chunk)
        except requests.exceptions.RequestException as error:
            if download is not None:
                download.unlink(missing_ok=True)
            self.logger.error(f"Download failed: {error}")
            raise MeshDownloadError(f"Failed to download {url}: {error}") from error

        try:
            if urlparse(url).path.endswith(".gz"):
                with gzip.open(download, "rb") as src, open(target, "wb") as dst:
                    shutil.copyfileobj(src, dst)
                download.unlink()
            else:
                download.replace(target)
        except OSError as error:
            download.unlink(missing_ok=True)
            raise MeshDownloadError(f"Failed to unpack {url}: {error}") from error

        index = self._read_index()
        index[url] = target.name
        self._write_index(index)
        self.logger.debug(f"Cached {url} as {target}")
        return target

    def clear(self) -> bool:
        """
        Remove every cached mesh.

        Returns:
            bool: True if a cache was removed, False if there was none.
        """
        if not self.cache_dir.exists():
            return False
        try:
            shutil.rmtree(self.cache_dir)
            self.logger.info(f"Mesh cache {self.cache_dir} cleared")
            return True
        except OSError as e:
            self.logger.error(f"Failed to clear mesh cache: {e}")
            return False
