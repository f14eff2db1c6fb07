"""content-hash keyed cache of offline synthesis artifacts

Each entry is a folder named after the SHA-256 of the canonical JSON of the
synthesis inputs. A manifest with the format version and the inputs marks
complete entries.
"""

import logging
import os
import shutil
from typing import Dict

from rsmpc.constants import ARTIFACT_FORMAT_VERSION
from rsmpc.util._utils import content_hash, get_cache_dir, load_json, save_json

_MANIFEST = "manifest.json"


class ArtifactCache:
    """folder-per-key artifact store"""

    root: str
    enabled: bool
    logger: logging.Logger

    def __init__(self, root: str | None = None, enabled: bool = True) -> None:
        """
        Args:
            root (str) [None]: cache directory, RSMPC_CACHE_DIR or .rsmpc_cache when None
            enabled (bool) [True]: when False every lookup misses and entries are overwritten
        """
        self.root = root if root is not None else get_cache_dir()
        self.enabled = enabled
        self.logger = logging.getLogger("rsmpc_cache")

    @staticmethod
    def key_for(inputs: Dict) -> str:
        """the cache key of a set of synthesis inputs"""
        return content_hash({"version": ARTIFACT_FORMAT_VERSION, "inputs": inputs})

    def folder(self, key: str) -> str:
        """folder of an entry"""
        return os.path.join(self.root, key)

    def has(self, key: str) -> bool:
        """True if a complete entry exists for key"""
        if not self.enabled:
            return False
        manifest = os.path.join(self.folder(key), _MANIFEST)
        if not os.path.isfile(manifest):
            return False
        hit = load_json(manifest).get("version") == ARTIFACT_FORMAT_VERSION
        self.logger.info("cache %s for %s", "hit" if hit else "stale", key[:12])
        return hit

    def prepare(self, key: str) -> str:
        """Empties the folder of key and returns it, ready to be filled"""
        folder = self.folder(key)
        if os.path.exists(folder):
            shutil.rmtree(folder)
        os.makedirs(folder)
        return folder

    def commit(self, key: str, inputs: Dict) -> None:
        """Marks the entry of key as complete"""
        save_json(
            {"version": ARTIFACT_FORMAT_VERSION, "key": key, "inputs": inputs},
            os.path.join(self.folder(key), _MANIFEST),
        )
        self.logger.info("cache entry %s written", key[:12])
