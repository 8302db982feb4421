"""Content-addressed stage cache.

A stage's key is the SHA-256 of its input file hashes plus its parameter
fingerprint; outputs live under <cache_root>/<stage>/<key>/ with a marker
file written last, so interrupted builds are rebuilt. Changing any upstream
file changes exactly the keys of the stages that consume it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from pathlib import Path
from typing import Callable, Iterable, Tuple

log = logging.getLogger("motionscore.cache")

_MARKER = ".complete"
CACHE_ENV = "MOTIONSCORE_CACHE"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_files(paths: Iterable[Path], base: Path) -> str:
    """Stable digest over (relative path, content hash) pairs, sorted."""
    items = sorted((str(Path(p).relative_to(base)), file_sha256(p)) for p in paths)
    return hashlib.sha256(json.dumps(items).encode()).hexdigest()


def hash_params(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def stage_key(*parts: str) -> str:
    return hashlib.sha256("\x1f".join(parts).encode()).hexdigest()[:24]


def resolve_cache_root(configured: str | None, workdir: Path) -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    if configured:
        return Path(configured)
    return workdir / ".cache"


class StageCache:
    def __init__(self, root: Path):
        self.root = Path(root)

    def _dir(self, stage: str, key: str) -> Path:
        return self.root / stage / key

    def lookup(self, stage: str, key: str) -> Path | None:
        d = self._dir(stage, key)
        return d if (d / _MARKER).exists() else None

    def build(self, stage: str, key: str,
              build_fn: Callable[[Path], None],
              label: str = "") -> Tuple[Path, bool]:
        """Return (output dir, was_cache_hit); build_fn fills the directory."""
        d = self._dir(stage, key)
        if (d / _MARKER).exists():
            log.info("[cache] hit  stage=%s key=%s %s", stage, key, label)
            return d, True
        log.info("[cache] miss stage=%s key=%s %s", stage, key, label)
        if d.exists():
            shutil.rmtree(d)  # leftover from an interrupted build
        d.mkdir(parents=True)
        build_fn(d)
        (d / _MARKER).write_text("ok\n")
        return d, False
