"""Dataset manifests, ingestion validation, and frame loading."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from . import kernels
from .errors import InputError, ValidationError

TASKS = ("hand_movement", "gait")
MODALITIES = ("rgb", "flow", "mb")

# input videos default to this resolution before any processing
DEFAULT_RESOLUTION = (256, 340)  # (height, width)


@dataclass
class ManifestEntry:
    clip_id: str
    subject_id: str
    task: str
    updrs_raw: int
    frame_dir: str
    frame_count: int
    fps: float


@dataclass
class DatasetManifest:
    root: Path
    entries: List[ManifestEntry]

    def save(self, path) -> None:
        payload = {"schema": 1, "entries": [asdict(e) for e in self.entries]}
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")

    @staticmethod
    def load(root, path) -> "DatasetManifest":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise InputError(f"manifest {path} does not parse: {e}") from e
        entries = [ManifestEntry(**raw) for raw in payload["entries"]]
        return DatasetManifest(root=Path(root), entries=entries)

    def for_task(self, task: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.task == task]

    def subjects(self) -> List[str]:
        return sorted({e.subject_id for e in self.entries})

    def frame_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.frame_dir


def ingest(root, manifest_file, strict: bool = True) -> DatasetManifest:
    """Load and validate a dataset manifest.

    Checks frame counts against files on disk, label ranges, and clip-id
    uniqueness; raises a ValidationError itemizing every problem found.
    Frames whose resolution differs from the pipeline target are resized at
    load time, not on disk.
    """
    manifest = DatasetManifest.load(root, manifest_file)
    problems = []
    seen = set()
    for e in manifest.entries:
        if e.clip_id in seen:
            problems.append(f"duplicate clip_id {e.clip_id!r}")
        seen.add(e.clip_id)
        if not e.subject_id:
            problems.append(f"clip {e.clip_id!r}: empty subject_id")
        if e.task not in TASKS:
            problems.append(f"clip {e.clip_id!r}: unknown task {e.task!r}")
        if not 0 <= e.updrs_raw <= 4:
            problems.append(f"clip {e.clip_id!r}: updrs_raw {e.updrs_raw} outside 0..4")
        frame_dir = manifest.frame_path(e)
        if not frame_dir.is_dir():
            problems.append(f"clip {e.clip_id!r}: missing frame directory {frame_dir}")
            continue
        n_files = len(sorted(frame_dir.glob("*.png")))
        if n_files != e.frame_count:
            problems.append(
                f"clip {e.clip_id!r}: frame_count {e.frame_count} but {n_files} files on disk")
    if problems and strict:
        raise ValidationError(problems)
    return manifest


def _load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return arr


def _resize_frame(arr: np.ndarray, target: Tuple[int, int]) -> np.ndarray:
    if arr.shape[:2] == tuple(target):
        return arr
    if arr.ndim == 2:
        return kernels.resize_bilinear(arr, target[0], target[1])
    return np.stack([kernels.resize_bilinear(arr[:, :, c], target[0], target[1])
                     for c in range(arr.shape[2])], axis=2)


def list_frames(frame_dir) -> List[Path]:
    frames = sorted(Path(frame_dir).glob("*.png"))
    if not frames:
        raise InputError(f"no frames found in {frame_dir}")
    return frames


def load_gray_frames(frame_dir, target: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """[N, H, W] float32 in [0, 1]; RGB files are converted via luma weights."""
    from .flow import to_grayscale
    out = []
    for p in list_frames(frame_dir):
        arr = _load_image(p)
        if target is not None:
            arr = _resize_frame(arr, target)
        if arr.ndim == 3:
            arr = to_grayscale(np.moveaxis(arr, -1, 0))
        out.append(arr)
    return np.stack(out)


def load_rgb_frames(frame_dir, target: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """[3, N, H, W] float32 in [0, 1]; grayscale files are replicated."""
    out = []
    for p in list_frames(frame_dir):
        arr = _load_image(p)
        if target is not None:
            arr = _resize_frame(arr, target)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=2)
        out.append(np.moveaxis(arr[:, :, :3], -1, 0))
    return np.stack(out, axis=1)


def save_gray_frame(path, img: np.ndarray) -> None:
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def save_mask_frame(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_mask_frames(mask_dir) -> np.ndarray:
    return np.stack([_load_image(p) >= 0.5 for p in list_frames(mask_dir)])
