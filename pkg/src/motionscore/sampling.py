"""Temporal segment sampling, dense test-time snippet enumeration, and
per-snippet frame augmentation.

Training: the clip is split into k equal contiguous segments (remainder
frames join the last segment) and one random fixed-length window is drawn
inside each, preserving chronological order within the window and across
segments. Segments shorter than the window keep their start inside the
segment and extend into subsequent frames, looping to the clip start only
when the clip end is reached.

Testing: a fixed number of uniformly spaced consecutive-frame snippets
(duplicates allowed on short clips), no augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .autodiff import Tensor
from .errors import ConfigError, InputError

# horizontal-displacement channels that must be negated under horizontal flip
_FLIP_NEGATE_CHANNEL0 = ("flow", "mb")

CROP_POSITIONS = ("tl", "tr", "bl", "br", "center")
DEFAULT_SCALES = (1.0, 0.875, 0.75, 0.66)


@dataclass
class SamplerConfig:
    k_segments: int = 4
    train_len: int = 32
    test_snippets: int = 64
    test_len: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("k_segments", "train_len", "test_snippets", "test_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class Snippet:
    modality: str
    frames: Tensor                 # [C, L, H, W]
    source_segment: int            # segment index (train) or snippet index (test)
    clip_id: str
    subject_id: str
    start: int
    transform: str = "none"


@dataclass
class AugmentConfig:
    enabled: bool = True
    out_size: Optional[Tuple[int, int]] = None   # (h, w); None keeps frame size
    scales: Tuple[float, ...] = DEFAULT_SCALES
    flip_prob: float = 0.5


@dataclass(frozen=True)
class TransformSpec:
    scale_h: float
    scale_w: float
    position: str
    flip: bool

    def descriptor(self) -> str:
        return f"scale={self.scale_h:g}x{self.scale_w:g};pos={self.position};flip={int(self.flip)}"


# -- training-time segment sampling -------------------------------------------


def segment_bounds(n_frames: int, k: int) -> List[Tuple[int, int]]:
    """K equal contiguous segments; remainder frames go to the last one."""
    q = n_frames // k
    bounds = [(i * q, (i + 1) * q) for i in range(k - 1)]
    bounds.append(((k - 1) * q, n_frames))
    return bounds


def window_indices(start: int, length: int, n_frames: int) -> np.ndarray:
    """Consecutive frame indices from start, looping to the clip start only
    when the clip end is reached."""
    return (start + np.arange(length)) % n_frames


def segment_starts(n_frames: int, config: SamplerConfig,
                   rng: np.random.Generator) -> List[int]:
    if n_frames < config.k_segments:
        raise InputError(
            f"clip of {n_frames} frames is shorter than k={config.k_segments} segments")
    starts = []
    for s, e in segment_bounds(n_frames, config.k_segments):
        seg_len = e - s
        if seg_len >= config.train_len:
            starts.append(s + int(rng.integers(0, seg_len - config.train_len + 1)))
        else:
            # short segment: window begins inside and extends past its end
            starts.append(s + int(rng.integers(0, seg_len)))
    return starts


def segment_sample(frames, config: SamplerConfig, rng: np.random.Generator, *,
                   modality: str, clip_id: str = "", subject_id: str = "") -> List[Snippet]:
    """Draw one chronological train_len window per segment (K snippets)."""
    arr = frames.data if isinstance(frames, Tensor) else np.asarray(frames)
    if arr.ndim != 4:
        raise InputError(f"clip array must be [C, N, H, W], got {arr.shape}")
    n = arr.shape[1]
    if n == 0:
        raise InputError("empty clip")
    snippets = []
    for seg, start in enumerate(segment_starts(n, config, rng)):
        idx = window_indices(start, config.train_len, n)
        snippets.append(Snippet(
            modality=modality,
            frames=Tensor(np.ascontiguousarray(arr[:, idx]), check=False),
            source_segment=seg,
            clip_id=clip_id,
            subject_id=subject_id,
            start=start,
        ))
    return snippets


# -- test-time dense snippets --------------------------------------------------


def dense_starts(n_frames: int, count: int, length: int) -> List[int]:
    """Uniformly spaced start positions over [0, N-length], rounded;
    duplicates appear when the clip is short."""
    top = max(0, n_frames - length)
    if count == 1:
        return [0]
    return [int(round(i * top / (count - 1))) for i in range(count)]


def dense_snippets(frames, config: SamplerConfig, *, modality: str,
                   clip_id: str = "", subject_id: str = "") -> List[Snippet]:
    arr = frames.data if isinstance(frames, Tensor) else np.asarray(frames)
    if arr.ndim != 4:
        raise InputError(f"clip array must be [C, N, H, W], got {arr.shape}")
    n = arr.shape[1]
    if n == 0:
        raise InputError("empty clip")
    snippets = []
    for i, start in enumerate(dense_starts(n, config.test_snippets, config.test_len)):
        idx = window_indices(start, config.test_len, n)
        snippets.append(Snippet(
            modality=modality,
            frames=Tensor(np.ascontiguousarray(arr[:, idx]), check=False),
            source_segment=i,
            clip_id=clip_id,
            subject_id=subject_id,
            start=start,
        ))
    return snippets


# -- augmentation --------------------------------------------------------------


def hflip_frames(arr: np.ndarray, modality: str) -> np.ndarray:
    """Horizontal flip; negates the horizontal-displacement channel for
    flow-like modalities so the motion stays physically consistent."""
    out = np.ascontiguousarray(arr[:, :, :, ::-1])
    if modality in _FLIP_NEGATE_CHANNEL0:
        out[0] = -out[0]
    return out


def center_crop(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = arr.shape[2:]
    if out_h > h or out_w > w:
        raise ConfigError(f"crop {out_h}x{out_w} larger than frame {h}x{w}")
    top = (h - out_h) // 2
    left = (w - out_w) // 2
    return np.ascontiguousarray(arr[:, :, top:top + out_h, left:left + out_w])


def choose_transform(rng: np.random.Generator, aug: AugmentConfig) -> TransformSpec:
    """Fixed draw order (scale_h, scale_w, position, flip) for determinism."""
    scale_h = float(aug.scales[int(rng.integers(len(aug.scales)))])
    scale_w = float(aug.scales[int(rng.integers(len(aug.scales)))])
    position = CROP_POSITIONS[int(rng.integers(len(CROP_POSITIONS)))]
    flip = bool(rng.random() < aug.flip_prob)
    return TransformSpec(scale_h, scale_w, position, flip)


def _crop_origin(position: str, h: int, w: int, ch: int, cw: int) -> Tuple[int, int]:
    if position == "tl":
        return 0, 0
    if position == "tr":
        return 0, w - cw
    if position == "bl":
        return h - ch, 0
    if position == "br":
        return h - ch, w - cw
    return (h - ch) // 2, (w - cw) // 2


def apply_transform(arr: np.ndarray, spec: TransformSpec, aug: AugmentConfig,
                    modality: str) -> np.ndarray:
    c, l, h, w = arr.shape
    out_h, out_w = aug.out_size if aug.out_size is not None else (h, w)
    ch = int(round(out_h * spec.scale_h))
    cw = int(round(out_w * spec.scale_w))
    if ch > h or cw > w:
        raise ConfigError(
            f"crop window {ch}x{cw} (scale {spec.scale_h}x{spec.scale_w} of "
            f"{out_h}x{out_w}) larger than frame {h}x{w}")
    top, left = _crop_origin(spec.position, h, w, ch, cw)
    out = arr[:, :, top:top + ch, left:left + cw]
    if (ch, cw) != (out_h, out_w):
        resized = np.empty((c, l, out_h, out_w), dtype=np.float32)
        for ci in range(c):
            for li in range(l):
                resized[ci, li] = kernels.resize_bilinear(out[ci, li], out_h, out_w)
        out = resized
    else:
        out = np.ascontiguousarray(out)
    if spec.flip:
        out = hflip_frames(out, modality)
    return out


def augment(snippet: Snippet, rng: np.random.Generator,
            aug: AugmentConfig) -> Snippet:
    """One transform per snippet, applied identically to all its frames."""
    if not aug.enabled:
        return snippet
    spec = choose_transform(rng, aug)
    out = apply_transform(snippet.frames.data, spec, aug, snippet.modality)
    return replace(snippet, frames=Tensor(out, check=False), transform=spec.descriptor())


def test_preprocess(arr: np.ndarray, aug: AugmentConfig) -> np.ndarray:
    """Test-time path: center crop at the configured resolution, nothing else."""
    if aug.out_size is None:
        return np.asarray(arr)
    return center_crop(np.asarray(arr), *aug.out_size)
