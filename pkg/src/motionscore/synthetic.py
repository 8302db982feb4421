"""Synthetic dataset generator.

Renders textured moving shapes over a panning textured background: an
oscillating blob whose radius swings like a hand opening and closing, or a
translating figure for gait. Severity class controls the motion amplitude,
oscillation frequency, and the amplitude-decay rate that models fatiguing
over the clip. The camera pan is a constant per-clip background translation
(periodic texture wrap), so the ground-truth background flow equals the pan
exactly by construction. Labels and per-frame object masks are stored next
to the frames.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .datasets import DatasetManifest, ManifestEntry, save_gray_frame, save_mask_frame
from .errors import ConfigError, InputError


@dataclass
class ClassSpec:
    amplitude: float   # px of radius / limb swing
    frequency: float   # Hz
    decay: float       # 1/s amplitude-envelope decay (0 = steady movement)


DEFAULT_CLASS_SPECS = (
    ClassSpec(amplitude=5.0, frequency=1.2, decay=0.0),
    ClassSpec(amplitude=4.5, frequency=1.0, decay=0.5),
    ClassSpec(amplitude=4.0, frequency=0.8, decay=1.6),
)

_JITTER = 0.08  # per-subject relative spread within a class


@dataclass
class SynthConfig:
    n_subjects: int = 25
    clips_per_subject: int = 4
    class_specs: Tuple[ClassSpec, ...] = DEFAULT_CLASS_SPECS
    camera_pan: Tuple[float, float] = (0.5, 2.0)   # |pan| range, px/frame
    frame_size: Tuple[int, int] = (48, 48)         # (height, width)
    frame_count: Tuple[int, int] = (48, 72)
    fps: float = 10.0
    task: str = "hand_movement"
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.clips_per_subject < 1:
            raise ConfigError("n_subjects and clips_per_subject must be >= 1")
        if self.task not in ("hand_movement", "gait"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.camera_pan[0] < 0 or self.camera_pan[1] < self.camera_pan[0]:
            raise ConfigError(f"bad camera_pan range {self.camera_pan}")
        if self.frame_count[0] < 2 or self.frame_count[1] < self.frame_count[0]:
            raise ConfigError(f"bad frame_count range {self.frame_count}")
        # classes must stay distinguishable after per-subject jitter
        decays = [c.decay for c in self.class_specs]
        if sorted(decays) != decays:
            raise ConfigError("class decay rates must be sorted ascending")
        for a, b in zip(decays, decays[1:]):
            if a * (1 + _JITTER) >= b * (1 - _JITTER):
                raise ConfigError(
                    f"class decay ranges overlap after jitter: {a} vs {b}")


def textured_image(rng: np.random.Generator, h: int, w: int,
                   cells: Tuple[int, ...] = (6, 12, 24),
                   weights: Tuple[float, ...] = (0.5, 0.3, 0.2),
                   lo: float = 0.1, hi: float = 0.9) -> np.ndarray:
    """Periodic multi-octave noise texture in [lo, hi].

    Octaves at several cell sizes give the image structure at every pyramid
    scale, which coarse-to-fine flow estimation needs.
    """
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    img = np.zeros((h, w), dtype=np.float32)
    for n_cells, wt in zip(cells, weights):
        ch = max(2, min(n_cells, h))
        cw = max(2, min(n_cells, w))
        grid = rng.random((ch, cw)).astype(np.float32)
        img += np.float32(wt) * sample_periodic(grid, gx * (cw / w), gy * (ch / h))
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return (lo + (hi - lo) * img).astype(np.float32)


def sample_periodic(img: np.ndarray, map_x: np.ndarray, map_y: np.ndarray) -> np.ndarray:
    """Bilinear sampling with periodic wrap on both axes."""
    h, w = img.shape
    x0 = np.floor(map_x)
    y0 = np.floor(map_y)
    fx = (map_x - x0).astype(np.float32)
    fy = (map_y - y0).astype(np.float32)
    x0i = x0.astype(np.int64) % w
    x1i = (x0i + 1) % w
    y0i = y0.astype(np.int64) % h
    y1i = (y0i + 1) % h
    top = (1 - fx) * img[y0i, x0i] + fx * img[y0i, x1i]
    bot = (1 - fx) * img[y1i, x0i] + fx * img[y1i, x1i]
    return ((1 - fy) * top + fy * bot).astype(np.float32)


def translate_periodic(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Shift content by (+dx, +dy) pixels with periodic boundary."""
    h, w = img.shape
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    return sample_periodic(img, gx - np.float32(dx), gy - np.float32(dy))


@dataclass
class ClipRecipe:
    """Everything needed to render one clip deterministically."""
    clip_id: str
    subject_id: str
    task: str
    class_label: int
    updrs_raw: int
    n_frames: int
    fps: float
    pan: Tuple[float, float]
    amplitude: float
    frequency: float
    decay: float
    phase: float
    seed_key: Tuple[int, ...] = field(repr=False, default=())


def _plan_clips(cfg: SynthConfig) -> List[ClipRecipe]:
    recipes = []
    n_classes = len(cfg.class_specs)
    for si in range(cfg.n_subjects):
        cls = si % n_classes
        spec = cfg.class_specs[cls]
        srng = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, 1, si)))
        amp = spec.amplitude * float(srng.uniform(1 - _JITTER, 1 + _JITTER))
        freq = spec.frequency * float(srng.uniform(1 - _JITTER, 1 + _JITTER))
        decay = spec.decay * float(srng.uniform(1 - _JITTER, 1 + _JITTER))
        if cls == 0:
            raw = 0
        else:
            raw = int(srng.choice([2 * cls - 1, 2 * cls]))
        for ci in range(cfg.clips_per_subject):
            crng = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, 2, si, ci)))
            angle = float(crng.uniform(0, 2 * math.pi))
            mag = float(crng.uniform(*cfg.camera_pan))
            n_frames = int(crng.integers(cfg.frame_count[0], cfg.frame_count[1] + 1))
            recipes.append(ClipRecipe(
                clip_id=f"s{si:02d}c{ci:02d}",
                subject_id=f"subj{si:02d}",
                task=cfg.task,
                class_label=cls,
                updrs_raw=raw,
                n_frames=n_frames,
                fps=cfg.fps,
                pan=(mag * math.cos(angle), mag * math.sin(angle)),
                amplitude=amp,
                frequency=freq,
                decay=decay,
                phase=float(crng.uniform(0, 2 * math.pi)),
                seed_key=(cfg.rng_seed, 3, si, ci),
            ))
    return recipes


def render_clip(recipe: ClipRecipe, frame_size: Tuple[int, int]):
    """Render (frames [N,H,W] in [0,1], masks [N,H,W] bool) for one recipe."""
    h, w = frame_size
    rng = np.random.default_rng(np.random.SeedSequence(recipe.seed_key))
    bg_tex = textured_image(rng, h, w)
    ob_tex = textured_image(rng, h, w, lo=0.05, hi=1.0)
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    pan_x, pan_y = recipe.pan
    frames = np.empty((recipe.n_frames, h, w), dtype=np.float32)
    masks = np.empty((recipe.n_frames, h, w), dtype=bool)
    r0 = min(h, w) / 5.0
    cx0, cy0 = w / 2.0, h / 2.0
    for t in range(recipe.n_frames):
        ts = t / recipe.fps
        env = math.exp(-recipe.decay * ts)
        osc = math.sin(2 * math.pi * recipe.frequency * ts + recipe.phase)
        bg = sample_periodic(bg_tex, gx - np.float32(pan_x * t), gy - np.float32(pan_y * t))
        if recipe.task == "hand_movement":
            r = r0 + recipe.amplitude * env * osc
            cx, cy = cx0, cy0
            dist = np.sqrt((gx - cx) ** 2 + (gy - cy) ** 2)
            alpha = np.clip(r + 0.5 - dist, 0.0, 1.0).astype(np.float32)
            # texture tied to the radius so the blob surface visibly expands
            scale = r0 / max(r, 1.0)
            ob = sample_periodic(ob_tex, cx + (gx - cx) * scale, cy + (gy - cy) * scale)
            mask = dist <= r
        else:
            span = w / 2.0 - w / 8.0
            stride_phase = math.sin(2 * math.pi * recipe.frequency * ts / 2.0 + recipe.phase)
            cx = cx0 + span * env * stride_phase
            cy = cy0 + 1.5 * env * osc
            dist = np.sqrt(((gx - cx) / (w / 10.0)) ** 2 + ((gy - cy) / (h / 3.0)) ** 2)
            alpha = np.clip((1.0 - dist) * (h / 6.0), 0.0, 1.0).astype(np.float32)
            ob = sample_periodic(ob_tex, gx - cx + cx0, gy - cy + cy0)
            mask = dist <= 1.0
        frames[t] = np.clip(bg * (1 - alpha) + ob * alpha, 0.0, 1.0)
        masks[t] = mask
    return frames, masks


def generate_synthetic(cfg: SynthConfig, out_root) -> DatasetManifest:
    """Render the dataset to disk; returns the manifest (also saved as
    manifest.json under out_root)."""
    root = Path(out_root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create output root {root}: {e}") from e
    entries = []
    for recipe in _plan_clips(cfg):
        frames, masks = render_clip(recipe, cfg.frame_size)
        frame_dir = root / "frames" / recipe.clip_id
        mask_dir = root / "masks" / recipe.clip_id
        frame_dir.mkdir(parents=True, exist_ok=True)
        mask_dir.mkdir(parents=True, exist_ok=True)
        for t in range(recipe.n_frames):
            save_gray_frame(frame_dir / f"f{t:06d}.png", frames[t])
            save_mask_frame(mask_dir / f"m{t:06d}.png", masks[t])
        meta_dir = root / "meta"
        meta_dir.mkdir(exist_ok=True)
        meta = asdict(recipe)
        meta.pop("seed_key")
        (meta_dir / f"{recipe.clip_id}.json").write_text(
            json.dumps(meta, indent=1, sort_keys=True) + "\n")
        entries.append(ManifestEntry(
            clip_id=recipe.clip_id,
            subject_id=recipe.subject_id,
            task=recipe.task,
            updrs_raw=recipe.updrs_raw,
            frame_dir=str(Path("frames") / recipe.clip_id),
            frame_count=recipe.n_frames,
            fps=cfg.fps,
        ))
    manifest = DatasetManifest(root=root, entries=entries)
    manifest.save(root / "manifest.json")
    return manifest
