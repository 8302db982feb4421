"""Multi-scale TV-L1 dense optical flow between consecutive grayscale frames.

Coarse-to-fine pyramid; per level, a duality-based solver alternates a
pointwise thresholding step on the linearized data residual (primal) with a
projected ascent step on the flow-gradient dual field, re-warping the second
frame by the current flow between warps. Pure function of its inputs: same
frames and parameters give bit-identical flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .autodiff import Tensor
from .errors import ConfigError, InputError

_MIN_LEVEL_DIM = 16
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class TvL1Params:
    lam: float = 0.15              # data-attachment weight
    theta: float = 0.3             # coupling between data and regularizer
    tau: float = 0.125             # dual ascent time step
    pyramid_levels: int = 5
    scale_factor: float = 0.5
    warps_per_level: int = 5
    iterations_per_warp: int = 30
    stop_epsilon: float = 0.01

    def __post_init__(self):
        if self.tau <= 0 or self.tau > 0.125:
            raise ConfigError(f"tau must be in (0, 0.125] for stability, got {self.tau}")
        if not 0 < self.scale_factor < 1:
            raise ConfigError(f"scale_factor must lie in (0, 1), got {self.scale_factor}")
        for name in ("pyramid_levels", "warps_per_level", "iterations_per_warp"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lam <= 0 or self.theta <= 0 or self.stop_epsilon <= 0:
            raise ConfigError("lam, theta and stop_epsilon must be positive")


@dataclass
class FlowField:
    """Per-pixel displacement (pixels/frame) between two frames.

    ``energies`` holds the finest-level TV-L1 energy logged before the first
    warp and after each warp; diagnostic only.
    """
    width: int
    height: int
    u: np.ndarray
    v: np.ndarray
    energies: Optional[List[float]] = field(default=None, repr=False)

    def __post_init__(self):
        for name, comp in (("u", self.u), ("v", self.v)):
            if comp.shape != (self.height, self.width):
                raise InputError(
                    f"{name} has shape {comp.shape}, expected {(self.height, self.width)}")
            if not np.all(np.isfinite(comp)):
                raise InputError(f"{name} contains non-finite values")

    def with_offset(self, du: float, dv: float) -> "FlowField":
        return FlowField(self.width, self.height,
                         (self.u + np.float32(du)).astype(np.float32),
                         (self.v + np.float32(dv)).astype(np.float32))


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """Luma conversion; accepts [H,W] (passthrough) or channel-first [3,H,W]."""
    frame = np.asarray(frame)
    if frame.ndim == 2:
        return frame.astype(np.float32, copy=False)
    if frame.ndim == 3 and frame.shape[0] == 3:
        r, g, b = LUMA_WEIGHTS
        return (r * frame[0] + g * frame[1] + b * frame[2]).astype(np.float32)
    raise InputError(f"expected [H,W] or [3,H,W] frame, got {frame.shape}")


def _blur_1d(img: np.ndarray, kern: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kern) - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(img, pad, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, len(kern), axis=axis)
    return (win @ kern).astype(np.float32)


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    radius = max(1, int(np.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float32)
    kern = np.exp(-0.5 * (xs / sigma) ** 2)
    kern /= kern.sum()
    return _blur_1d(_blur_1d(img, kern, 1), kern, 0)


def _build_pyramid(img: np.ndarray, params: TvL1Params) -> List[np.ndarray]:
    sigma = 0.6 * float(np.sqrt(1.0 / params.scale_factor ** 2 - 1.0))
    levels = [img]
    for _ in range(params.pyramid_levels - 1):
        prev = levels[-1]
        nh = int(round(prev.shape[0] * params.scale_factor))
        nw = int(round(prev.shape[1] * params.scale_factor))
        if min(nh, nw) < _MIN_LEVEL_DIM:
            break
        levels.append(kernels.resize_bilinear(_gaussian_blur(prev, sigma), nh, nw))
    return levels


def _centered_gradient(img: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) * 0.5
    gx[:, 0] = img[:, 1] - img[:, 0]
    gx[:, -1] = img[:, -1] - img[:, -2]
    gy[1:-1, :] = (img[2:, :] - img[:-2, :]) * 0.5
    gy[0, :] = img[1, :] - img[0, :]
    gy[-1, :] = img[-1, :] - img[-2, :]
    return gx, gy


def _grid(h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.arange(w, dtype=np.float32)
    ys = np.arange(h, dtype=np.float32)
    return np.meshgrid(xs, ys)


def tvl1_energy(i0: np.ndarray, i1: np.ndarray, u: np.ndarray, v: np.ndarray,
                lam: float) -> float:
    """TV-L1 objective: total variation of the flow plus weighted L1 residual."""
    gx, gy = _grid(*i0.shape)
    i1w = kernels.warp_bilinear(i1, gx + u, gy + v)
    data = np.abs(i1w - i0).sum(dtype=np.float64)
    tv = 0.0
    for comp in (u, v):
        dx = np.zeros_like(comp)
        dy = np.zeros_like(comp)
        dx[:, :-1] = comp[:, 1:] - comp[:, :-1]
        dy[:-1, :] = comp[1:, :] - comp[:-1, :]
        tv += np.sqrt(dx.astype(np.float64) ** 2 + dy.astype(np.float64) ** 2).sum()
    return float(tv + lam * data)


def estimate_flow(frame_a: np.ndarray, frame_b: np.ndarray,
                  params: Optional[TvL1Params] = None) -> FlowField:
    """Dense flow mapping frame_a pixels onto frame_b."""
    params = params or TvL1Params()
    a = np.ascontiguousarray(np.asarray(frame_a, dtype=np.float32))
    b = np.ascontiguousarray(np.asarray(frame_b, dtype=np.float32))
    if a.ndim != 2 or b.ndim != 2:
        raise InputError(f"frames must be 2-D grayscale, got {a.shape} and {b.shape}")
    if a.shape != b.shape:
        raise InputError(f"frame dimensions differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InputError("frames contain non-finite pixels")
    if min(a.shape) < 2:
        raise InputError(f"frames too small for flow estimation: {a.shape}")
    if a.min() < -1e-6 or a.max() > 1 + 1e-6 or b.min() < -1e-6 or b.max() > 1 + 1e-6:
        raise InputError("frame values must be normalized to [0, 1]")

    # conventional TV-L1 settings (lam ~ 0.15) assume 0..255 intensities;
    # rescale internally so the defaults keep their standard meaning
    a = a * np.float32(255.0)
    b = b * np.float32(255.0)
    pyr_a = _build_pyramid(a, params)
    pyr_b = _build_pyramid(b, params)
    n_levels = len(pyr_a)
    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])
    energies: List[float] = []

    for level in range(n_levels - 1, -1, -1):
        i0, i1 = pyr_a[level], pyr_b[level]
        h, w = i0.shape
        i1x, i1y = _centered_gradient(i1)
        gx, gy = _grid(h, w)
        finest = level == 0
        best_energy = tvl1_energy(i0, i1, u, v, params.lam)
        if finest:
            energies.append(best_energy)
        for _ in range(params.warps_per_level):
            # safeguarded warp: keep the solve only if the true TV-L1 energy
            # did not increase, so the logged energies are non-increasing
            u0 = u.copy()
            v0 = v.copy()
            p11 = np.zeros_like(i0)
            p12 = np.zeros_like(i0)
            p21 = np.zeros_like(i0)
            p22 = np.zeros_like(i0)
            i1w = kernels.warp_bilinear(i1, gx + u0, gy + v0)
            i1wx = kernels.warp_bilinear(i1x, gx + u0, gy + v0)
            i1wy = kernels.warp_bilinear(i1y, gx + u0, gy + v0)
            rho_c = i1w - i1wx * u0 - i1wy * v0 - i0
            kernels.tvl1_inner(
                rho_c, i1wx, i1wy, u, v, p11, p12, p21, p22,
                params.lam * params.theta, params.theta, params.tau / params.theta,
                params.iterations_per_warp, params.stop_epsilon ** 2)
            energy = tvl1_energy(i0, i1, u, v, params.lam)
            if energy > best_energy:
                u, v = u0, v0
                break
            best_energy = energy
            if finest:
                energies.append(energy)
        if level > 0:
            nh, nw = pyr_a[level - 1].shape
            u = kernels.resize_bilinear(u, nh, nw) * np.float32(nw / w)
            v = kernels.resize_bilinear(v, nh, nw) * np.float32(nh / h)

    h, w = a.shape
    return FlowField(width=w, height=h, u=u, v=v, energies=energies)


def flow_sequence(frames: Sequence[np.ndarray],
                  params: Optional[TvL1Params] = None) -> List[FlowField]:
    """Flow between each consecutive pair: N frames in, N-1 fields out."""
    frames = list(frames)
    if len(frames) < 2:
        raise InputError("need at least two frames for a flow sequence")
    return [estimate_flow(frames[i], frames[i + 1], params) for i in range(len(frames) - 1)]


def stack_two_channel(pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
                      bound: float) -> Tensor:
    """Clamp each 2-channel field to [-bound, bound], map affinely onto [-1, 1],
    and stack into a [2, time, H, W] network input tensor."""
    if not pairs:
        raise InputError("empty field sequence")
    if bound <= 0:
        raise ConfigError(f"clamp bound must be positive, got {bound}")
    shape = pairs[0][0].shape
    for i, (c0, c1) in enumerate(pairs):
        if c0.shape != shape or c1.shape != shape:
            raise InputError(
                f"mixed field dimensions at index {i}: {c0.shape}/{c1.shape} vs {shape}")
    arr = np.empty((2, len(pairs)) + shape, dtype=np.float32)
    inv = np.float32(1.0 / bound)
    for t, (c0, c1) in enumerate(pairs):
        arr[0, t] = np.clip(c0, -bound, bound) * inv
        arr[1, t] = np.clip(c1, -bound, bound) * inv
    return Tensor(arr, check=False)


def flow_to_input(flows: Sequence[FlowField], bound: float = 20.0) -> Tensor:
    """Network input layout for a flow sequence: channels ordered (u, v)."""
    return stack_two_channel([(f.u, f.v) for f in flows], bound)
