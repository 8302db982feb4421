"""Motion boundaries: spatial derivatives of optical flow.

Differencing is linear and kills constants, so any uniform (camera) motion
component vanishes at interior pixels; what survives marks where the motion
field changes, i.e. object boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .errors import InputError
from .flow import FlowField, stack_two_channel

MB_INPUT_BOUND = 2.0


@dataclass
class MotionBoundaryField:
    """Two-channel derivative sum of a flow field: b_u = u_x + u_y, b_v likewise."""
    width: int
    height: int
    b_u: np.ndarray
    b_v: np.ndarray

    def __post_init__(self):
        for name, comp in (("b_u", self.b_u), ("b_v", self.b_v)):
            if comp.shape != (self.height, self.width):
                raise InputError(
                    f"{name} has shape {comp.shape}, expected {(self.height, self.width)}")


def spatial_derivatives(component: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(d_x, d_y): central differences at interior pixels, one-sided at borders."""
    f = np.asarray(component)
    if f.ndim != 2 or f.shape[0] < 3 or f.shape[1] < 3:
        raise InputError(f"field must be at least 3x3, got {f.shape}")
    dx = np.empty_like(f)
    dy = np.empty_like(f)
    half = f.dtype.type(0.5)
    dx[:, 1:-1] = (f[:, 2:] - f[:, :-2]) * half
    dx[:, 0] = f[:, 1] - f[:, 0]
    dx[:, -1] = f[:, -1] - f[:, -2]
    dy[1:-1, :] = (f[2:, :] - f[:-2, :]) * half
    dy[0, :] = f[1, :] - f[0, :]
    dy[-1, :] = f[-1, :] - f[-2, :]
    return dx, dy


def motion_boundary(flow: FlowField) -> MotionBoundaryField:
    """Signed elementwise derivative sum per flow component."""
    ux, uy = spatial_derivatives(flow.u)
    vx, vy = spatial_derivatives(flow.v)
    return MotionBoundaryField(width=flow.width, height=flow.height,
                               b_u=ux + uy, b_v=vx + vy)


def mb_sequence(clip_flows: Sequence[FlowField]) -> List[MotionBoundaryField]:
    """N-1 flow fields -> N-1 two-channel boundary fields ((N-1)*2 frames)."""
    flows = list(clip_flows)
    if not flows:
        raise InputError("empty flow sequence")
    return [motion_boundary(f) for f in flows]


def mb_frame_count(fields: Sequence[MotionBoundaryField]) -> int:
    return 2 * len(fields)


def mb_to_input(fields: Sequence[MotionBoundaryField], bound: float = MB_INPUT_BOUND) -> Tensor:
    """Network input layout, same clamp/affine mapping as the flow stream."""
    return stack_two_channel([(f.b_u, f.b_v) for f in fields], bound)
