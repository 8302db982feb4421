"""Hot-kernel backend selection.

The compiled extension (``_native``, built from Cython) is preferred; the
pure-numpy backend is a drop-in replacement selected automatically when the
extension is missing, or forced with MOTIONSCORE_PURE_PYTHON=1. Both expose:

    conv3d_forward, conv3d_backward_input, conv3d_backward_kernel,
    warp_bilinear, tvl1_inner
"""

import os

import numpy as np

from . import numpy_backend

if os.environ.get("MOTIONSCORE_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _native  # type: ignore[attr-defined]
    except ImportError:
        _native = None
else:
    _native = None

# Per-kernel routing, set by benchmarks/bench_kernels.py measurements on this
# codebase: the offset-loop numpy conv rides BLAS and beats the scalar C
# loops, while the gather-heavy warp and the fused TV-L1 iteration are
# several times faster compiled.
_conv = numpy_backend
_flowk = _native if _native is not None else numpy_backend


def backend_name() -> str:
    return _flowk.NAME


def has_native() -> bool:
    return _native is not None


def get_backend(name: str):
    """Return a specific backend module ("native" or "numpy")."""
    if name == "numpy":
        return numpy_backend
    if name == "native":
        if _native is None:
            raise RuntimeError("native kernel extension is not available")
        return _native
    raise ValueError(f"unknown backend {name!r}")


def conv3d_forward(x, k, stride, padding):
    return _conv.conv3d_forward(x, k, stride, padding)


def conv3d_backward_input(gy, k, x_shape, stride, padding):
    return _conv.conv3d_backward_input(gy, k, x_shape, stride, padding)


def conv3d_backward_kernel(gy, x, k_shape, stride, padding):
    return _conv.conv3d_backward_kernel(gy, x, k_shape, stride, padding)


def warp_bilinear(img, map_x, map_y):
    img = np.ascontiguousarray(img, dtype=np.float32)
    map_x = np.ascontiguousarray(map_x, dtype=np.float32)
    map_y = np.ascontiguousarray(map_y, dtype=np.float32)
    return _flowk.warp_bilinear(img, map_x, map_y)


def tvl1_inner(rho_c, i1wx, i1wy, u, v, p11, p12, p21, p22,
               lam_theta, theta, tau_theta, max_iters, stop_eps2):
    return _flowk.tvl1_inner(rho_c, i1wx, i1wy, u, v, p11, p12, p21, p22,
                             lam_theta, theta, tau_theta, max_iters, stop_eps2)


def resize_bilinear(img, out_h: int, out_w: int):
    """Resize a 2-D image with bilinear sampling (half-pixel centers)."""
    h, w = img.shape
    if (out_h, out_w) == (h, w):
        return np.asarray(img, dtype=np.float32).copy()
    ys = (np.arange(out_h, dtype=np.float32) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float32) + 0.5) * (w / out_w) - 0.5
    map_x, map_y = np.meshgrid(xs, ys)
    return warp_bilinear(img, map_x, map_y)
