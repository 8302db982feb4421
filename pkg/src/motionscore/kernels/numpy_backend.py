"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable (or explicitly disabled via
MOTIONSCORE_PURE_PYTHON=1). Must stay numerically interchangeable with the
compiled backend: same formulas, same border conventions.
"""

import numpy as np

NAME = "numpy"


def conv3d_forward(x, k, stride, padding):
    """Cross-correlate x [Ci,T,H,W] with k [Co,Ci,kT,kH,kW].

    Decomposed into one BLAS matmul per kernel offset; output accumulates in
    the input dtype.
    """
    st, sh, sw = stride
    pt, ph, pw = padding
    co, ci, kt, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    to = (xp.shape[1] - kt) // st + 1
    ho = (xp.shape[2] - kh) // sh + 1
    wo = (xp.shape[3] - kw) // sw + 1
    out = np.zeros((co, to, ho, wo), dtype=x.dtype)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                xs = xp[:, dt:dt + to * st:st, dh:dh + ho * sh:sh, dw:dw + wo * sw:sw]
                out += np.tensordot(k[:, :, dt, dh, dw], xs, axes=([1], [0]))
    return out


def conv3d_backward_input(gy, k, x_shape, stride, padding):
    st, sh, sw = stride
    pt, ph, pw = padding
    co, ci, kt, kh, kw = k.shape
    _, t, h, w = (ci,) + tuple(x_shape[1:])
    to, ho, wo = gy.shape[1:]
    gxp = np.zeros((ci, t + 2 * pt, h + 2 * ph, w + 2 * pw), dtype=gy.dtype)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                contrib = np.tensordot(k[:, :, dt, dh, dw], gy, axes=([0], [0]))
                gxp[:, dt:dt + to * st:st, dh:dh + ho * sh:sh, dw:dw + wo * sw:sw] += contrib
    return gxp[:, pt:pt + t, ph:ph + h, pw:pw + w]


def conv3d_backward_kernel(gy, x, k_shape, stride, padding):
    st, sh, sw = stride
    pt, ph, pw = padding
    co, ci, kt, kh, kw = k_shape
    xp = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    to, ho, wo = gy.shape[1:]
    gk = np.zeros(k_shape, dtype=gy.dtype)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                xs = xp[:, dt:dt + to * st:st, dh:dh + ho * sh:sh, dw:dw + wo * sw:sw]
                gk[:, :, dt, dh, dw] = np.tensordot(gy, xs, axes=([1, 2, 3], [1, 2, 3]))
    return gk


def warp_bilinear(img, map_x, map_y):
    """Sample img at absolute coordinates (map_x, map_y), border-replicated."""
    h, w = img.shape
    x0 = np.floor(map_x)
    y0 = np.floor(map_y)
    fx = (map_x - x0).astype(img.dtype)
    fy = (map_y - y0).astype(img.dtype)
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    top = (1 - fx) * img[y0i, x0i] + fx * img[y0i, x1i]
    bot = (1 - fx) * img[y1i, x0i] + fx * img[y1i, x1i]
    return ((1 - fy) * top + fy * bot).astype(img.dtype)


def _forward_grad(a):
    dx = np.zeros_like(a)
    dy = np.zeros_like(a)
    dx[:, :-1] = a[:, 1:] - a[:, :-1]
    dy[:-1, :] = a[1:, :] - a[:-1, :]
    return dx, dy


def _divergence(px, py):
    div = np.zeros_like(px)
    div[:, 0] += px[:, 0]
    div[:, 1:] += px[:, 1:] - px[:, :-1]
    div[0, :] += py[0, :]
    div[1:, :] += py[1:, :] - py[:-1, :]
    return div


def tvl1_inner(rho_c, i1wx, i1wy, u, v, p11, p12, p21, p22,
               lam_theta, theta, tau_theta, max_iters, stop_eps2):
    """One warp's fixed-point iterations; mutates u/v and the dual fields.

    Per iteration: pointwise thresholding of the linearized residual, primal
    update from the divergence of the dual field, normalized dual ascent that
    keeps the dual field inside the unit ball. Returns iterations run.
    """
    grad = i1wx * i1wx + i1wy * i1wy
    n = float(u.size)
    safe_grad = np.maximum(grad, 1e-12)
    for it in range(max_iters):
        rho = rho_c + i1wx * u + i1wy * v
        th = lam_theta * grad
        scale = np.where(rho < -th, lam_theta,
                         np.where(rho > th, -lam_theta,
                                  np.where(grad > 1e-12, -rho / safe_grad, 0.0)))
        scale = scale.astype(u.dtype)
        v1 = u + scale * i1wx
        v2 = v + scale * i1wy
        u_new = v1 + theta * _divergence(p11, p12)
        v_new = v2 + theta * _divergence(p21, p22)
        change = float(np.sum((u_new - u) ** 2 + (v_new - v) ** 2, dtype=np.float64)) / n
        u[:] = u_new
        v[:] = v_new
        ux, uy = _forward_grad(u)
        vx, vy = _forward_grad(v)
        # normalized dual ascent; keeps |p| <= 1 and is stable at tau/theta > 1/8
        ng_u = (1.0 + tau_theta * np.sqrt(ux * ux + uy * uy)).astype(u.dtype)
        ng_v = (1.0 + tau_theta * np.sqrt(vx * vx + vy * vy)).astype(u.dtype)
        p11 += tau_theta * ux
        p12 += tau_theta * uy
        p21 += tau_theta * vx
        p22 += tau_theta * vy
        p11 /= ng_u
        p12 /= ng_u
        p21 /= ng_v
        p22 /= ng_v
        if change < stop_eps2:
            return it + 1
    return max_iters
