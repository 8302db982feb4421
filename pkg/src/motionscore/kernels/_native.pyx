# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: 3D convolution passes, bilinear warp, TV-L1 inner loop.

Mirrors numpy_backend exactly (same formulas and border conventions); the two
are interchangeable up to floating-point accumulation order.
"""

import numpy as np

from libc.math cimport floor, sqrt

NAME = "native"

ctypedef fused real:
    float
    double


def conv3d_forward(x, k, stride, padding):
    st, sh, sw = stride
    pt, ph, pw = padding
    xp = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    co = k.shape[0]
    to = (xp.shape[1] - k.shape[2]) // st + 1
    ho = (xp.shape[2] - k.shape[3]) // sh + 1
    wo = (xp.shape[3] - k.shape[4]) // sw + 1
    out = np.zeros((co, to, ho, wo), dtype=x.dtype)
    _conv3d_fwd(np.ascontiguousarray(xp), np.ascontiguousarray(k), out, st, sh, sw)
    return out


def conv3d_backward_input(gy, k, x_shape, stride, padding):
    st, sh, sw = stride
    pt, ph, pw = padding
    ci, t, h, w = x_shape
    gxp = np.zeros((ci, t + 2 * pt, h + 2 * ph, w + 2 * pw), dtype=gy.dtype)
    _conv3d_bwd_input(np.ascontiguousarray(gy), np.ascontiguousarray(k), gxp, st, sh, sw)
    return gxp[:, pt:pt + t, ph:ph + h, pw:pw + w].copy()


def conv3d_backward_kernel(gy, x, k_shape, stride, padding):
    st, sh, sw = stride
    pt, ph, pw = padding
    xp = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    gk = np.zeros(k_shape, dtype=gy.dtype)
    _conv3d_bwd_kernel(np.ascontiguousarray(gy), np.ascontiguousarray(xp), gk, st, sh, sw)
    return gk


def warp_bilinear(img, map_x, map_y):
    out = np.empty_like(map_x)
    _warp_bilinear_f32(img, map_x, map_y, out)
    return out


def tvl1_inner(rho_c, i1wx, i1wy, u, v, p11, p12, p21, p22,
               lam_theta, theta, tau_theta, max_iters, stop_eps2):
    return _tvl1_inner_f32(rho_c, i1wx, i1wy, u, v, p11, p12, p21, p22,
                           lam_theta, theta, tau_theta, max_iters, stop_eps2)


def _conv3d_fwd(real[:, :, :, ::1] xp, real[:, :, :, :, ::1] k,
                real[:, :, :, ::1] out, Py_ssize_t st, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t co = out.shape[0], to = out.shape[1], ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t ci = xp.shape[0]
    cdef Py_ssize_t kt = k.shape[2], kh = k.shape[3], kw = k.shape[4]
    cdef Py_ssize_t o, c, dt, dh, dw, t, h, w, it, ih
    cdef real wgt
    for o in range(co):
        for c in range(ci):
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        wgt = k[o, c, dt, dh, dw]
                        for t in range(to):
                            it = t * st + dt
                            for h in range(ho):
                                ih = h * sh + dh
                                for w in range(wo):
                                    out[o, t, h, w] += wgt * xp[c, it, ih, w * sw + dw]


def _conv3d_bwd_input(real[:, :, :, ::1] gy, real[:, :, :, :, ::1] k,
                      real[:, :, :, ::1] gxp, Py_ssize_t st, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t co = gy.shape[0], to = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t ci = gxp.shape[0]
    cdef Py_ssize_t kt = k.shape[2], kh = k.shape[3], kw = k.shape[4]
    cdef Py_ssize_t o, c, dt, dh, dw, t, h, w, it, ih
    cdef real wgt
    for c in range(ci):
        for o in range(co):
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        wgt = k[o, c, dt, dh, dw]
                        for t in range(to):
                            it = t * st + dt
                            for h in range(ho):
                                ih = h * sh + dh
                                for w in range(wo):
                                    gxp[c, it, ih, w * sw + dw] += wgt * gy[o, t, h, w]


def _conv3d_bwd_kernel(real[:, :, :, ::1] gy, real[:, :, :, ::1] xp,
                       real[:, :, :, :, ::1] gk, Py_ssize_t st, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t co = gy.shape[0], to = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t ci = xp.shape[0]
    cdef Py_ssize_t kt = gk.shape[2], kh = gk.shape[3], kw = gk.shape[4]
    cdef Py_ssize_t o, c, dt, dh, dw, t, h, w, it, ih
    cdef double acc
    for o in range(co):
        for c in range(ci):
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        acc = 0.0
                        for t in range(to):
                            it = t * st + dt
                            for h in range(ho):
                                ih = h * sh + dh
                                for w in range(wo):
                                    acc += gy[o, t, h, w] * xp[c, it, ih, w * sw + dw]
                        gk[o, c, dt, dh, dw] = <real> acc


def _warp_bilinear_f32(float[:, ::1] img, float[:, ::1] mx, float[:, ::1] my,
                       float[:, ::1] out):
    # output takes the shape of the coordinate maps; img bounds only clip
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t oh = mx.shape[0], ow = mx.shape[1], i, j, x0, x1, y0, y1
    cdef double x, y, fx, fy, top, bot
    for i in range(oh):
        for j in range(ow):
            x = mx[i, j]
            y = my[i, j]
            x0 = <Py_ssize_t> floor(x)
            y0 = <Py_ssize_t> floor(y)
            fx = x - x0
            fy = y - y0
            x1 = x0 + 1
            y1 = y0 + 1
            if x0 < 0: x0 = 0
            if x0 > w - 1: x0 = w - 1
            if x1 < 0: x1 = 0
            if x1 > w - 1: x1 = w - 1
            if y0 < 0: y0 = 0
            if y0 > h - 1: y0 = h - 1
            if y1 < 0: y1 = 0
            if y1 > h - 1: y1 = h - 1
            top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
            bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
            out[i, j] = <float> ((1.0 - fy) * top + fy * bot)


def _tvl1_inner_f32(float[:, ::1] rho_c, float[:, ::1] i1wx, float[:, ::1] i1wy,
                    float[:, ::1] u, float[:, ::1] v,
                    float[:, ::1] p11, float[:, ::1] p12,
                    float[:, ::1] p21, float[:, ::1] p22,
                    double lam_theta, double theta, double tau_theta,
                    int max_iters, double stop_eps2):
    cdef Py_ssize_t h = u.shape[0], w = u.shape[1], i, j
    cdef int it
    cdef double gx, gy, g, rho, th, sc, divu, divv, un, vn, change
    cdef double ux, uy, vx, vy, q11, q12, q21, q22, nu, nv
    for it in range(max_iters):
        change = 0.0
        # primal: thresholded data step plus divergence of the dual field
        for i in range(h):
            for j in range(w):
                gx = i1wx[i, j]
                gy = i1wy[i, j]
                g = gx * gx + gy * gy
                rho = rho_c[i, j] + gx * u[i, j] + gy * v[i, j]
                th = lam_theta * g
                if rho < -th:
                    sc = lam_theta
                elif rho > th:
                    sc = -lam_theta
                elif g > 1e-12:
                    sc = -rho / g
                else:
                    sc = 0.0
                divu = p11[i, j]
                divv = p21[i, j]
                if j > 0:
                    divu -= p11[i, j - 1]
                    divv -= p21[i, j - 1]
                divu += p12[i, j]
                divv += p22[i, j]
                if i > 0:
                    divu -= p12[i - 1, j]
                    divv -= p22[i - 1, j]
                un = u[i, j] + sc * gx + theta * divu
                vn = v[i, j] + sc * gy + theta * divv
                change += (un - u[i, j]) * (un - u[i, j]) + (vn - v[i, j]) * (vn - v[i, j])
                u[i, j] = <float> un
                v[i, j] = <float> vn
        # dual: normalized ascent on the forward gradient; keeps |p| <= 1 and
        # is stable at tau/theta > 1/8 (unlike the exact projection)
        for i in range(h):
            for j in range(w):
                ux = u[i, j + 1] - u[i, j] if j < w - 1 else 0.0
                uy = u[i + 1, j] - u[i, j] if i < h - 1 else 0.0
                vx = v[i, j + 1] - v[i, j] if j < w - 1 else 0.0
                vy = v[i + 1, j] - v[i, j] if i < h - 1 else 0.0
                nu = 1.0 + tau_theta * sqrt(ux * ux + uy * uy)
                nv = 1.0 + tau_theta * sqrt(vx * vx + vy * vy)
                p11[i, j] = <float> ((p11[i, j] + tau_theta * ux) / nu)
                p12[i, j] = <float> ((p12[i, j] + tau_theta * uy) / nu)
                p21[i, j] = <float> ((p21[i, j] + tau_theta * vx) / nv)
                p22[i, j] = <float> ((p22[i, j] + tau_theta * vy) / nv)
        if change / (h * w) < stop_eps2:
            return it + 1
    return max_iters
