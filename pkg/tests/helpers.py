"""Shared test oracles: a naive nested-loop 3D convolution and central
finite differences. Both are kept deliberately independent of the package's
compute paths."""

import numpy as np


def naive_conv3d(x, k, stride, padding):
    """Seven nested loops, pure Python accumulation."""
    ci, T, H, W = x.shape
    co = k.shape[0]
    kt, kh, kw = k.shape[2:]
    st, sh, sw = stride
    pt, ph, pw = padding
    xp = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    to = (T + 2 * pt - kt) // st + 1
    ho = (H + 2 * ph - kh) // sh + 1
    wo = (W + 2 * pw - kw) // sw + 1
    out = np.zeros((co, to, ho, wo), dtype=np.float64)
    for o in range(co):
        for t in range(to):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(ci):
                        for a in range(kt):
                            for b in range(kh):
                                for d in range(kw):
                                    acc += float(xp[c, t * st + a, i * sh + b, j * sw + d]) \
                                        * float(k[o, c, a, b, d])
                    out[o, t, i, j] = acc
    return out


def naive_conv2d(x, k):
    """Valid-mode 2D cross-correlation, nested loops."""
    ci, H, W = x.shape
    co, _, kh, kw = k.shape
    ho, wo = H - kh + 1, W - kw + 1
    out = np.zeros((co, ho, wo), dtype=np.float64)
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for c in range(ci):
                    for a in range(kh):
                        for b in range(kw):
                            acc += float(x[c, i + a, j + b]) * float(k[o, c, a, b])
                out[o, i, j] = acc
    return out


def central_diff(f, arrays, which, idx, eps=1e-4):
    """d f / d arrays[which][idx] by central differences; f maps arrays -> float."""
    plus = [a.copy() for a in arrays]
    minus = [a.copy() for a in arrays]
    plus[which][idx] += eps
    minus[which][idx] -= eps
    return (f(plus) - f(minus)) / (2.0 * eps)


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_grads(f, arrays, grads, rng, n_probes=100, eps=1e-4, tol=1e-3):
    """Probe random coordinates of each array; compare analytic grads to
    central differences. Arrays must be float64 for reliable differencing."""
    worst = 0.0
    for _ in range(n_probes):
        which = int(rng.integers(len(arrays)))
        flat = int(rng.integers(arrays[which].size))
        idx = np.unravel_index(flat, arrays[which].shape)
        fd = central_diff(f, arrays, which, idx, eps)
        an = grads[which][idx]
        worst = max(worst, rel_err(an, fd))
    assert worst <= tol, f"worst relative gradient error {worst:.3e} > {tol}"
    return worst
