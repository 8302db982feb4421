"""Benchmark the compiled kernel core against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from motionscore import kernels
from motionscore.kernels import numpy_backend


def best_of(fn, repeat=5, warmup=2):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def conv_case(name, x_shape, k_shape, stride, pad):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(x_shape).astype(np.float32)
    k = rng.standard_normal(k_shape).astype(np.float32)
    y = numpy_backend.conv3d_forward(x, k, stride, pad)
    gy = rng.standard_normal(y.shape).astype(np.float32)
    co, ci, kt, kh, kw = k_shape
    flops = 2 * y.size * ci * kt * kh * kw
    return [
        (f"conv3d fwd {name}", flops,
         lambda b: lambda: b.conv3d_forward(x, k, stride, pad)),
        (f"conv3d bwd-in {name}", flops,
         lambda b: lambda: b.conv3d_backward_input(gy, k, x_shape, stride, pad)),
        (f"conv3d bwd-k {name}", flops,
         lambda b: lambda: b.conv3d_backward_kernel(gy, x, k_shape, stride, pad)),
    ]


def warp_case(h, w):
    rng = np.random.default_rng(1)
    img = rng.random((h, w)).astype(np.float32)
    mx = (rng.random((h, w)) * (w - 1)).astype(np.float32)
    my = (rng.random((h, w)) * (h - 1)).astype(np.float32)
    return [(f"warp_bilinear {h}x{w}", 8 * h * w,
             lambda b: lambda: b.warp_bilinear(img, mx, my))]


def tvl1_case(h, w, iters):
    rng = np.random.default_rng(2)
    rho = (rng.standard_normal((h, w)) * 0.1).astype(np.float32)
    gx = rng.standard_normal((h, w)).astype(np.float32)
    gy = rng.standard_normal((h, w)).astype(np.float32)

    def make(backend):
        def run():
            u = np.zeros((h, w), np.float32)
            v = np.zeros((h, w), np.float32)
            p = [np.zeros((h, w), np.float32) for _ in range(4)]
            backend.tvl1_inner(rho, gx, gy, u, v, *p, 0.045, 0.3, 0.4167, iters, 1e-12)
        return run

    return [(f"tvl1_inner {h}x{w} x{iters}", 30 * h * w * iters, make)]


def main():
    cases = []
    # encoder-sized stages (desk-scale training shapes)
    cases += conv_case("2x16x32x32 k3 c8", (2, 16, 32, 32), (8, 2, 3, 3, 3),
                       (1, 2, 2), (1, 1, 1))
    cases += conv_case("8x16x16x16 k3 c16", (8, 16, 16, 16), (16, 8, 3, 3, 3),
                       (2, 2, 2), (1, 1, 1))
    cases += conv_case("16x8x8x8 k3 c32", (16, 8, 8, 8), (32, 16, 3, 3, 3),
                       (2, 2, 2), (1, 1, 1))
    cases += warp_case(256, 340)
    cases += tvl1_case(128, 128, 30)

    have_native = kernels.has_native()
    if not have_native:
        print("native extension not built; timing the numpy backend only\n")
    header = f"{'case':34} {'numpy':>10} {'native':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, flops, make in cases:
        t_np = best_of(make(numpy_backend))
        if have_native:
            t_nat = best_of(make(kernels.get_backend("native")))
            print(f"{name:34} {t_np * 1e3:9.2f}ms {t_nat * 1e3:9.2f}ms "
                  f"{t_np / t_nat:7.2f}x   ({flops / t_nat / 1e9:.2f} GFLOP/s native)")
        else:
            print(f"{name:34} {t_np * 1e3:9.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
