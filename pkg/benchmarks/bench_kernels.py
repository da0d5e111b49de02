#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy fallback.

Times conv2d forward/backward and maxpool2x2 forward/backward at the
shapes the trainer actually uses, checks both backends agree, and
prints a speedup table. Run after `pip install -e .`:

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from imarl.nn import backend
from imarl.nn import kernels_numpy as knp

try:
    from imarl.nn import _kernels as kc
except ImportError:
    kc = None


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_case(name, np_fn, c_fn, repeats):
    t_np = timeit(np_fn, repeats)
    if c_fn is None:
        print(f"{name:<24} numpy {t_np * 1e3:8.3f} ms   compiled: unavailable")
        return
    t_c = timeit(c_fn, repeats)
    print(f"{name:<24} numpy {t_np * 1e3:8.3f} ms   compiled {t_c * 1e3:8.3f} ms"
          f"   speedup {t_np / t_c:5.2f}x")


def check_agreement(rng):
    x = rng.standard_normal((32, 16, 16)).astype(np.float32)
    w = rng.standard_normal((32, 32, 3, 3)).astype(np.float32)
    b = rng.standard_normal(32).astype(np.float32)
    g = rng.standard_normal((32, 16, 16)).astype(np.float32)

    out_np = knp.conv2d_forward(x, w, b)
    out_c = kc.conv2d_forward(x, w, b)
    assert np.allclose(out_np, out_c, atol=1e-4), "conv forward mismatch"

    gx_np, gw_np, gb_np = knp.conv2d_backward(x, w, g)
    gx_c, gw_c, gb_c = kc.conv2d_backward(x, w, g)
    assert np.allclose(gx_np, gx_c, atol=1e-3), "conv backward dx mismatch"
    assert np.allclose(gw_np, gw_c, atol=1e-2), "conv backward dw mismatch"
    assert np.allclose(gb_np, gb_c, atol=1e-3), "conv backward db mismatch"

    p_np, i_np = knp.maxpool2x2_forward(out_np)
    p_c, i_c = kc.maxpool2x2_forward(out_np)
    assert np.array_equal(p_np, p_c) and np.array_equal(i_np, i_c), "pool mismatch"
    print("backend agreement: ok\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args()

    print(f"active backend: {backend.active_backend()}")
    if kc is None:
        print("compiled extension not built; timing numpy only\n")
    else:
        check_agreement(np.random.default_rng(0))

    rng = np.random.default_rng(1)
    cases = [("maim 64x64 conv1", 1, 32, 64), ("maim 32x32 conv2", 32, 32, 32),
             ("maim 16x16 conv2", 32, 32, 16)]
    for label, cin, cout, hw in cases:
        x = rng.standard_normal((cin, hw, hw)).astype(np.float32)
        w = rng.standard_normal((cout, cin, 3, 3)).astype(np.float32)
        b = np.zeros(cout, dtype=np.float32)
        g = rng.standard_normal((cout, hw, hw)).astype(np.float32)
        bench_case(f"conv_fwd {label}", lambda: knp.conv2d_forward(x, w, b),
                   kc and (lambda: kc.conv2d_forward(x, w, b)), args.repeats)
        bench_case(f"conv_bwd {label}", lambda: knp.conv2d_backward(x, w, g),
                   kc and (lambda: kc.conv2d_backward(x, w, g)), args.repeats)

    x = rng.standard_normal((32, 64, 64)).astype(np.float32)
    bench_case("pool_fwd 32x64x64", lambda: knp.maxpool2x2_forward(x),
               kc and (lambda: kc.maxpool2x2_forward(x)), args.repeats)
    out, idx = knp.maxpool2x2_forward(x)
    g = np.ones_like(out)
    bench_case("pool_bwd 32x64x64", lambda: knp.maxpool2x2_backward(g, idx, x.shape),
               kc and (lambda: kc.maxpool2x2_backward(g, idx, x.shape)), args.repeats)


if __name__ == "__main__":
    main()
