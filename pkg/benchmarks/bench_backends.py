#!/usr/bin/env python3
"""Timing comparison of the numba kernels against the numpy fallbacks.

Run as a script. The same arrays go through both builds; outputs are also
cross-checked so a speedup never hides a divergence. Set
CHAOSFILTER_DISABLE_NUMBA=1 to confirm the package runs on the fallback
path end to end.
"""

import time

import numpy as np

from chaosfilter import _kernels
from chaosfilter.spectral import SpectralGrid


def clock(fn, *args, repeat=5, inner=1):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            out = fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best, out


def row(name, slow_t, fast_t):
    speedup = slow_t / fast_t if fast_t > 0 else float("inf")
    print(f"{name:<28}{slow_t * 1e3:>12.3f}{fast_t * 1e3:>12.3f}{speedup:>10.1f}x")


def main():
    if not _kernels.NUMBA_ENABLED:
        print("numba backend inactive (CHAOSFILTER_DISABLE_NUMBA set or numba missing);")
        print("only the numpy fallback is available, nothing to compare.")
        return

    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")

    # small-state trajectory stepping: one assimilation window, 500 steps
    u3 = rng.standard_normal((1, 3))
    a, b, f3 = 10.0, 8.0 / 3.0, -304.0 / 3.0
    _kernels.lorenz63_rk4_numba(u3.copy(), 1, 1e-3, a, b, f3)  # compile
    t_np, out_np = clock(_kernels.lorenz63_rk4_numpy, u3.copy(), 5000, 1e-3, a, b, f3)
    t_nb, out_nb = clock(_kernels.lorenz63_rk4_numba, u3.copy(), 5000, 1e-3, a, b, f3)
    assert np.allclose(out_np, out_nb, rtol=1e-10)
    row("convection 500-window", t_np, t_nb)

    # particle-scale batch: 5000 states, one window
    u3b = rng.standard_normal((5000, 3))
    t_np, out_np = clock(_kernels.lorenz63_rk4_numpy, u3b.copy(), 10, 1e-3, a, b, f3)
    t_nb, out_nb = clock(_kernels.lorenz63_rk4_numba, u3b.copy(), 10, 1e-3, a, b, f3)
    assert np.allclose(out_np, out_nb, rtol=1e-10)
    row("convection 5000-batch", t_np, t_nb)

    # 60-site cyclic model, one window
    u96 = rng.standard_normal((1, 60))
    _kernels.lorenz96_rk4_numba(u96.copy(), 1, 1e-3, 8.0)
    t_np, out_np = clock(_kernels.lorenz96_rk4_numpy, u96.copy(), 5000, 1e-3, 8.0)
    t_nb, out_nb = clock(_kernels.lorenz96_rk4_numba, u96.copy(), 5000, 1e-3, 8.0)
    assert np.allclose(out_np, out_nb, rtol=1e-10)
    row("cyclic-60 500-window", t_np, t_nb)

    # spectral advection convolution at the demo truncation
    grid = SpectralGrid(8)
    uf = grid.expand(rng.standard_normal(grid.n_reps) + 1j * rng.standard_normal(grid.n_reps))
    _kernels.bilinear_conv_numba(uf, uf, grid.conv_row_ptr, grid.conv_p, grid.conv_q, grid.conv_w)
    t_np, out_np = clock(
        _kernels.bilinear_conv_numpy,
        uf, uf, grid.conv_rows, grid.conv_p, grid.conv_q, grid.conv_w, grid.n_reps,
        inner=10,
    )
    t_nb, out_nb = clock(
        _kernels.bilinear_conv_numba,
        uf, uf, grid.conv_row_ptr, grid.conv_p, grid.conv_q, grid.conv_w,
        inner=10,
    )
    assert np.allclose(out_np, out_nb, rtol=1e-10)
    row("spectral convolution k=8", t_np, t_nb)


if __name__ == "__main__":
    main()
