#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times the four hot kernels (quantized FIR/ARMA runs, noise-only FIR/ARMA)
on a sensor-graph instance for both backends and prints the speedups.

    python benchmarks/bench_kernels.py --nodes 64 --trials 4096
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from qefilt import QuantizerConfig, ResModel, ShiftKind, arma1, build_shift, \
    design_lowpass_fir, generate_sensor_graph, spectral_decompose
from qefilt._backend import HAVE_COMPILED, get_backend
from qefilt.filters import _run_setup
from qefilt.harness import make_input
from qefilt.harness.runner import trial_uniforms


def build_cases(nodes: int, trials: int, order: int, t_max: int, p: float):
    g = generate_sensor_graph(nodes, target_edges=int(3.7 * nodes), seed=1)
    shift = build_shift(g, ShiftKind.SCALED_LAPLACIAN)
    model = ResModel(g, p, ShiftKind.SCALED_LAPLACIAN)
    fir = design_lowpass_fir(shift, order, 0.5)
    filt = arma1(0.5, shift)
    x = make_input(spectral_decompose(shift), 0, filt=fir, shift=shift, qrange=1.0)
    qcfg = QuantizerConfig(bits=12, range=1.0, dither="subtractive")
    base, arr, use_res, p_eff = _run_setup(model)
    n = x.size
    half = float(2 ** (qcfg.bits - 1))
    quant = (qcfg.step, -half, half - 1.0, qcfg.range, True, True)

    cases = {}
    n_per = fir.order * (arr.eu.size + n)
    u = trial_uniforms(0, 0, 0, trials, n_per)
    cases["fir_chunk"] = ("fir_chunk", (base.matrix, fir.taps, x, np.zeros((n, fir.order)),
                                        arr.eu, arr.ev, arr.ew, arr.laplacian_style,
                                        use_res, p_eff, *quant, u, False))
    n_per = t_max * (arr.eu.size + n)
    u = trial_uniforms(1, 0, 0, trials, n_per)
    cases["arma_chunk"] = ("arma_chunk", (base.matrix, filt.psis, filt.gains, x,
                                          np.zeros((n, 1)), arr.eu, arr.ev, arr.ew,
                                          arr.laplacian_style, use_res, p_eff, t_max,
                                          *quant, u, False))
    n_per = fir.order * (arr.eu.size + n)
    u = trial_uniforms(2, 0, 0, trials, n_per)
    cases["fir_noise_chunk"] = ("fir_noise_chunk",
                                (base.matrix, fir.taps, np.zeros((n, fir.order)),
                                 arr.eu, arr.ev, arr.ew, arr.laplacian_style,
                                 use_res, p_eff, np.full(fir.order, 1e-3), u))
    n_per = t_max * (arr.eu.size + n)
    u = trial_uniforms(3, 0, 0, trials, n_per)
    cases["arma_noise_chunk"] = ("arma_noise_chunk",
                                 (base.matrix, filt.psis, np.zeros((n, 1)),
                                  arr.eu, arr.ev, arr.ew, arr.laplacian_style,
                                  use_res, p_eff, t_max, t_max // 2,
                                  np.array([1e-3]), u))
    return cases


def time_call(fn, args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=64)
    ap.add_argument("--trials", type=int, default=4096)
    ap.add_argument("--order", type=int, default=6)
    ap.add_argument("--t-max", type=int, default=40)
    ap.add_argument("--p", type=float, default=0.9)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    cases = build_cases(args.nodes, args.trials, args.order, args.t_max, args.p)
    print(f"nodes={args.nodes} trials={args.trials} order={args.order} "
          f"t_max={args.t_max} p={args.p}")
    header = f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, (fn_name, call_args) in cases.items():
        times = [time_call(getattr(get_backend(b), fn_name), call_args, args.repeat)
                 for b in backends]
        line = f"{name:<18}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:>9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
