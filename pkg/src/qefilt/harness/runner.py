"""Chunked Monte Carlo drivers over the kernel backends.

Trial i of a grid cell draws from its own counter-derived stream,
default_rng([master_seed, cell_id, i]), so serial and parallel execution
and any chunk size produce identical results, and paired runs (feedback
vs none) can replay identical topology and dither draws by re-creating
the streams.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._backend import get_backend
from ..filters import ArmaFilter, FirFilter, FeedbackPlan, _run_setup, check_arma_stability
from ..quantizers import QuantizerConfig

DEFAULT_CHUNK = 1024


def trial_uniforms(master_seed: int, cell: int, start: int, stop: int, n_per: int) -> np.ndarray:
    """Uniform block for trials [start, stop): one stream per trial."""
    u = np.empty((stop - start, n_per))
    for row, i in enumerate(range(start, stop)):
        u[row] = np.random.default_rng([master_seed, cell, i]).random(n_per)
    return u


def _quant_args(qcfg: QuantizerConfig | None):
    if qcfg is None:
        return 1.0, -0.0, 0.0, 0.0, False, False
    half = float(2 ** (qcfg.bits - 1))
    return (qcfg.step, -half, half - 1.0, qcfg.range,
            qcfg.dither == "subtractive", True)


@dataclass
class FirStats:
    """Aggregates of one quantized-FIR cell: everything the SNR and noise
    columns need, without keeping per-trial outputs."""

    n: int
    trials: int
    ratio_sum: float          # sum over trials of ||yq-yref||^2 / ||yref||^2
    dev_sq_sum: float
    qq_sq_sum: float
    yq_sum: np.ndarray        # (N,)
    yref_sum: np.ndarray
    overflow: int
    quantized_entries: int


def run_fir_trials(shift_source, fir: FirFilter, x, qcfg: QuantizerConfig,
                   plan: FeedbackPlan, trials: int, master_seed: int, cell: int,
                   backend: str | None = None, chunk: int = DEFAULT_CHUNK) -> FirStats:
    base, arr, use_res, p = _run_setup(shift_source)
    kern = get_backend(backend)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    alpha = plan.weight_matrix(n, fir.order)
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    dith = n if qcfg.dither == "subtractive" else 0
    n_per = fir.order * (masks + dith)
    step, lo, hi, qr, use_dith, _ = _quant_args(qcfg)

    stats = FirStats(n=n, trials=trials, ratio_sum=0.0, dev_sq_sum=0.0, qq_sq_sum=0.0,
                     yq_sum=np.zeros(n), yref_sum=np.zeros(n), overflow=0,
                     quantized_entries=trials * fir.order * n)
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        u = trial_uniforms(master_seed, cell, start, stop, n_per)
        yq, yref, ov, _, _ = kern.fir_chunk(
            base.matrix, fir.taps, x, alpha, arr.eu, arr.ev, arr.ew,
            arr.laplacian_style, use_res, p, step, lo, hi, qr, use_dith, True, u, False)
        dev = yq - yref
        dev_sq = (dev * dev).sum(axis=0)
        ref_sq = (yref * yref).sum(axis=0)
        stats.ratio_sum += float((dev_sq / ref_sq).sum())
        stats.dev_sq_sum += float(dev_sq.sum())
        stats.qq_sq_sum += float((yq * yq).sum())
        stats.yq_sum += yq.sum(axis=1)
        stats.yref_sum += yref.sum(axis=1)
        stats.overflow += int(ov.sum())
    return stats


@dataclass
class ArmaStats:
    """Per-step aggregates of one quantized-ARMA cell."""

    n: int
    trials: int
    t_max: int
    ratio_sum: np.ndarray     # (t_max,) sums over trials of per-step ratios
    dev_sq_sum: np.ndarray    # (t_max,)
    ref_sq_sum: np.ndarray
    qq_sq_sum: np.ndarray
    yq_sum: np.ndarray        # (t_max, N)
    yref_sum: np.ndarray
    overflow: int
    quantized_entries: int


def run_arma_trials(shift_source, arma: ArmaFilter, x, qcfg: QuantizerConfig,
                    plan: FeedbackPlan, trials: int, t_max: int,
                    master_seed: int, cell: int,
                    backend: str | None = None, chunk: int = DEFAULT_CHUNK) -> ArmaStats:
    base, arr, use_res, p = _run_setup(shift_source)
    check_arma_stability(arma, base.rho)
    kern = get_backend(backend)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    k_br = arma.num_branches
    alpha = plan.weight_matrix(n, k_br)
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    dith = n if qcfg.dither == "subtractive" else 0
    n_per = t_max * (masks + k_br * dith)
    step, lo, hi, qr, use_dith, _ = _quant_args(qcfg)

    stats = ArmaStats(n=n, trials=trials, t_max=t_max,
                      ratio_sum=np.zeros(t_max), dev_sq_sum=np.zeros(t_max),
                      ref_sq_sum=np.zeros(t_max), qq_sq_sum=np.zeros(t_max),
                      yq_sum=np.zeros((t_max, n)), yref_sum=np.zeros((t_max, n)),
                      overflow=0, quantized_entries=trials * t_max * k_br * n)
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        u = trial_uniforms(master_seed, cell, start, stop, n_per)
        dev_sq, ref_sq, qq_sq, yq_s, yref_s, _, _, ov, _ = kern.arma_chunk(
            base.matrix, arma.psis, arma.gains, x, alpha, arr.eu, arr.ev, arr.ew,
            arr.laplacian_style, use_res, p, int(t_max),
            step, lo, hi, qr, use_dith, True, u, False)
        stats.ratio_sum += (dev_sq / ref_sq).sum(axis=1)
        stats.dev_sq_sum += dev_sq.sum(axis=1)
        stats.ref_sq_sum += ref_sq.sum(axis=1)
        stats.qq_sq_sum += qq_sq.sum(axis=1)
        stats.yq_sum += yq_s
        stats.yref_sum += yref_s
        stats.overflow += int(ov.sum())
    return stats


def run_fir_noiseless(shift_source, fir: FirFilter, x, trials: int,
                      master_seed: int, cell: int,
                      backend: str | None = None, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Unquantized outputs over topology randomness, shape (N, trials)."""
    base, arr, use_res, p = _run_setup(shift_source)
    kern = get_backend(backend)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    alpha = np.zeros((n, fir.order))
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    n_per = fir.order * masks
    out = np.empty((n, trials))
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        u = trial_uniforms(master_seed, cell, start, stop, n_per)
        _, yref, _, _, _ = kern.fir_chunk(
            base.matrix, fir.taps, x, alpha, arr.eu, arr.ev, arr.ew,
            arr.laplacian_style, use_res, p, 1.0, -1.0, 0.0, 1.0, False, False, u, False)
        out[:, start:stop] = yref
    return out


def run_arma_noiseless(shift_source, arma: ArmaFilter, x, trials: int, t_max: int,
                       master_seed: int, cell: int,
                       backend: str | None = None, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Unquantized final outputs y_{t_max}, shape (N, trials)."""
    base, arr, use_res, p = _run_setup(shift_source)
    check_arma_stability(arma, base.rho)
    kern = get_backend(backend)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    alpha = np.zeros((n, arma.num_branches))
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    n_per = t_max * masks
    out = np.empty((n, trials))
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        u = trial_uniforms(master_seed, cell, start, stop, n_per)
        res = kern.arma_chunk(
            base.matrix, arma.psis, arma.gains, x, alpha, arr.eu, arr.ev, arr.ew,
            arr.laplacian_style, use_res, p, int(t_max),
            1.0, -1.0, 0.0, 1.0, False, False, u, False)
        out[:, start:stop] = res[6]
    return out


def run_fir_noise_trials(shift_source, fir: FirFilter, plan: FeedbackPlan,
                         noise_vars, trials: int, master_seed: int, cell: int,
                         backend: str | None = None, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Noise-driven FIR powers ||y||^2/N per trial; noise_vars is the
    per-stage variance vector (zeros mute stages)."""
    base, arr, use_res, p = _run_setup(shift_source)
    kern = get_backend(backend)
    n = base.n
    alpha = plan.weight_matrix(n, fir.order)
    scales = np.sqrt(12.0 * np.asarray(noise_vars, dtype=np.float64))
    if scales.shape != (fir.order,):
        raise ValueError(f"need {fir.order} per-stage variances")
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    n_per = fir.order * (masks + n)
    powers = np.empty(trials)
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        u = trial_uniforms(master_seed, cell, start, stop, n_per)
        powers[start:stop] = kern.fir_noise_chunk(
            base.matrix, fir.taps, alpha, arr.eu, arr.ev, arr.ew,
            arr.laplacian_style, use_res, p, scales, u)
    return powers


def run_arma_noise_trials(shift_source, arma: ArmaFilter, plan: FeedbackPlan,
                          noise_vars, trials: int, t_max: int, window: int,
                          master_seed: int, cell: int,
                          backend: str | None = None, chunk: int = DEFAULT_CHUNK):
    """Noise-driven ARMA steady-state powers: (branch (K, trials), total (trials,))."""
    base, arr, use_res, p = _run_setup(shift_source)
    check_arma_stability(arma, base.rho)
    kern = get_backend(backend)
    n = base.n
    k_br = arma.num_branches
    alpha = plan.weight_matrix(n, k_br)
    scales = np.sqrt(12.0 * np.asarray(noise_vars, dtype=np.float64))
    if scales.shape != (k_br,):
        raise ValueError(f"need {k_br} per-branch variances")
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    n_per = t_max * (masks + k_br * n)
    branch = np.empty((k_br, trials))
    total = np.empty(trials)
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        u = trial_uniforms(master_seed, cell, start, stop, n_per)
        b, t = kern.arma_noise_chunk(
            base.matrix, arma.psis, alpha, arr.eu, arr.ev, arr.ew,
            arr.laplacian_style, use_res, p, int(t_max), int(window), scales, u)
        branch[:, start:stop] = b
        total[start:stop] = t
    return branch, total
