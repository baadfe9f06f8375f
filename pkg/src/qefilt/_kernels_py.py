"""Pure-NumPy simulation kernels (fallback backend).

Each function advances a chunk of Monte Carlo trials through a quantized
(or noise-driven) filter recursion. The compiled backend in _kernels.pyx
implements the same API with the same arithmetic, so results agree across
backends to rounding error (bitwise on the edge-sampled paths).

Randomness discipline
---------------------
Kernels never draw random numbers. The caller passes `urand`, one row of
uniforms per trial, consumed left to right in a fixed layout:

* quantized FIR:   per step k=1..K: [E mask values]* then [N dither values]**
* quantized ARMA:  per step t=1..t_max: [E mask values]* then, per branch,
                   [N dither values]**
* noise-only FIR:  per step k=1..K: [E mask values]* then [N noise values]
* noise-only ARMA: per step t: [E mask values]* then [N noise values] per branch

(*) only when edge sampling is active (`use_res` and p < 1); at p = 1 the
    mask block vanishes and the dense base shift is applied, which makes a
    p = 1 stochastic run bit-identical to the deterministic one.
(**) only when quantization and subtractive dither are both on.

An edge survives when its uniform is < p. Dither is (u - 0.5) * step.
Injected noise is (u - 0.5) * scale with scale = sqrt(12) * sigma.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def _apply_edges(v, eu, ev, ew, keep, lap_style):
    """Realized shift times a column batch: sum of per-edge contributions,
    accumulated in edge order."""
    out = np.zeros_like(v)
    if lap_style:
        for e in range(eu.shape[0]):
            u, w_ = eu[e], ev[e]
            c = (ew[e] * keep[:, e]) * (v[u] - v[w_])
            out[u] += c
            out[w_] -= c
    else:
        for e in range(eu.shape[0]):
            u, w_ = eu[e], ev[e]
            wb = ew[e] * keep[:, e]
            out[u] += wb * v[w_]
            out[w_] += wb * v[u]
    return out


def _lattice_error(z, step, lo_idx, hi_idx):
    idx = np.floor(z / step)
    np.clip(idx, lo_idx, hi_idx, out=idx)
    return (idx + 0.5) * step - z


def fir_chunk(S, taps, x, alpha, eu, ev, ew, lap_style, use_res, p,
              step, lo_idx, hi_idx, qrange, use_dither, quantize_on,
              urand, collect=False):
    """Quantized FIR recursion for a chunk of trials.

    Returns (yq, yref, overflow[, states, errors]): quantized and
    noiseless outputs (N, T) sharing the same topology draws, per-trial
    saturation counts, and optionally the state/error history.
    """
    n = x.shape[0]
    t_trials = urand.shape[0]
    k_order = taps.shape[0] - 1
    use_edges = bool(use_res) and p < 1.0
    e_cnt = eu.shape[0] if use_edges else 0
    d_cnt = n if (quantize_on and use_dither) else 0

    wq = np.repeat(x[:, None], t_trials, axis=1)
    wref = wq.copy()
    yq = taps[0] * wq
    yref = taps[0] * wref
    overflow = np.zeros(t_trials, dtype=np.int64)
    states = np.empty((k_order + 1, n, t_trials)) if collect else None
    errors = np.empty((k_order, n, t_trials)) if collect else None
    if collect:
        states[0] = wq

    pos = 0
    for k in range(1, k_order + 1):
        if use_edges:
            keep = urand[:, pos:pos + e_cnt] < p
            pos += e_cnt
        if quantize_on:
            if use_dither:
                d = (urand[:, pos:pos + d_cnt].T - 0.5) * step
                pos += d_cnt
                z = wq + d
            else:
                z = wq
            overflow += np.count_nonzero(np.abs(z) > qrange, axis=0)
            err = _lattice_error(z, step, lo_idx, hi_idx)
            v = wq + err
        else:
            err = np.zeros_like(wq)
            v = wq
        if use_edges:
            wq = _apply_edges(v, eu, ev, ew, keep, lap_style) - alpha[:, k - 1, None] * err
            wref = _apply_edges(wref, eu, ev, ew, keep, lap_style)
        else:
            wq = S @ v - alpha[:, k - 1, None] * err
            wref = S @ wref
        yq += taps[k] * wq
        yref += taps[k] * wref
        if collect:
            states[k] = wq
            errors[k - 1] = err
    if collect:
        return yq, yref, overflow, states, errors
    return yq, yref, overflow, None, None


def arma_chunk(S, psis, gains, x, alpha, eu, ev, ew, lap_style, use_res, p,
               t_max, step, lo_idx, hi_idx, qrange, use_dither, quantize_on,
               urand, collect=False):
    """Quantized ARMA recursion (parallel branches, shared per-step topology).

    Returns per-step aggregates instead of full trajectories:
    dev_sq[t] = ||yq_t - yref_t||^2 per trial, ref_sq / qq_sq likewise,
    yq_sum / yref_sum = per-step output sums over the chunk's trials,
    final outputs, saturation counts, and optionally branch states.
    """
    n = x.shape[0]
    t_trials = urand.shape[0]
    k_br = psis.shape[0]
    use_edges = bool(use_res) and p < 1.0
    e_cnt = eu.shape[0] if use_edges else 0
    d_cnt = n if (quantize_on and use_dither) else 0

    wq = np.zeros((k_br, n, t_trials))
    wref = np.zeros((k_br, n, t_trials))
    gx = gains[:, None] * x[None, :]
    dev_sq = np.empty((t_max, t_trials))
    ref_sq = np.empty((t_max, t_trials))
    qq_sq = np.empty((t_max, t_trials))
    yq_sum = np.zeros((t_max, n))
    yref_sum = np.zeros((t_max, n))
    overflow = np.zeros(t_trials, dtype=np.int64)
    states = np.zeros((t_max + 1, k_br, n, t_trials)) if collect else None

    pos = 0
    for t in range(1, t_max + 1):
        if use_edges:
            keep = urand[:, pos:pos + e_cnt] < p
            pos += e_cnt
        yq_t = np.zeros((n, t_trials))
        yref_t = np.zeros((n, t_trials))
        for k in range(k_br):
            if quantize_on:
                if use_dither:
                    d = (urand[:, pos:pos + d_cnt].T - 0.5) * step
                    pos += d_cnt
                    z = wq[k] + d
                else:
                    z = wq[k]
                overflow += np.count_nonzero(np.abs(z) > qrange, axis=0)
                err = _lattice_error(z, step, lo_idx, hi_idx)
                v = wq[k] + err
            else:
                err = np.zeros((n, t_trials))
                v = wq[k]
            if use_edges:
                wq[k] = psis[k] * _apply_edges(v, eu, ev, ew, keep, lap_style) \
                    + gx[k][:, None] - alpha[:, k, None] * err
                wref[k] = psis[k] * _apply_edges(wref[k], eu, ev, ew, keep, lap_style) \
                    + gx[k][:, None]
            else:
                wq[k] = psis[k] * (S @ v) + gx[k][:, None] - alpha[:, k, None] * err
                wref[k] = psis[k] * (S @ wref[k]) + gx[k][:, None]
            yq_t += wq[k]
            yref_t += wref[k]
        if collect:
            states[t] = wq
        dev = yq_t - yref_t
        dev_sq[t - 1] = (dev * dev).sum(axis=0)
        ref_sq[t - 1] = (yref_t * yref_t).sum(axis=0)
        qq_sq[t - 1] = (yq_t * yq_t).sum(axis=0)
        yq_sum[t - 1] = yq_t.sum(axis=1)
        yref_sum[t - 1] = yref_t.sum(axis=1)
    return dev_sq, ref_sq, qq_sq, yq_sum, yref_sum, yq_t, yref_t, overflow, states


def fir_noise_chunk(S, taps, alpha, eu, ev, ew, lap_style, use_res, p,
                    noise_scales, urand):
    """Noise-driven FIR (zero input, synthetic injected noise).

    noise_scales[k-1] scales the uniforms for stage k; pass zeros to mute
    stages (per-source measurement). Returns ||y||^2 / N per trial.
    """
    t_trials = urand.shape[0]
    k_order = taps.shape[0] - 1
    n = S.shape[0]
    use_edges = bool(use_res) and p < 1.0
    e_cnt = eu.shape[0] if use_edges else 0

    w = np.zeros((n, t_trials))
    y = np.zeros((n, t_trials))
    pos = 0
    for k in range(1, k_order + 1):
        if use_edges:
            keep = urand[:, pos:pos + e_cnt] < p
            pos += e_cnt
        nz = (urand[:, pos:pos + n].T - 0.5) * noise_scales[k - 1]
        pos += n
        v = w + nz
        if use_edges:
            w = _apply_edges(v, eu, ev, ew, keep, lap_style) - alpha[:, k - 1, None] * nz
        else:
            w = S @ v - alpha[:, k - 1, None] * nz
        y += taps[k] * w
    return (y * y).sum(axis=0) / n


def arma_noise_chunk(S, psis, alpha, eu, ev, ew, lap_style, use_res, p,
                     t_max, window, noise_scales, urand):
    """Noise-driven ARMA; measures steady-state power over the last `window`
    steps. Returns (branch_power (K,T), total_power (T,)): per-node power
    of each branch state and of the summed output, window-averaged."""
    n = S.shape[0]
    t_trials = urand.shape[0]
    k_br = psis.shape[0]
    use_edges = bool(use_res) and p < 1.0
    e_cnt = eu.shape[0] if use_edges else 0

    w = np.zeros((k_br, n, t_trials))
    branch_power = np.zeros((k_br, t_trials))
    total_power = np.zeros(t_trials)
    pos = 0
    for t in range(1, t_max + 1):
        if use_edges:
            keep = urand[:, pos:pos + e_cnt] < p
            pos += e_cnt
        y_t = np.zeros((n, t_trials))
        for k in range(k_br):
            nz = (urand[:, pos:pos + n].T - 0.5) * noise_scales[k]
            pos += n
            v = w[k] + nz
            if use_edges:
                w[k] = psis[k] * _apply_edges(v, eu, ev, ew, keep, lap_style) \
                    - alpha[:, k, None] * nz
            else:
                w[k] = psis[k] * (S @ v) - alpha[:, k, None] * nz
            y_t += w[k]
        if t > t_max - window:
            branch_power += (w * w).sum(axis=1) / n
            total_power += (y_t * y_t).sum(axis=0) / n
    return branch_power / window, total_power / window
