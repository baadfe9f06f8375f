"""Independent validation oracles: Monte Carlo estimators, exhaustive
enumeration over edge masks, and a derivative-free search over feedback
weights. These never reuse the closed forms they are checking."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..errors import QefiltError
from ..filters import FeedbackPlan, FirFilter
from ..graphs import ResModel, build_shift, edge_arrays, realized_shift_matrix
from . import runner


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    se: float


@dataclass(frozen=True)
class MCNoisePower:
    """Noise-only Monte Carlo powers with standard errors."""

    total: MCEstimate
    per_source: tuple[MCEstimate, ...] | None


def _estimate(samples: np.ndarray) -> MCEstimate:
    t = samples.size
    return MCEstimate(mean=float(samples.mean()),
                      se=float(samples.std(ddof=1) / np.sqrt(t)) if t > 1 else float("inf"))


def mc_noise_power(shift_source, filt, plan: FeedbackPlan, noise_vars,
                   trials: int, seed: int, per_source: bool = False,
                   t_max: int | None = None, window: int | None = None,
                   backend: str | None = None) -> MCNoisePower:
    """Empirical per-node output noise power with zero input and synthetic
    i.i.d. uniform injected noise of the given per-stage variances
    (bypasses the real quantizer).

    per_source additionally measures each stage alone (FIR: separate runs
    with all other stages muted; ARMA: per-branch state powers, which are
    decoupled by construction)."""
    if isinstance(filt, FirFilter):
        k = filt.order
        nv = np.broadcast_to(np.asarray(noise_vars, dtype=np.float64), (k,)).copy()
        powers = runner.run_fir_noise_trials(shift_source, filt, plan, nv, trials,
                                             seed, 0, backend=backend)
        per = None
        if per_source:
            per = []
            for src in range(k):
                muted = np.zeros(k)
                muted[src] = nv[src]
                p_src = runner.run_fir_noise_trials(shift_source, filt, plan, muted,
                                                    trials, seed, src + 1, backend=backend)
                per.append(_estimate(p_src))
            per = tuple(per)
        return MCNoisePower(total=_estimate(powers), per_source=per)

    k = filt.num_branches
    nv = np.broadcast_to(np.asarray(noise_vars, dtype=np.float64), (k,)).copy()
    rho = _source_rho(shift_source)
    if t_max is None:
        contraction = max(abs(p) * rho for p, _ in filt.branches)
        if 0.0 < contraction < 1.0:
            t_max = max(int(np.ceil(np.log(1e-5) / (2 * np.log(contraction)))), 4)
        else:
            t_max = 4
    if window is None:
        window = max(8, t_max)
    total_steps = t_max + window
    branch, total = runner.run_arma_noise_trials(shift_source, filt, plan, nv, trials,
                                                 total_steps, window, seed, 0,
                                                 backend=backend)
    per = tuple(_estimate(branch[i]) for i in range(k)) if per_source else None
    return MCNoisePower(total=_estimate(total), per_source=per)


def _source_rho(shift_source) -> float:
    if isinstance(shift_source, ResModel):
        return build_shift(shift_source.graph, shift_source.kind).rho
    return shift_source.rho


def _sampled_stack(model: ResModel, keep: np.ndarray) -> np.ndarray:
    """Realized shifts for a (T, E) boolean survival matrix, shape (T, N, N)."""
    arr = edge_arrays(model)
    t = keep.shape[0]
    stack = np.zeros((t, arr.n, arr.n))
    kf = keep.astype(np.float64)
    for e in range(arr.eu.size):
        u, v, w = int(arr.eu[e]), int(arr.ev[e]), float(arr.ew[e])
        b = kf[:, e] * w
        if arr.laplacian_style:
            stack[:, u, u] += b
            stack[:, v, v] += b
            stack[:, u, v] -= b
            stack[:, v, u] -= b
        else:
            stack[:, u, v] += b
            stack[:, v, u] += b
    return stack


def mc_expected_sms(model: ResModel, m, trials: int, seed: int,
                    chunk: int = 2048):
    """Sample mean of S_t M S_t with entrywise standard errors."""
    m = np.asarray(m, dtype=np.float64)
    n = model.graph.n
    acc = np.zeros((n, n))
    acc_sq = np.zeros((n, n))
    rng = np.random.default_rng([seed, 0x5353])
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        keep = rng.random((t, model.graph.num_edges)) < model.p
        stack = _sampled_stack(model, keep)
        vals = stack @ m @ stack
        acc += vals.sum(axis=0)
        acc_sq += (vals * vals).sum(axis=0)
        done += t
    mean = acc / trials
    var = np.maximum(acc_sq / trials - mean * mean, 0.0)
    se = np.sqrt(var / trials)
    return mean, se


def mc_mean_shift(model: ResModel, trials: int, seed: int, chunk: int = 4096):
    """Sample mean of the realized shift with entrywise standard errors."""
    n = model.graph.n
    acc = np.zeros((n, n))
    acc_sq = np.zeros((n, n))
    rng = np.random.default_rng([seed, 0xBA])
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        keep = rng.random((t, model.graph.num_edges)) < model.p
        stack = _sampled_stack(model, keep)
        acc += stack.sum(axis=0)
        acc_sq += (stack * stack).sum(axis=0)
        done += t
    mean = acc / trials
    var = np.maximum(acc_sq / trials - mean * mean, 0.0)
    return mean, np.sqrt(var / trials)


def enum_expected_sms(model: ResModel, m, max_edges: int = 20) -> np.ndarray:
    """Exact E[S_t M S_t] by enumerating all 2^E edge masks, weighted by the
    Bernoulli probabilities. Exponential: guarded by max_edges."""
    e = model.graph.num_edges
    if e > max_edges:
        raise QefiltError(f"enumeration over 2^{e} masks refused (cap {max_edges})")
    m = np.asarray(m, dtype=np.float64)
    p = model.p
    out = np.zeros((model.graph.n, model.graph.n))
    for bits in product((False, True), repeat=e):
        keep = np.asarray(bits, dtype=bool)
        k = int(keep.sum())
        weight = (p ** k) * ((1.0 - p) ** (e - k))
        if weight == 0.0:
            continue
        s = realized_shift_matrix(model, keep)
        out += weight * (s @ m @ s)
    return out


def enum_mean_shift(model: ResModel, max_edges: int = 20) -> np.ndarray:
    e = model.graph.num_edges
    if e > max_edges:
        raise QefiltError(f"enumeration over 2^{e} masks refused (cap {max_edges})")
    p = model.p
    out = np.zeros((model.graph.n, model.graph.n))
    for bits in product((False, True), repeat=e):
        keep = np.asarray(bits, dtype=bool)
        k = int(keep.sum())
        weight = (p ** k) * ((1.0 - p) ** (e - k))
        if weight:
            out += weight * realized_shift_matrix(model, keep)
    return out


def grid_search_feedback(objective, shape: tuple[int, int],
                         bounds: tuple[float, float] = (-2.0, 2.0),
                         step: float = 1e-3, sweeps: int = 2,
                         refine_sweeps: int = 4, theta0=None):
    """Coordinate-wise grid search plus zooming refinement over an (N, K)
    weight table. objective must accept batched tables (..., N, K).

    Returns (best_theta, best_value). Used only as an optimality oracle.
    """
    n, k = shape
    lo, hi = bounds
    theta = np.zeros((n, k)) if theta0 is None else np.array(theta0, dtype=np.float64)
    grid = np.arange(lo, hi + step / 2, step)

    def line_min(i, j, values):
        batch = np.broadcast_to(theta, (values.size, n, k)).copy()
        batch[:, i, j] = values
        vals = objective(batch)
        best = int(np.argmin(vals))
        theta[i, j] = values[best]
        return float(vals[best])

    best_val = float(objective(theta))
    for _ in range(sweeps):
        for i in range(n):
            for j in range(k):
                best_val = line_min(i, j, grid)
    span = step
    for _ in range(refine_sweeps):
        for i in range(n):
            for j in range(k):
                local = np.linspace(theta[i, j] - span, theta[i, j] + span, 51)
                best_val = line_min(i, j, local)
        span /= 25.0
    return theta, best_val
