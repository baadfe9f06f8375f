"""Analytic noise machinery and closed-form feedback-weight design.

For every noise injection the quantized run induces a linear transfer
(S - D) into a known sub-filter, so the per-node output noise power is a
quadratic in the diagonal feedback weights:

    power = (var / N) * (gain + sum_i g_i a_i^2 - 2 sum_i h_i a_i)

with `gain`, `g`, `h` traces of Gram matrices (FIR) or Lyapunov-type
Gramians (ARMA), deterministic or averaged over edge sampling. Minimizing
coordinate-wise gives the closed-form weights a_i = h_i / g_i. This module
computes those coefficient tables, the resulting predictions, and the
plans; the Monte Carlo harness validates them independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, QefiltError, StabilityError
from .filters import ArmaFilter, FeedbackMode, FeedbackPlan, FirFilter
from .graphs import ResModel, ShiftOperator, build_shift, edge_arrays


# ---------------------------------------------------------------------------
# deterministic FIR


def fir_tail_gram(shift: ShiftOperator, fir: FirFilter, k: int) -> np.ndarray:
    """Gram matrix H^T H of the tail sub-filter H = sum_{j>=k} taps[j] S^(j-k)
    through which the stage-k error reaches the output (k in 1..K)."""
    if not 1 <= k <= fir.order:
        raise QefiltError(f"source index {k} outside 1..{fir.order}")
    s = shift.matrix
    h = fir.taps[fir.order] * np.eye(shift.n)
    for j in range(fir.order - 1, k - 1, -1):
        h = s @ h + fir.taps[j] * np.eye(shift.n)
    g = h.T @ h
    return (g + g.T) / 2.0


@dataclass(frozen=True)
class SourceNoise:
    """Per-injection breakdown: raw gain/mitigation traces and the
    variance-weighted per-node power."""

    index: int
    gain: float
    reduction: float
    power: float
    noise_var: float

    def to_dict(self) -> dict:
        return {"index": self.index, "gain": self.gain, "reduction": self.reduction,
                "power": self.power, "noise_var": self.noise_var}


@dataclass(frozen=True)
class NoisePrediction:
    """Analytic per-node output noise power, per source and total."""

    sources: tuple[SourceNoise, ...]
    total_power: float
    total_reduction_power: float

    @property
    def total_power_off(self) -> float:
        return self.total_power + self.total_reduction_power

    def to_dict(self) -> dict:
        return {"sources": [s.to_dict() for s in self.sources],
                "total_power": self.total_power,
                "total_reduction_power": self.total_reduction_power}


@dataclass(frozen=True)
class QuadTerms:
    """Quadratic coefficients of one source's power in its weight column."""

    gain: float
    g_diag: np.ndarray
    h_diag: np.ndarray


def _as_vars(noise_vars, k: int) -> np.ndarray:
    v = np.asarray(noise_vars, dtype=np.float64)
    if v.ndim == 0:
        v = np.full(k, float(v))
    if v.shape != (k,):
        raise QefiltError(f"need {k} per-source variances, got shape {v.shape}")
    if np.any(v < 0):
        raise QefiltError("noise variances must be nonnegative")
    return v


def _predict(terms: list[QuadTerms], plan: FeedbackPlan, noise_vars, n: int) -> NoisePrediction:
    k = len(terms)
    nv = _as_vars(noise_vars, k)
    alpha = plan.weight_matrix(n, k)
    rows = []
    total = 0.0
    total_red = 0.0
    for idx, t in enumerate(terms):
        a = alpha[:, idx]
        red = float(2.0 * (t.h_diag @ a) - (t.g_diag @ (a * a)))
        power = float(nv[idx] / n * (t.gain - red))
        rows.append(SourceNoise(index=idx + 1, gain=float(t.gain), reduction=red,
                                power=power, noise_var=float(nv[idx])))
        total += power
        total_red += float(nv[idx] / n * red)
    return NoisePrediction(sources=tuple(rows), total_power=total,
                           total_reduction_power=total_red)


def _design(terms: list[QuadTerms], noise_vars, n: int,
            mode: FeedbackMode) -> tuple[FeedbackPlan, float]:
    """Stationary-point weights for the chosen sharing pattern, plus the
    variance-weighted total reduction they achieve."""
    k = len(terms)
    nv = _as_vars(noise_vars, k)
    g = np.stack([t.g_diag for t in terms], axis=1)  # (N, K)
    h = np.stack([t.h_diag for t in terms], axis=1)
    if mode in (FeedbackMode.PER_STEP_DIAG, FeedbackMode.PER_BRANCH_DIAG):
        alpha = np.divide(h, g, out=np.zeros_like(h), where=g > 0)
        plan = FeedbackPlan(mode, alpha)
    elif mode is FeedbackMode.PER_STEP_SCALAR:
        gs = g.sum(axis=0)
        hs = h.sum(axis=0)
        theta = np.divide(hs, gs, out=np.zeros_like(hs), where=gs > 0)
        plan = FeedbackPlan(mode, theta)
    elif mode is FeedbackMode.STATIC_DIAG:
        num = (h * nv).sum(axis=1)
        den = (g * nv).sum(axis=1)
        d = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        plan = FeedbackPlan(mode, d)
    else:
        raise QefiltError(f"cannot design weights for mode {mode}")
    alpha_full = plan.weight_matrix(n, k)
    red = 0.0
    for idx in range(k):
        a = alpha_full[:, idx]
        red += nv[idx] / n * float(2.0 * (h[:, idx] @ a) - (g[:, idx] @ (a * a)))
    return plan, red


def _fir_det_terms(shift: ShiftOperator, fir: FirFilter) -> list[QuadTerms]:
    s = shift.matrix
    out = []
    for k in range(1, fir.order + 1):
        g = fir_tail_gram(shift, fir, k)
        gs = g @ s
        out.append(QuadTerms(gain=float((gs * s).sum()),
                             g_diag=np.diag(g).copy(),
                             h_diag=np.diag(gs).copy()))
    return out


def predict_fir_noise(shift: ShiftOperator, fir: FirFilter, plan: FeedbackPlan,
                      noise_vars) -> NoisePrediction:
    """Per-node output noise power of a quantized FIR run on a fixed graph."""
    return _predict(_fir_det_terms(shift, fir), plan, noise_vars, shift.n)


def design_fir_feedback(shift: ShiftOperator, fir: FirFilter, noise_vars,
                        mode: FeedbackMode = FeedbackMode.PER_STEP_DIAG):
    """Closed-form feedback weights for a FIR filter on a fixed graph.

    mode picks the sharing pattern: one weight per node and step, one
    scalar per step, or one static diagonal reused by all steps.
    """
    return _design(_fir_det_terms(shift, fir), noise_vars, shift.n, mode)


# ---------------------------------------------------------------------------
# deterministic ARMA


@dataclass(frozen=True)
class Gramian:
    """Fixed point of W = psi^2 * T[W] + I where T is S.S or E[S_t . S_t]."""

    matrix: np.ndarray
    kind: str  # "deterministic" | "stochastic"
    psi: float
    residual: float
    iterations: int


def _gramian_fixed_point(apply_sandwich, psi: float, rho: float, n: int,
                         tol: float, kind: str) -> Gramian:
    contraction = (abs(psi) * rho) ** 2
    if abs(psi) * rho >= 1.0:
        raise StabilityError(f"|psi|*rho = {abs(psi) * rho:.6g} >= 1")
    eye = np.eye(n)
    w = eye.copy()
    if contraction <= 0.0:
        return Gramian(matrix=w, kind=kind, psi=psi, residual=0.0, iterations=0)
    cap = 10 * max(1, math.ceil(math.log(tol) / math.log(contraction)))
    psi2 = psi * psi
    for it in range(1, cap + 1):
        w_next = psi2 * apply_sandwich(w) + eye
        w_next = (w_next + w_next.T) / 2.0
        diff = float(np.linalg.norm(w_next - w))
        w = w_next
        if diff < tol:
            resid = float(np.linalg.norm(psi2 * apply_sandwich(w) + eye - w))
            return Gramian(matrix=w, kind=kind, psi=psi, residual=resid, iterations=it)
    raise ConvergenceError(f"Gramian iteration exceeded cap {cap} (|psi|rho={abs(psi) * rho})")


def observability_gramian(shift: ShiftOperator, psi: float, tol: float = 1e-12) -> Gramian:
    """Solve W = psi^2 S W S + I by fixed-point iteration from W = I."""
    s = shift.matrix
    return _gramian_fixed_point(lambda w: s @ w @ s, psi, shift.rho, shift.n,
                                tol, "deterministic")


def _arma_det_terms(shift: ShiftOperator, arma: ArmaFilter, tol: float) -> list[QuadTerms]:
    s = shift.matrix
    out = []
    for psi, _ in arma.branches:
        w = observability_gramian(shift, psi, tol).matrix
        ws = w @ s
        out.append(QuadTerms(gain=float(psi * psi * (ws * s).sum()),
                             g_diag=np.diag(w).copy(),
                             h_diag=psi * np.diag(ws)))
    return out


def predict_arma_noise(shift: ShiftOperator, arma: ArmaFilter, plan: FeedbackPlan,
                       noise_vars, tol: float = 1e-12) -> NoisePrediction:
    """Asymptotic per-node noise power of a quantized ARMA run, per branch."""
    return _predict(_arma_det_terms(shift, arma, tol), plan, noise_vars, shift.n)


def design_arma_feedback(shift: ShiftOperator, arma: ArmaFilter, noise_vars,
                         tol: float = 1e-12):
    """Closed-form per-branch diagonal feedback weights on a fixed graph."""
    return _design(_arma_det_terms(shift, arma, tol), noise_vars, shift.n,
                   FeedbackMode.PER_BRANCH_DIAG)


# ---------------------------------------------------------------------------
# edge-sampling expectations


@dataclass(frozen=True)
class KernelTensor:
    """Second-moment data of the sampled shift.

    Carries the closed-form pieces of E[S_t M S_t] (base shift, per-edge
    contributions, survival probability); `dense`, when materialized,
    stacks the node-pair kernels: dense[i, j] = E[ S_t[:, j] outer S_t[i, :] ].
    """

    n: int
    p: float
    base: np.ndarray
    eu: np.ndarray
    ev: np.ndarray
    ew: np.ndarray
    laplacian_style: bool
    dense: np.ndarray | None

    def pair(self, i: int, j: int) -> np.ndarray:
        """Kernel matrix for node pair (i, j)."""
        if self.dense is not None:
            return self.dense[i, j]
        return _dense_kernel(self)[i, j]


def _dense_kernel(ker: KernelTensor) -> np.ndarray:
    s, p = ker.base, ker.p
    dense = p * p * np.einsum("aj,ib->ijab", s, s)
    pq = p * (1.0 - p)
    for u, v, w in zip(ker.eu, ker.ev, ker.ew):
        if ker.laplacian_style:
            entries = [(u, u, w), (v, v, w), (u, v, -w), (v, u, -w)]
        else:
            entries = [(u, v, w), (v, u, w)]
        for a, j, c1 in entries:
            for i, b, c2 in entries:
                dense[i, j, a, b] += pq * c1 * c2
    return dense


def kernel_tensor(model: ResModel, materialize: bool | None = None) -> KernelTensor:
    """Precompute the edge-sampling second-moment structure.

    materialize=None stores the dense per-pair tensor for n <= 64 (memory
    grows like n^4); the closed-form path never needs it, it exists for
    direct inspection and the validation contraction.
    """
    arr = edge_arrays(model)
    base = build_shift(model.graph, model.kind).matrix
    ker = KernelTensor(n=arr.n, p=float(model.p), base=np.asarray(base),
                       eu=arr.eu, ev=arr.ev, ew=arr.ew,
                       laplacian_style=arr.laplacian_style, dense=None)
    if materialize is None:
        materialize = arr.n <= 64
    if materialize:
        ker = KernelTensor(n=ker.n, p=ker.p, base=ker.base, eu=ker.eu, ev=ker.ev,
                           ew=ker.ew, laplacian_style=ker.laplacian_style,
                           dense=_dense_kernel(ker))
    return ker


def expected_sms(ker: KernelTensor, m, method: str = "closed") -> np.ndarray:
    """E[S_t M S_t] for one independent edge-sampling draw.

    Expanding S_t over independent edge indicators b_e (E[b_e] = E[b_e^2] = p)
    gives the exact closed form

        p^2 * S M S + p (1-p) * sum_e C_e M C_e

    with C_e the per-edge contribution. method="dense" contracts the
    materialized kernel tensor instead (trace form), for validation.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (ker.n, ker.n):
        raise QefiltError(f"matrix shape {m.shape} != ({ker.n}, {ker.n})")
    if method == "dense":
        dense = ker.dense if ker.dense is not None else _dense_kernel(ker)
        return np.einsum("ab,ijba->ij", m, dense)
    if method != "closed":
        raise QefiltError(f"unknown expected_sms method {method!r}")
    s, p = ker.base, ker.p
    out = (p * p) * (s @ m @ s)
    pq = p * (1.0 - p)
    if pq != 0.0 and ker.eu.size:
        eu, ev, ew = ker.eu, ker.ev, ker.ew
        w2 = pq * ew * ew
        if ker.laplacian_style:
            quad = w2 * (m[eu, eu] + m[ev, ev] - m[eu, ev] - m[ev, eu])
            np.add.at(out, (eu, eu), quad)
            np.add.at(out, (ev, ev), quad)
            np.add.at(out, (eu, ev), -quad)
            np.add.at(out, (ev, eu), -quad)
        else:
            np.add.at(out, (eu, eu), w2 * m[ev, ev])
            np.add.at(out, (ev, ev), w2 * m[eu, eu])
            np.add.at(out, (eu, ev), w2 * m[ev, eu])
            np.add.at(out, (ev, eu), w2 * m[eu, ev])
    return out


def expected_fir_tail_gram(model: ResModel, fir: FirFilter, k: int,
                           ker: KernelTensor | None = None) -> np.ndarray:
    """E[G] of the stochastic tail sub-filter for source k: the double tap
    sum over expected products of sampled-shift chains, evaluated by the
    recursive sandwich M <- E[S_t M S_t] seeded with powers of the mean
    shift."""
    if not 1 <= k <= fir.order:
        raise QefiltError(f"source index {k} outside 1..{fir.order}")
    if ker is None:
        ker = kernel_tensor(model, materialize=False)
    kk = fir.order
    sbar = ker.p * ker.base
    eg = np.zeros((ker.n, ker.n))
    for d in range(0, kk - k + 1):
        m = np.linalg.matrix_power(sbar, d)
        for l in range(0, kk - k - d + 1):
            k1 = k + l
            k2 = k1 + d
            wgt = fir.taps[k1] * fir.taps[k2]
            if d == 0:
                eg = eg + wgt * m
            else:
                eg = eg + wgt * (m + m.T)
            if l < kk - k - d:
                m = expected_sms(ker, m)
    return (eg + eg.T) / 2.0


def _fir_res_terms(model: ResModel, fir: FirFilter) -> list[QuadTerms]:
    ker = kernel_tensor(model, materialize=False)
    sbar = ker.p * ker.base
    es2 = expected_sms(ker, np.eye(ker.n))
    out = []
    for k in range(1, fir.order + 1):
        eg = expected_fir_tail_gram(model, fir, k, ker)
        out.append(QuadTerms(gain=float((eg * es2).sum()),
                             g_diag=np.diag(eg).copy(),
                             h_diag=np.diag(eg @ sbar).copy()))
    return out


def predict_fir_noise_res(model: ResModel, fir: FirFilter, plan: FeedbackPlan,
                          noise_vars) -> NoisePrediction:
    """Per-node output noise power of a quantized FIR run under edge sampling."""
    return _predict(_fir_res_terms(model, fir), plan, noise_vars, model.graph.n)


def design_fir_feedback_res(model: ResModel, fir: FirFilter, noise_vars,
                            mode: FeedbackMode = FeedbackMode.PER_STEP_DIAG):
    """Closed-form feedback weights under edge sampling (mean-shift ratios)."""
    return _design(_fir_res_terms(model, fir), noise_vars, model.graph.n, mode)


def stochastic_gramian(model: ResModel, psi: float, tol: float = 1e-12) -> Gramian:
    """Solve W = psi^2 E[S_t W S_t] + I by fixed-point iteration; converges
    geometrically because every realization satisfies |psi| ||S_t|| < 1."""
    ker = kernel_tensor(model, materialize=False)
    rho = build_shift(model.graph, model.kind).rho
    return _gramian_fixed_point(lambda w: expected_sms(ker, w), psi, rho,
                                ker.n, tol, "stochastic")


def _arma_res_terms(model: ResModel, arma: ArmaFilter, tol: float) -> list[QuadTerms]:
    ker = kernel_tensor(model, materialize=False)
    sbar = ker.p * ker.base
    es2 = expected_sms(ker, np.eye(ker.n))
    out = []
    for psi, _ in arma.branches:
        w = stochastic_gramian(model, psi, tol).matrix
        out.append(QuadTerms(gain=float(psi * psi * (w * es2).sum()),
                             g_diag=np.diag(w).copy(),
                             h_diag=psi * np.diag(w @ sbar)))
    return out


def predict_arma_noise_res(model: ResModel, arma: ArmaFilter, plan: FeedbackPlan,
                           noise_vars, tol: float = 1e-12) -> NoisePrediction:
    """Asymptotic per-node noise power of a quantized ARMA run under edge
    sampling, per branch."""
    return _predict(_arma_res_terms(model, arma, tol), plan, noise_vars, model.graph.n)


def design_arma_feedback_res(model: ResModel, arma: ArmaFilter, noise_vars,
                             tol: float = 1e-12):
    """Closed-form per-branch diagonal weights under edge sampling."""
    return _design(_arma_res_terms(model, arma, tol), noise_vars, model.graph.n,
                   FeedbackMode.PER_BRANCH_DIAG)


# ---------------------------------------------------------------------------
# generic entry points (harness, oracles, tests)


def quad_terms(shift_source, filt, tol: float = 1e-12) -> tuple[list[QuadTerms], int]:
    """Coefficient tables for any (topology, filter) combination."""
    if isinstance(shift_source, ResModel):
        n = shift_source.graph.n
        if isinstance(filt, FirFilter):
            return _fir_res_terms(shift_source, filt), n
        return _arma_res_terms(shift_source, filt, tol), n
    if isinstance(filt, FirFilter):
        return _fir_det_terms(shift_source, filt), shift_source.n
    return _arma_det_terms(shift_source, filt, tol), shift_source.n


def predict_noise(shift_source, filt, plan: FeedbackPlan, noise_vars,
                  tol: float = 1e-12) -> NoisePrediction:
    terms, n = quad_terms(shift_source, filt, tol)
    return _predict(terms, plan, noise_vars, n)


def design_feedback(shift_source, filt, noise_vars,
                    mode: FeedbackMode | None = None, tol: float = 1e-12):
    if mode is None:
        mode = FeedbackMode.PER_STEP_DIAG if isinstance(filt, FirFilter) \
            else FeedbackMode.PER_BRANCH_DIAG
    terms, n = quad_terms(shift_source, filt, tol)
    return _design(terms, noise_vars, n, mode)


def noise_power_objective(shift_source, filt, noise_vars, tol: float = 1e-12):
    """Batched objective theta (..., N, K) -> total predicted power.

    Built from the same coefficient tables as the predictions (the search
    oracle validates the minimizer claim, not the power formula, which the
    Monte Carlo oracle checks separately).
    """
    terms, n = quad_terms(shift_source, filt, tol)
    nv = _as_vars(noise_vars, len(terms))
    wts = nv / n
    gains = np.array([t.gain for t in terms])
    g = np.stack([t.g_diag for t in terms], axis=1)
    h = np.stack([t.h_diag for t in terms], axis=1)
    const = float(wts @ gains)

    def objective(theta):
        th = np.asarray(theta, dtype=np.float64)
        quad = ((g * th * th) * wts).sum(axis=(-2, -1))
        lin = ((h * th) * wts).sum(axis=(-2, -1))
        return const + quad - 2.0 * lin

    return objective, (n, len(terms))


def feedback_gradient(shift_source, filt, plan: FeedbackPlan, noise_vars,
                      tol: float = 1e-12) -> np.ndarray:
    """Gradient of the total predicted power in the (N, K) weight table."""
    terms, n = quad_terms(shift_source, filt, tol)
    nv = _as_vars(noise_vars, len(terms))
    alpha = plan.weight_matrix(n, len(terms))
    g = np.stack([t.g_diag for t in terms], axis=1)
    h = np.stack([t.h_diag for t in terms], axis=1)
    return 2.0 * (nv / n) * (g * alpha - h)
