"""FIR and ARMA graph filters: design, exact runs, and quantized runs.

Quantized runs implement the error-feedback update: at every exchange each
node quantizes its state, the network fuses the quantized values through
the (possibly sampled) shift, and each node subtracts its own stored
quantization error scaled by its feedback weight. The induced noise
transfer per injection is (S - D) with D the diagonal of weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._backend import get_backend
from .errors import QefiltError, StabilityError
from .graphs import EdgeArrays, ResModel, ShiftOperator, build_shift, edge_arrays, spectral_decompose
from .quantizers import QuantizerConfig

_EMPTY_I32 = np.zeros(0, dtype=np.int32)
_EMPTY_F64 = np.zeros(0, dtype=np.float64)


@dataclass(frozen=True)
class FirFilter:
    """Polynomial filter y = sum_k taps[k] S^k x, order K = len(taps) - 1."""

    taps: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.taps, dtype=np.float64)
        if t.ndim != 1 or t.size < 2:
            raise QefiltError("FIR filter needs at least order 1 (two taps)")
        if not np.all(np.isfinite(t)):
            raise QefiltError("FIR taps must be finite")
        t.flags.writeable = False
        object.__setattr__(self, "taps", t)

    @property
    def order(self) -> int:
        return self.taps.size - 1


@dataclass(frozen=True)
class ArmaFilter:
    """Parallel rational branches: steady state sum_k gain_k (I - psi_k S)^-1 x.

    branches holds (psi, gain) pairs; stability requires |psi| * rho < 1
    for the shift in use and is checked at run/design time.
    """

    branches: tuple[tuple[float, float], ...]

    def __post_init__(self):
        br = tuple((float(p), float(g)) for p, g in self.branches)
        if not br:
            raise QefiltError("ARMA filter needs at least one branch")
        if not all(math.isfinite(p) and math.isfinite(g) for p, g in br):
            raise QefiltError("ARMA branch parameters must be finite")
        object.__setattr__(self, "branches", br)

    @property
    def psis(self) -> np.ndarray:
        return np.ascontiguousarray([b[0] for b in self.branches])

    @property
    def gains(self) -> np.ndarray:
        return np.ascontiguousarray([b[1] for b in self.branches])

    @property
    def num_branches(self) -> int:
        return len(self.branches)


class FeedbackMode(Enum):
    OFF = "off"
    PER_STEP_DIAG = "per_step_diag"
    PER_STEP_SCALAR = "per_step_scalar"
    STATIC_DIAG = "static_diag"
    PER_BRANCH_DIAG = "per_branch_diag"


@dataclass(frozen=True)
class FeedbackPlan:
    """Diagonal error-feedback weights.

    values shape by mode: (N, K) for per-step / per-branch diagonals,
    (K,) for per-step scalars, (N,) for a static diagonal, () for off.
    """

    mode: FeedbackMode
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        if not np.all(np.isfinite(v)):
            raise QefiltError("feedback weights must be finite")
        expected_ndim = {
            FeedbackMode.OFF: 0,
            FeedbackMode.PER_STEP_DIAG: 2,
            FeedbackMode.PER_BRANCH_DIAG: 2,
            FeedbackMode.PER_STEP_SCALAR: 1,
            FeedbackMode.STATIC_DIAG: 1,
        }[self.mode]
        if v.ndim != expected_ndim:
            raise QefiltError(f"{self.mode.value} plan expects {expected_ndim}-d values, got {v.ndim}-d")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def off(cls) -> "FeedbackPlan":
        return cls(FeedbackMode.OFF, np.zeros(()))

    def weight_matrix(self, n: int, k: int) -> np.ndarray:
        """Expand to the dense (N, K) weight table used by the kernels."""
        if self.mode is FeedbackMode.OFF:
            return np.zeros((n, k))
        if self.mode in (FeedbackMode.PER_STEP_DIAG, FeedbackMode.PER_BRANCH_DIAG):
            if self.values.shape != (n, k):
                raise QefiltError(f"plan shape {self.values.shape} != ({n}, {k})")
            return np.ascontiguousarray(self.values)
        if self.mode is FeedbackMode.PER_STEP_SCALAR:
            if self.values.shape != (k,):
                raise QefiltError(f"plan shape {self.values.shape} != ({k},)")
            return np.ascontiguousarray(np.broadcast_to(self.values, (n, k)))
        if self.values.shape != (n,):
            raise QefiltError(f"plan shape {self.values.shape} != ({n},)")
        return np.ascontiguousarray(np.broadcast_to(self.values[:, None], (n, k)))

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "shape": list(self.values.shape),
                "values": self.values.ravel().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackPlan":
        vals = np.asarray(d["values"], dtype=np.float64).reshape(d["shape"])
        return cls(FeedbackMode(d["mode"]), vals)


@dataclass(frozen=True)
class ExecutionTrace:
    """Diagnostics from one quantized run."""

    states: np.ndarray          # FIR: (K+1, N); ARMA: (t_max+1, K, N)
    errors: np.ndarray | None   # FIR: (K, N); ARMA kernels do not record errors
    overflow_count: int
    masks: np.ndarray | None    # (steps, E) edge-survival booleans, RES runs only
    input_scale: float = 1.0


def check_arma_stability(arma: ArmaFilter, rho: float) -> None:
    for psi, _ in arma.branches:
        if abs(psi) * rho >= 1.0:
            raise StabilityError(f"|psi|*rho = {abs(psi) * rho:.6g} >= 1 (psi={psi}, rho={rho})")


def design_lowpass_fir(shift: ShiftOperator, order: int, cutoff: float) -> FirFilter:
    """Least-squares fit of the ideal response 1[lambda < cutoff] on a
    uniform 500-point grid over the shift's spectral interval.

    The fit runs in a scaled Chebyshev basis (conditioning) and is
    converted back to plain polynomial taps for the shift-and-accumulate
    recursion.
    """
    if order < 1:
        raise QefiltError("FIR order must be >= 1")
    vals = np.linalg.eigvalsh(shift.matrix)
    lo, hi = float(vals[0]), float(vals[-1])
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    grid = np.linspace(lo, hi, 500)
    target = (grid < cutoff).astype(np.float64)
    cheb = np.polynomial.Chebyshev.fit(grid, target, deg=order)
    poly = cheb.convert(kind=np.polynomial.Polynomial)
    taps = np.zeros(order + 1)
    taps[: poly.coef.size] = poly.coef
    return FirFilter(taps=taps)


def arma1(c: float, shift: ShiftOperator) -> ArmaFilter:
    """Single-branch filter realizing y = (I + c S)^-1 x."""
    if abs(c) * shift.rho >= 1.0:
        raise StabilityError(f"|c|*rho = {abs(c) * shift.rho:.6g} >= 1")
    return ArmaFilter(branches=((-float(c), 1.0),))


def run_fir_exact(shift: ShiftOperator, fir: FirFilter, x) -> np.ndarray:
    """y = sum_k taps[k] S^k x via the state recursion (no matrix powers)."""
    x = np.asarray(x, dtype=np.float64)
    w = x.copy()
    y = fir.taps[0] * w
    for k in range(1, fir.order + 1):
        w = shift.matrix @ w
        y = y + fir.taps[k] * w
    return y


def run_arma_exact(shift: ShiftOperator, arma: ArmaFilter, x,
                   tol: float = 1e-9, max_iter: int | None = None,
                   return_trajectory: bool = False):
    """Iterate the branch recursions from zero state until the output moves
    less than tol (sup norm), approximating sum_k gain_k (I - psi_k S)^-1 x."""
    check_arma_stability(arma, shift.rho)
    x = np.asarray(x, dtype=np.float64)
    if max_iter is None:
        max_iter = default_arma_steps(arma, shift.rho, tol) + 8
    w = np.zeros((arma.num_branches, x.size))
    y_prev = np.zeros_like(x)
    traj = []
    for _ in range(max_iter):
        for k, (psi, gain) in enumerate(arma.branches):
            w[k] = psi * (shift.matrix @ w[k]) + gain * x
        y = w.sum(axis=0)
        traj.append(y)
        if np.max(np.abs(y - y_prev)) < tol:
            return (y, np.asarray(traj)) if return_trajectory else y
        y_prev = y
    raise QefiltError(f"ARMA run did not converge within {max_iter} iterations")


def default_arma_steps(arma: ArmaFilter, rho: float, tol: float = 1e-8) -> int:
    """Steps for the slowest branch to decay below tol: ceil(log tol / log |psi| rho)."""
    contraction = max(abs(p) * rho for p, _ in arma.branches)
    if contraction <= 0:
        return 1
    return max(1, math.ceil(math.log(tol) / math.log(contraction)))


def _run_setup(shift_source):
    """Common unpacking: dense base shift, edge arrays, sampling flags."""
    if isinstance(shift_source, ResModel):
        arr = edge_arrays(shift_source)
        base = build_shift(shift_source.graph, shift_source.kind)
        return base, arr, True, float(shift_source.p)
    base = shift_source
    arr = EdgeArrays(base.n, _EMPTY_I32, _EMPTY_I32, _EMPTY_F64, laplacian_style=False)
    return base, arr, False, 1.0


def fir_layout(shift_source, fir: FirFilter, qcfg: QuantizerConfig | None) -> int:
    """Uniforms consumed per trial by a quantized FIR run."""
    _, arr, use_res, p = _run_setup(shift_source)
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    dith = arr.n if (qcfg is not None and qcfg.dither == "subtractive") else 0
    return fir.order * (masks + dith)


def arma_layout(shift_source, arma: ArmaFilter, qcfg: QuantizerConfig | None, t_max: int) -> int:
    _, arr, use_res, p = _run_setup(shift_source)
    masks = arr.eu.size if (use_res and p < 1.0) else 0
    dith = arr.n if (qcfg is not None and qcfg.dither == "subtractive") else 0
    return t_max * (masks + arma.num_branches * dith)


def run_fir_quantized(shift_source, fir: FirFilter, x, qcfg: QuantizerConfig,
                      plan: FeedbackPlan, rng: np.random.Generator,
                      backend: str | None = None, input_scale: float = 1.0):
    """One quantized FIR run. shift_source is a ShiftOperator (fixed
    topology) or a ResModel (fresh edge sample per exchange).

    Returns (y_q, trace).
    """
    base, arr, use_res, p = _run_setup(shift_source)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    alpha = plan.weight_matrix(n, fir.order)
    kern = get_backend(backend)
    n_per = fir_layout(shift_source, fir, qcfg)
    urand = rng.random(n_per).reshape(1, -1) if n_per else np.zeros((1, 0))
    half = float(2 ** (qcfg.bits - 1))
    yq, _, ov, states, errors = kern.fir_chunk(
        base.matrix, fir.taps, x, alpha,
        arr.eu, arr.ev, arr.ew, arr.laplacian_style, use_res, p,
        qcfg.step, -half, half - 1.0, qcfg.range,
        qcfg.dither == "subtractive", True, urand, True)
    masks = None
    if use_res and p < 1.0:
        e = arr.eu.size
        stride = e + (n if qcfg.dither == "subtractive" else 0)
        masks = np.asarray([urand[0, k * stride:k * stride + e] < p for k in range(fir.order)])
    trace = ExecutionTrace(states=states[:, :, 0], errors=errors[:, :, 0],
                           overflow_count=int(ov[0]), masks=masks,
                           input_scale=input_scale)
    return yq[:, 0], trace


def run_arma_quantized(shift_source, arma: ArmaFilter, x, qcfg: QuantizerConfig,
                       plan: FeedbackPlan, t_max: int, rng: np.random.Generator,
                       backend: str | None = None, input_scale: float = 1.0):
    """One quantized ARMA run over t_max steps; the per-step topology draw
    is shared by all branches. Returns (outputs (t_max, N), trace)."""
    base, arr, use_res, p = _run_setup(shift_source)
    check_arma_stability(arma, base.rho)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    alpha = plan.weight_matrix(n, arma.num_branches)
    kern = get_backend(backend)
    n_per = arma_layout(shift_source, arma, qcfg, t_max)
    urand = rng.random(n_per).reshape(1, -1) if n_per else np.zeros((1, 0))
    half = float(2 ** (qcfg.bits - 1))
    out = kern.arma_chunk(
        base.matrix, arma.psis, arma.gains, x, alpha,
        arr.eu, arr.ev, arr.ew, arr.laplacian_style, use_res, p, int(t_max),
        qcfg.step, -half, half - 1.0, qcfg.range,
        qcfg.dither == "subtractive", True, urand, True)
    states = out[8]
    ov = out[7]
    masks = None
    if use_res and p < 1.0:
        e = arr.eu.size
        stride = e + arma.num_branches * (n if qcfg.dither == "subtractive" else 0)
        masks = np.asarray([urand[0, t * stride:t * stride + e] < p for t in range(t_max)])
    trajectory = states[1:, :, :, 0].sum(axis=1)
    trace = ExecutionTrace(states=states[:, :, :, 0], errors=None,
                           overflow_count=int(ov[0]), masks=masks,
                           input_scale=input_scale)
    return trajectory, trace


def run_fir_noise_driven(shift_seq, fir: FirFilter, plan: FeedbackPlan,
                         noise_seq) -> np.ndarray:
    """Reference noise-propagation recursion: zero input, caller-supplied
    error vectors. shift_seq is one matrix (reused) or a list of per-step
    matrices; noise_seq has shape (K, N).

    Used by validation oracles and tests; linear in the noise.
    """
    noise_seq = np.asarray(noise_seq, dtype=np.float64)
    k_order, n = noise_seq.shape
    if k_order != fir.order:
        raise QefiltError(f"noise_seq has {k_order} stages, filter order is {fir.order}")
    alpha = plan.weight_matrix(n, fir.order)
    mats = shift_seq if isinstance(shift_seq, (list, tuple)) else [shift_seq] * fir.order
    w = np.zeros(n)
    y = np.zeros(n)
    for k in range(1, fir.order + 1):
        s = mats[k - 1].matrix if isinstance(mats[k - 1], ShiftOperator) else mats[k - 1]
        nz = noise_seq[k - 1]
        w = s @ (w + nz) - alpha[:, k - 1] * nz
        y = y + fir.taps[k] * w
    return y


def run_arma_noise_driven(shift_seq, arma: ArmaFilter, plan: FeedbackPlan,
                          noise_seq) -> np.ndarray:
    """Reference ARMA noise recursion; noise_seq has shape (t_max, K, N).
    Returns the branch states over time, shape (t_max, K, N)."""
    noise_seq = np.asarray(noise_seq, dtype=np.float64)
    t_max, k_br, n = noise_seq.shape
    if k_br != arma.num_branches:
        raise QefiltError("noise_seq branch count mismatch")
    alpha = plan.weight_matrix(n, k_br)
    mats = shift_seq if isinstance(shift_seq, (list, tuple)) else [shift_seq] * t_max
    w = np.zeros((k_br, n))
    hist = np.zeros((t_max, k_br, n))
    for t in range(t_max):
        s = mats[t].matrix if isinstance(mats[t], ShiftOperator) else mats[t]
        for k, (psi, _) in enumerate(arma.branches):
            nz = noise_seq[t, k]
            w[k] = psi * (s @ (w[k] + nz)) - alpha[:, k] * nz
        hist[t] = w
    return hist


def spectral_response(shift: ShiftOperator, fir: FirFilter, x) -> np.ndarray:
    """Spectral-domain evaluation U diag(sum_k taps[k] lam^k) U^T x (oracle
    counterpart of run_fir_exact)."""
    spec = spectral_decompose(shift)
    h = np.polynomial.polynomial.polyval(spec.eigenvalues, fir.taps)
    return spec.eigenvectors @ (h * (spec.eigenvectors.T @ np.asarray(x, dtype=np.float64)))
