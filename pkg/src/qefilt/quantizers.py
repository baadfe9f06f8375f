"""Finite-bit uniform quantization of exchanged state vectors.

Mid-rise codebook on [-range, range] with 2**bits levels and saturation.
With subtractive dither the reported error is uniform on [-step/2, step/2]
and independent of the input, which is exactly the i.i.d. noise model the
analytic predictions assume.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QefiltError


@dataclass(frozen=True)
class QuantizerConfig:
    bits: int
    range: float = 1.0
    dither: str = "off"  # "off" | "subtractive"

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise QefiltError(f"bits must be a positive integer, got {self.bits}")
        if self.bits > 52:
            raise QefiltError("bits > 52 exceeds float64 code-index precision")
        if not self.range > 0:
            raise QefiltError(f"range must be positive, got {self.range}")
        if self.dither not in ("off", "subtractive"):
            raise QefiltError(f"unknown dither mode {self.dither!r}")

    @property
    def step(self) -> float:
        return 2.0 * self.range / (2 ** self.bits)

    @property
    def num_levels(self) -> int:
        return 2 ** self.bits

    def codebook(self) -> np.ndarray:
        half = 2 ** (self.bits - 1)
        return (np.arange(-half, half) + 0.5) * self.step


@dataclass(frozen=True)
class QuantizationResult:
    quantized: np.ndarray
    error: np.ndarray
    overflow_count: int


def lattice_error(z: np.ndarray, step: float, lo_idx: float, hi_idx: float) -> np.ndarray:
    """Rounding residual of the saturating mid-rise lattice: code(z) - z.

    Shared verbatim by the simulation kernels so the standalone quantizer
    and the batched runs agree bit for bit.
    """
    idx = np.floor(z / step)
    np.clip(idx, lo_idx, hi_idx, out=idx)
    return (idx + 0.5) * step - z


def quantize(w, cfg: QuantizerConfig, rng: np.random.Generator | None = None) -> QuantizationResult:
    """Quantize a vector; returns the reconstructed values, the error
    n = quantized - w, and the number of saturated entries.

    With subtractive dither a uniform draw on [-step/2, step/2] is added
    before rounding and subtracted after. `quantized` is defined as
    w + error, so the additive noise model holds exactly; without dither
    this lands on a codebook value (up to one ulp).
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise QefiltError("quantizer input must be finite")
    step = cfg.step
    half = float(2 ** (cfg.bits - 1))
    if cfg.dither == "subtractive":
        if rng is None:
            raise QefiltError("subtractive dither needs a random generator")
        z = w + (rng.random(w.shape) - 0.5) * step
    else:
        z = w
    overflow = int(np.count_nonzero(np.abs(z) > cfg.range))
    err = lattice_error(z, step, -half, half - 1.0)
    return QuantizationResult(quantized=w + err, error=err, overflow_count=overflow)


def noise_variance(cfg: QuantizerConfig) -> float:
    """Per-entry error variance step**2 / 12 used by all analytic predictions."""
    return cfg.step ** 2 / 12.0
