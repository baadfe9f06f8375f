"""Experiment driver: inputs, SNR metrics, result tables, CSV/JSON emission."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..design import design_feedback, predict_noise
from ..errors import QefiltError
from ..filters import (FeedbackMode, FeedbackPlan, FirFilter, default_arma_steps)
from ..graphs import ResModel, ShiftOperator, Spectrum, build_shift, spectral_decompose
from ..quantizers import noise_variance
from . import runner
from .scenario import Cell, Scenario, arma_run_steps, build_cells, build_graph, shift_kind

SNR_CAP_DB = 300.0


def make_input(spectrum: Spectrum, seed: int, *, filt=None, shift: ShiftOperator | None = None,
               qrange: float | None = None, margin: float = 0.9,
               return_scale: bool = False):
    """Uniform-spectrum input: equal-magnitude spectral coefficients with
    seed-fixed signs. When the filter context is given, the vector is scaled
    so a dry exact run keeps every exchanged state within margin * qrange;
    return_scale also hands back the applied factor (for trace records)."""
    n = spectrum.eigenvalues.size
    rng = np.random.default_rng([seed, 0x1157])
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    x = spectrum.eigenvectors @ (signs / math.sqrt(n))
    scale = 1.0
    if filt is not None and shift is not None and qrange is not None:
        peak = _dry_run_peak(shift, filt, x)
        if peak > 0:
            scale = margin * qrange / peak
            x = x * scale
    return (x, scale) if return_scale else x


def _dry_run_peak(shift: ShiftOperator, filt, x) -> float:
    """Largest state magnitude an exact run pushes through the quantizer."""
    if isinstance(filt, FirFilter):
        w = np.asarray(x, dtype=np.float64)
        peak = float(np.max(np.abs(w)))
        for _ in range(filt.order):
            w = shift.matrix @ w
            peak = max(peak, float(np.max(np.abs(w))))
        return peak
    steps = 2 * default_arma_steps(filt, shift.rho, 1e-8)
    w = np.zeros((filt.num_branches, len(x)))
    peak = 0.0
    for _ in range(steps):
        for k, (psi, gain) in enumerate(filt.branches):
            w[k] = psi * (shift.matrix @ w[k]) + gain * np.asarray(x)
        peak = max(peak, float(np.max(np.abs(w))))
    return peak


def snr(outputs, reference, mode: str = "unbiased", cap_db: float = SNR_CAP_DB) -> float:
    """SNR in dB: inverse of the trial-average error-to-signal power ratio.

    unbiased: reference is per-trial (T, N), the same-topology noiseless
    output. biased: reference is one (N,) vector, the mean noiseless output.
    The linear-domain ratios are averaged and converted to dB once.
    """
    out = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    ref = np.asarray(reference, dtype=np.float64)
    if mode == "unbiased":
        if ref.ndim == 1:
            ref = np.broadcast_to(ref, out.shape)
        ref_sq = (ref * ref).sum(axis=1)
    elif mode == "biased":
        if ref.ndim != 1:
            raise QefiltError("biased SNR needs a single mean reference vector")
        ref_sq = np.full(out.shape[0], float(ref @ ref))
        ref = np.broadcast_to(ref, out.shape)
    else:
        raise QefiltError(f"unknown SNR mode {mode!r}")
    if np.any(ref_sq == 0.0):
        raise QefiltError("SNR reference has zero norm")
    dev = out - ref
    ratios = (dev * dev).sum(axis=1) / ref_sq
    return ratio_to_db(float(ratios.mean()), cap_db)


def ratio_to_db(mean_ratio: float, cap_db: float = SNR_CAP_DB) -> float:
    # ratios within two decades of the cap are float64 rounding noise, not
    # signal; they report as the cap (so an exact-zero ratio never hits log)
    if mean_ratio <= 100.0 * 10.0 ** (-cap_db / 10.0):
        return cap_db
    return -10.0 * math.log10(mean_ratio)


def upper_bound_snr(model: ResModel, filt, x, trials: int, seed: int,
                    backend: str | None = None, cap_db: float = SNR_CAP_DB,
                    t_max: int | None = None) -> float:
    """Topology-randomness ceiling: power of the mean noiseless output over
    its total variance, in dB."""
    if isinstance(filt, FirFilter):
        outs = runner.run_fir_noiseless(model, filt, x, trials, seed, 0, backend=backend)
    else:
        base = build_shift(model.graph, model.kind)
        if t_max is None:
            t_max = 2 * default_arma_steps(filt, base.rho, 1e-8)
        outs = runner.run_arma_noiseless(model, filt, x, trials, t_max, seed, 0, backend=backend)
    ybar = outs.mean(axis=1)
    var_total = float((outs * outs).sum(axis=0).mean() - ybar @ ybar)
    power = float(ybar @ ybar)
    if power <= 0.0:
        raise QefiltError("upper bound undefined: zero mean output")
    if var_total <= power * 10.0 ** (-cap_db / 10.0):
        return cap_db
    return 10.0 * math.log10(power / var_total)


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    p: float
    bits: int
    feedback: str
    snr_unbiased_db: float
    snr_biased_db: float
    pred_noise_power: float
    emp_noise_power: float
    overflow_rate: float
    trials: int
    seed: int


CSV_COLUMNS = ["scenario", "p", "bits", "feedback", "snr_unbiased_db", "snr_biased_db",
               "pred_noise_power", "emp_noise_power", "overflow_rate", "trials", "seed"]


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[ResultRow, ...]

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            d = asdict(r)
            lines.append(",".join(_csv_cell(d[c]) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        data = json.loads(text)
        return cls(rows=tuple(ResultRow(**r) for r in data["rows"]))


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_results(table: ResultTable, fmt: str, path) -> None:
    """Write the table; bit-stable for identical inputs (repr floats)."""
    if fmt == "csv":
        Path(path).write_text(table.to_csv(), encoding="utf-8")
    elif fmt == "json":
        Path(path).write_text(table.to_json() + "\n", encoding="utf-8")
    else:
        raise QefiltError(f"unknown results format {fmt!r}")


def read_results(path) -> ResultTable:
    return ResultTable.from_json(Path(path).read_text(encoding="utf-8"))


def _fir_rows(scn: Scenario, cell: Cell, shift_src, x, plan: FeedbackPlan,
              mode_label: str, pred_total: float, backend) -> list[ResultRow]:
    st = runner.run_fir_trials(shift_src, cell.filt, x, cell.qcfg, plan,
                               scn.trials, scn.seed, cell.index,
                               backend=backend, chunk=scn.chunk)
    t = st.trials
    unb = ratio_to_db(st.ratio_sum / t)
    ybar = st.yref_sum / t
    ybar_sq = float(ybar @ ybar)
    mean_dev_biased = st.qq_sq_sum / t - 2.0 * float(ybar @ (st.yq_sum / t)) + ybar_sq
    biased = ratio_to_db(max(mean_dev_biased, 0.0) / ybar_sq)
    return [ResultRow(
        scenario=f"{scn.name}/{cell.label}", p=cell.p, bits=cell.qcfg.bits,
        feedback=mode_label, snr_unbiased_db=unb, snr_biased_db=biased,
        pred_noise_power=pred_total, emp_noise_power=st.dev_sq_sum / t / st.n,
        overflow_rate=st.overflow / st.quantized_entries, trials=t, seed=scn.seed)]


def _arma_rows(scn: Scenario, cell: Cell, shift_src, x, plan: FeedbackPlan,
               mode_label: str, pred_total: float, rho: float, backend) -> list[ResultRow]:
    t_max, burn = arma_run_steps(scn, cell.filt, rho)
    st = runner.run_arma_trials(shift_src, cell.filt, x, cell.qcfg, plan,
                                scn.trials, t_max, scn.seed, cell.index,
                                backend=backend, chunk=scn.chunk)
    t = st.trials
    win = slice(burn, t_max)
    n_win = t_max - burn
    unb = ratio_to_db(float(st.ratio_sum[win].sum()) / (t * n_win))
    biased_ratios = _arma_biased_ratios(st)
    biased = ratio_to_db(float(np.mean(biased_ratios[win])))
    emp = float(st.dev_sq_sum[win].sum()) / (t * n_win) / st.n
    rows = [ResultRow(
        scenario=f"{scn.name}/{cell.label}", p=cell.p, bits=cell.qcfg.bits,
        feedback=mode_label, snr_unbiased_db=unb, snr_biased_db=biased,
        pred_noise_power=pred_total, emp_noise_power=emp,
        overflow_rate=st.overflow / st.quantized_entries, trials=t, seed=scn.seed)]
    for step in range(t_max):
        rows.append(ResultRow(
            scenario=f"{scn.name}/{cell.label}@t={step + 1}", p=cell.p,
            bits=cell.qcfg.bits, feedback=mode_label,
            snr_unbiased_db=ratio_to_db(float(st.ratio_sum[step]) / t),
            snr_biased_db=ratio_to_db(float(biased_ratios[step])),
            pred_noise_power=pred_total,
            emp_noise_power=float(st.dev_sq_sum[step]) / t / st.n,
            overflow_rate=st.overflow / st.quantized_entries, trials=t, seed=scn.seed))
    return rows


def _arma_biased_ratios(st: runner.ArmaStats) -> np.ndarray:
    t = st.trials
    ybar = st.yref_sum / t                       # (t_max, N)
    ybar_sq = (ybar * ybar).sum(axis=1)
    mean_dev = st.qq_sq_sum / t - 2.0 * (ybar * (st.yq_sum / t)).sum(axis=1) + ybar_sq
    return np.maximum(mean_dev, 0.0) / ybar_sq


def run_experiment(scn: Scenario, backend: str | None = None) -> ResultTable:
    """Run the full scenario grid: for every cell, evaluate the closed-form
    feedback plan and the no-feedback baseline on identical topology and
    dither draws, attach analytic predictions, and emit one table."""
    graph = build_graph(scn)
    kind = shift_kind(scn)
    shift = build_shift(graph, kind)
    spectrum = spectral_decompose(shift)
    rows: list[ResultRow] = []
    for cell in build_cells(scn, shift):
        x = make_input(spectrum, scn.input.get("seed", 0), filt=cell.filt,
                       shift=shift, qrange=cell.qcfg.range)
        res_mode = scn.topology["mode"] == "res"
        shift_src = ResModel(graph, cell.p, kind) if res_mode else shift
        nv = noise_variance(cell.qcfg)
        plans = [("off", FeedbackPlan.off())]
        if scn.feedback != "off":
            plan, _ = design_feedback(shift_src, cell.filt, nv,
                                      mode=FeedbackMode(scn.feedback))
            plans.append((scn.feedback, plan))
        for mode_label, plan in plans:
            pred = predict_noise(shift_src, cell.filt, plan, nv).total_power
            if isinstance(cell.filt, FirFilter):
                rows.extend(_fir_rows(scn, cell, shift_src, x, plan, mode_label,
                                      pred, backend))
            else:
                rows.extend(_arma_rows(scn, cell, shift_src, x, plan, mode_label,
                                       pred, shift.rho, backend))
    table = ResultTable(rows=tuple(rows))
    if scn.output:
        fmt = "json" if str(scn.output).endswith(".json") else "csv"
        emit_results(table, fmt, scn.output)
    return table
