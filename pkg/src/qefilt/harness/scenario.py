"""Scenario files: the JSON document driving a Monte Carlo experiment."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ScenarioError
from ..filters import ArmaFilter, FeedbackMode, FirFilter, arma1, default_arma_steps, design_lowpass_fir
from ..graphs import Graph, ShiftKind, ShiftOperator, generate_sensor_graph, load_graph
from ..quantizers import QuantizerConfig

_FEEDBACK_MODES = {m.value for m in FeedbackMode}


@dataclass(frozen=True)
class Scenario:
    """Validated experiment description; see Scenario.from_dict for the schema."""

    name: str
    graph: dict
    shift: str
    filter: dict
    quantizer: dict
    topology: dict
    feedback: str
    trials: int
    seed: int
    input: dict = field(default_factory=lambda: {"seed": 0})
    arma: dict = field(default_factory=dict)
    output: str | None = None
    chunk: int = 1024

    def __post_init__(self):
        if self.trials < 1:
            raise ScenarioError("trials must be >= 1")
        if self.feedback not in _FEEDBACK_MODES:
            raise ScenarioError(f"unknown feedback mode {self.feedback!r}")
        if self.shift not in (k.value for k in ShiftKind if k is not ShiftKind.CUSTOM):
            raise ScenarioError(f"unknown shift kind {self.shift!r}")
        mode = self.topology.get("mode")
        if mode not in ("deterministic", "res"):
            raise ScenarioError(f"topology mode must be deterministic|res, got {mode!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        """Schema (JSON):

        name              str
        graph             {"file": path} | {"generator": {"nodes", "seed",
                          "radius" | "target_edges"}}
        shift             "adjacency" | "laplacian" | "scaled_laplacian"
        filter            {"type": "fir", "taps": [...]} |
                          {"type": "fir", "order"|"orders", "cutoff"} |
                          {"type": "arma1", "c"} |
                          {"type": "arma", "branches": [[psi, gain], ...]}
        quantizer         {"bits": int | [int], "range": float, "dither": str}
        topology          {"mode": "deterministic"} | {"mode": "res", "p": float|[..]}
        feedback          feedback mode name ("off" disables the designed plan)
        trials, seed      int
        input             {"seed": int}
        arma              {"t_max": int, "tol": float, "window": int} (optional)
        output            path (optional), chunk int (optional)

        When `orders` and `bits` are lists of equal length they pair up
        index by index; otherwise the grid is their cross product. The p
        grid always multiplies.
        """
        known = {"name", "graph", "shift", "filter", "quantizer", "topology",
                 "feedback", "trials", "seed", "input", "arma", "output", "chunk"}
        extra = set(d) - known
        if extra:
            raise ScenarioError(f"unknown scenario fields: {sorted(extra)}")
        missing = {"name", "graph", "shift", "filter", "quantizer", "topology",
                   "trials", "seed"} - set(d)
        if missing:
            raise ScenarioError(f"missing scenario fields: {sorted(missing)}")
        d = dict(d)
        d.setdefault("feedback", "per_step_diag" if d["filter"].get("type", "fir").startswith("fir")
                     else "per_branch_diag")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {"name": self.name, "graph": self.graph, "shift": self.shift,
                "filter": self.filter, "quantizer": self.quantizer,
                "topology": self.topology, "feedback": self.feedback,
                "trials": self.trials, "seed": self.seed, "input": self.input,
                "arma": self.arma, "output": self.output, "chunk": self.chunk}


def build_graph(scn: Scenario) -> Graph:
    g = scn.graph
    if "file" in g:
        return load_graph(g["file"])
    if "generator" in g:
        spec = g["generator"]
        return generate_sensor_graph(
            spec["nodes"], radius=spec.get("radius"),
            target_edges=spec.get("target_edges"), seed=spec.get("seed", 0))
    raise ScenarioError("graph needs 'file' or 'generator'")


def shift_kind(scn: Scenario) -> ShiftKind:
    return ShiftKind(scn.shift)


@dataclass(frozen=True)
class Cell:
    """One grid point: a concrete filter, quantizer, and survival probability."""

    index: int
    label: str
    filt: object           # FirFilter | ArmaFilter
    qcfg: QuantizerConfig
    p: float


def _build_filters(scn: Scenario, shift: ShiftOperator) -> list[tuple[str, object]]:
    spec = scn.filter
    ftype = spec.get("type", "fir")
    if ftype == "fir":
        if "taps" in spec:
            return [("fir", FirFilter(np.asarray(spec["taps"], dtype=np.float64)))]
        orders = spec.get("orders", [spec["order"]] if "order" in spec else None)
        if orders is None:
            raise ScenarioError("fir filter needs 'taps' or 'order'/'orders'")
        cutoff = spec.get("cutoff", 0.5)
        return [(f"fir{k}", design_lowpass_fir(shift, int(k), float(cutoff))) for k in orders]
    if ftype == "arma1":
        return [("arma1", arma1(float(spec.get("c", 0.5)), shift))]
    if ftype == "arma":
        return [("arma", ArmaFilter(tuple((float(a), float(b)) for a, b in spec["branches"])))]
    raise ScenarioError(f"unknown filter type {ftype!r}")


def build_cells(scn: Scenario, shift: ShiftOperator) -> list[Cell]:
    filters = _build_filters(scn, shift)
    bits = scn.quantizer.get("bits", 8)
    bits_list = list(bits) if isinstance(bits, (list, tuple)) else [bits]
    qrange = float(scn.quantizer.get("range", 1.0))
    dither = scn.quantizer.get("dither", "subtractive")
    if scn.topology["mode"] == "res":
        p_raw = scn.topology.get("p", 1.0)
        p_list = [float(v) for v in (p_raw if isinstance(p_raw, (list, tuple)) else [p_raw])]
    else:
        p_list = [1.0]

    if len(filters) == len(bits_list) and len(filters) > 1:
        fb_pairs = list(zip(filters, bits_list))
    else:
        fb_pairs = [(f, b) for f in filters for b in bits_list]

    cells = []
    for (label, filt), b in fb_pairs:
        qcfg = QuantizerConfig(bits=int(b), range=qrange, dither=dither)
        for p in p_list:
            idx = len(cells)
            cells.append(Cell(index=idx, label=f"{label}/b{b}" + (f"/p{p:g}" if scn.topology["mode"] == "res" else ""),
                              filt=filt, qcfg=qcfg, p=p))
    return cells


def arma_run_steps(scn: Scenario, arma: ArmaFilter, rho: float) -> tuple[int, int]:
    """(t_max, burn_in): default runs twice the convergence length and
    discards the first half."""
    cfg = scn.arma
    tol = float(cfg.get("tol", 1e-8))
    steps = default_arma_steps(arma, rho, tol)
    t_max = int(cfg.get("t_max", 2 * steps))
    burn = int(cfg.get("burn_in", min(steps, t_max - 1)))
    if not 0 <= burn < t_max:
        raise ScenarioError(f"burn_in {burn} outside [0, t_max={t_max})")
    return t_max, burn
