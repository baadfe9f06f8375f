"""Command-line laboratory.

Subcommands: graph gen|info, design fir|arma, predict, simulate, validate.
Errors exit nonzero with a machine-readable JSON record on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from ._backend import BACKEND_NAME
from .design import design_feedback, predict_noise
from .errors import QefiltError
from .filters import FeedbackMode, FeedbackPlan, arma1, design_lowpass_fir
from .graphs import (ResModel, ShiftKind, build_shift, generate_sensor_graph,
                     load_graph, save_graph, spectral_decompose)
from .harness import Scenario, emit_results, run_experiment, run_suites
from .harness.scenario import build_cells, build_graph, shift_kind
from .quantizers import noise_variance


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QefiltError as exc:
        _fail(type(exc).__name__, str(exc))
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        _fail(type(exc).__name__, str(exc))
        return 2


def _fail(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qefilt",
                                description="quantization error feedback for distributed graph filters")
    p.add_argument("--version", action="version", version=f"qefilt {__version__} ({BACKEND_NAME} backend)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="generate or inspect graphs")
    gsub = g.add_subparsers(dest="graph_cmd", required=True)
    ggen = gsub.add_parser("gen", help="random geometric sensor graph")
    ggen.add_argument("--nodes", type=int, required=True)
    ggen.add_argument("--edges", type=int, help="target edge count")
    ggen.add_argument("--radius", type=float, help="connection radius")
    ggen.add_argument("--seed", type=int, default=0)
    ggen.add_argument("-o", "--output", required=True)
    ggen.set_defaults(func=_cmd_graph_gen)
    ginfo = gsub.add_parser("info", help="print graph statistics as JSON")
    ginfo.add_argument("path")
    ginfo.add_argument("--shift", default="scaled_laplacian",
                       choices=[k.value for k in ShiftKind if k is not ShiftKind.CUSTOM])
    ginfo.set_defaults(func=_cmd_graph_info)

    d = sub.add_parser("design", help="design filters and feedback weights")
    dsub = d.add_subparsers(dest="design_cmd", required=True)
    dfir = dsub.add_parser("fir", help="least-squares low-pass FIR taps")
    dfir.add_argument("--graph", required=True)
    dfir.add_argument("--shift", default="scaled_laplacian")
    dfir.add_argument("--order", type=int, required=True)
    dfir.add_argument("--cutoff", type=float, default=0.5)
    dfir.add_argument("-o", "--output")
    dfir.set_defaults(func=_cmd_design_fir)
    darma = dsub.add_parser("arma", help="single-branch rational filter (I + c S)^-1")
    darma.add_argument("--graph", required=True)
    darma.add_argument("--shift", default="scaled_laplacian")
    darma.add_argument("--c", type=float, default=0.5)
    darma.add_argument("-o", "--output")
    darma.set_defaults(func=_cmd_design_arma)

    pr = sub.add_parser("predict", help="analytic noise powers and feedback plans (JSON)")
    pr.add_argument("--scenario", required=True)
    pr.add_argument("-o", "--output")
    pr.set_defaults(func=_cmd_predict)

    sim = sub.add_parser("simulate", help="run a scenario file into a result table")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("-o", "--output")
    sim.add_argument("--format", choices=["csv", "json"], default="csv")
    sim.add_argument("--backend", choices=["python", "compiled"])
    sim.set_defaults(func=_cmd_simulate)

    val = sub.add_parser("validate", help="run oracle suites")
    val.add_argument("--suite", nargs="+", default=["all"],
                     choices=["kernel", "gramian", "optimality", "prediction", "all"])
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--json", action="store_true")
    val.set_defaults(func=_cmd_validate)
    return p


def _cmd_graph_gen(args) -> int:
    if (args.edges is None) == (args.radius is None):
        raise QefiltError("pass exactly one of --edges / --radius")
    g = generate_sensor_graph(args.nodes, radius=args.radius,
                              target_edges=args.edges, seed=args.seed)
    save_graph(g, args.output)
    print(json.dumps({"nodes": g.n, "edges": g.num_edges, "path": args.output}))
    return 0


def _cmd_graph_info(args) -> int:
    g = load_graph(args.path)
    shift = build_shift(g, ShiftKind(args.shift))
    spec = spectral_decompose(shift)
    deg = g.degree_sequence()
    print(json.dumps({
        "nodes": g.n, "edges": g.num_edges, "connected": g.is_connected(),
        "degree_min": min(deg), "degree_max": max(deg),
        "shift": args.shift, "rho": shift.rho,
        "eigenvalue_min": float(spec.eigenvalues[0]),
        "eigenvalue_max": float(spec.eigenvalues[-1]),
    }, indent=1))
    return 0


def _cmd_design_fir(args) -> int:
    g = load_graph(args.graph)
    shift = build_shift(g, ShiftKind(args.shift))
    fir = design_lowpass_fir(shift, args.order, args.cutoff)
    doc = {"type": "fir", "order": fir.order, "cutoff": args.cutoff,
           "taps": fir.taps.tolist()}
    _emit_json(doc, args.output)
    return 0


def _cmd_design_arma(args) -> int:
    g = load_graph(args.graph)
    shift = build_shift(g, ShiftKind(args.shift))
    filt = arma1(args.c, shift)
    doc = {"type": "arma", "branches": [list(b) for b in filt.branches], "c": args.c}
    _emit_json(doc, args.output)
    return 0


def _cmd_predict(args) -> int:
    scn = Scenario.from_json(args.scenario)
    graph = build_graph(scn)
    kind = shift_kind(scn)
    shift = build_shift(graph, kind)
    cells = []
    for cell in build_cells(scn, shift):
        src = ResModel(graph, cell.p, kind) if scn.topology["mode"] == "res" else shift
        nv = noise_variance(cell.qcfg)
        plan_off = FeedbackPlan.off()
        entry = {"cell": cell.label, "p": cell.p, "bits": cell.qcfg.bits,
                 "noise_var": nv,
                 "off": predict_noise(src, cell.filt, plan_off, nv).to_dict()}
        if scn.feedback != "off":
            plan, reduction = design_feedback(src, cell.filt, nv,
                                              mode=FeedbackMode(scn.feedback))
            entry["plan"] = plan.to_dict()
            entry["designed"] = predict_noise(src, cell.filt, plan, nv).to_dict()
            entry["reduction_power"] = reduction
        cells.append(entry)
    _emit_json({"scenario": scn.name, "feedback": scn.feedback, "cells": cells},
               args.output)
    return 0


def _cmd_simulate(args) -> int:
    scn = Scenario.from_json(args.scenario)
    table = run_experiment(scn, backend=args.backend)
    if args.output:
        emit_results(table, args.format, args.output)
        print(json.dumps({"rows": len(table.rows), "path": args.output}))
    else:
        out = table.to_csv() if args.format == "csv" else table.to_json()
        print(out, end="")
    return 0


def _cmd_validate(args) -> int:
    results = run_suites(args.suite, seed=args.seed)
    failed = [r for r in results if not r.passed]
    if args.json:
        print(json.dumps([r.__dict__ for r in results], indent=1))
    else:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.suite}/{r.name}: {r.detail}")
        print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _emit_json(doc: dict, output) -> None:
    text = json.dumps(doc, indent=1)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


if __name__ == "__main__":
    sys.exit(main())
