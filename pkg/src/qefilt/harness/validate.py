"""Validation suites wiring predictions against their independent oracles.

Each suite returns CheckResult rows; the CLI prints one line per check and
the acceptance tests rerun the same functions with full budgets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..design import (design_feedback, expected_sms, feedback_gradient, kernel_tensor,
                      noise_power_objective, observability_gramian, predict_noise,
                      stochastic_gramian)
from ..filters import ArmaFilter, FeedbackPlan, FirFilter
from ..graphs import Graph, ResModel, ShiftKind, build_shift, generate_sensor_graph
from .oracles import enum_expected_sms, grid_search_feedback, mc_expected_sms, mc_noise_power

PATH3 = Graph(3, ((0, 1, 1.0), (1, 2, 1.0)))
CYCLE4 = Graph(4, ((0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)))
K4 = Graph(4, tuple((i, j, 1.0) for i in range(4) for j in range(i + 1, 4)))


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _check(suite, name, passed, detail) -> CheckResult:
    return CheckResult(suite=suite, name=name, passed=bool(passed), detail=detail)


def validate_kernel(seed: int = 0, mc_trials: int = 60_000) -> list[CheckResult]:
    """Closed-form E[S_t M S_t] vs exhaustive enumeration and Monte Carlo."""
    out = []
    rng = np.random.default_rng([seed, 1])
    cases = [(g, kind, p) for g in (PATH3, CYCLE4, K4)
             for kind in (ShiftKind.ADJACENCY, ShiftKind.LAPLACIAN, ShiftKind.SCALED_LAPLACIAN)
             for p in (0.3, 0.7)]
    worst = 0.0
    for g, kind, p in cases:
        model = ResModel(g, p, kind)
        ker = kernel_tensor(model, materialize=True)
        m = rng.standard_normal((g.n, g.n))
        m = (m + m.T) / 2
        exact = enum_expected_sms(model, m)
        closed = expected_sms(ker, m)
        dense = expected_sms(ker, m, method="dense")
        worst = max(worst, float(np.max(np.abs(closed - exact))),
                    float(np.max(np.abs(dense - exact))))
    out.append(_check("kernel", "enumeration_exactness",
                      worst <= 1e-12, f"max |closed - enumerated| = {worst:.3e} (tol 1e-12)"))

    big = generate_sensor_graph(20, target_edges=45, seed=seed + 3)
    model = ResModel(big, 0.6, ShiftKind.LAPLACIAN)
    ker = kernel_tensor(model, materialize=False)
    m = rng.standard_normal((20, 20))
    m = (m + m.T) / 2
    mean, se = mc_expected_sms(model, m, mc_trials, seed + 4)
    closed = expected_sms(ker, m)
    dev = np.abs(closed - mean)
    ok_frac = float(np.mean(dev <= 3.0 * se + 1e-12))
    out.append(_check("kernel", "monte_carlo_3se",
                      ok_frac >= 0.99, f"{ok_frac:.3%} of entries within 3 SE at {mc_trials} trials"))
    return out


def validate_gramian(seed: int = 0, tol: float = 1e-11) -> list[CheckResult]:
    """Fixed-point residuals and geometric iteration bounds."""
    out = []
    shift = build_shift(generate_sensor_graph(12, target_edges=24, seed=seed),
                        ShiftKind.SCALED_LAPLACIAN)
    model = ResModel(generate_sensor_graph(12, target_edges=24, seed=seed),
                     0.6, ShiftKind.SCALED_LAPLACIAN)
    worst_res = 0.0
    bound_ok = True
    details = []
    for psi_rho in (0.3, 0.6, 0.9, 0.95):
        psi = psi_rho / shift.rho
        for gram in (observability_gramian(shift, psi, tol),
                     stochastic_gramian(model, psi, tol)):
            worst_res = max(worst_res, gram.residual)
            geo = np.ceil((np.log(tol) - 0.5 * np.log(shift.n)) /
                          (2 * np.log(psi_rho))) + 2
            if gram.iterations > geo:
                bound_ok = False
            details.append(f"{gram.kind}@{psi_rho}: res={gram.residual:.2e} it={gram.iterations}/{int(geo)}")
            w_eigs = np.linalg.eigvalsh(gram.matrix)
            if w_eigs.min() < 1.0 - 1e-9:
                bound_ok = False
    out.append(_check("gramian", "residuals", worst_res <= 1e-10,
                      f"max residual {worst_res:.3e} (tol 1e-10)"))
    out.append(_check("gramian", "iteration_bound_and_psd", bound_ok, "; ".join(details[:4]) + " ..."))
    return out


def random_instance(seed: int):
    """One randomized design instance: (shift_source, filter, label).

    N <= 8, K <= 4, p in {0.3, 0.6, 0.9}, ARMA branches scaled to
    |psi| * rho <= 0.9. Cycles through the four design settings.
    """
    rng = np.random.default_rng([seed, 77])
    n = int(rng.integers(3, 9))
    g = generate_sensor_graph(n, target_edges=int(rng.integers(n - 1, n * (n - 1) // 2 + 1)),
                              seed=int(rng.integers(1 << 30)))
    kind = rng.choice([ShiftKind.ADJACENCY, ShiftKind.LAPLACIAN, ShiftKind.SCALED_LAPLACIAN])
    shift = build_shift(g, kind)
    setting = seed % 4
    stochastic = setting >= 2
    p = float(rng.choice([0.3, 0.6, 0.9]))
    src = ResModel(g, p, kind) if stochastic else shift
    if setting % 2 == 0:
        k = int(rng.integers(1, 5))
        taps = rng.uniform(-1, 1, k + 1)
        taps[np.abs(taps) < 0.1] = 0.3
        filt = FirFilter(taps)
        label = f"fir{'_res' if stochastic else ''}(n={n},K={k},p={p if stochastic else 1})"
    else:
        k = int(rng.integers(1, 4))
        margin = rng.uniform(0.3, 0.9, k)
        psis = margin * np.where(rng.random(k) < 0.5, -1.0, 1.0) / max(shift.rho, 1e-9)
        gains = rng.uniform(0.5, 1.5, k)
        filt = ArmaFilter(tuple(zip(psis, gains)))
        label = f"arma{'_res' if stochastic else ''}(n={n},K={k},p={p if stochastic else 1})"
    return src, filt, label


def validate_optimality(seed: int = 0, instances: int = 8, step: float = 1e-3,
                        tol_improve: float = 1e-6, tol_grad: float = 1e-8) -> list[CheckResult]:
    """Closed forms vs grid search + refinement, and gradient stationarity."""
    out = []
    worst_gap = -np.inf
    worst_grad = 0.0
    for i in range(instances):
        src, filt, label = random_instance(seed * 1000 + i)
        plan, _ = design_feedback(src, filt, 1.0)
        pred = predict_noise(src, filt, plan, 1.0).total_power
        grad = float(np.max(np.abs(feedback_gradient(src, filt, plan, 1.0))))
        objective, shape = noise_power_objective(src, filt, 1.0)
        amax = float(np.max(np.abs(plan.values))) if plan.values.size else 0.0
        bound = max(2.0, 1.25 * amax)
        _, best = grid_search_feedback(objective, shape, bounds=(-bound, bound), step=step)
        worst_gap = max(worst_gap, pred - best)
        worst_grad = max(worst_grad, grad)
    out.append(_check("optimality", "grid_search_never_beats_closed_form",
                      worst_gap <= tol_improve,
                      f"max (closed - search) = {worst_gap:.3e} over {instances} instances (tol {tol_improve:g})"))
    out.append(_check("optimality", "gradient_stationarity",
                      worst_grad <= tol_grad, f"max |grad| = {worst_grad:.3e} (tol {tol_grad:g})"))
    return out


def _prediction_cases(seed: int):
    shift3 = build_shift(PATH3, ShiftKind.ADJACENCY)
    two = Graph(2, ((0, 1, 1.0),))
    shift2 = build_shift(two, ShiftKind.ADJACENCY)
    sensor = generate_sensor_graph(10, target_edges=20, seed=seed)
    return [
        (shift3, FirFilter(np.array([1.0, 1.0, 1.0])), "fir_det_path3"),
        (shift2, ArmaFilter(((0.5, 1.0),)), "arma_det_2node"),
        (ResModel(CYCLE4, 0.6, ShiftKind.ADJACENCY), FirFilter(np.array([0.4, 1.0, 0.7])), "fir_res_cycle4"),
        (ResModel(two, 0.5, ShiftKind.ADJACENCY), ArmaFilter(((0.5, 1.0),)), "arma_res_2node"),
        (ResModel(sensor, 0.8, ShiftKind.SCALED_LAPLACIAN), FirFilter(np.array([0.2, 0.8, 0.5, 0.3])), "fir_res_sensor10"),
    ]


def validate_prediction(seed: int = 0, trials: int = 100_000,
                        backend: str | None = None) -> list[CheckResult]:
    """Analytic powers vs noise-only Monte Carlo, plan off and designed."""
    out = []
    var = 1.0 / 48.0
    for src, filt, label in _prediction_cases(seed):
        for mode_label, plan in (("off", FeedbackPlan.off()),
                                 ("designed", design_feedback(src, filt, var)[0])):
            pred = predict_noise(src, filt, plan, var)
            mc = mc_noise_power(src, filt, plan, var, trials, seed + 11,
                                per_source=True, backend=backend)
            gap = abs(mc.total.mean - pred.total_power)
            ok = gap <= 3.0 * mc.total.se
            per_ok = all(abs(est.mean - s.power) <= 3.0 * est.se
                         for est, s in zip(mc.per_source, pred.sources))
            out.append(_check("prediction", f"{label}/{mode_label}", ok and per_ok,
                              f"|mc-pred| = {gap:.3e} vs 3SE = {3 * mc.total.se:.3e}"))
    return out


def run_suites(names, seed: int = 0, backend: str | None = None) -> list[CheckResult]:
    all_suites = {
        "kernel": lambda: validate_kernel(seed),
        "gramian": lambda: validate_gramian(seed),
        "optimality": lambda: validate_optimality(seed),
        "prediction": lambda: validate_prediction(seed, trials=30_000, backend=backend),
    }
    picked = list(all_suites) if "all" in names else names
    results = []
    for name in picked:
        if name not in all_suites:
            raise KeyError(f"unknown validation suite {name!r}")
        results.extend(all_suites[name]())
    return results
