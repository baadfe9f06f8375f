import json

import numpy as np
import pytest

from qefilt import (FeedbackPlan, FirFilter, Graph, QefiltError, ResModel,
                    ScenarioError, ShiftKind, arma1, build_shift,
                    design_fir_feedback, generate_sensor_graph, spectral_decompose)
from qefilt.filters import ArmaFilter
from qefilt.harness import (ResultRow, ResultTable, Scenario, emit_results,
                            make_input, mc_noise_power, read_results,
                            run_experiment, snr, upper_bound_snr)
from qefilt.harness.experiment import _dry_run_peak
from qefilt.harness.oracles import grid_search_feedback
from qefilt.harness.runner import run_fir_trials

VAR = 1.0 / 48.0


def mini_scenario(**overrides):
    doc = {
        "name": "mini",
        "graph": {"generator": {"nodes": 10, "target_edges": 20, "seed": 2}},
        "shift": "scaled_laplacian",
        "filter": {"type": "fir", "order": 3, "cutoff": 0.5},
        "quantizer": {"bits": 8, "range": 1.0, "dither": "subtractive"},
        "topology": {"mode": "res", "p": 0.8},
        "feedback": "per_step_diag",
        "trials": 200,
        "seed": 31,
    }
    doc.update(overrides)
    return Scenario.from_dict(doc)


class TestMakeInput:
    def test_single_node(self):
        g = Graph(1, ())
        spec = spectral_decompose(build_shift(g, ShiftKind.ADJACENCY))
        x = make_input(spec, seed=3)
        assert x.shape == (1,)

    def test_flat_spectrum_before_scaling(self):
        g = generate_sensor_graph(12, target_edges=25, seed=1)
        shift = build_shift(g, ShiftKind.SCALED_LAPLACIAN)
        spec = spectral_decompose(shift)
        x = make_input(spec, seed=5)
        coeffs = np.abs(spec.eigenvectors.T @ x)
        assert np.max(np.abs(coeffs - coeffs[0])) <= 1e-12

    def test_deterministic_per_seed(self):
        g = generate_sensor_graph(12, target_edges=25, seed=1)
        spec = spectral_decompose(build_shift(g, ShiftKind.SCALED_LAPLACIAN))
        assert np.array_equal(make_input(spec, seed=4), make_input(spec, seed=4))
        assert not np.array_equal(make_input(spec, seed=4), make_input(spec, seed=5))

    def test_dry_run_states_within_margin(self):
        g = generate_sensor_graph(12, target_edges=25, seed=1)
        shift = build_shift(g, ShiftKind.SCALED_LAPLACIAN)
        spec = spectral_decompose(shift)
        from qefilt import design_lowpass_fir
        fir = design_lowpass_fir(shift, 6, 0.5)
        x = make_input(spec, seed=5, filt=fir, shift=shift, qrange=1.0)
        assert _dry_run_peak(shift, fir, x) <= 0.9 + 1e-12
        filt = arma1(0.5, shift)
        x2 = make_input(spec, seed=5, filt=filt, shift=shift, qrange=1.0)
        assert _dry_run_peak(shift, filt, x2) <= 0.9 + 1e-12


class TestSnr:
    def test_identical_outputs_hit_cap(self):
        y = np.ones((5, 4))
        assert snr(y, y[0], mode="unbiased") == 300.0

    def test_unit_ratio_is_zero_db(self):
        ref = np.array([1.0, 0.0, 0.0])
        out = np.array([[2.0, 0.0, 0.0]])  # deviation norm == ref norm
        assert snr(out, ref) == pytest.approx(0.0, abs=1e-12)

    def test_zero_reference_rejected(self):
        with pytest.raises(QefiltError):
            snr(np.ones((2, 3)), np.zeros(3))

    def test_biased_mode_needs_vector(self):
        with pytest.raises(QefiltError):
            snr(np.ones((2, 3)), np.ones((2, 3)), mode="biased")

    def test_linear_domain_averaging(self):
        ref = np.array([1.0, 0.0])
        outs = np.array([[1.1, 0.0], [1.0, 0.0]])  # ratios 0.01 and 0
        expect = -10 * np.log10(0.005)
        assert snr(outs, ref) == pytest.approx(expect, rel=1e-9)


class TestUpperBound:
    def test_p1_hits_cap(self, cycle4):
        model = ResModel(cycle4, 1.0, ShiftKind.ADJACENCY)
        fir = FirFilter(np.array([0.5, 0.4, 0.2]))
        x = np.array([0.1, -0.2, 0.3, 0.05])
        assert upper_bound_snr(model, fir, x, trials=50, seed=1) == 300.0

    def test_split_sample_stability(self):
        g = generate_sensor_graph(16, target_edges=34, seed=9)
        model = ResModel(g, 0.9, ShiftKind.SCALED_LAPLACIAN)
        shift = build_shift(g, ShiftKind.SCALED_LAPLACIAN)
        filt = arma1(0.5, shift)
        spec = spectral_decompose(shift)
        x = make_input(spec, seed=2, filt=filt, shift=shift, qrange=1.0)
        b1 = upper_bound_snr(model, filt, x, trials=10_000, seed=100)
        b2 = upper_bound_snr(model, filt, x, trials=10_000, seed=200)
        assert abs(b1 - b2) <= 0.2


class TestMcNoisePower:
    def test_zero_noise_gives_zero(self, path3_shift):
        fir = FirFilter(np.array([1.0, 1.0, 1.0]))
        mc = mc_noise_power(path3_shift, fir, FeedbackPlan.off(), 0.0, 500, 1)
        assert mc.total.mean == 0.0

    def test_path3_matches_hand_prediction(self, path3_shift):
        fir = FirFilter(np.array([1.0, 1.0, 1.0]))
        mc = mc_noise_power(path3_shift, fir, FeedbackPlan.off(), VAR, 60_000, 2)
        expect = 4 * VAR + 4 * VAR / 3
        assert abs(mc.total.mean - expect) <= 3 * mc.total.se

    def test_arma_stochastic_two_node(self, two_node):
        model = ResModel(two_node, 0.5, ShiftKind.ADJACENCY)
        filt = ArmaFilter(((0.5, 1.0),))
        mc = mc_noise_power(model, filt, FeedbackPlan.off(), VAR, 60_000, 3)
        assert abs(mc.total.mean - VAR / 7) <= 3 * mc.total.se


class TestGridSearch:
    def test_quadratic_with_known_minimum(self):
        def objective(theta):
            th = np.asarray(theta)
            return ((th - 0.37) ** 2).sum(axis=(-2, -1))

        theta, val = grid_search_feedback(objective, (2, 2), bounds=(-1, 1), step=1e-2)
        assert np.max(np.abs(theta - 0.37)) <= 1e-6
        assert val <= 1e-10


class TestResults:
    def test_empty_table_header_only(self, tmp_path):
        emit_results(ResultTable(rows=()), "csv", tmp_path / "r.csv")
        text = (tmp_path / "r.csv").read_text()
        assert text.splitlines() == [
            "scenario,p,bits,feedback,snr_unbiased_db,snr_biased_db,"
            "pred_noise_power,emp_noise_power,overflow_rate,trials,seed"]

    def test_one_row_json_round_trip(self, tmp_path):
        row = ResultRow("s", 0.5, 8, "off", 12.25, 11.5, 1e-4, 1.1e-4, 0.0, 10, 3)
        table = ResultTable(rows=(row,))
        emit_results(table, "json", tmp_path / "r.json")
        assert read_results(tmp_path / "r.json") == table

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(QefiltError):
            emit_results(ResultTable(rows=()), "xml", tmp_path / "r.xml")


class TestScenario:
    def test_missing_and_unknown_fields(self):
        with pytest.raises(ScenarioError):
            Scenario.from_dict({"name": "x"})
        with pytest.raises(ScenarioError):
            mini_scenario(bogus=1)

    def test_bad_values(self):
        with pytest.raises(ScenarioError):
            mini_scenario(trials=0)
        with pytest.raises(ScenarioError):
            mini_scenario(feedback="sideways")
        with pytest.raises(ScenarioError):
            mini_scenario(topology={"mode": "quantum"})

    def test_json_round_trip(self, tmp_path):
        scn = mini_scenario()
        path = tmp_path / "s.json"
        path.write_text(json.dumps(scn.to_dict()))
        assert Scenario.from_json(path) == scn


class TestRunExperiment:
    def test_reproducible_bitwise(self):
        scn = mini_scenario()
        t1 = run_experiment(scn)
        t2 = run_experiment(scn)
        assert t1 == t2
        assert t1.to_csv() == t2.to_csv()

    def test_huge_bits_single_trial_hits_cap(self):
        scn = mini_scenario(trials=1, quantizer={"bits": 52, "range": 1.0,
                                                 "dither": "subtractive"},
                            topology={"mode": "deterministic"})
        table = run_experiment(scn)
        for row in table.rows:
            assert row.snr_unbiased_db == 300.0
        off = [r for r in table.rows if r.feedback == "off"][0]
        fb = [r for r in table.rows if r.feedback != "off"][0]
        assert off.snr_unbiased_db == fb.snr_unbiased_db

    def test_paired_runs_share_topology_draws(self):
        g = generate_sensor_graph(10, target_edges=20, seed=2)
        model = ResModel(g, 0.8, ShiftKind.SCALED_LAPLACIAN)
        shift = build_shift(g, ShiftKind.SCALED_LAPLACIAN)
        from qefilt import design_lowpass_fir
        from qefilt.quantizers import QuantizerConfig, noise_variance
        fir = design_lowpass_fir(shift, 3, 0.5)
        spec = spectral_decompose(shift)
        x = make_input(spec, seed=0, filt=fir, shift=shift, qrange=1.0)
        qc = QuantizerConfig(bits=8, range=1.0, dither="subtractive")
        plan, _ = design_fir_feedback(shift, fir, noise_variance(qc))
        s_off = run_fir_trials(model, fir, x, qc, FeedbackPlan.off(), 64, 31, 0)
        s_fb = run_fir_trials(model, fir, x, qc, plan, 64, 31, 0)
        # noiseless reference depends only on the topology draws
        assert np.array_equal(s_off.yref_sum, s_fb.yref_sum)

    def test_predictions_track_empirical_noise(self):
        scn = mini_scenario(trials=3000, seed=5)
        table = run_experiment(scn)
        for row in table.rows:
            assert row.emp_noise_power == pytest.approx(row.pred_noise_power, rel=0.15)

    def test_output_file_written(self, tmp_path):
        out = tmp_path / "table.csv"
        scn = mini_scenario(trials=20, output=str(out))
        run_experiment(scn)
        assert out.read_text().startswith("scenario,")

    def test_golden_mini_table(self, tmp_path):
        import pathlib
        golden = pathlib.Path(__file__).parent / "data" / "golden_mini.csv"
        scn = Scenario.from_json(pathlib.Path(__file__).parent / "data" / "mini_scenario.json")
        table = run_experiment(scn, backend="python")
        assert table.to_csv() == golden.read_text()
