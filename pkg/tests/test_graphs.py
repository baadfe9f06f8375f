import math

import numpy as np
import pytest

from qefilt import (ConnectivityError, Graph, GraphFormatError, GraphValidationError,
                    ResModel, ShiftKind, build_shift, custom_shift,
                    generate_sensor_graph, load_graph, mean_shift, sample_res,
                    save_graph, spectral_decompose)
from qefilt.graphs import edge_arrays, realized_shift_matrix
from qefilt.harness.oracles import enum_mean_shift, mc_mean_shift


class TestGraphType:
    def test_normalizes_and_sorts_edges(self):
        g = Graph(3, ((2, 1, 1.0), (1, 0, 2.0)))
        assert g.edges == ((0, 1, 2.0), (1, 2, 1.0))

    def test_rejects_self_loop(self):
        with pytest.raises(GraphValidationError):
            Graph(2, ((0, 0, 1.0),))

    def test_rejects_duplicate_pair_even_reversed(self):
        with pytest.raises(GraphValidationError):
            Graph(3, ((0, 1, 1.0), (1, 0, 2.0)))

    def test_rejects_out_of_range_and_nonfinite(self):
        with pytest.raises(GraphValidationError):
            Graph(2, ((0, 2, 1.0),))
        with pytest.raises(GraphValidationError):
            Graph(2, ((0, 1, math.inf),))


class TestGraphFile:
    def test_parses_path_graph(self, tmp_path):
        f = tmp_path / "g.txt"
        f.write_text("# comment\n3 2\n0 1 1.0\n1 2 1.0\n")
        g = load_graph(f)
        assert g.n == 3 and g.edges == ((0, 1, 1.0), (1, 2, 1.0))

    def test_self_loop_rejected(self, tmp_path):
        f = tmp_path / "g.txt"
        f.write_text("2 1\n0 0 1.0\n")
        with pytest.raises(GraphValidationError):
            load_graph(f)

    @pytest.mark.parametrize("text", ["", "3\n", "2 2\n0 1 1.0\n", "2 1\n0 1\n", "x y\n"])
    def test_malformed_files(self, tmp_path, text):
        f = tmp_path / "g.txt"
        f.write_text(text)
        with pytest.raises(GraphFormatError):
            load_graph(f)

    def test_round_trip_sorted(self, tmp_path):
        g = Graph(4, ((3, 1, 0.5), (0, 2, 1.5), (0, 1, 1.0)))
        f = tmp_path / "g.txt"
        save_graph(g, f)
        assert load_graph(f) == g
        lines = f.read_text().splitlines()
        assert lines[0] == "4 3"
        assert lines[1].startswith("0 1")

    def test_64_node_236_edge_file(self, tmp_path):
        g = generate_sensor_graph(64, target_edges=236, seed=1)
        f = tmp_path / "sensor.txt"
        save_graph(g, f)
        g2 = load_graph(f)
        assert g2.n == 64 and g2.num_edges == 236


class TestSensorGenerator:
    def test_matches_size_target_and_connected(self):
        g = generate_sensor_graph(64, target_edges=236, seed=1)
        assert g.n == 64
        assert g.num_edges == 236
        assert g.is_connected()

    def test_two_nodes_single_edge(self):
        g = generate_sensor_graph(2, target_edges=1, seed=9)
        assert g.num_edges == 1

    def test_deterministic(self):
        a = generate_sensor_graph(20, target_edges=40, seed=5)
        b = generate_sensor_graph(20, target_edges=40, seed=5)
        assert a == b

    def test_radius_mode(self):
        g = generate_sensor_graph(30, radius=0.35, seed=2)
        assert g.is_connected()

    def test_tiny_radius_fails(self):
        with pytest.raises(ConnectivityError):
            generate_sensor_graph(40, radius=1e-4, seed=2, max_attempts=3)

    def test_argument_validation(self):
        with pytest.raises(GraphValidationError):
            generate_sensor_graph(10, seed=0)
        with pytest.raises(GraphValidationError):
            generate_sensor_graph(10, radius=0.3, target_edges=5, seed=0)


class TestShifts:
    def test_path3_adjacency(self, path3):
        s = build_shift(path3, ShiftKind.ADJACENCY)
        assert s.matrix.tolist() == [[0, 1, 0], [1, 0, 1], [0, 1, 0]]

    def test_path3_laplacian(self, path3):
        s = build_shift(path3, ShiftKind.LAPLACIAN)
        assert s.matrix.tolist() == [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]

    def test_scaled_laplacian_spectrum_in_unit_interval(self):
        g = generate_sensor_graph(24, target_edges=60, seed=7)
        s = build_shift(g, ShiftKind.SCALED_LAPLACIAN)
        vals = np.linalg.eigvalsh(s.matrix)
        assert vals[0] >= -1e-12 and vals[-1] <= 1.0 + 1e-12

    def test_rho_bounds_spectral_norm(self):
        g = generate_sensor_graph(15, target_edges=30, seed=3)
        for kind in (ShiftKind.ADJACENCY, ShiftKind.LAPLACIAN, ShiftKind.SCALED_LAPLACIAN):
            s = build_shift(g, kind)
            assert s.rho >= np.max(np.abs(np.linalg.eigvalsh(s.matrix))) - 1e-12

    def test_exact_symmetry(self):
        g = generate_sensor_graph(15, target_edges=30, seed=3)
        for kind in (ShiftKind.ADJACENCY, ShiftKind.LAPLACIAN, ShiftKind.SCALED_LAPLACIAN):
            m = build_shift(g, kind).matrix
            assert np.array_equal(m, m.T)

    def test_custom_shift_rejects_asymmetric(self):
        with pytest.raises(GraphValidationError):
            custom_shift(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        g = generate_sensor_graph(12, target_edges=25, seed=4)
        for kind in (ShiftKind.ADJACENCY, ShiftKind.LAPLACIAN):
            s = build_shift(g, kind).matrix
            perm = rng.permutation(12)
            relabeled = Graph(12, tuple((int(perm[u]), int(perm[v]), w) for u, v, w in g.edges))
            s2 = build_shift(relabeled, kind).matrix
            pmat = np.eye(12)[:, perm]  # maps node i to label perm[i]
            assert np.allclose(s2, pmat @ s @ pmat.T, atol=0)


class TestSpectrum:
    def test_identity_matrix(self):
        spec = spectral_decompose(custom_shift(np.eye(4)))
        assert np.allclose(spec.eigenvalues, 1.0, atol=1e-12)

    def test_two_node_exchange(self, two_node):
        spec = spectral_decompose(build_shift(two_node, ShiftKind.ADJACENCY))
        # characteristic polynomial lam^2 - 1 by hand
        assert np.allclose(np.sort(spec.eigenvalues), [-1.0, 1.0], atol=1e-12)

    def test_path3_eigenvalues(self, path3_shift):
        spec = spectral_decompose(path3_shift)
        assert np.allclose(np.sort(spec.eigenvalues),
                           [-math.sqrt(2), 0.0, math.sqrt(2)], atol=1e-12)

    def test_reconstruction_and_orthonormality(self):
        g = generate_sensor_graph(20, target_edges=45, seed=8)
        s = build_shift(g, ShiftKind.LAPLACIAN)
        spec = spectral_decompose(s)
        u, lam = spec.eigenvectors, spec.eigenvalues
        recon = u @ np.diag(lam) @ u.T
        assert np.linalg.norm(recon - s.matrix) <= 1e-9 * np.linalg.norm(s.matrix)
        assert np.max(np.abs(u.T @ u - np.eye(20))) <= 1e-10


class TestResModel:
    def test_validation(self, path3):
        with pytest.raises(GraphValidationError):
            ResModel(path3, 1.5, ShiftKind.ADJACENCY)
        with pytest.raises(GraphValidationError):
            ResModel(path3, 0.5, ShiftKind.CUSTOM)
        with pytest.raises(GraphValidationError):
            ResModel(Graph(2, ((0, 1, -1.0),)), 0.5, ShiftKind.ADJACENCY)

    def test_p1_realization_is_base(self, cycle4):
        for kind in (ShiftKind.ADJACENCY, ShiftKind.LAPLACIAN, ShiftKind.SCALED_LAPLACIAN):
            model = ResModel(cycle4, 1.0, kind)
            s = sample_res(model, np.random.default_rng(0))
            assert np.allclose(s.matrix, build_shift(cycle4, kind).matrix, atol=0)

    def test_p0_adjacency_zero(self, cycle4):
        model = ResModel(cycle4, 0.0, ShiftKind.ADJACENCY)
        s = sample_res(model, np.random.default_rng(0))
        assert np.array_equal(s.matrix, np.zeros((4, 4)))

    def test_single_edge_survival_frequency(self, two_node):
        # binomial statistics oracle: freq within 3 standard errors
        model = ResModel(two_node, 0.5, ShiftKind.ADJACENCY)
        rng = np.random.default_rng(123)
        trials = 100_000
        hits = sum(sample_res(model, rng).matrix[0, 1] > 0 for _ in range(trials))
        se = math.sqrt(0.25 / trials)
        assert abs(hits / trials - 0.5) <= 3 * se

    def test_realizations_symmetric_and_bounded(self):
        g = generate_sensor_graph(16, target_edges=34, seed=6)
        for kind in (ShiftKind.ADJACENCY, ShiftKind.SCALED_LAPLACIAN):
            model = ResModel(g, 0.6, kind)
            arr = edge_arrays(model)
            base_rho = build_shift(g, kind).rho
            rng = np.random.default_rng(77)
            keeps = rng.random((10_000, g.num_edges)) < model.p
            for keep in keeps:
                m = realized_shift_matrix(model, keep)
                assert np.array_equal(m, m.T)
                assert np.linalg.norm(m, 2) <= base_rho + 1e-9
            assert arr.n == 16

    def test_mean_shift_formulas(self, path3, cycle4):
        a = build_shift(path3, ShiftKind.ADJACENCY).matrix
        assert np.allclose(mean_shift(ResModel(path3, 0.5, ShiftKind.ADJACENCY)), 0.5 * a, atol=0)
        assert np.allclose(mean_shift(ResModel(path3, 1.0, ShiftKind.ADJACENCY)), a, atol=0)
        # Laplacian: degree terms are sums of edge indicators, so the mean is p*L
        lap = build_shift(cycle4, ShiftKind.LAPLACIAN).matrix
        exact = enum_mean_shift(ResModel(cycle4, 0.3, ShiftKind.LAPLACIAN))
        assert np.allclose(exact, 0.3 * lap, atol=1e-14)

    def test_mean_shift_monte_carlo(self, path3):
        model = ResModel(path3, 0.3, ShiftKind.LAPLACIAN)
        mean, se = mc_mean_shift(model, 100_000, seed=5)
        dev = np.abs(mean - mean_shift(model))
        assert np.all(dev <= 3 * se + 1e-12)
