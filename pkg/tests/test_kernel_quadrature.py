import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grimapprox.errors import DataError
from grimapprox.grim import GrimConfig
from grimapprox.kernel_quadrature import (KernelSpec, dual_distance_matrix,
                                          functional_sup_distance, gram_matrix,
                                          kernel_instance,
                                          kernel_quadrature_grim,
                                          median_heuristic, rbf_kernel,
                                          read_point_csv, uniform_subset_wce,
                                          wce_squared)

E1 = np.exp(-1.0)


def wce_eig_oracle(a, w, gram):
    """sup over the RKHS unit ball restricted to the cloud, via the spectrum of K."""
    vals, vecs = np.linalg.eigh(gram)
    proj = vecs.T @ (np.asarray(a) - np.asarray(w))
    return float(np.sum(np.clip(vals, 0, None) * proj**2))


class TestKernel:
    def test_examples(self):
        spec = KernelSpec(0.7)
        assert rbf_kernel([1.0, 2.0], [1.0, 2.0], spec) == 1.0
        x, y = np.zeros(2), np.array([0.7 * np.sqrt(2), 0.0])
        assert rbf_kernel(x, y, spec) == pytest.approx(E1)
        assert rbf_kernel(x, y, spec) == rbf_kernel(y, x, spec)

    def test_large_bandwidth_limit(self):
        vals = [rbf_kernel([0.0], [1.0], KernelSpec(lam)) for lam in (1, 10, 100, 1000)]
        assert all(np.diff(vals) > 0) and vals[-1] == pytest.approx(1.0, abs=1e-6)

    def test_errors(self):
        with pytest.raises(DataError):
            KernelSpec(0.0)
        with pytest.raises(DataError):
            rbf_kernel([0.0], [0.0, 1.0], KernelSpec(1.0))


class TestMedian:
    def test_pair(self):
        assert median_heuristic([[0.0, 0.0], [3.0, 4.0]]) == pytest.approx(5.0)

    def test_line(self):
        assert median_heuristic([0.0, 1.0, 2.0, 4.0]) == pytest.approx(2.0)

    def test_identical(self):
        with pytest.raises(DataError):
            median_heuristic(np.ones((5, 2)))

    def test_subsample_is_seeded(self):
        pts = np.random.default_rng(0).normal(size=(300, 2))
        a = median_heuristic(pts, max_sample=50, seed=3)
        assert a == median_heuristic(pts, max_sample=50, seed=3)
        assert a == pytest.approx(median_heuristic(pts), rel=0.3)


class TestGram:
    def test_examples(self):
        spec = KernelSpec(1.0)
        assert np.array_equal(gram_matrix([[0.5]], spec), [[1.0]])
        assert np.array_equal(gram_matrix([[1.0], [1.0]], spec), np.ones((2, 2)))
        k = gram_matrix([[0.0], [np.sqrt(2)]], spec)
        assert k[0, 1] == pytest.approx(E1) and k[1, 0] == k[0, 1]

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(1, 200), d=st.integers(1, 4))
    def test_psd(self, seed, n, d):
        pts = np.random.default_rng(seed).normal(size=(n, d))
        k = gram_matrix(pts, KernelSpec(1.3))
        assert np.array_equal(k, k.T) and np.all(np.diag(k) == 1.0)
        assert np.linalg.eigvalsh(k).min() >= -1e-8


class TestWce:
    def test_identical(self):
        k = gram_matrix(np.random.default_rng(0).random((6, 2)), KernelSpec(1.0))
        a = np.full(6, 1 / 6)
        assert wce_squared(a, a, k) == 0.0

    def test_two_deltas(self):
        k = gram_matrix([[0.0], [np.sqrt(2)]], KernelSpec(1.0))
        assert wce_squared([1, 0], [0, 1], k) == pytest.approx(2 - 2 * E1)
        assert 2 - 2 * E1 == pytest.approx(1.264241, abs=1e-6)

    def test_eigen_oracle(self):
        rng = np.random.default_rng(10)
        pts = rng.normal(size=(10, 2))
        k = gram_matrix(pts, KernelSpec(median_heuristic(pts)))
        a = rng.random(10)
        a /= a.sum()
        w = np.zeros(10)
        w[[1, 4, 7]] = rng.random(3)
        w /= w.sum()
        assert wce_squared(a, w, k) == pytest.approx(wce_eig_oracle(a, w, k), rel=1e-9, abs=1e-14)

    def test_size_check(self):
        with pytest.raises(DataError):
            wce_squared([1, 0], [1, 0, 0], np.eye(2))


class TestQuadrature:
    def test_single_point(self):
        cfg = GrimConfig(epsilon=1e-6, max_steps=1, k_schedule=1, s_schedule=1)
        with pytest.raises(Exception):
            # one feature leaves no room for a step (kappa cap = N - 1 = 0)
            kernel_quadrature_grim([[0.0, 1.0]], [1.0], KernelSpec(1.0), cfg)
        res = kernel_quadrature_grim([[0.0], [5.0]], [1 - 1e-12, 1e-12], KernelSpec(1.0), cfg)
        assert res.wce_squared <= 1e-10

    def test_duplicate_collapse(self):
        cfg = GrimConfig(epsilon=1e-6, max_steps=1, k_schedule=1, s_schedule=1)
        res = kernel_quadrature_grim([[1.0, 2.0], [1.0, 2.0]], [0.5, 0.5], KernelSpec(1.0), cfg)
        assert res.node_indices.size == 1
        assert res.weights[0] == pytest.approx(1.0) and res.wce_squared == pytest.approx(0.0, abs=1e-12)

    def test_beats_monte_carlo(self):
        rng = np.random.default_rng(2024)
        pts = rng.normal(size=(200, 2))
        spec = KernelSpec(median_heuristic(pts))
        mu = np.full(200, 1 / 200)
        cfg = GrimConfig(epsilon=1e-9, max_steps=31, k_schedule=1, s_schedule=1)
        res = kernel_quadrature_grim(pts, mu, spec, cfg)
        mc = uniform_subset_wce(gram_matrix(pts, spec), mu, 32, 20, seed=5)
        assert res.node_indices.size <= 32
        assert res.wce_squared < mc.mean()
        assert np.all(res.weights >= 0) and res.weights.sum() == pytest.approx(1.0, abs=1e-8)

    def test_measure_checks(self):
        with pytest.raises(DataError):
            kernel_instance(np.eye(2), [0.5, 0.6])
        with pytest.raises(DataError):
            kernel_instance(np.eye(2), [1.0, 0.0])


class TestDualDistance:
    def test_examples(self):
        spec = KernelSpec(0.8)
        pts = np.array([[0.0], [1.0]])
        assert functional_sup_distance(0, 0, pts, spec) == 0.0
        d = functional_sup_distance(0, 1, pts, spec)
        assert d == pytest.approx(1 - rbf_kernel(pts[0], pts[1], spec))
        assert d == functional_sup_distance(1, 0, pts, spec)

    def test_matrix_matches_pairwise(self):
        pts = np.random.default_rng(8).normal(size=(9, 3))
        spec = KernelSpec(1.1)
        dist = dual_distance_matrix(gram_matrix(pts, spec))
        for i in range(9):
            for j in range(9):
                assert dist[i, j] == pytest.approx(functional_sup_distance(i, j, pts, spec), abs=1e-15)


class TestPointCsv:
    def test_header_and_weights(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("x,y,weight\n0,1,0.25\n2,3,0.75\n")
        pts, w = read_point_csv(p)
        assert np.array_equal(pts, [[0, 1], [2, 3]]) and np.array_equal(w, [0.25, 0.75])

    def test_plain(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("0.5\n1.5\n")
        pts, w = read_point_csv(p)
        assert pts.shape == (2, 1) and w is None

    def test_bad_token(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("x,y\n0,1\n2,zz\n")
        with pytest.raises(DataError, match=r"c.csv:3: column 2"):
            read_point_csv(p)
