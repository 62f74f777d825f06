import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grimapprox.errors import DataError, NumericalError
from grimapprox.recombination import (ReductionSystem, eliminate_direction,
                                      recombination_thin, recombine_basic,
                                      recombine_tree, svd_kernel_basis)

from conftest import feasible_support, feasible_supports, random_system

REDUCERS = [recombine_basic, recombine_tree]


def check_contract(system, sol, tol=1e-8):
    A, x = system.matrix, system.weights
    assert np.all(sol.weights >= 0)
    assert sol.support.size <= A.shape[0]
    outside = np.setdiff1d(np.arange(x.size), sol.support)
    assert np.all(sol.weights[outside] == 0)
    scale = 1 + np.max(np.abs(A @ x))
    assert np.max(np.abs(A @ sol.weights - A @ x)) <= tol * scale
    assert sol.residual_inf <= tol * scale
    assert abs(sol.weights.sum() - x.sum()) <= 1e-10 * x.sum()


class TestKernelBasis:
    def test_duplicate_rows(self):
        basis = svd_kernel_basis(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert basis.shape == (1, 2)
        assert np.allclose(np.abs(basis[0]), [2**-0.5, 2**-0.5])
        assert basis[0, 0] * basis[0, 1] < 0

    def test_full_rank_square(self):
        assert svd_kernel_basis(np.array([[1.0, 1.0], [0.0, 1.0]])).shape == (0, 2)

    def test_hand_null_space(self):
        basis = svd_kernel_basis(ReductionSystem([[1, 1, 1], [0, 1, 2]], [1, 1, 1]))
        expected = np.array([1.0, -2.0, 1.0]) / np.sqrt(6)
        assert basis.shape == (1, 3)
        assert np.allclose(basis[0], expected) or np.allclose(basis[0], -expected)

    def test_orthonormal_and_annihilated(self, rng):
        A = rng.normal(size=(5, 12))
        A[3] = A[1] + A[2]
        basis = svd_kernel_basis(A)
        assert basis.shape[0] == 12 - 4
        assert np.allclose(basis @ basis.T, np.eye(8), atol=1e-10)
        assert np.max(np.abs(A @ basis.T)) < 1e-10

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            svd_kernel_basis(np.array([[1.0, np.nan]]))


class TestEliminateDirection:
    def test_tie_breaks_to_lowest_index(self):
        new, idx = eliminate_direction([1 / 3] * 3, np.array([1.0, -2.0, 1.0]) / np.sqrt(6))
        assert idx == 0
        assert np.allclose(new, [0, 1, 0], atol=1e-15)
        assert new[0] == 0 and new[2] == 0

    def test_zero_ratio(self):
        new, idx = eliminate_direction([1.0, 0.0], [0.0, 1.0])
        assert idx == 1
        assert np.array_equal(new, [1.0, 0.0])

    def test_one_line_arithmetic(self):
        new, idx = eliminate_direction([2.0, 1.0], np.array([1.0, -1.0]) * 2**-0.5)
        assert idx == 0
        assert np.allclose(new, [0.0, 3.0])

    def test_negative_only_direction_is_flipped(self):
        new, idx = eliminate_direction([2.0, 1.0], [-1.0, 0.0])
        # flipped to (1, 0): theta = 2
        assert idx == 0 and np.allclose(new, [0.0, 1.0])

    def test_zero_direction(self):
        with pytest.raises(NumericalError):
            eliminate_direction([1.0, 1.0], [0.0, 0.0])


@pytest.mark.parametrize("reduce", REDUCERS)
class TestReduce:
    def test_hand_system(self, reduce):
        system = ReductionSystem([[1, 1, 1], [0, 1, 2]], [1 / 3] * 3)
        sol = reduce(system)
        assert any(np.allclose(sol.weights, c) for c in ([0, 1, 0], [0.5, 0, 0.5]))
        assert np.allclose(system.matrix @ sol.weights, [1, 1])
        assert sol.support.size <= 2

    def test_two_point_symmetric(self, reduce):
        sol = reduce(ReductionSystem([[1, 1]], [0.5, 0.5]))
        assert any(np.allclose(sol.weights, c) for c in ([1, 0], [0, 1]))

    def test_full_rank_passthrough(self, reduce):
        x = np.array([0.2, 0.3, 0.5])
        sol = reduce(ReductionSystem([[1, 1, 1], [0, 1, 0], [0, 0, 1]], x))
        assert np.array_equal(sol.weights, x)

    def test_zero_weights_stay_zero(self, reduce, rng):
        A, x = random_system(rng, 40, 3)
        x[::3] = 0.0
        sol = reduce(ReductionSystem(A, x))
        check_contract(ReductionSystem(A, x), sol)
        assert np.all(sol.weights[x == 0] == 0)

    def test_brute_force_oracle(self, reduce):
        rng = np.random.default_rng(5)
        for _ in range(60):
            n = int(rng.integers(1, 9))
            m = int(rng.integers(0, 4))
            A, x = random_system(rng, n, m)
            system = ReductionSystem(A, x)
            sol = reduce(system)
            check_contract(system, sol)
            y = A @ x
            assert feasible_support(A, y, sol.support)
            assert sol.support.size == 0 or tuple(sol.support) in feasible_supports(
                A, y, min(n, m + 1))


def test_tree_hand_system_matches_oracle():
    A = np.array([[1.0, 1, 1], [0, 1, 2]])
    x = np.full(3, 1 / 3)
    sol = recombine_tree(ReductionSystem(A, x))
    assert tuple(sol.support) in feasible_supports(A, A @ x, 2)


def test_tree_large_system():
    rng = np.random.default_rng(4096)
    A, x = random_system(rng, 4096, 8)
    system = ReductionSystem(A, x)
    sol = recombine_tree(system)
    assert sol.support.size <= 9
    check_contract(system, sol)


def test_system_validation():
    with pytest.raises(DataError):
        ReductionSystem([[1, 1], [0, 1]], [1.0])
    with pytest.raises(DataError):
        ReductionSystem([[1, 1]], [1.0, -1.0])
    with pytest.raises(DataError):
        ReductionSystem([[2, 1]], [1.0, 1.0])
    with pytest.raises(DataError):
        ReductionSystem([[1, 1], [np.inf, 0]], [1.0, 1.0])


@settings(max_examples=120, deadline=None)
@given(
    n=st.integers(1, 60),
    m=st.integers(0, 8),
    seed=st.integers(0, 2**32 - 1),
    method=st.sampled_from(REDUCERS),
)
def test_contract_property(n, m, seed, method):
    A, x = random_system(np.random.default_rng(seed), n, m)
    system = ReductionSystem(A, x)
    check_contract(system, method(system))


def test_degenerate_duplicate_columns():
    A = np.array([[1.0] * 6, [0, 0, 1, 1, 2, 2]])
    x = np.full(6, 1 / 6)
    for reduce in REDUCERS:
        check_contract(ReductionSystem(A, x), reduce(ReductionSystem(A, x)))


class TestRecombinationThin:
    def test_duplicate_features(self):
        b, e = recombination_thin([[0.3, 0.3]], [0.5, 0.5], [0])
        assert e.size == 1 and np.allclose(b, [1.0])

    def test_hand_instance(self):
        b, e = recombination_thin([[1, 0, 1], [0, 1, 1]], [1, 1, 1], [0], method="basic")
        options = [((1, 2), (1, 2)), ((2, 1), (0, 1))]
        assert any(np.allclose(b, bb) and tuple(e) == ee for bb, ee in options)
        assert np.isclose(b.sum(), 3)

    def test_full_rank_passthrough(self):
        b, e = recombination_thin([[1, 0, 1], [0, 1, 1]], [1, 1, 1], [0, 1])
        assert tuple(e) == (0, 1, 2) and np.allclose(b, 1)

    def test_empty_selection(self):
        b, e = recombination_thin([[1, 0, 1]], [1, 2, 3], [])
        assert e.size == 1 and np.isclose(b[0], 6)

    def test_matches_selected_functionals(self, rng):
        h = rng.normal(size=(10, 50))
        alpha = rng.random(50) + 0.1
        sel = [7, 2, 4]
        b, e = recombination_thin(h, alpha, sel)
        assert e.size <= 4
        assert np.isclose(b.sum(), alpha.sum(), rtol=1e-12)
        assert np.max(np.abs(h[sel] @ alpha - h[sel][:, e] @ b)) < 1e-10

    def test_rejects_non_positive(self):
        with pytest.raises(DataError):
            recombination_thin([[1, 2]], [1, 0], [0])
