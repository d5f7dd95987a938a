import numpy as np
import pytest
from oracles import brute_force_jitter, cd_lasso, lasso_objective

from jadl.core import Dictionary, ShiftSet, apply_shift, reconstruct, unroll
from jadl.lars import jitter_sparse_code, lars_lasso, sparse_code_batch


def stationarity_gap(X, x, lam, a):
    """Largest violation of the Lasso optimality conditions."""
    g = X.T @ (x - X @ a)
    on = a != 0
    gap_on = np.max(np.abs(g[on] - lam * np.sign(a[on])), initial=0.0)
    gap_off = np.max(np.abs(g[~on]) - lam, initial=-np.inf)
    return max(gap_on, gap_off, 0.0)


class TestLarsLasso:
    def test_orthonormal_soft_threshold(self):
        coef, _ = lars_lasso(np.eye(2), np.array([3.0, 0.0]), 1.0)
        np.testing.assert_allclose(coef, [2.0, 0.0], atol=1e-12)

    def test_null_solution(self):
        rng = np.random.default_rng(0)
        X, x = rng.standard_normal((10, 4)), rng.standard_normal(10)
        lam = np.max(np.abs(X.T @ x))
        coef, trace = lars_lasso(X, x, lam)
        assert np.all(coef == 0) and trace.n_activations == 0

    def test_matches_coordinate_descent(self):
        rng = np.random.default_rng(1)
        X, x = rng.standard_normal((8, 5)), rng.standard_normal(8)
        coef, _ = lars_lasso(X, x, 0.1)
        ref = cd_lasso(X, x, 0.1)
        assert abs(lasso_objective(X, x, 0.1, coef) - lasso_objective(X, x, 0.1, ref)) < 1e-6

    def test_dropped_column_can_reenter(self):
        # the column dropped at the last event must re-enter before lam is reached
        rng = np.random.default_rng(132)
        X, x = rng.standard_normal((5, 5)), rng.standard_normal(5)
        lam = 0.01171875 * np.max(np.abs(X.T @ x))
        coef, trace = lars_lasso(X, x, lam)
        assert not trace.polished
        assert stationarity_gap(X, x, lam, coef) < 1e-10

    @pytest.mark.parametrize("seed", range(20))
    def test_stationarity(self, seed):
        rng = np.random.default_rng(seed)
        N, P = rng.integers(5, 30), rng.integers(2, 25)
        X, x = rng.standard_normal((N, P)), rng.standard_normal(N)
        lam = rng.uniform(0.01, 1.0) * np.max(np.abs(X.T @ x))
        coef, trace = lars_lasso(X, x, lam)
        assert stationarity_gap(X, x, lam, coef) < 1e-7
        assert not trace.hit_step_limit

    def test_rank_deficient_design(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((10, 3))
        X = np.column_stack([X, X[:, 0]])  # duplicate column
        x = X[:, 0] * 2 + 0.1 * rng.standard_normal(10)
        coef, trace = lars_lasso(X, x, 0.01)
        assert stationarity_gap(X, x, 0.01, coef) < 1e-7

    def test_trace_residuals_non_increasing(self):
        rng = np.random.default_rng(3)
        X, x = rng.standard_normal((20, 12)), rng.standard_normal(20)
        _, trace = lars_lasso(X, x, 0.05)
        r = trace.residual_norms()
        assert all(b <= a + 1e-12 for a, b in zip(r, r[1:]))

    def test_lambda_zero_caps_steps(self):
        rng = np.random.default_rng(4)
        X, x = rng.standard_normal((6, 3)), rng.standard_normal(6)
        coef, trace = lars_lasso(X, x, 0.0)
        assert trace.n_activations <= 3
        np.testing.assert_allclose(coef, np.linalg.lstsq(X, x, rcond=None)[0], atol=1e-8)

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            lars_lasso(np.eye(2), np.ones(2), -1.0)


def random_dictionary(rng, K, N, shifts):
    return Dictionary.from_raw(rng.standard_normal((K, shifts.atom_length(N))), shifts.mode)


class TestJitterSparseCode:
    def test_single_shifted_atom(self):
        rng = np.random.default_rng(5)
        sh = ShiftSet.symmetric(10)
        D = random_dictionary(rng, 3, 64, sh)
        x = 0.8 * apply_shift(D.atoms[2], 5)
        code, _ = jitter_sparse_code(x, D, sh, 0.01)
        assert len(code) == 1
        (i, n, a), = code
        assert (i, n) == (2, 5)
        # exact optimum of the single-entry support: 0.8 - lam
        assert a == pytest.approx(0.79, abs=1e-9)

    def test_single_entry_matches_exhaustive_search(self):
        rng = np.random.default_rng(6)
        sh = ShiftSet.symmetric(6)
        D = random_dictionary(rng, 3, 40, sh)
        U = unroll(D, sh)
        x = 0.8 * U[:, 2 * sh.size + sh.index(5)]
        lam = 0.01
        # best (atom, shift) single-entry support with its soft-threshold coefficient
        c = U.T @ x
        best = int(np.argmax(np.abs(c) - lam))
        code, _ = jitter_sparse_code(x, D, sh, lam)
        assert code.entries()[0][:2] == (best // sh.size, sh.shifts[best % sh.size])

    def test_identity_shift_reduces_to_lasso(self):
        rng = np.random.default_rng(7)
        D = Dictionary.from_raw(rng.standard_normal((6, 30)))
        x = rng.standard_normal(30)
        code, _ = jitter_sparse_code(x, D, ShiftSet.identity(), 0.1)
        coef, _ = lars_lasso(D.atoms.T, x, 0.1)
        dense = np.zeros(6)
        for i, n, a in code:
            assert n == 0
            dense[i] = a
        np.testing.assert_array_equal(dense, coef)

    def test_two_nearby_shifts_of_one_atom(self):
        rng = np.random.default_rng(8)
        sh = ShiftSet.symmetric(2)
        D = random_dictionary(rng, 1, 12, sh)
        x = apply_shift(D.atoms[0], -1) + 0.7 * apply_shift(D.atoms[0], 1)
        lam = 0.05
        code, _ = jitter_sparse_code(x, D, sh, lam)
        assert len(code) == 1
        U = unroll(D, sh)
        obj = 0.5 * np.sum((x - reconstruct(code, D, sh)) ** 2) + lam * code.l1()
        assert obj <= brute_force_jitter(x, U, 1, sh.size, lam) * (1 + 1e-6)

    @pytest.mark.parametrize("mode", ["circular", "extended"])
    def test_constraint_and_restricted_stationarity(self, mode):
        rng = np.random.default_rng(9)
        sh = ShiftSet.symmetric(8, mode=mode)
        D = random_dictionary(rng, 4, 50, sh)
        U = unroll(D, sh)
        S = sh.size
        for _ in range(30):
            x = rng.standard_normal(50)
            lam = rng.uniform(0.05, 1.0)
            code, _ = jitter_sparse_code(x, D, sh, lam)
            assert len(set(code.atoms.tolist())) == len(code)
            a = np.zeros(U.shape[1])
            for i, n, v in code:
                a[i * S + sh.index(n)] = v
            g = U.T @ (x - U @ a)
            on = a != 0
            assert np.max(np.abs(g[on] - lam * np.sign(a[on])), initial=0) < 1e-7
            free = np.ones(U.shape[1], bool)
            for i in code.atoms:
                free[i * S : (i + 1) * S] = False
            assert np.max(np.abs(g[free]) - lam, initial=-1) < 1e-7

    def test_step_bound_without_deactivation(self):
        rng = np.random.default_rng(10)
        sh = ShiftSet.symmetric(5)
        D = random_dictionary(rng, 3, 30, sh)
        for _ in range(50):
            _, trace = jitter_sparse_code(rng.standard_normal(30), D, sh, 0.01)
            if trace.n_deactivations == 0:
                assert trace.n_activations <= 3

    def test_lambda_zero(self):
        rng = np.random.default_rng(11)
        sh = ShiftSet.symmetric(3)
        D = random_dictionary(rng, 2, 20, sh)
        code, trace = jitter_sparse_code(rng.standard_normal(20), D, sh, 0.0)
        assert trace.n_activations <= 2 and len(code) <= 2

    def test_large_lambda_gives_empty_code(self):
        rng = np.random.default_rng(12)
        sh = ShiftSet.symmetric(3)
        D = random_dictionary(rng, 2, 20, sh)
        code, _ = jitter_sparse_code(rng.standard_normal(20), D, sh, 1e6)
        assert len(code) == 0

    def test_batch_independent_of_threads(self):
        rng = np.random.default_rng(13)
        sh = ShiftSet.symmetric(45)  # FFT path
        D = random_dictionary(rng, 3, 128, sh)
        X = rng.standard_normal((12, 128))
        one, _ = sparse_code_batch(X, D, sh, 0.1, n_jobs=1)
        four, _ = sparse_code_batch(X, D, sh, 0.1, n_jobs=4)
        for a, b in zip(one, four):
            assert a.entries() == b.entries()

    def test_brute_force_sample(self):
        # small-scale version of the acceptance statistic
        rng = np.random.default_rng(14)
        hits = 0
        for _ in range(40):
            K, m = int(rng.integers(1, 3)), int(rng.integers(0, 3))
            N = int(rng.integers(max(2 * m, 4), 17))
            mode = "circular" if rng.random() < 0.5 else "extended"
            sh = ShiftSet.symmetric(m, mode=mode)
            D = random_dictionary(rng, K, N, sh)
            U = unroll(D, sh)
            S = sh.size
            x = sum(rng.normal(1, 0.3) * U[:, i * S + rng.integers(S)] for i in range(K))
            x = x + 0.1 * rng.standard_normal(N)
            lam = rng.uniform(0.01, 0.5)
            code, _ = jitter_sparse_code(x, D, sh, lam)
            assert len(set(code.atoms.tolist())) == len(code)
            obj = 0.5 * np.sum((x - reconstruct(code, D, sh)) ** 2) + lam * code.l1()
            best = brute_force_jitter(x, U, K, S, lam)
            assert obj >= best - 1e-9
            hits += obj - best <= 1e-6 * max(1.0, best)
        assert hits >= 36
