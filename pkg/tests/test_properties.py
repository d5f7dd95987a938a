import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from jadl import io
from jadl.core import Dictionary, ShiftSet, SparseCode, adjoint_shift, apply_shift, correlate_all_shifts
from jadl.lars import jitter_sparse_code, lars_lasso

modes = st.sampled_from(["circular", "extended"])


@st.composite
def shift_problem(draw):
    mode = draw(modes)
    N = draw(st.integers(2, 64))
    m = draw(st.integers(0, N // 2))
    seed = draw(st.integers(0, 2**32 - 1))
    return mode, N, m, np.random.default_rng(seed)


@given(shift_problem())
def test_adjoint_identity(problem):
    mode, N, m, rng = problem
    sh = ShiftSet.symmetric(m, mode=mode)
    L = sh.atom_length(N)
    u, v = rng.standard_normal(L), rng.standard_normal(N)
    n = int(rng.integers(-m, m + 1))
    assert abs(apply_shift(u, n, mode, N) @ v - u @ adjoint_shift(v, n, mode, L)) < 1e-10


@given(shift_problem())
def test_fft_equals_naive(problem):
    mode, N, m, rng = problem
    sh = ShiftSet.symmetric(m, mode=mode)
    x, a = rng.standard_normal(N), rng.standard_normal(sh.atom_length(N))
    fft = correlate_all_shifts(x, a, sh, "fft")
    naive = np.array([x @ apply_shift(a, n, mode, N) for n in sh])
    assert np.max(np.abs(fft - naive)) <= 1e-8 * max(np.max(np.abs(naive)), 1e-300) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(1, 15), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_lars_stationarity(N, P, frac, seed):
    rng = np.random.default_rng(seed)
    X, x = rng.standard_normal((N, P)), rng.standard_normal(N)
    lam = frac * np.max(np.abs(X.T @ x))
    coef, trace = lars_lasso(X, x, lam)
    g = X.T @ (x - X @ coef)
    on = coef != 0
    assert np.all(np.abs(g[on] - lam * np.sign(coef[on])) < 1e-7)
    assert np.all(np.abs(g[~on]) <= lam + 1e-7)
    r = trace.residual_norms()
    assert all(b <= a + 1e-9 for a, b in zip(r, r[1:]))


@settings(max_examples=50, deadline=None)
@given(shift_problem(), st.integers(1, 4), st.floats(0.0, 1.0))
def test_one_shift_per_atom(problem, K, lam):
    mode, N, m, rng = problem
    sh = ShiftSet.symmetric(m, mode=mode)
    D = Dictionary.from_raw(rng.standard_normal((K, sh.atom_length(N))), mode)
    code, _ = jitter_sparse_code(rng.standard_normal(N), D, sh, lam)
    assert np.unique(code.atoms).size == len(code) <= K
    code.validate(sh, K)


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=30)
@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=5))
def test_matrix_roundtrip(tmp_path_factory, rows):
    p = tmp_path_factory.mktemp("m") / "a.csv"
    A = np.array(rows)
    io.write_matrix(p, A)
    np.testing.assert_array_equal(io.read_matrix(p)[0], A)


@settings(max_examples=30)
@given(st.lists(st.dictionaries(st.integers(0, 9), st.tuples(st.integers(-50, 50), finite), max_size=4),
                max_size=6))
def test_codes_roundtrip(tmp_path_factory, raw):
    p = tmp_path_factory.mktemp("c") / "c.txt"
    codes = [SparseCode.from_entries([(i, n, a) for i, (n, a) in d.items()]) for d in raw]
    io.write_codes(p, codes)
    back, _ = io.read_codes(p)
    assert [c.entries() for c in back] == [c.entries() for c in codes]
