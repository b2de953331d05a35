import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from lexicol.datasets import build_laplacian
from lexicol.linalg import SolverError, cg_solve, pearson, spmv, top_k

from _synth import path_graph, random_connected_graph


def csr(rows):
    return sp.csr_matrix(np.asarray(rows, dtype=np.float64))


# --- spmv --------------------------------------------------------------------


def test_spmv_identity():
    assert spmv(sp.eye(3, format="csr"), [1.0, 2.0, 3.0]).tolist() == [1.0, 2.0, 3.0]


def test_spmv_zero_matrix():
    assert spmv(sp.csr_matrix((3, 3)), [1.0, 2.0, 3.0]).tolist() == [0.0, 0.0, 0.0]


def test_spmv_hand_example():
    assert spmv(csr([[2, -1], [-1, 2]]), [1.0, 0.0]).tolist() == [2.0, -1.0]


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(csr([[1, 0], [0, 1]]), [1.0, 2.0, 3.0])


def test_spmv_matches_dense_on_random_matrices():
    rng = np.random.default_rng(42)
    for _ in range(20):
        dense = rng.random((10, 10)) * (rng.random((10, 10)) < 0.3)
        x = rng.standard_normal(10)
        assert np.max(np.abs(spmv(sp.csr_matrix(dense), x) - dense @ x)) < 1e-12


# --- conjugate gradient ------------------------------------------------------


def test_cg_identity_solves_in_one_iteration():
    b = np.asarray([3.0, -1.0, 2.0, 0.5])
    x, report = cg_solve(sp.eye(4, format="csr"), b)
    assert np.allclose(x, b, atol=1e-14)
    assert report.iterations == 1
    assert report.converged


def test_cg_two_by_two_hand_inverse():
    x, report = cg_solve(csr([[2, -1], [-1, 2]]), [1.0, 0.0], tol=1e-12)
    assert np.allclose(x, [2.0 / 3.0, 1.0 / 3.0], atol=1e-10)
    assert report.converged


def test_cg_three_node_path_parwalk():
    # P = L + I for the 3-node path; P^{-1} e0 solved by hand.
    lap = build_laplacian(path_graph(3)).matrix
    p = (lap + sp.eye(3)).tocsr()
    x, _ = cg_solve(p, [1.0, 0.0, 0.0], tol=1e-12)
    assert np.allclose(x, [0.625, 0.25, 0.125], atol=1e-10)


def test_cg_zero_rhs_returns_zero_in_zero_iterations():
    x, report = cg_solve(csr([[2, -1], [-1, 2]]), [0.0, 0.0])
    assert x.tolist() == [0.0, 0.0]
    assert report.iterations == 0
    assert report.converged
    assert report.final_relative_residual == 0.0


def test_cg_converged_respects_tolerance_contract():
    g = random_connected_graph(30, extra_edges=20, seed=1)
    p = (build_laplacian(g).matrix + 0.01 * sp.eye(30)).tocsr()
    rng = np.random.default_rng(0)
    b = rng.standard_normal(30)
    x, report = cg_solve(p, b, tol=1e-10, max_iter=500)
    assert report.converged
    assert report.final_relative_residual <= 1e-10
    assert np.linalg.norm(p @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_cg_against_dense_elimination():
    # smaller copy of the acceptance sweep
    for seed in range(8):
        n = 10 + 3 * seed
        g = random_connected_graph(n, extra_edges=n // 2, seed=seed)
        lap = build_laplacian(g).matrix
        for alpha in (1e-2, 1.0):
            p = (lap + alpha * sp.eye(n)).tocsr()
            rng = np.random.default_rng(seed)
            b = rng.standard_normal(n)
            expected = np.linalg.solve(p.toarray(), b)
            x, _ = cg_solve(p, b, tol=1e-12, max_iter=10 * n)
            assert np.max(np.abs(x - expected)) < 1e-8


def test_cg_jacobi_matches_plain():
    g = random_connected_graph(25, extra_edges=10, seed=4)
    p = (build_laplacian(g).matrix + 1e-6 * sp.eye(25)).tocsr()
    b = np.zeros(25)
    b[0] = 1.0
    x_plain, _ = cg_solve(p, b, tol=1e-12, max_iter=2000)
    x_jac, _ = cg_solve(p, b, tol=1e-12, max_iter=2000, preconditioner="jacobi")
    denom = np.max(np.abs(x_plain))
    assert np.max(np.abs(x_plain - x_jac)) / denom < 1e-8


def test_cg_iteration_cap_reported():
    g = random_connected_graph(40, extra_edges=20, seed=5)
    p = (build_laplacian(g).matrix + 1e-6 * sp.eye(40)).tocsr()
    b = np.zeros(40)
    b[3] = 1.0
    x, report = cg_solve(p, b, tol=1e-16, max_iter=5)
    assert report.iterations == 5
    assert not report.converged


def test_cg_breakdown_on_indefinite_matrix():
    with pytest.raises(SolverError, match="iteration"):
        cg_solve(csr([[1, 0], [0, -1]]), [0.0, 1.0])


# --- pearson -----------------------------------------------------------------


def test_pearson_fixtures():
    value, ok = pearson([1, 2, 3], [1, 2, 3])
    assert ok and value == pytest.approx(1.0, abs=1e-15)
    value, ok = pearson([1, 2, 3], [3, 2, 1])
    assert ok and value == pytest.approx(-1.0, abs=1e-15)
    value, ok = pearson([1, 2, 3], [1, 2, 4])
    assert ok
    assert value == pytest.approx(9.0 / np.sqrt(84.0), abs=1e-12)


def test_pearson_constant_input_sentinel():
    value, ok = pearson([1.0, 1.0, 1.0], [1, 2, 3])
    assert value == 0.0 and not ok


def test_pearson_length_mismatch():
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


@given(st.lists(st.floats(-1e3, 1e3, allow_subnormal=False), min_size=3,
                max_size=20),
       st.integers(0, 2 ** 32))
@settings(max_examples=60, deadline=None)
def test_pearson_symmetric_and_affine_invariant(xs, seed):
    rng = np.random.default_rng(seed)
    x = np.asarray(xs)
    y = rng.standard_normal(x.size)
    r_xy, ok1 = pearson(x, y)
    r_yx, ok2 = pearson(y, x)
    assert r_xy == r_yx and ok1 == ok2
    scaled, ok_scaled = pearson(2.5 * x + 7.0, y)
    if ok1 and ok_scaled:
        assert scaled == pytest.approx(r_xy, abs=1e-9)


# --- top_k -------------------------------------------------------------------


def test_top_k_tie_broken_by_index():
    assert top_k([0.5, 0.9, 0.5], 2).tolist() == [1, 0]


def test_top_k_zero_and_exhaustion():
    assert top_k([0.1, 0.2], 0).tolist() == []
    assert top_k([0.1, 0.2], 5).tolist() == [1, 0]


def test_top_k_with_exclusions():
    assert top_k([0.1, 0.9, 0.8], 2, excluded={1}).tolist() == [2, 0]


def test_top_k_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(25):
        scores = rng.integers(0, 5, size=12).astype(float)  # many ties
        k = int(rng.integers(0, 14))
        excluded = set(rng.integers(0, 12, size=3).tolist())
        got = top_k(scores, k, excluded=excluded).tolist()
        want = sorted((i for i in range(12) if i not in excluded),
                      key=lambda i: (-scores[i], i))[:k]
        assert got == want
