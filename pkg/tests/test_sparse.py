import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from skewadvect.sparse import (EigenSolverError, Factorization, SingularMatrixError,
                               as_csr, dense_eig_oracle, gen_eig_max, jacobi_eigh,
                               read_coo, spmv, triple_product, write_coo)


def random_sparse(n, m, density, seed):
    return sp.random(n, m, density=density, random_state=seed, format="csr")


def spd(n, seed, diag_boost=1.0):
    A = random_sparse(n, n, 0.2, seed)
    return as_csr(A @ A.T + diag_boost * sp.eye(n))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), m=st.integers(1, 40), seed=st.integers(0, 10_000))
def test_spmv_matches_dense(n, m, seed):
    A = random_sparse(n, m, 0.3, seed)
    x = np.random.default_rng(seed).standard_normal(m)
    assert np.allclose(spmv(A, x), A.toarray() @ x, rtol=1e-14, atol=1e-14)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(sp.eye(3, format="csr"), np.ones(4))


def test_as_csr_is_canonical():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    C = as_csr(A)
    assert C.has_canonical_format and C[0, 1] == 3.0


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 25), seed=st.integers(0, 10_000))
def test_triple_product_matches_dense(n, seed):
    K = random_sparse(n, n, 0.3, seed)
    d = np.random.default_rng(seed).random(n) + 0.1
    dense = K.toarray().T @ np.diag(1 / d) @ K.toarray()
    assert np.allclose(triple_product(K.T, d, K).toarray(), dense, rtol=1e-12, atol=1e-14)


def test_triple_product_rejects_bad_diagonal():
    K = sp.eye(3, format="csr")
    with pytest.raises(ValueError):
        triple_product(K, np.array([1.0, 0.0, 1.0]), K)
    with pytest.raises(ValueError):
        triple_product(K, np.ones(2), K)


@pytest.mark.parametrize("n", [1, 5, 60])
def test_factorization_residual(n):
    A = spd(n, n) + as_csr(sp.random(n, n, 0.05, random_state=3))  # nonsymmetric
    b = np.random.default_rng(n).standard_normal(n)
    F = Factorization(A)
    x = F.solve(b)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 10
    # reuse
    b2 = np.ones(n)
    assert np.allclose(A @ F.solve(b2), b2)


def test_factorization_diagonal():
    d = np.array([2.0, 4.0])
    assert np.allclose(Factorization(d).solve([2.0, 2.0]), [1.0, 0.5])
    with pytest.raises(SingularMatrixError):
        Factorization(np.array([1.0, 0.0]))


def test_singular_matrix_detected():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularMatrixError):
        Factorization(A)


def test_bordered_solve_returns_kernel_orthogonal_solution():
    # graph Laplacian of a path: kernel is the constant vector
    n = 6
    L = sp.diags([-np.ones(n - 1), np.r_[1, 2 * np.ones(n - 2), 1], -np.ones(n - 1)],
                 [-1, 0, 1], format="csr")
    c = np.ones(n)
    b = np.random.default_rng(0).standard_normal(n)
    b -= b.mean()
    x = Factorization(L, kernel=c).solve(b)
    assert np.allclose(L @ x, b) and abs(c @ x) < 1e-12
    assert np.allclose(x, np.linalg.pinv(L.toarray()) @ b)


def test_coo_round_trip(tmp_path):
    A = random_sparse(7, 5, 0.4, 1)
    write_coo(A, tmp_path / "a.coo")
    B = read_coo(tmp_path / "a.coo")
    assert B.shape == A.shape and (B != A).nnz == 0
    write_coo(sp.csr_matrix((3, 3)), tmp_path / "z.coo")
    assert read_coo(tmp_path / "z.coo").nnz == 0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 40), seed=st.integers(0, 10_000))
def test_jacobi_matches_lapack(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    A = A + A.T
    w, V = jacobi_eigh(A)
    ref = np.linalg.eigvalsh(A)
    scale = max(np.abs(ref).max(), 1.0)
    assert np.allclose(w, ref, atol=1e-12 * scale)
    assert np.allclose(V.T @ V, np.eye(n), atol=1e-12)
    assert np.allclose(A @ V, V * w, atol=1e-11 * scale)


def test_jacobi_degenerate_spectrum():
    Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((8, 8)))
    A = Q @ np.diag([1, 1, 1, 2, 2, 0, 0, 0.0]) @ Q.T
    w, _ = jacobi_eigh(A)
    assert np.allclose(w, [0, 0, 0, 1, 1, 1, 2, 2], atol=1e-13)
    assert np.array_equal(jacobi_eigh(np.zeros((3, 3)))[0], np.zeros(3))


def test_dense_oracle_matches_scipy_eigh():
    n = 12
    X = spd(n, 4).toarray()
    Y = spd(n, 5).toarray()
    ref = scipy.linalg.eigh(X, Y, eigvals_only=True)
    w, V = dense_eig_oracle(X, Y, return_vectors=True)
    assert np.allclose(w, ref, rtol=1e-12)
    assert np.allclose(X @ V, Y @ V * w, atol=1e-10)


def _pencil_with_constant_kernel(n, seed, y_kernel):
    """X and (optionally) Y annihilate the constant vector."""
    rng = np.random.default_rng(seed)
    P = np.eye(n) - np.ones((n, n)) / n
    B = rng.standard_normal((n, n))
    X = P @ B @ B.T @ P
    if y_kernel:
        C = rng.standard_normal((n, n))
        Y = P @ (C @ C.T + n * np.eye(n)) @ P
    else:
        C = rng.standard_normal((n, n))
        Y = C @ C.T + n * np.eye(n)
    return X, Y


@pytest.mark.parametrize("y_kernel", [True, False])
@pytest.mark.parametrize("method", ["lanczos", "power"])
def test_gen_eig_max_with_deflation(method, y_kernel):
    n = 30
    X, Y = _pencil_with_constant_kernel(n, 7, y_kernel)
    c = np.ones(n)
    # independent reference: restrict both matrices to an orthonormal complement of c
    Z = scipy.linalg.null_space(c[None, :])
    if y_kernel:
        ref = scipy.linalg.eigh(Z.T @ X @ Z, Z.T @ Y @ Z, eigvals_only=True)[-1]
    else:
        ref = scipy.linalg.eigh(X, Y, eigvals_only=True)[-1]
    r = gen_eig_max(sp.csr_matrix(X), sp.csr_matrix(Y), deflate=c, tol=1e-10, method=method,
                    y_kernel=y_kernel)
    assert r.eigenvalue == pytest.approx(ref, rel=1e-8)
    assert r.residual < 1e-4
    assert dense_eig_oracle(X, Y, deflate=c, y_kernel=y_kernel)[-1] == pytest.approx(ref, rel=1e-12)


def test_gen_eig_max_shift_invert():
    n = 25
    X, Y = _pencil_with_constant_kernel(n, 3, True)
    c = np.ones(n)
    ref = dense_eig_oracle(X, Y, deflate=c, y_kernel=True)[-1]
    r = gen_eig_max(sp.csr_matrix(X), sp.csr_matrix(Y), deflate=c, sigma=1.01 * ref,
                    y_kernel=True)
    assert r.eigenvalue == pytest.approx(ref, rel=1e-10)


def test_gen_eig_max_diagonal_y():
    n = 20
    X, _ = _pencil_with_constant_kernel(n, 1, True)
    d = np.random.default_rng(1).random(n) + 0.5
    ref = scipy.linalg.eigh(X, np.diag(d), eigvals_only=True)[-1]
    for method in ("lanczos", "power"):
        r = gen_eig_max(sp.csr_matrix(X), d, deflate=np.ones(n), tol=1e-11, method=method)
        assert r.eigenvalue == pytest.approx(ref, rel=1e-8)


def test_gen_eig_max_errors():
    X = sp.eye(4, format="csr")
    with pytest.raises(EigenSolverError):
        gen_eig_max(X, np.array([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        gen_eig_max(X, sp.eye(4, format="csr"), method="qr")
    with pytest.raises(EigenSolverError):
        gen_eig_max(X, sp.eye(4, format="csr"), method="power", maxiter=1)


def test_dense_oracle_rejects_indefinite_y():
    with pytest.raises(EigenSolverError):
        dense_eig_oracle(np.eye(2), np.diag([1.0, -1.0]))
