"""Sparse products, factorizations and extremal generalized eigenvalues.

Matrices are ``scipy.sparse.csr_matrix`` objects (compressed-row storage
with sorted, duplicate-free column indices). Diagonal matrices such as the
lumped mass are carried as plain 1-D arrays.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    pass


class EigenSolverError(RuntimeError):
    pass


def as_csr(A):
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x):
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return A @ x


def triple_product(left, d, right):
    """Return ``left @ diag(1/d) @ right`` as a sparse matrix.

    ``d`` holds the (strictly positive) diagonal being inverted, e.g. the
    lumped mass. Pass ``K.T`` as ``left`` for K^T D^-1 K.
    """
    d = np.asarray(d, dtype=float)
    if left.shape[1] != d.shape[0] or right.shape[0] != d.shape[0]:
        raise ValueError(
            f"dimension mismatch: {left.shape} x diag({d.shape[0]}) x {right.shape}"
        )
    if np.any(d <= 0):
        raise ValueError("diagonal must be strictly positive")
    return as_csr(sp.csr_matrix(left) @ sp.diags(1.0 / d) @ sp.csr_matrix(right))


def is_diagonal(B):
    return isinstance(B, np.ndarray) and B.ndim == 1


def matvec(B, x):
    """Apply a sparse matrix, a diagonal (1-D array) or a LinearOperator."""
    if is_diagonal(B):
        return B * x
    return B @ x


class Factorization:
    """LU factors of a fixed square matrix, reused for many solves.

    ``kernel`` (columns spanning the null space of a symmetric singular
    matrix) switches to the bordered system ``[[A, C], [C^T, 0]]``, whose
    solution is the kernel-orthogonal solution of ``A x = b`` for any ``b``
    in the range of ``A``.
    """

    def __init__(self, A, kernel=None):
        self.shape = A.shape
        self.n = A.shape[0]
        self._diag = None
        self._lu = None
        self.kernel = None
        if is_diagonal(A):
            if np.any(A == 0):
                raise SingularMatrixError("zero on the diagonal")
            self._diag = np.asarray(A, dtype=float)
            self.matrix = A
            return
        A = as_csr(A)
        self.matrix = A
        if kernel is not None:
            C = np.asarray(kernel, dtype=float).reshape(self.n, -1)
            self.kernel = C
            A = sp.bmat([[A, sp.csr_matrix(C)], [sp.csr_matrix(C.T), None]])
        try:
            self._lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        u = np.abs(self._lu.U.diagonal())
        if not np.all(np.isfinite(u)) or u.min() <= 1e-14 * u.max():
            raise SingularMatrixError("matrix is numerically singular")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self._diag is not None:
            return b / self._diag
        if self.kernel is None:
            return self._lu.solve(b)
        k = self.kernel.shape[1]
        ext = np.concatenate([b, np.zeros(k)])
        return self._lu.solve(ext)[: self.n]


def factorize(A, kernel=None):
    return Factorization(A, kernel)


def solve(F, b):
    return F.solve(b)


def write_coo(A, path):
    """Dump ``A`` as ``row col value`` lines."""
    A = sp.coo_matrix(A)
    with open(path, "w") as f:
        f.write(f"# {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            f.write(f"{i} {j} {v:.16e}\n")


def read_coo(path):
    with open(path) as f:
        n, m, nnz = (int(t) for t in f.readline()[1:].split())
        if nnz == 0:
            return sp.csr_matrix((n, m))
        data = np.loadtxt(f, ndmin=2)
    return as_csr(sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m)))


@dataclass
class EigenResult:
    eigenvalue: float
    eigenvector: np.ndarray
    residual: float
    iterations: int


def _constraint(C, Y, y_kernel=None):
    """Vectors the deflated iterates must be orthogonal to.

    When ``Y`` annihilates ``C`` any complement of ``C`` will do (the
    Rayleigh quotient ignores ``C`` components) and ``C`` itself is used;
    otherwise iterates are kept Y-orthogonal to ``C``, which is where every
    eigenvector with a nonzero eigenvalue lives when ``X C = 0``.
    """
    if y_kernel:
        return C, True
    YC = np.column_stack([matvec(Y, c) for c in C.T])
    if y_kernel is None and np.linalg.norm(YC) <= 1e-10 * np.linalg.norm(C) * _scale(Y):
        return C, True
    return YC, False


def _scale(Y):
    if is_diagonal(Y):
        return float(np.max(np.abs(Y)))
    if sp.issparse(Y):
        return float(abs(Y).max())
    if isinstance(Y, np.ndarray):
        return float(np.max(np.abs(Y)))
    return 1.0


def _projector(C, D=None, transpose=False):
    """Oblique projector along span(C) onto the orthogonal complement of D.

    With ``transpose`` the adjoint is returned: along span(D) onto the
    complement of C. The adjoint is what cleans right-hand sides before a
    Y-solve, since ``Y^-1 P^T = P Y^-1`` when ``D = Y C``.
    """
    if C is None:
        return lambda x: x
    D = C if D is None else D
    coef = np.linalg.inv(D.T @ C)
    if transpose:
        C, D, coef = D, C, coef.T

    def project(x):
        return x - C @ (coef @ (D.T @ x))

    return project


def _residual(X, Y, lam, v):
    Xv = matvec(X, v)
    nrm = np.linalg.norm(Xv)
    r = np.linalg.norm(Xv - lam * matvec(Y, v))
    return r / nrm if nrm > 0 else r


def gen_eig_max(X, Y, deflate=None, tol=1e-8, method="lanczos", sigma=None,
                maxiter=None, seed=0, y_kernel=None):
    """Largest eigenvalue of the symmetric pencil ``X v = lam Y v``.

    ``X`` and ``Y`` are symmetric positive semidefinite; ``Y`` may be a 1-D
    diagonal and ``X`` a LinearOperator. ``deflate`` spans a common null
    space of both (the constant vector for the advection operators) and is
    projected out of every iterate. With ``sigma`` the iteration runs on the
    shifted inverse ``(X - sigma Y)^-1 Y``, which separates eigenvalues
    clustered near ``sigma``; ``sigma`` should sit just above the top of the
    spectrum.

    ``y_kernel`` states whether ``Y`` annihilates ``deflate`` (True), is
    definite on it (False) or should be tested numerically (None). It picks
    between a Euclidean and a Y-orthogonal deflation.

    ``method="lanczos"`` delegates to ARPACK, ``method="power"`` runs a
    Y-normalised power iteration.
    """
    n = X.shape[0]
    C = None if deflate is None else np.asarray(deflate, dtype=float).reshape(n, -1)
    singular = False
    if C is not None:
        D, singular = _constraint(C, Y, y_kernel)
        project = _projector(C, D)
        project_in = _projector(C, D, transpose=True)
    else:
        project = project_in = _projector(None)
    rng = np.random.default_rng(seed)
    v0 = project(rng.standard_normal(n))

    if sigma is None:
        if is_diagonal(Y) and np.any(Y <= 0):
            raise EigenSolverError("diagonal of Y must be positive")
        F = Factorization(Y, kernel=C if singular else None)
    else:
        if isinstance(X, spla.LinearOperator):
            raise EigenSolverError("shift-invert needs an explicit sparse X")
        Ysp = sp.diags(Y) if is_diagonal(Y) else Y
        try:
            F = Factorization(as_csr(X - sigma * Ysp), kernel=C if singular else None)
        except SingularMatrixError as exc:
            raise EigenSolverError(f"shift {sigma} hits the spectrum: {exc}") from exc

    def inv(x):
        return project(F.solve(project_in(x)))

    if method == "lanczos" and n < 6:
        method = "power"  # too small for ARPACK's Krylov basis
    if method == "power":
        if sigma is None:
            def op(x):
                return inv(matvec(X, x))
        else:
            def op(x):
                return inv(matvec(Y, x))
        lam, v, its = _power(op, X, Y, v0, tol, maxiter or 100_000)
    elif method == "lanczos":
        lam, v, its = _lanczos(X, Y, inv, v0, tol, sigma, maxiter or 10_000)
    else:
        raise ValueError(f"unknown method {method!r}")
    return EigenResult(float(lam), v, float(_residual(X, Y, lam, v)), its)


def _rayleigh(X, Y, v):
    return float(v @ matvec(X, v)) / float(v @ matvec(Y, v))


def _power(op, X, Y, v, tol, maxiter):
    v = v / np.sqrt(v @ matvec(Y, v))
    lam_old = None
    for it in range(1, maxiter + 1):
        w = op(v)
        yn = w @ matvec(Y, w)
        if not yn > 0:
            raise EigenSolverError("Y is not positive definite on the iterate")
        v = w / np.sqrt(yn)
        lam = _rayleigh(X, Y, v)
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            return lam, v, it
        lam_old = lam
    raise EigenSolverError(f"power iteration did not converge in {maxiter} steps")


def _lanczos(X, Y, inv, v0, tol, sigma, maxiter):
    n = v0.shape[0]
    calls = [0]

    def counted_inv(x):
        calls[0] += 1
        return inv(x.ravel())

    lin = lambda f: spla.LinearOperator((n, n), matvec=f, dtype=float)
    Xop = lin(lambda x: matvec(X, x.ravel()))
    Yop = lin(lambda x: matvec(Y, x.ravel()))
    Iop = lin(counted_inv)
    try:
        # ARPACK's generalized drivers keep the Lanczos basis Y-orthonormal;
        # the projected inverse keeps it off the deflated space.
        if sigma is None:
            vals, vecs = spla.eigsh(Xop, k=1, M=Yop, Minv=Iop, which="LA", v0=v0,
                                    tol=tol * 1e-2, maxiter=maxiter,
                                    ncv=min(n - 1, 40))
        else:
            k = max(1, min(4, n - 3))
            vals, vecs = spla.eigsh(Xop, k=k, M=Yop, sigma=sigma, OPinv=Iop,
                                    which="LM", v0=v0, tol=tol * 1e-2,
                                    maxiter=maxiter, ncv=min(n - 1, 30))
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(str(exc)) from exc
    v = vecs[:, int(np.argmax(vals))]
    return _rayleigh(X, Y, v), v, calls[0]


_EPS = np.finfo(float).eps


def _complement_basis(C, n):
    Q, _ = np.linalg.qr(C, mode="complete")
    return Q[:, C.shape[1]:]


def jacobi_eigh(S, tol=1e-14, max_sweeps=60):
    """Eigen-decomposition of a dense symmetric matrix by cyclic Jacobi.

    Rotations are applied in round-robin order so that each round consists
    of disjoint index pairs, which are updated together.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p < n) & (q < n)
        lo, hi = np.minimum(p, q)[keep], np.maximum(p, q)[keep]
        rounds.append((lo, hi))
        players = [players[0], players[-1]] + players[1:-1]

    scale = np.linalg.norm(A)
    if scale == 0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(A.diagonal()))
        if off <= tol * scale:
            break
        rotated = 0
        for p, q in rounds:
            apq = A[p, q]
            # skip pairs already diagonal to working precision
            active = ((np.abs(apq) > _EPS * np.sqrt(np.abs(A[p, p] * A[q, q])))
                      & (np.abs(apq) > _EPS * scale / n))
            if not active.any():
                continue
            rotated += int(active.sum())
            p, q, apq = p[active], q[active], apq[active]
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
        if rotated == 0:
            break
    else:
        raise EigenSolverError("Jacobi iteration did not converge")
    w = A.diagonal().copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def dense_eig_oracle(X, Y, deflate=None, return_vectors=False, y_kernel=None):
    """All eigenvalues of ``X v = lam Y v`` (dense, small problems only).

    ``Y`` is reduced to the identity by a Cholesky factor on the complement
    of ``deflate``; the resulting standard problem goes through
    :func:`jacobi_eigh`.
    """
    X = X.toarray() if sp.issparse(X) else np.atleast_2d(np.asarray(X, dtype=float))
    if is_diagonal(Y):
        Y = np.diag(Y)
    Y = Y.toarray() if sp.issparse(Y) else np.atleast_2d(np.asarray(Y, dtype=float))
    n = X.shape[0]
    if n > 2000:
        raise ValueError("dense oracle is limited to n <= 2000")
    if deflate is not None:
        D, _ = _constraint(np.asarray(deflate, dtype=float).reshape(n, -1), Y, y_kernel)
        Z = _complement_basis(D, n)
        X = Z.T @ X @ Z
        Y = Z.T @ Y @ Z
    else:
        Z = None
    X = 0.5 * (X + X.T)
    Y = 0.5 * (Y + Y.T)
    try:
        L = np.linalg.cholesky(Y)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError("Y is not positive definite on the complement") from exc
    T = scipy.linalg.solve_triangular(L, X, lower=True)
    S = scipy.linalg.solve_triangular(L, T.T, lower=True)
    w, U = jacobi_eigh(0.5 * (S + S.T))
    if not return_vectors:
        return w
    V = scipy.linalg.solve_triangular(L.T, U, lower=False)
    if Z is not None:
        V = Z @ V
    return w, V
