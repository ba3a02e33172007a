"""Operator norms, sharp time-step limits and stability checks.

Every spectral quantity is obtained from a symmetric generalized
eigenproblem with the constant vector deflated, so the skew advection
matrix never enters a complex eigensolver: the norm of A comes from the
squared pencil (K^T B^-1 K, B).
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sparse import (EigenSolverError, Factorization, as_csr, gen_eig_max,
                     is_diagonal, matvec, triple_product)

EIG_TOL = 1e-8
ETA_SHIFT = 1e-3
CRITERION_TOL = 1e-10


class IndefiniteOperatorError(EigenSolverError):
    def __init__(self, message, ritz_value):
        super().__init__(f"{message} (most negative Ritz value {ritz_value:.6e})")
        self.ritz_value = ritz_value


@dataclass
class Estimate:
    """A computed spectral quantity together with the solve backing it."""

    value: float
    residual: float = 0.0
    iterations: int = 0

    def __float__(self):
        return float(self.value)


def constants(n):
    return np.ones(n)


def squared_advection(K, mass):
    """K^T B^-1 K: sparse for a lumped (1-D) mass, a LinearOperator otherwise."""
    if is_diagonal(mass):
        return triple_product(K.T, mass, K)
    F = Factorization(mass)
    Kt = as_csr(K.T)
    return spla.LinearOperator(K.shape, matvec=lambda x: Kt @ F.solve(K @ x.ravel()),
                               dtype=float)


def norm_A(K, mass, tol=EIG_TOL, method="lanczos"):
    """||B^-1/2 K B^-1/2|| for the consistent (sparse) or lumped (1-D) mass B."""
    n = K.shape[0]
    if n == 1:
        return Estimate(0.0)
    r = gen_eig_max(squared_advection(K, mass), mass, deflate=constants(n), tol=tol,
                    method=method, y_kernel=False)
    return Estimate(math.sqrt(max(r.eigenvalue, 0.0)), r.residual, r.iterations)


def lw_margin_eta(K, M_lumped, G, tol=EIG_TOL, method="lanczos"):
    """eta = 1 / lam_max of K^T Ml^-1 K psi = lam G psi.

    The top of this spectrum clusters just below 1, so the solve is shifted
    to 1 + ETA_SHIFT and inverted.
    """
    X = triple_product(K.T, M_lumped, K)
    sigma = 1.0 + ETA_SHIFT
    for _ in range(8):
        r = gen_eig_max(X, G, deflate=constants(K.shape[0]), tol=tol, method=method,
                        sigma=sigma, y_kernel=True)
        if r.eigenvalue < sigma:
            break
        sigma = 2.0 * r.eigenvalue
    if not r.eigenvalue > 0:
        raise EigenSolverError(f"lam_max = {r.eigenvalue} is not positive")
    return Estimate(1.0 / r.eigenvalue, r.residual, r.iterations)


def lw_regularizer_gap(K, M_lumped, G):
    """G - K^T Ml^-1 K, the matrix of D - A*A for the explicit Lax-Wendroff scheme."""
    return as_csr(G - triple_product(K.T, M_lumped, K))


def lw_tau0(K, M_lumped, G, tol=EIG_TOL, method="lanczos", eta=None):
    """Sharp step of explicit Lax-Wendroff: 2 / sqrt(lam_max) of
    G Ml^-1 G psi = lam (G - K^T Ml^-1 K) psi.

    The right-hand matrix must be semidefinite, i.e. eta >= 1; ``eta`` may be
    passed when it is already known.
    """
    if eta is None:
        eta = float(lw_margin_eta(K, M_lumped, G, tol=tol))
    if eta < 1.0 - 1e-6:
        raise IndefiniteOperatorError("G - K^T Ml^-1 K is indefinite", 1.0 - 1.0 / eta)
    X = triple_product(G, M_lumped, G)
    Y = lw_regularizer_gap(K, M_lumped, G)
    r = gen_eig_max(X, Y, deflate=constants(K.shape[0]), tol=tol, method=method,
                    y_kernel=True)
    return Estimate(2.0 / math.sqrt(r.eigenvalue), r.residual, r.iterations)


def norm_Q(G, M, tol=EIG_TOL, method="lanczos"):
    r = gen_eig_max(G, M, deflate=constants(G.shape[0]), tol=tol, method=method,
                    y_kernel=False)
    return Estimate(r.eigenvalue, r.residual, r.iterations)


def implicit_lw_bound(norm_q):
    return 2.0 * math.sqrt(3.0) / math.sqrt(norm_q)


def implicit_lw_tau0(G, M, tol=EIG_TOL, method="lanczos"):
    """Return (||Q||, tau0) with tau0 = 2 sqrt(3) / sqrt(||Q||)."""
    q = norm_Q(G, M, tol=tol, method=method)
    return q, implicit_lw_bound(q.value)


def pade4_bound(norm_a_lumped):
    return 2.0 * math.sqrt(3.0) / norm_a_lumped


def regularized_tau_bound(norm_a, beta, variant="const"):
    """Courant-type limit of the regularized explicit scheme.

    ``variant="const"``: D = beta A*A (beta > 1), tau <= 2 sqrt(beta-1) / (beta ||A||).
    ``variant="tau"``: D = (1 + beta tau) A*A (beta > 0), tau <= 4 beta / ||A||^2.

    The ``"tau"`` limit is necessary but not sufficient: the sharp condition
    is tau (1 + beta tau)^2 ||A||^2 <= 4 beta, which the closed form relaxes
    by dropping the (1 + beta tau)^2 factor. Use :func:`regularized_tau_sharp`
    when a guaranteed step is needed.
    """
    if variant == "const":
        if not beta > 1:
            raise ValueError(f"beta must exceed 1 for D = beta A*A, got {beta}")
        return 2.0 * math.sqrt(beta - 1.0) / (beta * norm_a)
    if variant == "tau":
        if not beta > 0:
            raise ValueError(f"beta must be positive for D = (1 + beta tau) A*A, got {beta}")
        return 4.0 * beta / norm_a**2
    raise ValueError(f"unknown regularizer variant {variant!r}")


def regularized_tau_sharp(norm_a, beta):
    """Largest tau with tau (1 + beta tau)^2 ||A||^2 <= 4 beta."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    hi = 4.0 * beta / norm_a**2
    return scipy.optimize.brentq(lambda t: t * (1 + beta * t) ** 2 * norm_a**2 - 4 * beta,
                                 0.0, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps)


def nonstandard_tau_bound(norm_a, mu):
    """Limit under which ||y'|| <= exp(mu tau) ||y|| for the non-standard scheme."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return 2.0 * mu / (mu**2 + norm_a**2)


@dataclass
class CriterionResult:
    stable: bool
    min_value: float
    witness: np.ndarray = None


def _as_operator(C):
    if isinstance(C, spla.LinearOperator):
        return C
    return spla.aslinearoperator(C)


def check_theta_criterion(C, theta, tau, tol=CRITERION_TOL, dense_limit=2000):
    """Stability test (C y, y) + (theta - 1/2) tau ||C y||^2 >= 0 for all y.

    ``C`` acts in the Euclidean inner product (a matrix, or a LinearOperator
    with ``rmatvec``). Stability fails when the smallest eigenvalue of the
    symmetric operator 1/2 (C + C^T) + (theta - 1/2) tau C^T C is below
    ``-tol``; the corresponding eigenvector is returned as the witness.
    """
    Cop = _as_operator(C)
    n = Cop.shape[0]
    w = (theta - 0.5) * tau

    def sym(y):
        Cy = Cop.matvec(y)
        return 0.5 * (Cy + Cop.rmatvec(y)) + w * Cop.rmatvec(Cy)

    if n <= dense_limit:
        S = np.column_stack([sym(e) for e in np.eye(n)])
        vals, vecs = scipy.linalg.eigh(0.5 * (S + S.T))
        lam, y = vals[0], vecs[:, 0]
    else:
        Sop = spla.LinearOperator((n, n), matvec=lambda y: sym(y.ravel()), dtype=float)
        vals, vecs = spla.eigsh(Sop, k=1, which="SA", tol=1e-10)
        lam, y = vals[0], vecs[:, 0]
    if lam < -tol:
        return CriterionResult(False, float(lam), y)
    return CriterionResult(True, float(lam), None)


def lumped_advection_operator(K, M_lumped):
    """A = Ml^-1/2 K Ml^-1/2 as a sparse matrix."""
    s = sp.diags(1.0 / np.sqrt(M_lumped))
    return as_csr(s @ K @ s)


def lumped_symmetric_operator(S, M_lumped):
    s = sp.diags(1.0 / np.sqrt(M_lumped))
    return as_csr(s @ S @ s)


def transition_norm(step, B, n=None, adjoint=None, tol=EIG_TOL, dense_limit=2500):
    """||S||_B = max ||S z||_B / ||z||_B for the linear one-step map ``step``.

    Small problems assemble S column by column and solve the dense pencil
    (S^T B S, B). For larger ones ``adjoint`` (z -> S^T z) is required and
    the norm comes from an iterative pencil solve.
    """
    n = n or B.shape[0]
    Bd = np.diag(B) if is_diagonal(B) else (B.toarray() if sp.issparse(B) else B)
    if n <= dense_limit:
        S = np.column_stack([step(e) for e in np.eye(n)])
        X = S.T @ Bd @ S
        lam = scipy.linalg.eigh(0.5 * (X + X.T), Bd, eigvals_only=True)[-1]
        return math.sqrt(max(lam, 0.0))
    if adjoint is None:
        raise ValueError("an adjoint map is needed above the dense limit")
    X = spla.LinearOperator((n, n), matvec=lambda z: adjoint(matvec(B, step(z.ravel()))),
                            dtype=float)
    r = gen_eig_max(X, B, tol=tol)
    return math.sqrt(max(r.eigenvalue, 0.0))


@dataclass
class StabilityReport:
    h: float
    norm_A_consistent: Estimate = None
    norm_A_lumped: Estimate = None
    eta: Estimate = None
    tau0_explicit_lw: Estimate = None
    norm_Q: Estimate = None
    tau0_implicit_lw: float = None
    errors: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def rows(self):
        """Long-format rows (h, quantity, value, residual, iterations)."""
        out = []
        for name in ("norm_A_consistent", "norm_A_lumped", "eta", "tau0_explicit_lw", "norm_Q"):
            est = getattr(self, name)
            if est is not None:
                out.append((self.h, name, est.value, est.residual, est.iterations))
        if self.tau0_implicit_lw is not None:
            q = self.norm_Q
            out.append((self.h, "tau0_implicit_lw", self.tau0_implicit_lw, q.residual, q.iterations))
        return out


def stability_report(ops, tol=EIG_TOL, quantities=("table1", "table2", "table3")):
    """Norms of A, the explicit Lax-Wendroff margin and step, and ||Q||.

    Failures are recorded in ``errors`` per quantity instead of raised.
    """
    rep = StabilityReport(ops.mesh.h)
    K, M, Ml, G = ops.K, ops.M, ops.M_lumped, ops.G

    def attempt(key, fn):
        try:
            return fn()
        except (EigenSolverError, ValueError, RuntimeError) as exc:
            rep.errors[key] = str(exc)
            return None

    if "table1" in quantities:
        rep.norm_A_consistent = attempt("norm_A_consistent", lambda: norm_A(K, M, tol))
        rep.norm_A_lumped = attempt("norm_A_lumped", lambda: norm_A(K, Ml, tol))
    if "table2" in quantities:
        rep.eta = attempt("eta", lambda: lw_margin_eta(K, Ml, G, tol))
        if rep.eta is not None:
            rep.tau0_explicit_lw = attempt(
                "tau0_explicit_lw", lambda: lw_tau0(K, Ml, G, tol, eta=rep.eta.value))
    if "table3" in quantities:
        q = attempt("norm_Q", lambda: norm_Q(G, M, tol))
        if q is not None:
            rep.norm_Q = q
            rep.tau0_implicit_lw = implicit_lw_bound(q.value)
    return rep


def report_json(reports, path):
    with open(path, "w") as f:
        json.dump([r.to_dict() for r in reports], f, indent=2)


def dense_quantities(ops):
    """The report quantities recomputed through the dense Jacobi oracle."""
    from .sparse import dense_eig_oracle

    n = ops.mesh.n_nodes
    K, M, Ml, G = (ops.K.toarray(), ops.M.toarray(), ops.M_lumped, ops.G.toarray())
    c = constants(n)
    XL = K.T @ (K / Ml[:, None])
    XM = K.T @ np.linalg.solve(M, K)
    top = lambda X, Y, k: dense_eig_oracle(X, Y, deflate=c, y_kernel=k)[-1]
    q = top(G, M, False)
    return {
        "norm_A_consistent": math.sqrt(top(XM, M, False)),
        "norm_A_lumped": math.sqrt(top(XL, np.diag(Ml), False)),
        "eta": 1.0 / top(XL, G, True),
        "tau0_explicit_lw": 2.0 / math.sqrt(top(G @ (G / Ml[:, None]), G - XL, True)),
        "norm_Q": q,
        "tau0_implicit_lw": implicit_lw_bound(q),
    }


def oracle_rows(report, ops):
    """(h, quantity, iterative, dense, relative difference) for one report."""
    dense = dense_quantities(ops)
    rows = []
    for name, d in dense.items():
        est = getattr(report, name)
        if est is None:
            continue
        v = float(est)
        rows.append((report.h, name, v, d, abs(v - d) / abs(d)))
    return rows
