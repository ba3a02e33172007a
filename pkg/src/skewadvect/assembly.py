"""P1 finite element matrices for the skew-symmetric advection operator."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import NodalField, TriMesh, VelocityField
from .quadrature import triangle_rule
from .sparse import Factorization, as_csr

DEFAULT_DEGREE = 5
PROJECTION_DEGREE = 8


@dataclass(frozen=True)
class DiscreteOperators:
    """M (consistent mass), lumped mass diagonal, skew advection K and the
    Lax-Wendroff matrix G on one mesh."""

    M: sp.csr_matrix
    M_lumped: np.ndarray
    K: sp.csr_matrix
    G: sp.csr_matrix
    mesh: TriMesh
    velocity: VelocityField
    quad_degree: int
    velocity_mode: str = "stream_p2"
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    def reversed(self):
        """Operators for the velocity -v: K changes sign, G does not."""
        return DiscreteOperators(self.M, self.M_lumped, as_csr(-self.K), self.G,
                                 self.mesh, self.velocity.reversed(), self.quad_degree,
                                 self.velocity_mode)

    def manifest(self):
        return {"h": self.mesh.h, "n_nodes": self.mesh.n_nodes,
                "diagonal": self.mesh.diagonal, "quad_degree": self.quad_degree,
                "velocity_mode": self.velocity_mode,
                "velocity": self.velocity.name}


def _geometry(mesh):
    """Areas and constant gradients of the three hat functions per triangle."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # rows of inv([d1 d2]) give grad(lambda_1), grad(lambda_2)
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return 0.5 * det, grads


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)))


def _check_rule(quad):
    if quad is None:
        return triangle_rule(DEFAULT_DEGREE)
    if quad.degree < 2:
        raise ValueError(f"quadrature degree {quad.degree} < 2 is too low")
    return quad


def _quad_points(mesh, quad):
    p = mesh.nodes[mesh.triangles]
    return np.einsum("qk,ekd->eqd", quad.points, p)


def assemble_mass(mesh):
    area, _ = _geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, area[:, None, None] * ref[None])


def lump_mass(M):
    d = np.asarray(M.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise ValueError("nonpositive lumped mass entry; the mass matrix is corrupt")
    return d


def _p2_stream_velocity(mesh, stream, quad):
    """Curl of the P2 interpolant of ``stream`` at the quadrature points.

    The result is divergence-free in every triangle, its normal component is
    continuous across edges, and it vanishes on the boundary wherever the
    stream function is constant there.
    """
    p = mesh.nodes[mesh.triangles]
    mids = 0.5 * (p[:, [0, 1, 0]] + p[:, [1, 2, 2]])
    psi_v = stream(p)
    psi_e = stream(mids)
    _, grads = _geometry(mesh)
    lam = quad.points
    # d/dx of vertex functions lam_i (2 lam_i - 1): (4 lam_i - 1) grad lam_i
    gv = (4.0 * lam - 1.0)[None, :, :, None] * grads[:, None, :, :]
    grad = np.einsum("ei,eqid->eqd", psi_v, gv)
    for k, (i, j) in enumerate(((0, 1), (1, 2), (0, 2))):
        ge = 4.0 * (lam[None, :, j, None] * grads[:, None, i, :]
                    + lam[None, :, i, None] * grads[:, None, j, :])
        grad += psi_e[:, k, None, None] * ge
    return np.stack([grad[..., 1], -grad[..., 0]], axis=-1)


def _advective_derivatives(mesh, vel, quad, velocity_mode="stream_p2"):
    """(v . grad chi_i) and div v at the quadrature points of every triangle."""
    area, grads = _geometry(mesh)
    xq = _quad_points(mesh, quad)
    if velocity_mode == "stream_p2" and vel.stream is not None:
        v = _p2_stream_velocity(mesh, vel.stream, quad)
        div = np.zeros(xq.shape[:-1])
    elif velocity_mode in ("analytic", "stream_p2"):
        v = vel.velocity(xq)
        div = vel.divergence(xq)
    else:
        raise ValueError(f"unknown velocity mode {velocity_mode!r}")
    vgrad = np.einsum("eqd,eid->eqi", v, grads)
    return area, vgrad, div


def assemble_advection(mesh, vel, quad=None, velocity_mode="stream_p2"):
    """Skew-symmetric advection matrix.

    Row ``i`` is the test function, so ``M dz/dt + K z = 0`` is the Galerkin
    system. The local matrix is built from the antisymmetric form
    1/2 (v.grad w, u) - 1/2 (w, v.grad u), which coincides with the half-sum
    form when v.n = 0 on the boundary and is skew under any quadrature.
    """
    quad = _check_rule(quad)
    area, vgrad, _ = _advective_derivatives(mesh, vel, quad, velocity_mode)
    # T[e, i, j] = int chi_i (v . grad chi_j)
    T = np.einsum("q,qi,eqj->eij", quad.weights, quad.points, vgrad) * area[:, None, None]
    return _scatter(mesh, 0.5 * (T - T.transpose(0, 2, 1)))


def assemble_q(mesh, vel, quad=None, velocity_mode="stream_p2"):
    """Symmetric matrix of q(w, u) = int (A w)(A u), A the half-sum operator."""
    quad = _check_rule(quad)
    area, vgrad, div = _advective_derivatives(mesh, vel, quad, velocity_mode)
    # A chi_i = v . grad chi_i + 1/2 chi_i div v
    a = vgrad + 0.5 * div[:, :, None] * quad.points[None, :, :]
    local = np.einsum("q,eqi,eqj->eij", quad.weights, a, a) * area[:, None, None]
    return _scatter(mesh, local)


def load_vector(mesh, f, quad=None):
    """b_i = int f chi_i."""
    quad = quad or triangle_rule(PROJECTION_DEGREE)
    area, _ = _geometry(mesh)
    fq = f(_quad_points(mesh, quad))
    local = np.einsum("q,eq,qi->ei", quad.weights, fq, quad.points) * area[:, None]
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.triangles.ravel(), local.ravel())
    return b


def project_initial(mesh, w0, M=None, quad=None):
    """L2 projection of the closure ``w0`` onto the P1 space."""
    quad = quad or triangle_rule(PROJECTION_DEGREE)
    if quad.degree < PROJECTION_DEGREE:
        raise ValueError(f"projection needs quadrature degree >= {PROJECTION_DEGREE}")
    M = assemble_mass(mesh) if M is None else M
    b = load_vector(mesh, w0, quad)
    z = Factorization(M).solve(b)
    return NodalField(z, mesh)


def assemble_operators(mesh, vel, quad_degree=DEFAULT_DEGREE, velocity_mode="stream_p2"):
    quad = triangle_rule(quad_degree)
    M = assemble_mass(mesh)
    return DiscreteOperators(M, lump_mass(M),
                             assemble_advection(mesh, vel, quad, velocity_mode),
                             assemble_q(mesh, vel, quad, velocity_mode),
                             mesh, vel, quad.degree, velocity_mode)
