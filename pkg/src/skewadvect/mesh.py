"""Uniform triangulation of the unit square and the model advection problem."""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TriMesh:
    """P1 triangulation of [0, 1]^2 with spacing ``h``.

    Nodes are ordered lexicographically by (x1, x2): node ``i * (n + 1) + j``
    sits at ``(i h, j h)``. Triangles are counter-clockwise.
    """

    h: float
    n: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    diagonal: str = "up"

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def reflection_permutation(self):
        """Node permutation induced by the reflection x1 <-> x2."""
        i, j = np.divmod(np.arange(self.n_nodes), self.n + 1)
        return j * (self.n + 1) + i

    def to_csv(self, nodes_path, triangles_path):
        with open(nodes_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "x1", "x2"])
            for k, (x1, x2) in enumerate(self.nodes):
                w.writerow([k, f"{x1:.16e}", f"{x2:.16e}"])
        with open(triangles_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "n0", "n1", "n2"])
            for k, tri in enumerate(self.triangles):
                w.writerow([k, *tri.tolist()])


def cells_per_side(h):
    """Return ``1/h`` as an int, or raise if ``h`` does not divide 1."""
    if not h > 0:
        raise ValueError(f"mesh spacing must be positive, got {h!r}")
    n = round(1.0 / h)
    if n < 1 or abs(n * h - 1.0) > 1e-9:
        raise ValueError(f"mesh spacing h={h!r} does not divide the unit interval")
    return n


def build_uniform_mesh(h, diagonal="up"):
    """Split each square cell along its +1-slope diagonal (``"up"``) or the
    opposite one (``"down"``)."""
    n = cells_per_side(h)
    if diagonal not in ("up", "down"):
        raise ValueError(f"diagonal must be 'up' or 'down', got {diagonal!r}")
    h = 1.0 / n
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    nodes = np.column_stack([i.ravel() * h, j.ravel() * h])

    ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    p00 = ci * (n + 1) + cj
    p10 = p00 + (n + 1)
    p01 = p00 + 1
    p11 = p10 + 1
    if diagonal == "up":
        t1 = np.column_stack([p00, p10, p11])
        t2 = np.column_stack([p00, p11, p01])
    else:
        t1 = np.column_stack([p00, p10, p01])
        t2 = np.column_stack([p10, p11, p01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = t1
    triangles[1::2] = t2

    ii, jj = i.ravel(), j.ravel()
    on_edge = (ii == 0) | (ii == n) | (jj == 0) | (jj == n)
    return TriMesh(h, n, nodes, triangles, np.flatnonzero(on_edge), diagonal)


@dataclass(frozen=True)
class VelocityField:
    """Velocity given through closures acting on arrays of shape (..., 2)."""

    velocity: Callable
    divergence: Callable
    stream: Callable = None
    name: str = "custom"

    def reversed(self):
        return VelocityField(
            lambda x: -self.velocity(x),
            lambda x: -self.divergence(x),
            None if self.stream is None else (lambda x: -self.stream(x)),
            f"-{self.name}",
        )


def _zero_div(x):
    return np.zeros(np.shape(x)[:-1])


def model_velocity():
    """Cellular flow derived from psi = sin(pi x1) sin(pi x2) / pi."""

    def stream(x):
        x = np.asarray(x, dtype=float)
        return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]) / np.pi

    def velocity(x):
        x = np.asarray(x, dtype=float)
        s1, c1 = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
        s2, c2 = np.sin(np.pi * x[..., 1]), np.cos(np.pi * x[..., 1])
        return np.stack([s1 * c2, -c1 * s2], axis=-1)

    return VelocityField(velocity, _zero_div, stream, "model")


def constant_velocity(v1, v2):
    def velocity(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        out[..., 0] = v1
        out[..., 1] = v2
        return out

    return VelocityField(velocity, _zero_div, None, f"const({v1},{v2})")


def zero_velocity():
    return constant_velocity(0.0, 0.0)


def model_initial(x):
    """2e3 * x1^2 (1-x1)^4 * x2^2 (1-x2)^4, vectorised over the last axis."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return 2.0e3 * x1**2 * (1 - x1) ** 4 * x2**2 * (1 - x2) ** 4


def model_initial_l2_squared():
    """Closed form of the integral of ``model_initial**2`` over the unit square.

    Each 1-D factor is a Beta integral: int x^4 (1-x)^8 dx = B(5, 9).
    """
    beta = math.factorial(4) * math.factorial(8) / math.factorial(13)
    return 4.0e6 * beta**2


@dataclass(frozen=True)
class NodalField:
    """Coefficient vector of a P1 function on ``mesh``."""

    values: np.ndarray
    mesh: TriMesh = field(repr=False)

    def __post_init__(self):
        if len(self.values) != self.mesh.n_nodes:
            raise ValueError(
                f"field has {len(self.values)} values, mesh has {self.mesh.n_nodes} nodes"
            )

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "x1", "x2", "value"])
            for k, ((x1, x2), v) in enumerate(zip(self.mesh.nodes, self.values)):
                w.writerow([k, f"{x1:.16e}", f"{x2:.16e}", f"{v:.16e}"])
