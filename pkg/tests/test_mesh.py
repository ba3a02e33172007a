import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewadvect.mesh import (NodalField, build_uniform_mesh, cells_per_side,
                             constant_velocity, model_initial,
                             model_initial_l2_squared, model_velocity)


@given(n=st.integers(1, 30), diagonal=st.sampled_from(["up", "down"]))
def test_counts_and_areas(n, diagonal):
    mesh = build_uniform_mesh(1.0 / n, diagonal)
    assert mesh.n_nodes == (n + 1) ** 2
    assert mesh.n_triangles == 2 * n * n
    areas = mesh.signed_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(1.0, abs=1e-12)
    assert len(mesh.boundary_nodes) == 4 * n


def test_lexicographic_ordering():
    mesh = build_uniform_mesh(0.25)
    i, j = 3, 1
    assert np.allclose(mesh.nodes[i * 5 + j], [0.75, 0.25])


def test_up_diagonal_edges_have_positive_slope():
    mesh = build_uniform_mesh(0.5)
    p = mesh.nodes[mesh.triangles]
    # the hypotenuse of every triangle joins (x, y) and (x + h, y + h)
    for tri in p:
        d = [tri[b] - tri[a] for a, b in ((0, 1), (1, 2), (0, 2))]
        diag = [v for v in d if abs(v[0]) > 0 and abs(v[1]) > 0]
        assert len(diag) == 1 and diag[0][0] * diag[0][1] > 0


def test_reflection_maps_mesh_onto_itself():
    mesh = build_uniform_mesh(0.2)
    perm = mesh.reflection_permutation()
    assert np.allclose(mesh.nodes[perm], mesh.nodes[:, ::-1])
    tris = {tuple(sorted(t)) for t in mesh.triangles}
    assert {tuple(sorted(perm[t])) for t in mesh.triangles} == tris


@pytest.mark.parametrize("h", [0.3, 0.0, -0.5, 0.15])
def test_bad_spacing_rejected(h):
    with pytest.raises(ValueError):
        cells_per_side(h)


def test_bad_diagonal_rejected():
    with pytest.raises(ValueError):
        build_uniform_mesh(0.5, diagonal="left")


def test_model_velocity_is_solenoidal_and_tangential():
    vel = model_velocity()
    rng = np.random.default_rng(0)
    x = rng.random((200, 2))
    eps = 1e-6
    div = ((vel.velocity(x + [eps, 0])[:, 0] - vel.velocity(x - [eps, 0])[:, 0])
           + (vel.velocity(x + [0, eps])[:, 1] - vel.velocity(x - [0, eps])[:, 1])) / (2 * eps)
    assert np.abs(div).max() < 1e-8
    s = rng.random(50)
    for side, normal in ((np.c_[np.zeros(50), s], 0), (np.c_[np.ones(50), s], 0),
                         (np.c_[s, np.zeros(50)], 1), (np.c_[s, np.ones(50)], 1)):
        assert np.abs(vel.velocity(side)[:, normal]).max() <= 1e-12
    # v is the curl of the stream function
    d1 = (vel.stream(x + [eps, 0]) - vel.stream(x - [eps, 0])) / (2 * eps)
    d2 = (vel.stream(x + [0, eps]) - vel.stream(x - [0, eps])) / (2 * eps)
    assert np.allclose(vel.velocity(x), np.c_[d2, -d1], atol=1e-8)


def test_reversed_velocity():
    vel = model_velocity()
    x = np.random.default_rng(1).random((10, 2))
    assert np.allclose(vel.reversed().velocity(x), -vel.velocity(x))
    assert np.allclose(vel.reversed().stream(x), -vel.stream(x))


def test_initial_condition_norm_matches_tensor_gauss():
    g, w = np.polynomial.legendre.leggauss(20)
    g, w = 0.5 * (g + 1), 0.5 * w
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    vals = model_initial(np.stack([X1, X2], axis=-1)) ** 2
    assert model_initial_l2_squared() == pytest.approx(w @ vals @ w, rel=1e-13)


def test_initial_condition_vanishes_on_boundary():
    s = np.linspace(0, 1, 11)
    for pts in (np.c_[s, 0 * s], np.c_[s, 0 * s + 1], np.c_[0 * s, s], np.c_[0 * s + 1, s]):
        assert np.all(model_initial(pts) == 0)


def test_constant_velocity_shape():
    v = constant_velocity(1.0, -2.0).velocity(np.zeros((3, 4, 2)))
    assert v.shape == (3, 4, 2) and np.all(v[..., 1] == -2.0)


def test_nodal_field_length_checked(tmp_path):
    mesh = build_uniform_mesh(0.5)
    with pytest.raises(ValueError):
        NodalField(np.zeros(3), mesh)
    f = NodalField(np.arange(9.0), mesh)
    f.to_csv(tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "index,x1,x2,value" and len(rows) == 10
    assert float(rows[5].split(",")[3]) == 4.0


def test_mesh_csv(tmp_path):
    mesh = build_uniform_mesh(0.5)
    mesh.to_csv(tmp_path / "n.csv", tmp_path / "t.csv")
    nodes = np.loadtxt(tmp_path / "n.csv", delimiter=",", skiprows=1)
    tris = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1, dtype=int)
    assert np.array_equal(nodes[:, 1:], mesh.nodes)
    assert np.array_equal(tris[:, 1:], mesh.triangles)
