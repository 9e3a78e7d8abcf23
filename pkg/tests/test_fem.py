import numpy as np
import pytest

from weyl_abc.errors import DomainError
from weyl_abc.models import ConstantPotential, FreePotential, InitialCondition
from weyl_abc.services.fem import (
    assemble_operators,
    banded_matvec,
    build_mesh,
    gll_nodes,
    interpolate,
    l2_norm,
    sample_initial,
    to_banded,
)


def test_gll_nodes():
    np.testing.assert_allclose(gll_nodes(1), [-1.0, 1.0])
    np.testing.assert_allclose(gll_nodes(2), [-1.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(gll_nodes(3), [-1.0, -1 / np.sqrt(5), 1 / np.sqrt(5), 1.0])


def test_build_mesh_layout():
    mesh = build_mesh(-2.0, 3.0, 10, 3)
    assert mesh.n_nodes == 31
    assert mesh.nodes[0] == -2.0 and mesh.nodes[-1] == 3.0
    np.testing.assert_array_equal(mesh.nodes[::3], mesh.edges)
    assert np.all(np.diff(mesh.nodes) > 0)


@pytest.mark.parametrize("args", [(1.0, 1.0, 4, 2), (0.0, 1.0, 0, 2)])
def test_build_mesh_rejects_bad_input(args):
    with pytest.raises(DomainError):
        build_mesh(*args)


def test_mass_and_stiffness_identities():
    mesh = build_mesh(-1.0, 2.0, 7, 4)
    ops = assemble_operators(mesh, FreePotential())
    ones = np.ones(mesh.n_nodes)
    assert ones @ (ops.mass @ ones) == pytest.approx(3.0)
    np.testing.assert_allclose(ops.stiffness @ ones, 0.0, atol=1e-12)
    # int (x^2)' (x^2)' dx over [-1, 2] = 4 (8 + 1)/3
    x2 = mesh.nodes**2
    assert x2 @ (ops.stiffness @ x2) == pytest.approx(12.0)
    assert ops.potential.nnz == 0 or np.max(np.abs(ops.potential.data)) == 0.0


def test_constant_potential_matrix_is_scaled_mass():
    mesh = build_mesh(0.0, 1.0, 5, 3)
    ops = assemble_operators(mesh, ConstantPotential(V0=2.5))
    np.testing.assert_allclose(ops.potential.toarray(), 2.5 * ops.mass.toarray(), atol=1e-14)


def test_banded_storage_roundtrip(rng):
    mesh = build_mesh(0.0, 1.0, 6, 3)
    ops = assemble_operators(mesh, ConstantPotential(V0=1.0))
    a = ops.hamiltonian() - 2j * ops.mass
    x = rng.standard_normal(mesh.n_nodes) + 1j * rng.standard_normal(mesh.n_nodes)
    ab = to_banded(a, mesh.order)
    np.testing.assert_allclose(banded_matvec(ab, x, mesh.order), a @ x, atol=1e-12)
    with pytest.raises(DomainError):
        to_banded(a, 1)


def test_interpolate_reproduces_polynomials():
    mesh = build_mesh(-1.0, 1.0, 4, 3)
    poly = lambda x: 1 - 2 * x + 0.5 * x**3
    x = np.linspace(-1.0, 1.0, 37)
    np.testing.assert_allclose(interpolate(mesh, poly(mesh.nodes), x), poly(x), atol=1e-13)
    with pytest.raises(DomainError):
        interpolate(mesh, poly(mesh.nodes), [1.5])


def test_l2_norm_of_gaussian():
    mesh = build_mesh(-8.0, 8.0, 64, 6)
    u = np.exp(-mesh.nodes**2)
    assert l2_norm(mesh, u) == pytest.approx((np.pi / 2) ** 0.25, rel=1e-8)


def test_sample_initial_beam(small_mesh):
    u0 = sample_initial(small_mesh, InitialCondition())
    mid = small_mesh.n_nodes // 2
    assert small_mesh.nodes[mid] == pytest.approx(0.0, abs=1e-14)
    assert u0.values[mid] == pytest.approx(1.0)
    assert abs(u0.values[0]) < 1e-10
    assert u0.time == 0.0
