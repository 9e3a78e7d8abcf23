"""Continuous Lagrange finite elements on Gauss-Lobatto nodes.

The same element layer serves the frequency-domain BVPs, the Crank-Nicolson
stepper and the large-domain reference solver: it builds the mesh, the global
mass, stiffness and potential matrices, and the banded storage the LAPACK
solvers take.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import logging
from typing import Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse

from weyl_abc.errors import DomainError
from weyl_abc.models import InitialCondition
from weyl_abc.services.core import WaveField, eval_potential

logger = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def gll_nodes(order: int) -> np.ndarray:
    """Gauss-Lobatto-Legendre points on [-1, 1]: endpoints plus the roots of P_p'."""
    if order < 1:
        raise DomainError("Element order must be >= 1", {"order": order})
    interior = legendre.Legendre.basis(order).deriv().roots() if order > 1 else np.array([])
    return np.concatenate(([-1.0], np.sort(interior.real), [1.0]))


@dataclass(frozen=True)
class ReferenceElement:
    order: int
    nodes: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    # coefficients of the nodal basis in the Legendre basis, column i -> phi_i
    coeffs: np.ndarray
    phi: np.ndarray   # (n_quad, p+1)
    dphi: np.ndarray  # (n_quad, p+1), derivative w.r.t. xi

    def basis(self, xi: np.ndarray) -> np.ndarray:
        return legendre.legvander(np.asarray(xi, dtype=float), self.order) @ self.coeffs

    def basis_deriv(self, xi: np.ndarray) -> np.ndarray:
        dcoef = legendre.legder(self.coeffs, axis=0)
        return legendre.legvander(np.asarray(xi, dtype=float), self.order - 1) @ dcoef


@lru_cache(maxsize=32)
def reference_element(order: int) -> ReferenceElement:
    nodes = gll_nodes(order)
    qp, qw = legendre.leggauss(order + 1)
    coeffs = np.linalg.inv(legendre.legvander(nodes, order))
    dcoef = legendre.legder(coeffs, axis=0)
    phi = legendre.legvander(qp, order) @ coeffs
    dphi = legendre.legvander(qp, order - 1) @ dcoef
    return ReferenceElement(order, nodes, qp, qw, coeffs, phi, dphi)


@dataclass(frozen=True)
class Mesh:
    x_minus: float
    x_plus: float
    n_elements: int
    order: int
    edges: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.n_elements * self.order + 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def dofs(self) -> np.ndarray:
        """Global node index of each local node, shape (elements, p+1)."""
        return self.order * np.arange(self.n_elements)[:, None] + np.arange(self.order + 1)[None, :]

    def quad_points(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical quadrature points (elements, p+1) and matching weights times Jacobian."""
        ref = reference_element(self.order)
        jac = 0.5 * self.h
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        xq = mid[:, None] + jac[:, None] * ref.quad_points[None, :]
        wq = jac[:, None] * ref.quad_weights[None, :]
        return xq, wq


def build_mesh(x_minus: float, x_plus: float, n_elements: int, order: int) -> Mesh:
    if not x_minus < x_plus:
        raise DomainError("x_minus must be smaller than x_plus", {"x_minus": x_minus, "x_plus": x_plus})
    if n_elements < 1:
        raise DomainError("n_elements must be positive", {"n_elements": n_elements})

    edges = np.linspace(x_minus, x_plus, n_elements + 1)
    ref_nodes = gll_nodes(order)
    jac = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    local = mid[:, None] + jac[:, None] * ref_nodes[None, :]

    nodes = np.empty(n_elements * order + 1)
    nodes[:-1] = local[:, :-1].ravel()
    nodes[-1] = x_plus
    # pin element edges exactly so interface nodes are shared bit for bit
    nodes[::order] = edges
    return Mesh(float(x_minus), float(x_plus), int(n_elements), int(order), edges, nodes)


@dataclass(frozen=True)
class FemOperators:
    mesh: Mesh
    mass: sparse.csr_matrix
    stiffness: sparse.csr_matrix
    potential: sparse.csr_matrix

    def hamiltonian(self) -> sparse.csr_matrix:
        """Weak form of -d^2/dx^2 + V without boundary terms."""
        return (self.stiffness + self.potential).tocsr()


def _scatter(mesh: Mesh, local: np.ndarray) -> sparse.csr_matrix:
    dofs = mesh.dofs
    rows = np.repeat(dofs[:, :, None], dofs.shape[1], axis=2)
    cols = np.repeat(dofs[:, None, :], dofs.shape[1], axis=1)
    n = mesh.n_nodes
    return sparse.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()


def assemble_operators(mesh: Mesh, potential) -> FemOperators:
    ref = reference_element(mesh.order)
    xq, wq = mesh.quad_points()
    jac = 0.5 * mesh.h

    vq = np.asarray(eval_potential(potential, xq), dtype=float).reshape(xq.shape)

    m_loc = np.einsum("eq,qi,qj->eij", wq, ref.phi, ref.phi)
    v_loc = np.einsum("eq,eq,qi,qj->eij", wq, vq, ref.phi, ref.phi)
    k_loc = np.einsum("q,e,qi,qj->eij", ref.quad_weights, 1.0 / jac, ref.dphi, ref.dphi)

    logger.debug("Assembled %d elements of order %d", mesh.n_elements, mesh.order)
    return FemOperators(mesh, _scatter(mesh, m_loc), _scatter(mesh, k_loc), _scatter(mesh, v_loc))


def to_banded(matrix, bandwidth: int) -> np.ndarray:
    """LAPACK band storage ab[u + i - j, j] = A[i, j] with l = u = bandwidth."""
    coo = sparse.coo_matrix(matrix)
    if coo.nnz and np.max(np.abs(coo.row - coo.col)) > bandwidth:
        raise DomainError("Matrix entries outside the declared bandwidth", {"bandwidth": bandwidth})
    n = coo.shape[1]
    ab = np.zeros((2 * bandwidth + 1, n), dtype=np.result_type(coo.dtype, complex))
    np.add.at(ab, (bandwidth + coo.row - coo.col, coo.col), coo.data)
    return ab


def banded_matvec(ab: np.ndarray, x: np.ndarray, bandwidth: int) -> np.ndarray:
    n = ab.shape[1]
    y = np.zeros(n, dtype=np.result_type(ab.dtype, x.dtype))
    for r in range(ab.shape[0]):
        s = r - bandwidth
        if s >= 0:
            y[s:] += ab[r, : n - s] * x[: n - s]
        else:
            y[: n + s] += ab[r, -s:] * x[-s:]
    return y


def interpolate(mesh: Mesh, values: np.ndarray, x) -> np.ndarray:
    """Evaluate the FEM field at arbitrary points inside [x_minus, x_plus]."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < mesh.x_minus - 1e-12) or np.any(xs > mesh.x_plus + 1e-12):
        raise DomainError("Interpolation point outside the mesh")

    ref = reference_element(mesh.order)
    elem = np.clip(np.searchsorted(mesh.edges, xs, side="right") - 1, 0, mesh.n_elements - 1)
    a, b = mesh.edges[elem], mesh.edges[elem + 1]
    xi = np.clip((2.0 * xs - a - b) / (b - a), -1.0, 1.0)
    phi = ref.basis(xi)
    local = np.asarray(values)[mesh.dofs[elem]]
    return np.einsum("ni,ni->n", phi, local)


def quad_values(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    ref = reference_element(mesh.order)
    return np.asarray(values)[mesh.dofs] @ ref.phi.T


def l2_norm(mesh: Mesh, values: np.ndarray) -> float:
    _, wq = mesh.quad_points()
    uq = quad_values(mesh, values)
    return float(np.sqrt(np.sum(wq * np.abs(uq) ** 2)))


def sample_initial(mesh: Mesh, initial: InitialCondition) -> WaveField:
    """Gaussian beam exp(-((x-c)/w)^2 + i k (x-c)) at the mesh nodes."""
    xs = mesh.nodes - initial.center
    values = np.exp(-((xs / initial.width) ** 2) + 1j * initial.wavenumber * xs)
    return WaveField(0.0, values)
