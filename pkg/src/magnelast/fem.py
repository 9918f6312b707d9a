"""P1 finite element assembly on tetrahedral meshes.

Vector fields are (N, 3) arrays of nodal values; flattened dof vectors use
node-major ordering, dof = 3 * node + component.  Quadrature policy:

* gradient terms (stiffness, elastic stiffness) are integrated exactly;
* the inertia term uses the exact (consistent) P1 mass matrix;
* zero-order terms with solution-dependent coefficients (damping, the
  precession form, effective-field and applied-field loads) use the vertex
  (lumped) rule, which keeps the precession form exactly skew and nodal
  orthogonality exact;
* magnetostrain source terms replace the elementwise-quadratic strain by its
  nodal interpolant and integrate that exactly against piecewise-constant
  test strains;
* the stress entering the effective field pairs volume-averaged incident
  element strains with nodal magnetostrain.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .material import MaterialParams, elastic_effective_field, hooke, magnetostrain
from .mesh import TetMesh, element_geometry
from .sparse_linalg import assemble_csr


def assemble_lumped_mass(mesh: TetMesh) -> sp.csr_matrix:
    """Diagonal (vertex rule) scalar mass matrix; entries are the node weights."""
    n = mesh.num_nodes
    return sp.diags(mesh.node_weights, format="csr", shape=(n, n))


def assemble_consistent_mass(mesh: TetMesh) -> sp.csr_matrix:
    """Exact scalar P1 mass matrix, element block |K|/20 * (1 + delta_ab)."""
    vols, _ = element_geometry(mesh)
    local = (np.ones((4, 4)) + np.eye(4)) / 20.0
    vals = vols[:, None, None] * local
    rows = np.broadcast_to(mesh.tets[:, :, None], vals.shape)
    cols = np.broadcast_to(mesh.tets[:, None, :], vals.shape)
    n = mesh.num_nodes
    return assemble_csr(rows.ravel(), cols.ravel(), vals.ravel(), (n, n))


def assemble_stiffness(mesh: TetMesh) -> sp.csr_matrix:
    """Exact scalar P1 stiffness matrix, |K| * grad(lambda_a) . grad(lambda_b)."""
    vols, grads = element_geometry(mesh)
    vals = vols[:, None, None] * np.einsum("eai,ebi->eab", grads, grads)
    rows = np.broadcast_to(mesh.tets[:, :, None], vals.shape)
    cols = np.broadcast_to(mesh.tets[:, None, :], vals.shape)
    n = mesh.num_nodes
    return assemble_csr(rows.ravel(), cols.ravel(), vals.ravel(), (n, n))


def assemble_elastic_stiffness(mesh: TetMesh, mu: float, lam: float) -> sp.csr_matrix:
    """Linear elasticity form: 2 mu eps(u):eps(psi) + lambda div(u) div(psi).

    Exact for P1; before boundary elimination the kernel is spanned by the
    six infinitesimal rigid motions.
    """
    vols, grads = element_geometry(mesh)
    # local[(a,c),(b,d)] = |K| (mu (g_a.g_b) delta_cd + mu g_a[d] g_b[c]
    #                            + lam g_a[c] g_b[d])
    gab = np.einsum("eai,ebi->eab", grads, grads)
    local = mu * np.einsum("ead,ebc->eacbd", grads, grads)
    local += lam * np.einsum("eac,ebd->eacbd", grads, grads)
    eye = np.eye(3)
    local += mu * gab[:, :, None, :, None] * eye[None, None, :, None, :]
    local *= vols[:, None, None, None, None]

    dof = 3 * mesh.tets[:, :, None] + np.arange(3)[None, None, :]  # (E,4,3)
    rows = np.broadcast_to(dof[:, :, :, None, None], local.shape)
    cols = np.broadcast_to(dof[:, None, None, :, :], local.shape)
    n3 = 3 * mesh.num_nodes
    return assemble_csr(rows.ravel(), cols.ravel(), local.ravel(), (n3, n3))


def vector_mass(mass_scalar: sp.csr_matrix) -> sp.csr_matrix:
    """Expand a scalar form to 3-component fields, node-major dof ordering."""
    return sp.kron(mass_scalar, sp.identity(3, format="csr"), format="csr")


def interpolate(mesh: TetMesh, fn) -> np.ndarray:
    """Nodal interpolation of fn(x, y, z).

    fn receives the three coordinate arrays and may return a scalar array,
    a constant 3-vector, or a triple of componentwise arrays / scalars.
    """
    x, y, z = mesh.nodes.T
    vals = fn(x, y, z)
    if isinstance(vals, (tuple, list)) and len(vals) == 3:
        comps = [np.broadcast_to(np.asarray(c, float), x.shape) for c in vals]
        return np.stack(comps, axis=-1)
    arr = np.asarray(vals, float)
    if arr.shape == (3,):
        return np.tile(arr, (mesh.num_nodes, 1))
    if arr.shape == (mesh.num_nodes,) or arr.shape == (mesh.num_nodes, 3):
        return arr
    if arr.shape == (3, mesh.num_nodes):
        return arr.T
    raise ValueError(f"cannot interpret interpolated values of shape {arr.shape}")


def h1_seminorm(stiffness: sp.csr_matrix, field: np.ndarray) -> float:
    val = float(np.sum(field * (stiffness @ field)))
    return np.sqrt(max(val, 0.0))


def l2_norm(mass: sp.csr_matrix, field: np.ndarray) -> float:
    val = float(np.sum(field * (mass @ field)))
    return np.sqrt(max(val, 0.0))


def h1_error(stiffness: sp.csr_matrix, mass: sp.csr_matrix,
             a: np.ndarray, b: np.ndarray) -> float:
    """Full H1 distance, consistent mass for the L2 part."""
    d = a - b
    return float(np.sqrt(h1_seminorm(stiffness, d) ** 2 + l2_norm(mass, d) ** 2))


class MeshOperators:
    """Precomputed geometry, matrices and scatter indices for one mesh.

    Everything here is immutable after construction apart from the elastic
    stiffness cache, which only memoizes by material constants.
    """

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        self.vols, self.grads = element_geometry(mesh)
        self.weights = mesh.node_weights
        self.stiffness = assemble_stiffness(mesh)
        self.mass = assemble_consistent_mass(mesh)
        self.mass_vector = vector_mass(self.mass)
        self.constrained_dofs = (
            3 * mesh.dirichlet_nodes[:, None] + np.arange(3)
        ).ravel()
        self._elastic_cache: dict[tuple[float, float], sp.csr_matrix] = {}

        # scatter helpers
        self._nodes_flat = mesh.tets.ravel()
        self._dofs_flat = (3 * mesh.tets[:, :, None] + np.arange(3)).ravel()
        # node-averaging operator: (P f)[z] = sum_K |K|/4 f_K / w_z
        vals = np.repeat(self.vols / 4.0, 4) / self.weights[self._nodes_flat]
        cols = np.repeat(np.arange(mesh.num_tets), 4)
        self._node_average = sp.csr_matrix(
            (vals, (self._nodes_flat, cols)),
            shape=(mesh.num_nodes, mesh.num_tets))

        # fixed sparsity pattern of the 2x2-block expansion of the scalar
        # stiffness, used by the per-step tangent-space systems
        coo = self.stiffness.tocoo()
        self._krow, self._kcol, self._kdat = coo.row, coo.col, coo.data
        nnz = self._krow.size
        pq = np.arange(2)
        rows2 = np.broadcast_to(
            2 * self._krow[:, None, None] + pq[None, :, None], (nnz, 2, 2)).ravel()
        cols2 = np.broadcast_to(
            2 * self._kcol[:, None, None] + pq[None, None, :], (nnz, 2, 2)).ravel()
        order = sp.coo_matrix(
            (np.arange(4 * nnz, dtype=float), (rows2, cols2)),
            shape=(2 * mesh.num_nodes, 2 * mesh.num_nodes),
        ).tocsr()
        order.sort_indices()
        self._block_perm = order.data.astype(np.int64)
        self._block_indices = order.indices
        self._block_indptr = order.indptr
        self._kdiag_pos = np.flatnonzero(self._krow == self._kcol)

    @property
    def num_nodes(self) -> int:
        return self.mesh.num_nodes

    def elastic_stiffness(self, mu: float, lam: float) -> sp.csr_matrix:
        key = (float(mu), float(lam))
        if key not in self._elastic_cache:
            self._elastic_cache[key] = assemble_elastic_stiffness(self.mesh, mu, lam)
        return self._elastic_cache[key]

    def tangent_block_system(self, blocks: np.ndarray) -> sp.csr_matrix:
        """Assemble the 2N x 2N matrix whose (i, j) 2x2 blocks follow the
        scalar stiffness sparsity; blocks has shape (nnz, 2, 2)."""
        data = blocks.reshape(-1)[self._block_perm]
        n2 = 2 * self.mesh.num_nodes
        return sp.csr_matrix(
            (data, self._block_indices, self._block_indptr), shape=(n2, n2)
        )

    def scatter_to_nodes(self, per_tet: np.ndarray) -> np.ndarray:
        """Volume-weighted average over incident tets: per_tet is (E, ...)."""
        flat = per_tet.reshape(per_tet.shape[0], -1)
        out = self._node_average @ flat
        return out.reshape((self.mesh.num_nodes,) + per_tet.shape[1:])


def element_strains(ops: MeshOperators, u: np.ndarray) -> np.ndarray:
    """Symmetric gradient of a P1 displacement, constant per element."""
    u_elem = u[ops.mesh.tets]  # (E, 4, 3)
    grad = np.transpose(u_elem, (0, 2, 1)) @ ops.grads
    return 0.5 * (grad + np.transpose(grad, (0, 2, 1)))


def nodal_strains(ops: MeshOperators, u: np.ndarray) -> np.ndarray:
    """Volume-weighted average of incident element strains at each node."""
    return ops.scatter_to_nodes(element_strains(ops, u))


def magnetostrain_load(ops: MeshOperators, material: MaterialParams,
                       m: np.ndarray) -> np.ndarray:
    """Load vector of the magnetostrain source against test strains.

    The nodal interpolant of the magnetostrain is integrated exactly against
    the piecewise constant eps(psi); returns an (N, 3) array.
    """
    eps_nodal = magnetostrain(m, material.lambda100)
    s_nodal = hooke(eps_nodal, material.mu, material.lam)  # (N, 3, 3)
    s_elem = s_nodal[ops.mesh.tets].mean(axis=1)  # (E, 3, 3)
    # contrib[e, a, c] = |K| sum_b S[e, c, b] G[e, a, b]
    contrib = ops.vols[:, None, None] * (ops.grads @ np.transpose(s_elem, (0, 2, 1)))
    flat = np.bincount(ops._dofs_flat, weights=contrib.ravel(),
                       minlength=3 * ops.mesh.num_nodes)
    return flat.reshape(-1, 3)


def effective_field_load(ops: MeshOperators, material: MaterialParams,
                         u: np.ndarray, m_dir: np.ndarray) -> np.ndarray:
    """Lumped load of the magnetoelastic effective-field term.

    The stress uses node-averaged strains of u and the nodal magnetostrain of
    m_dir; the result is weighted by the node volumes.
    """
    if material.lambda100 == 0.0:
        return np.zeros((ops.mesh.num_nodes, 3))
    eps_avg = nodal_strains(ops, u)
    eps_el = eps_avg - magnetostrain(m_dir, material.lambda100)
    sigma = hooke(eps_el, material.mu, material.lam)
    h_el = elastic_effective_field(sigma, m_dir, material.lambda100)
    return ops.weights[:, None] * h_el


def zeeman_load(ops: MeshOperators, f_vec: np.ndarray) -> np.ndarray:
    """Lumped load of a spatially constant applied field."""
    return ops.weights[:, None] * np.asarray(f_vec, float)[None, :]
