"""Constrained magnetization solvers.

Both schemes look for a velocity that is orthogonal, node by node, to an
anchor direction, then update m <- m + k v:

* the midpoint scheme anchors at the two-step extrapolation
  1.5 m_curr - 0.5 m_prev (or at m0 in the very first step) and weights the
  implicit exchange term by k/2;
* the first-order reference scheme anchors at m_curr with implicit exchange
  weight k and no extrapolation (preset name nr2025).

The nodal orthogonality constraint is eliminated with a per-node orthonormal
tangent pair (null-space reduction), giving an unconstrained positive
definite system with 2 dofs per node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import MeshOperators, effective_field_load, zeeman_load
from .material import MaterialParams
from .sparse_linalg import SolverReport, bicgstab_solve

DEGENERACY_TOL = 1e-10
PROJECTION_TOL = 1e-12


class DegenerateExtrapolationError(Exception):
    """The extrapolated magnetization vanished at a node, so the tangent
    space there is undefined.  Treated as an instability, not regularized."""


class ProjectionError(Exception):
    """Nodal projection onto the unit sphere hit a (near-)zero value."""


@dataclass
class TangentBasis:
    """Per-node orthonormal pair spanning the plane orthogonal to an anchor."""

    t1: np.ndarray  # (N, 3)
    t2: np.ndarray  # (N, 3)

    @property
    def matrix(self) -> np.ndarray:
        """(N, 3, 2) with columns t1, t2."""
        return np.stack([self.t1, self.t2], axis=-1)


def extrapolate_half(m_curr: np.ndarray, m_prev: np.ndarray) -> np.ndarray:
    """Two-step extrapolation to the interval midpoint, 1.5 m - 0.5 m_prev.

    Raises DegenerateExtrapolationError when any nodal value drops below
    DEGENERACY_TOL in norm.
    """
    out = 1.5 * m_curr - 0.5 * m_prev
    norms = np.linalg.norm(out, axis=1)
    if norms.min(initial=np.inf) < DEGENERACY_TOL:
        bad = int(np.argmin(norms))
        raise DegenerateExtrapolationError(
            f"extrapolated magnetization vanished at node {bad} "
            f"(|value| = {norms[bad]:.3e})"
        )
    return out


def nodal_project(field: np.ndarray) -> np.ndarray:
    """Normalize every nodal value to the unit sphere (idempotent)."""
    norms = np.linalg.norm(field, axis=1)
    if norms.min(initial=np.inf) <= PROJECTION_TOL:
        bad = int(np.argmin(norms))
        raise ProjectionError(
            f"cannot project near-zero nodal value at node {bad} "
            f"(|value| = {norms[bad]:.3e})"
        )
    return field / norms[:, None]


def build_tangent_basis(anchor: np.ndarray) -> TangentBasis:
    """Orthonormal tangent pair at every node of an anchor field.

    t1 is the coordinate axis least aligned with the anchor (ties broken by
    the smallest index), made orthogonal to it; t2 = anchor x t1, normalized.
    Scale-invariant in the anchor.
    """
    norms = np.linalg.norm(anchor, axis=1)
    if norms.min(initial=np.inf) < DEGENERACY_TOL:
        bad = int(np.argmin(norms))
        raise DegenerateExtrapolationError(
            f"tangent basis undefined at node {bad} (|anchor| = {norms[bad]:.3e})"
        )
    n_hat = anchor / norms[:, None]
    axis = np.argmin(np.abs(n_hat), axis=1)
    e = np.eye(3)[axis]
    t1 = e - np.sum(e * n_hat, axis=1)[:, None] * n_hat
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(n_hat, t1)
    t2 /= np.linalg.norm(t2, axis=1)[:, None]
    return TangentBasis(t1=t1, t2=t2)


def update_magnetization(m_curr: np.ndarray, v: np.ndarray, k: float) -> np.ndarray:
    """Nodal update m + k v."""
    return m_curr + k * v


def assemble_skew_lumped(ops: MeshOperators, anchor: np.ndarray) -> sp.csr_matrix:
    """Full 3N x 3N lumped precession form, block diag w_z [anchor(z)]_x.

    Exactly skew-symmetric; production stepping uses the reduced blocks
    directly, this assembly exists for diagnostics and tests.
    """
    n = ops.mesh.num_nodes
    w = ops.weights
    a = anchor
    blocks = np.zeros((n, 3, 3))
    blocks[:, 0, 1] = -a[:, 2]
    blocks[:, 0, 2] = a[:, 1]
    blocks[:, 1, 0] = a[:, 2]
    blocks[:, 1, 2] = -a[:, 0]
    blocks[:, 2, 0] = -a[:, 1]
    blocks[:, 2, 1] = a[:, 0]
    blocks *= w[:, None, None]
    dof = 3 * np.arange(n)
    comp = np.arange(3)
    rows = np.broadcast_to(dof[:, None, None] + comp[None, :, None], blocks.shape)
    cols = np.broadcast_to(dof[:, None, None] + comp[None, None, :], blocks.shape)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(3 * n, 3 * n))


def _reduced_system(ops: MeshOperators, basis: TangentBasis, anchor_norms,
                    alpha: float, exchange_weight: float,
                    precession: bool) -> sp.csr_matrix:
    """2N x 2N tangent-space matrix of alpha M_L + skew + weight * stiffness."""
    T = basis.matrix
    blocks = np.transpose(T[ops._krow], (0, 2, 1)) @ T[ops._kcol]
    blocks *= (exchange_weight * ops._kdat)[:, None, None]
    diag = ops._kdiag_pos
    znode = ops._krow[diag]
    aw = alpha * ops.weights[znode]
    blocks[diag, 0, 0] += aw
    blocks[diag, 1, 1] += aw
    if precession:
        # T^T [a]_x T = |a| [[0, -1], [1, 0]] for a right-handed (t1, t2, a/|a|)
        saw = ops.weights[znode] * anchor_norms[znode]
        blocks[diag, 0, 1] -= saw
        blocks[diag, 1, 0] += saw
    return ops.tangent_block_system(blocks)


def _block_jacobi(ops, anchor_norms, alpha, exchange_weight, precession):
    """Exact inverse of the nodal 2x2 blocks (damping + precession + the
    exchange diagonal); the skew part dwarfs the plain diagonal, so plain
    Jacobi stalls without this."""
    w = ops.weights
    p = alpha * w + exchange_weight * ops.stiffness.diagonal()
    q = w * anchor_norms if precession else np.zeros_like(w)
    det = p * p + q * q

    def apply(v):
        r = v.reshape(-1, 2)
        out = np.empty_like(r)
        out[:, 0] = (p * r[:, 0] + q * r[:, 1]) / det
        out[:, 1] = (-q * r[:, 0] + p * r[:, 1]) / det
        return out.reshape(-1)

    return apply


def _solve_tangent(ops, basis, anchor_norms, rhs3, alpha, exchange_weight,
                   precession, tol, max_iter, v_guess):
    a2 = _reduced_system(ops, basis, anchor_norms, alpha, exchange_weight, precession)
    T = basis.matrix
    b2 = np.einsum("nij,ni->nj", T, rhs3).ravel()
    x0 = None
    if v_guess is not None:
        x0 = np.einsum("nij,ni->nj", T, v_guess).ravel()
    precond = _block_jacobi(ops, anchor_norms, alpha, exchange_weight, precession)
    c, report = bicgstab_solve(a2, b2, tol=tol, max_iter=max_iter, x0=x0,
                               precond=precond)
    v = np.einsum("nij,nj->ni", T, c.reshape(-1, 2))
    return v, report


def magnetization_rhs(ops: MeshOperators, material: MaterialParams,
                      m_exchange: np.ndarray, u_load: np.ndarray,
                      m_load_dir: np.ndarray, t_field: float) -> np.ndarray:
    """Right-hand side (N, 3): minus the exchange residual of m_exchange plus
    the magnetoelastic and applied-field lumped loads."""
    rhs = -(ops.stiffness @ m_exchange)
    rhs += effective_field_load(ops, material, u_load, m_load_dir)
    rhs += zeeman_load(ops, material.zeeman(t_field))
    return rhs


def solve_midpoint_velocity(ops: MeshOperators, material: MaterialParams,
                            k: float, t: float, m_curr: np.ndarray,
                            m_prev=None, u_curr=None, u_prev=None,
                            mode: str = "loop", precession: bool = True,
                            tol: float = 1e-10, max_iter: int | None = None,
                            v_guess=None):
    """One midpoint velocity solve.

    mode "init" anchors at m_curr (assumed nodally unit, no projection) and
    loads the stress with (u_curr, m_curr); mode "loop" anchors at the
    extrapolated midpoint of (m_curr, m_prev) and loads the stress with the
    extrapolated displacement and the projected extrapolated magnetization.
    The applied field is evaluated at t + k/2.  Returns (v, SolverReport)
    with v(z) orthogonal to the anchor at every node.
    """
    if mode == "init":
        anchor = m_curr
        u_load = u_curr
        m_load_dir = m_curr
    elif mode == "loop":
        if m_prev is None or u_prev is None:
            raise ValueError("loop mode needs two previous iterates")
        anchor = extrapolate_half(m_curr, m_prev)
        u_load = 1.5 * u_curr - 0.5 * u_prev
        m_load_dir = nodal_project(anchor)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    basis = build_tangent_basis(anchor)
    anchor_norms = np.linalg.norm(anchor, axis=1)
    rhs = magnetization_rhs(ops, material, m_curr, u_load, m_load_dir, t + k / 2.0)
    return _solve_tangent(ops, basis, anchor_norms, rhs, material.alpha,
                          k / 2.0, precession, tol, max_iter, v_guess)


def solve_first_order_tps(ops: MeshOperators, material: MaterialParams,
                          k: float, t: float, m_curr: np.ndarray,
                          u_curr: np.ndarray, precession: bool = True,
                          tol: float = 1e-10, max_iter: int | None = None,
                          v_guess=None):
    """One step of the first-order tangent plane scheme (fully implicit
    exchange, weight k, anchor m_curr, applied field at t).

    The update m + k v is projection free.  Returns (v, SolverReport).
    """
    anchor = m_curr
    basis = build_tangent_basis(anchor)
    anchor_norms = np.linalg.norm(anchor, axis=1)
    m_load_dir = nodal_project(m_curr)
    rhs = magnetization_rhs(ops, material, m_curr, u_curr, m_load_dir, t)
    return _solve_tangent(ops, basis, anchor_norms, rhs, material.alpha,
                          k, precession, tol, max_iter, v_guess)
