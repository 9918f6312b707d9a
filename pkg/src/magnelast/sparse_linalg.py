"""Sparse assembly helpers and Krylov solvers.

Matrices are scipy CSR throughout.  Assembly accumulates coordinate triplets
and compresses them (duplicates summed, column indices sorted).  The solvers
are Jacobi-preconditioned CG and BiCGStab; both report the true relative
residual ||Ax - b|| / ||b|| and restart from the current iterate if the
recursive residual drifted from the true one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class SolverBreakdownError(Exception):
    """Non-finite values entered the Krylov iteration (distinct from
    plain non-convergence, which is reported, not raised)."""


@dataclass
class SolverReport:
    iterations: int
    residual: float
    converged: bool


def assemble_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """Compress coordinate triplets; duplicate entries are summed."""
    a = sp.coo_matrix((np.asarray(vals, float), (rows, cols)), shape=shape).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def apply_dirichlet(a: sp.csr_matrix, b: np.ndarray, constrained_dofs):
    """Symmetric elimination of homogeneous constraints.

    Constrained rows and columns are zeroed, the diagonal is set to 1 and the
    right-hand side entries to 0, so constrained dofs solve to exactly zero
    and symmetry / positive definiteness are preserved.
    """
    n = a.shape[0]
    constrained = np.asarray(constrained_dofs, dtype=np.int64)
    if constrained.size and (constrained.min() < 0 or constrained.max() >= n):
        raise IndexError("constrained dof index out of range")
    keep = np.ones(n)
    keep[constrained] = 0.0
    pin = 1.0 - keep
    d_keep = sp.diags(keep)
    a_bc = (d_keep @ a @ d_keep + sp.diags(pin)).tocsr()
    a_bc.sum_duplicates()
    a_bc.sort_indices()
    b_bc = np.array(b, dtype=float, copy=True)
    b_bc[constrained] = 0.0
    return a_bc, b_bc


def _check_symmetry(a: sp.csr_matrix, tol: float = 1e-10) -> None:
    """Spot-check A[i,j] == A[j,i] on a deterministic sample of entries."""
    coo = a.tocoo()
    if coo.nnz == 0:
        return
    rng = np.random.default_rng(0)
    take = rng.choice(coo.nnz, size=min(64, coo.nnz), replace=False)
    scale = max(np.abs(coo.data).max(), 1.0)
    for t in take:
        i, j, v = int(coo.row[t]), int(coo.col[t]), coo.data[t]
        if abs(a[j, i] - v) > tol * scale:
            raise ValueError(f"matrix not symmetric at ({i},{j})")


def _prepare(a, b, x0, max_iter):
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    b = np.asarray(b, float)
    if b.shape != (n,):
        raise ValueError("shape mismatch between matrix and rhs")
    if not np.all(np.isfinite(b)):
        raise SolverBreakdownError("non-finite right-hand side")
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, float, copy=True)
    diag = a.diagonal()
    inv_diag = 1.0 / np.where(diag == 0, 1.0, diag)
    return b, x, inv_diag, max_iter


def _finalize(a, b, x, iters, tol):
    res = np.linalg.norm(b - a @ x)
    bnorm = np.linalg.norm(b)
    rel = res / bnorm if bnorm > 0 else res
    if not np.isfinite(rel):
        raise SolverBreakdownError("non-finite residual")
    return SolverReport(iterations=iters, residual=float(rel), converged=rel <= tol)


def cg_solve(a, b, tol: float = 1e-10, max_iter: int | None = None, x0=None,
             check_symmetric: bool = True):
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Returns (x, SolverReport).  Convergence means the true relative residual
    ||Ax - b|| / ||b|| is at or below tol.
    """
    if check_symmetric:
        _check_symmetry(a)
    b, x, inv_diag, max_iter = _prepare(a, b, x0, max_iter)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolverReport(0, 0.0, True)
    target = tol * bnorm

    iters = 0
    for _ in range(4):  # restarts with true residual
        r = b - a @ x
        if not np.all(np.isfinite(r)):
            raise SolverBreakdownError("non-finite residual in CG")
        z = inv_diag * r
        p = z.copy()
        rz = r @ z
        while iters < max_iter:
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                break
            ap = a @ p
            pap = p @ ap
            if not np.isfinite(pap):
                raise SolverBreakdownError("non-finite curvature in CG")
            if pap <= 0:
                break  # matrix not positive definite on this subspace
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            z = inv_diag * r
            rz_new = r @ z
            beta = rz_new / rz
            rz = rz_new
            p = z + beta * p
            iters += 1
        true_res = np.linalg.norm(b - a @ x)
        if true_res <= target or iters >= max_iter:
            break
    return x, _finalize(a, b, x, iters, tol)


def bicgstab_solve(a, b, tol: float = 1e-10, max_iter: int | None = None, x0=None,
                   precond=None):
    """Right-preconditioned BiCGStab for positive definite systems.

    precond(v) applies an approximate inverse (Jacobi by default).  Returns
    (x, SolverReport); same convergence contract as cg_solve without the
    symmetry precondition.
    """
    b, x, inv_diag, max_iter = _prepare(a, b, x0, max_iter)
    if precond is None:
        precond = lambda v: inv_diag * v  # noqa: E731
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolverReport(0, 0.0, True)
    target = tol * bnorm
    tiny = np.finfo(float).tiny

    iters = 0
    for _ in range(4):
        r = b - a @ x
        if not np.all(np.isfinite(r)):
            raise SolverBreakdownError("non-finite residual in BiCGStab")
        if np.linalg.norm(r) <= target:
            break
        r0 = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros_like(b)
        p = np.zeros_like(b)
        while iters < max_iter:
            rho_new = r0 @ r
            if abs(rho_new) < tiny or abs(omega) < tiny:
                break  # shadow-vector breakdown: restart with a fresh r0
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            phat = precond(p)
            v = a @ phat
            denom = r0 @ v
            if abs(denom) < tiny:
                break
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= target:
                x += alpha * phat
                iters += 1
                break
            shat = precond(s)
            t = a @ shat
            tt = t @ t
            if tt < tiny:
                break
            omega = (t @ s) / tt
            x += alpha * phat + omega * shat
            r = s - omega * t
            if not np.all(np.isfinite(r)):
                raise SolverBreakdownError("non-finite residual in BiCGStab")
            iters += 1
            if np.linalg.norm(r) <= target:
                break
        true_res = np.linalg.norm(b - a @ x)
        if true_res <= target or iters >= max_iter:
            break
    return x, _finalize(a, b, x, iters, tol)
