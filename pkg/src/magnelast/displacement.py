"""Newmark-beta displacement stepping in two-step (velocity-free) form.

The velocity is eliminated exactly: after the initialization solve, which
still consumes udot0, every step advances u from the last two iterates.  The
inertia term uses the consistent mass matrix; magnetostrain sources follow
the interpolated-strain quadrature of the assembly module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fem import MeshOperators, magnetostrain_load
from .magnetization import nodal_project
from .material import MaterialParams
from .sparse_linalg import apply_dirichlet, cg_solve


class StabilityWarning(UserWarning):
    """Parameter choice loses unconditional stability or temporal order."""


@dataclass
class NewmarkParams:
    """Newmark weights.  beta in [0, 1/2] for the production scheme; beta = 1
    with gamma = 3/2 reproduces the heavily damped first-order reference
    discretization, so values up to 1 are admitted."""

    beta: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.beta) and np.isfinite(self.gamma)):
            raise ValueError("beta and gamma must be finite")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 <= self.gamma <= 1.5:
            raise ValueError(f"gamma must lie in [0, 3/2], got {self.gamma}")
        if self.beta <= 0.25:
            warnings.warn(
                f"beta = {self.beta} is only conditionally stable (CFL "
                "restriction k = O(h)); unconditional stability needs beta > 1/4",
                StabilityWarning, stacklevel=2)
        if self.gamma != 0.5:
            warnings.warn(
                f"gamma = {self.gamma} != 1/2 drops the scheme to first order "
                "in time (gamma > 1/2 adds numerical damping)",
                StabilityWarning, stacklevel=2)


class NewmarkSolver:
    """Caches the system matrix M + beta k^2 A with constraints applied.

    constrained_dofs defaults to all components of the mesh Dirichlet nodes;
    tests may constrain an arbitrary dof subset instead.
    """

    def __init__(self, ops: MeshOperators, material: MaterialParams,
                 params: NewmarkParams, k: float, tol: float = 1e-10,
                 max_iter: int | None = None, constrained_dofs=None):
        self.ops = ops
        self.material = material
        self.params = params
        self.k = float(k)
        self.tol = tol
        self.max_iter = max_iter
        self.constrained = (ops.constrained_dofs if constrained_dofs is None
                            else np.asarray(constrained_dofs, dtype=np.int64))
        self.elastic = ops.elastic_stiffness(material.mu, material.lam)
        system = ops.mass_vector + (params.beta * self.k ** 2) * self.elastic
        zeros = np.zeros(system.shape[0])
        self.system, _ = apply_dirichlet(system.tocsr(), zeros, self.constrained)
        self._load_cache: list[tuple] = []  # (field id ref, load) pairs

    def _magnetostrain_load(self, m, project: bool) -> np.ndarray:
        if self.material.lambda100 == 0.0 or m is None:
            return np.zeros(3 * self.ops.mesh.num_nodes)
        # each magnetization iterate is needed in three consecutive steps
        for ref, load in self._load_cache:
            if ref is m:
                return load
        field = nodal_project(m) if project else m
        load = magnetostrain_load(self.ops, self.material, field).ravel()
        if project:
            self._load_cache = [(m, load)] + self._load_cache[:2]
        return load

    def _solve(self, rhs: np.ndarray, guess):
        rhs = rhs.copy()
        rhs[self.constrained] = 0.0
        x, report = cg_solve(self.system, rhs, tol=self.tol,
                             max_iter=self.max_iter, x0=guess,
                             check_symmetric=False)
        return x.reshape(-1, 3), report

    def initialize(self, u0, udot0, m0, m1):
        """First displacement from the initial data and the first
        magnetization iterate; m0 enters unprojected (assumed nodally unit),
        m1 is projected."""
        k, beta = self.k, self.params.beta
        a_u0 = self.elastic @ u0.ravel()
        f_m0 = self._magnetostrain_load(m0, project=False)
        f_m1 = self._magnetostrain_load(m1, project=True)
        rhs = self.ops.mass_vector @ (u0 + k * udot0).ravel()
        rhs += k ** 2 * (-(0.5 - beta) * (a_u0 - f_m0) + beta * f_m1)
        return self._solve(rhs, u0.ravel())

    def step(self, u_curr, u_prev, m_next, m_curr, m_prev, u_guess=None):
        """Two-step update; all magnetization sources are projected."""
        k, beta, gamma = self.k, self.params.beta, self.params.gamma
        c1 = 0.5 + gamma - 2.0 * beta
        c2 = 0.5 - gamma + beta
        rhs = self.ops.mass_vector @ (2.0 * u_curr - u_prev).ravel()
        if c1 != 0.0:
            rhs -= k ** 2 * c1 * (self.elastic @ u_curr.ravel()
                                  - self._magnetostrain_load(m_curr, project=True))
        if c2 != 0.0:
            rhs -= k ** 2 * c2 * (self.elastic @ u_prev.ravel()
                                  - self._magnetostrain_load(m_prev, project=True))
        if beta != 0.0:
            rhs += k ** 2 * beta * self._magnetostrain_load(m_next, project=True)
        guess = (2.0 * u_curr - u_prev).ravel() if u_guess is None else u_guess.ravel()
        return self._solve(rhs, guess)


def newmark_init(ops, material, params, k, u0, udot0, m0=None, m1=None,
                 tol=1e-10, max_iter=None, constrained_dofs=None):
    """One-shot initialization solve; see NewmarkSolver.initialize."""
    solver = NewmarkSolver(ops, material, params, k, tol, max_iter, constrained_dofs)
    return solver.initialize(u0, udot0, m0, m1)


def newmark_step(ops, material, params, k, u_curr, u_prev, m_next=None,
                 m_curr=None, m_prev=None, tol=1e-10, max_iter=None,
                 constrained_dofs=None, u_guess=None):
    """One-shot loop solve; see NewmarkSolver.step."""
    solver = NewmarkSolver(ops, material, params, k, tol, max_iter, constrained_dofs)
    return solver.step(u_curr, u_prev, m_next, m_curr, m_prev, u_guess)
