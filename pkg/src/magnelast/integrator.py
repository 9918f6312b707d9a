"""End-to-end time integration of the coupled magnetoelastic system.

Each step first advances the magnetization (tangent-plane solve, nodal
update), then the displacement (two-step Newmark solve), exactly in that
order.  Diagnostics track the discrete energies, field averages, unit-length
violation and solver work; a run returns a possibly truncated record series
flagged Failed when a solver diverges, the extrapolation degenerates, or the
energy blows up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .displacement import NewmarkParams, NewmarkSolver
from .fem import MeshOperators, magnetostrain_load
from .magnetization import (DegenerateExtrapolationError, ProjectionError,
                            extrapolate_half, solve_first_order_tps,
                            solve_midpoint_velocity, update_magnetization)
from .material import MaterialParams, hooke, magnetostrain
from .mesh import TetMesh
from .sparse_linalg import SolverBreakdownError

BLOWUP_FACTOR = 1e6
MIDPOINT = "midpoint"
FIRST_ORDER = "first_order"


class StepFailureError(Exception):
    """A linear solve did not converge; the step is rejected."""


@dataclass
class SchemeParams:
    """Time discretization controls.

    k : time-step size
    newmark : displacement weights (beta, gamma)
    magnetization : "midpoint" or "first_order"
    precession : include the gyromagnetic term (off in minimization mode)
    tol, max_iter : Krylov controls for both solvers
    """

    k: float
    newmark: NewmarkParams
    magnetization: str = MIDPOINT
    precession: bool = True
    tol: float = 1e-10
    max_iter: int | None = None

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"time-step must be positive, got {self.k}")
        if self.magnetization not in (MIDPOINT, FIRST_ORDER):
            raise ValueError(f"unknown magnetization scheme {self.magnetization!r}")

    @classmethod
    def midpoint_newmark(cls, k, beta=1.0 / 3.0, gamma=0.5, **kw):
        """Second-order production preset."""
        return cls(k=k, newmark=NewmarkParams(beta, gamma),
                   magnetization=MIDPOINT, **kw)

    @classmethod
    def nr2025(cls, k, **kw):
        """First-order reference preset: fully implicit tangent plane scheme
        with the (beta, gamma) = (1, 3/2) displacement discretization."""
        return cls(k=k, newmark=NewmarkParams(1.0, 1.5),
                   magnetization=FIRST_ORDER, **kw)

    @classmethod
    def minimization(cls, k, **kw):
        """Energy minimization preset: midpoint scheme without precession,
        damped displacement weights (1/2, 1)."""
        return cls(k=k, newmark=NewmarkParams(0.5, 1.0),
                   magnetization=MIDPOINT, precession=False, **kw)


@dataclass
class SimulationState:
    """Fields after step `step_index` (time = step_index * k)."""

    m_curr: np.ndarray
    u_curr: np.ndarray
    m_prev: np.ndarray | None
    u_prev: np.ndarray | None
    udot0: np.ndarray
    step_index: int
    time: float


@dataclass
class EnergyBreakdown:
    exchange: float
    zeeman: float
    elastic: float
    kinetic: float

    @property
    def total(self) -> float:
        return self.exchange + self.zeeman + self.elastic + self.kinetic


@dataclass
class DiagnosticsRecord:
    t: float
    total_energy: float
    exchange_energy: float
    zeeman_energy: float
    elastic_energy: float
    kinetic_energy: float
    mag_avg: np.ndarray
    disp_avg: np.ndarray
    err_l1_unit: float
    err_linf_unit: float
    mag_iterations: int
    disp_iterations: int


@dataclass
class RunResult:
    records: list[DiagnosticsRecord]
    failed: bool = False
    cause: str | None = None
    state: SimulationState | None = None
    steps_completed: int = 0
    max_err_l1: float = 0.0
    max_err_linf: float = 0.0
    max_orthogonality: float = 0.0

    @property
    def final_energy(self) -> float:
        return self.records[-1].total_energy if self.records else np.nan


def averages(fld: np.ndarray, ops: MeshOperators) -> np.ndarray:
    """Volume average of a nodal field (vertex quadrature, exact for P1)."""
    return (ops.weights @ fld) / ops.weights.sum()


def unit_length_metrics(m: np.ndarray, ops: MeshOperators):
    """(L1 violation of |m|^2 - 1, sup-norm excess of |m|)."""
    sq = np.einsum("ni,ni->n", m, m)
    err_l1 = float(ops.weights @ np.abs(sq - 1.0))
    err_linf = float(np.sqrt(sq.max()) - 1.0)
    return err_l1, err_linf


def energy_components(ops: MeshOperators, material: MaterialParams,
                      state: SimulationState) -> EnergyBreakdown:
    """Discrete energies at the state's own time.

    Kinetic energy uses the backward difference of the displacement in the
    consistent-mass inner product (the initial velocity at step 0).  The
    elastic energy uses the same interpolated-magnetostrain rule as the
    assembled loads, so it is variationally consistent with the solver.
    """
    m, u = state.m_curr, state.u_curr
    exchange = 0.5 * float(np.sum(m * (ops.stiffness @ m)))
    f = material.zeeman(state.time)
    zeeman = -float(ops.weights @ (m @ f))

    a_e = ops.elastic_stiffness(material.mu, material.lam)
    elastic = 0.5 * float(u.ravel() @ (a_e @ u.ravel()))
    if material.lambda100 != 0.0:
        elastic -= float(np.sum(magnetostrain_load(ops, material, m) * u))
        eps_m = magnetostrain(m, material.lambda100)
        dens = np.einsum("nij,nij->n", hooke(eps_m, material.mu, material.lam), eps_m)
        elastic += 0.5 * float(ops.weights @ dens)

    if state.step_index == 0:
        d = state.udot0
    else:
        d = (state.u_curr - state.u_prev) / (state.time / state.step_index)
    kinetic = 0.5 * float(d.ravel() @ (ops.mass_vector @ d.ravel()))
    return EnergyBreakdown(exchange, zeeman, elastic, kinetic)


def detect_blowup(total_energy: float, initial_energy: float) -> bool:
    """Fail on non-finite energy or growth past 1e6 times the initial size."""
    if not np.isfinite(total_energy):
        return True
    return abs(total_energy) > BLOWUP_FACTOR * max(abs(initial_energy),
                                                   np.finfo(float).tiny)


def _record(ops, material, state, mag_iters, disp_iters) -> DiagnosticsRecord:
    en = energy_components(ops, material, state)
    err_l1, err_linf = unit_length_metrics(state.m_curr, ops)
    return DiagnosticsRecord(
        t=state.time,
        total_energy=en.total,
        exchange_energy=en.exchange,
        zeeman_energy=en.zeeman,
        elastic_energy=en.elastic,
        kinetic_energy=en.kinetic,
        mag_avg=averages(state.m_curr, ops),
        disp_avg=averages(state.u_curr, ops),
        err_l1_unit=err_l1,
        err_linf_unit=err_linf,
        mag_iterations=mag_iters,
        disp_iterations=disp_iters,
    )


def _validate_initial(ops, m0, u0, udot0):
    n = ops.mesh.num_nodes
    for name, fld in (("m0", m0), ("u0", u0), ("udot0", udot0)):
        if fld.shape != (n, 3):
            raise ValueError(f"{name} must have shape ({n}, 3), got {fld.shape}")
        if not np.all(np.isfinite(fld)):
            raise ValueError(f"{name} contains non-finite values")
    norms = np.linalg.norm(m0, axis=1)
    if np.abs(norms - 1.0).max() > 1e-10:
        raise ValueError("m0 must be unit length at every node")
    clamped = ops.mesh.dirichlet_nodes
    if clamped.size and np.abs(u0[clamped]).max() > 1e-12:
        raise ValueError("u0 must vanish on the clamped boundary")


def run(mesh: TetMesh | MeshOperators, material: MaterialParams,
        scheme: SchemeParams, T: float, m0: np.ndarray, u0=None, udot0=None,
        record_stride: int | None = None,
        observers: Sequence[Callable] = (),
        skip_displacement: bool = False) -> RunResult:
    """Integrate from t = 0 to T.

    record_stride = None records every step for T <= 1 and every 10th step
    otherwise; the final step is always recorded.  Observers are called after
    every accepted step as observer(prev_state, state, v, mag_report,
    disp_report).  skip_displacement freezes u (useful when the coupling is
    off).  Returns a RunResult; on failure the record series is truncated and
    flagged with the cause.
    """
    ops = mesh if isinstance(mesh, MeshOperators) else MeshOperators(mesh)
    k = scheme.k
    n_steps = int(round(T / k))
    if n_steps < 1 or abs(n_steps * k - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"time-step {k} does not divide the final time {T}")
    if record_stride is None:
        record_stride = 1 if T <= 1.0 else 10
    m0 = np.asarray(m0, float)
    u0 = np.zeros((ops.mesh.num_nodes, 3)) if u0 is None else np.asarray(u0, float)
    udot0 = (np.zeros((ops.mesh.num_nodes, 3)) if udot0 is None
             else np.asarray(udot0, float))
    _validate_initial(ops, m0, u0, udot0)
    u0 = u0.copy()
    u0[ops.mesh.dirichlet_nodes] = 0.0

    newmark = NewmarkSolver(ops, material, scheme.newmark, k,
                            tol=scheme.tol, max_iter=scheme.max_iter)
    midpoint = scheme.magnetization == MIDPOINT

    state = SimulationState(m_curr=m0, u_curr=u0, m_prev=None, u_prev=None,
                            udot0=udot0, step_index=0, time=0.0)
    result = RunResult(records=[_record(ops, material, state, 0, 0)], state=state)
    initial_energy = result.records[0].total_energy
    err_l1, err_linf = (result.records[0].err_l1_unit,
                        result.records[0].err_linf_unit)
    result.max_err_l1, result.max_err_linf = err_l1, err_linf

    v_prev = None
    try:
        for i in range(n_steps):
            t = i * k
            if i == 0:
                anchor = state.m_curr
                if midpoint:
                    v, mag_rep = solve_midpoint_velocity(
                        ops, material, k, t, state.m_curr, u_curr=state.u_curr,
                        mode="init", precession=scheme.precession,
                        tol=scheme.tol, max_iter=scheme.max_iter)
                else:
                    v, mag_rep = solve_first_order_tps(
                        ops, material, k, t, state.m_curr, state.u_curr,
                        precession=scheme.precession, tol=scheme.tol,
                        max_iter=scheme.max_iter)
            elif midpoint:
                anchor = extrapolate_half(state.m_curr, state.m_prev)
                v, mag_rep = solve_midpoint_velocity(
                    ops, material, k, t, state.m_curr, state.m_prev,
                    state.u_curr, state.u_prev, mode="loop",
                    precession=scheme.precession, tol=scheme.tol,
                    max_iter=scheme.max_iter, v_guess=v_prev)
            else:
                anchor = state.m_curr
                v, mag_rep = solve_first_order_tps(
                    ops, material, k, t, state.m_curr, state.u_curr,
                    precession=scheme.precession, tol=scheme.tol,
                    max_iter=scheme.max_iter, v_guess=v_prev)
            if not mag_rep.converged:
                raise StepFailureError(
                    f"magnetization solve diverged at step {i + 1} "
                    f"(residual {mag_rep.residual:.3e})")
            result.max_orthogonality = max(
                result.max_orthogonality,
                float(np.abs(np.sum(v * anchor, axis=1)).max()))

            m_next = update_magnetization(state.m_curr, v, k)
            if skip_displacement:
                u_next, disp_rep = state.u_curr, None
            elif i == 0:
                u_next, disp_rep = newmark.initialize(
                    state.u_curr, state.udot0, state.m_curr, m_next)
            else:
                u_next, disp_rep = newmark.step(
                    state.u_curr, state.u_prev, m_next, state.m_curr,
                    state.m_prev)
            if disp_rep is not None and not disp_rep.converged:
                raise StepFailureError(
                    f"displacement solve diverged at step {i + 1} "
                    f"(residual {disp_rep.residual:.3e})")

            prev = state
            state = SimulationState(
                m_curr=m_next, u_curr=u_next, m_prev=prev.m_curr,
                u_prev=prev.u_curr, udot0=udot0, step_index=i + 1,
                time=(i + 1) * k)
            v_prev = v
            result.state = state
            result.steps_completed = i + 1

            err_l1, err_linf = unit_length_metrics(state.m_curr, ops)
            result.max_err_l1 = max(result.max_err_l1, err_l1)
            result.max_err_linf = max(result.max_err_linf, err_linf)

            for obs in observers:
                obs(prev, state, v, mag_rep, disp_rep)

            if (i + 1) % record_stride == 0 or i + 1 == n_steps:
                rec = _record(ops, material, state, mag_rep.iterations,
                              disp_rep.iterations if disp_rep else 0)
                result.records.append(rec)
                if detect_blowup(rec.total_energy, initial_energy):
                    result.failed = True
                    result.cause = "energy blow-up"
                    return result
    except StepFailureError as exc:
        result.failed, result.cause = True, f"solver divergence: {exc}"
    except SolverBreakdownError as exc:
        result.failed, result.cause = True, f"solver breakdown: {exc}"
    except DegenerateExtrapolationError as exc:
        result.failed, result.cause = True, f"degenerate extrapolation: {exc}"
    except ProjectionError as exc:
        result.failed, result.cause = True, f"projection failure: {exc}"
    return result
