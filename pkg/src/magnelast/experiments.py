"""Named experiments: convergence studies, energy behavior, nutation and the
stability grid, each emitting CSV files and returning structured results.

CSV numbers carry 17 significant digits so repeated runs are bit-identical.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .fem import MeshOperators, h1_error, interpolate
from .integrator import RunResult, run
from .magnetization import nodal_project
from .material import MaterialParams, constant_field, pulse_field
from .mesh import build_structured_cube

TIMESERIES_COLUMNS = ("t", "totalenergy", "x_mag_avg", "y_mag_avg", "z_mag_avg",
                      "x_disp_avg", "y_disp_avg", "z_disp_avg", "err_L1")


class ExperimentFailure(Exception):
    """A run that the experiment protocol requires to succeed has failed."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def write_timeseries(path, records) -> None:
    rows = [(r.t, r.total_energy, r.mag_avg[0], r.mag_avg[1], r.mag_avg[2],
             r.disp_avg[0], r.disp_avg[1], r.disp_avg[2], r.err_l1_unit)
            for r in records]
    write_csv(path, TIMESERIES_COLUMNS, rows)


def observed_orders(errors) -> list[float]:
    """log2 ratios of successive errors under time-step halving."""
    errors = np.asarray(errors, float)
    return [float(np.log2(errors[i] / errors[i + 1]))
            for i in range(len(errors) - 1)]


def mean_order(errors, last: int | None = None) -> float:
    orders = observed_orders(errors)
    if last is not None:
        orders = orders[-last:]
    return float(np.mean(orders))


# initial data ----------------------------------------------------------------

_EXPR_NS = {name: getattr(np, name) for name in
            ("sin", "cos", "tan", "exp", "sqrt", "abs", "tanh", "log",
             "arctan", "where", "minimum", "maximum")}
_EXPR_NS["pi"] = np.pi


def _split_components(expr: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in expr:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def evaluate_expression_field(mesh, expr: str) -> np.ndarray:
    """Three comma-separated numpy expressions in x, y, z, one per component."""
    parts = _split_components(expr)
    if len(parts) != 3:
        raise ValueError(f"expected 3 comma-separated components, got {len(parts)}")

    def fn(x, y, z):
        ns = dict(_EXPR_NS, x=x, y=y, z=z)
        return tuple(eval(p, {"__builtins__": {}}, ns) for p in parts)  # noqa: S307

    return interpolate(mesh, fn)


def helical_datum(mesh) -> np.ndarray:
    """Nodally unit swirl used by the constraint and stability studies."""
    scale = 5.0 / np.sqrt(26.0)
    return interpolate(mesh, lambda x, y, z: (
        np.full_like(x, 0.2 * scale),
        scale * np.sin(4.0 * (x + y + z)),
        scale * np.cos(4.0 * (x + y + z))))


def build_material(cfg: ExperimentConfig) -> MaterialParams:
    if cfg.zeeman_kind == "pulse":
        zee = pulse_field(base=cfg.zeeman_value, component=cfg.pulse_component,
                          height=cfg.pulse_height, t_ramp=cfg.pulse_ramp,
                          t_hold=cfg.pulse_hold, t_fall=cfg.pulse_fall)
    else:
        zee = constant_field(cfg.zeeman_value)
    return MaterialParams(alpha=cfg.alpha, lambda100=cfg.lambda100,
                          mu=cfg.mu, lam=cfg.lam, zeeman=zee)


def build_initial_data(cfg: ExperimentConfig, mesh):
    if cfg.m_kind == "uniform":
        m0 = np.tile(np.asarray(cfg.m_value, float), (mesh.num_nodes, 1))
    elif cfg.m_kind == "helical":
        m0 = helical_datum(mesh)
    else:
        m0 = evaluate_expression_field(mesh, cfg.m_expr)
    if cfg.m_normalize:
        m0 = nodal_project(m0)

    zeros = np.zeros((mesh.num_nodes, 3))
    u0 = (evaluate_expression_field(mesh, cfg.u_expr)
          if cfg.u_kind == "expr" else zeros)
    udot0 = (evaluate_expression_field(mesh, cfg.udot_expr)
             if cfg.udot_kind == "expr" else zeros)
    return m0, u0, udot0


def _stride(cfg: ExperimentConfig) -> int | None:
    return None if cfg.stride == 0 else cfg.stride


def _run_or_fail(label, *args, **kwargs) -> RunResult:
    result = run(*args, **kwargs)
    if result.failed:
        raise ExperimentFailure(f"{label} failed: {result.cause}")
    return result


# experiments ------------------------------------------------------------------

@dataclass
class ConvergenceResult:
    inv_k: list[float]
    err_m: list[float]
    err_u: list[float]

    @property
    def orders_m(self):
        return observed_orders(self.err_m)

    @property
    def orders_u(self):
        return observed_orders(self.err_u)


def cmd_convergence_time(cfg: ExperimentConfig, out_dir=None,
                         threads: int = 1) -> ConvergenceResult:
    """Self-convergence of the final-time H1 error under time-step halving.

    Runs k * 2^-i for i = 0..halvings plus a reference run at
    k * 2^-reference_halvings, and reports errors of both fields against the
    reference at t = T.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    mesh = build_structured_cube(cfg.mesh_n, cfg.mesh_side)
    ops = MeshOperators(mesh)
    material = build_material(cfg)
    m0, u0, udot0 = build_initial_data(cfg, mesh)

    steps = list(range(cfg.halvings + 1)) + [cfg.reference_halvings]

    def one(i):
        k = cfg.k * 2.0 ** (-i)
        scheme = cfg.build_scheme(k=k)
        return _run_or_fail(f"k = {k:g}", ops, material, scheme, cfg.T,
                            m0, u0, udot0, record_stride=10 ** 9)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, steps))
    else:
        results = [one(i) for i in steps]
    reference = results[-1]

    inv_k, err_m, err_u = [], [], []
    for i, res in zip(steps[:-1], results[:-1]):
        inv_k.append(2.0 ** i / cfg.k)
        err_m.append(h1_error(ops.stiffness, ops.mass,
                              res.state.m_curr, reference.state.m_curr))
        err_u.append(h1_error(ops.stiffness, ops.mass,
                              res.state.u_curr, reference.state.u_curr))
    write_csv(out_dir / f"convergence_{cfg.preset}.csv",
              ("inv_k", "err_m_H1", "err_u_H1"),
              zip(inv_k, err_m, err_u))
    return ConvergenceResult(inv_k, err_m, err_u)


@dataclass
class UnitLengthResult:
    inv_k: list[float]
    err_l1: list[float]
    err_linf: list[float]

    @property
    def orders_l1(self):
        return observed_orders(self.err_l1)


def cmd_unit_length(cfg: ExperimentConfig, out_dir=None,
                    threads: int = 1) -> UnitLengthResult:
    """Largest unit-length violation over all steps, per time-step size."""
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    mesh = build_structured_cube(cfg.mesh_n, cfg.mesh_side)
    ops = MeshOperators(mesh)
    material = build_material(cfg)
    m0, u0, udot0 = build_initial_data(cfg, mesh)

    def one(i):
        k = cfg.k * 2.0 ** (-i)
        scheme = cfg.build_scheme(k=k)
        return _run_or_fail(f"k = {k:g}", ops, material, scheme, cfg.T,
                            m0, u0, udot0, record_stride=10 ** 9)

    steps = list(range(cfg.halvings + 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, steps))
    else:
        results = [one(i) for i in steps]

    inv_k = [2.0 ** i / cfg.k for i in steps]
    err_l1 = [r.max_err_l1 for r in results]
    err_linf = [r.max_err_linf for r in results]
    write_csv(out_dir / f"unit_length_{cfg.preset}.csv",
              ("inv_k", "err_L1", "err_Linf"), zip(inv_k, err_l1, err_linf))
    return UnitLengthResult(inv_k, err_l1, err_linf)


def cmd_energy_dissipation(cfg: ExperimentConfig, out_dir=None, threads: int = 1,
                           presets=("midpoint-newmark", "nr2025")) -> dict:
    """Long-horizon energy traces for both schemes across the k list.

    Returns {(preset, k): RunResult} and writes one time-series CSV per run.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    mesh = build_structured_cube(cfg.mesh_n, cfg.mesh_side)
    ops = MeshOperators(mesh)
    material = build_material(cfg)
    m0, u0, udot0 = build_initial_data(cfg, mesh)
    k_list = cfg.k_list if cfg.k_list else (cfg.k,)

    tasks = [(preset, k) for preset in presets for k in k_list]

    def one(task):
        preset, k = task
        sub = replace(cfg, preset=preset, beta=None, gamma=None)
        scheme = sub.build_scheme(k=k)
        return task, _run_or_fail(f"{preset} at k = {k:g}", ops, material,
                                  scheme, cfg.T, m0, u0, udot0,
                                  record_stride=_stride(cfg))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(one, tasks))
    else:
        done = [one(t) for t in tasks]

    results = {}
    for (preset, k), res in done:
        results[(preset, k)] = res
        write_timeseries(out_dir / f"energy_{preset}_k{k:g}.csv", res.records)
    return results


@dataclass
class NutationResult:
    phase1: RunResult
    phase2: RunResult
    phase1_converged: bool


def cmd_nutation(cfg: ExperimentConfig, out_dir=None) -> NutationResult:
    """Relax to a minimizer without precession, then kick it with a field
    pulse and follow the response.

    Phase 1 runs the minimization preset from a uniform magnetization and a
    uniformly stretched displacement; phase 2 projects the relaxed
    magnetization, zeroes the velocity and integrates the production scheme
    under the pulsed field.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    mesh = build_structured_cube(cfg.mesh_n, cfg.mesh_side)
    ops = MeshOperators(mesh)

    lam_m = cfg.lambda_m if cfg.lambda_m is not None else cfg.lambda100
    m0 = np.tile((1.0, 0.0, 0.0), (mesh.num_nodes, 1))
    u0 = np.zeros((mesh.num_nodes, 3))
    u0[:, 0] = lam_m * mesh.nodes[:, 0]
    zeros = np.zeros((mesh.num_nodes, 3))

    relax_material = MaterialParams(
        alpha=cfg.phase1_alpha, lambda100=cfg.lambda100, mu=cfg.mu, lam=cfg.lam,
        zeeman=constant_field(cfg.zeeman_value))
    relax_scheme = replace(cfg, preset="minimization", beta=None,
                           gamma=None).build_scheme(k=cfg.phase1_k)
    phase1 = _run_or_fail("minimization phase", ops, relax_material,
                          relax_scheme, cfg.phase1_T, m0, u0, zeros,
                          record_stride=_stride(cfg))
    last, prev = phase1.records[-1], phase1.records[-2]
    steps_apart = max(round((last.t - prev.t) / relax_scheme.k), 1)
    de_per_step = abs(last.total_energy - prev.total_energy) / steps_apart
    converged = de_per_step <= 1e-8
    if not converged:
        warnings.warn(f"minimization phase still moving: |dE| = "
                      f"{de_per_step:.2e} per step at T = {cfg.phase1_T}")
    write_timeseries(out_dir / "nutation_phase1.csv", phase1.records)

    material = build_material(cfg)  # pulsed field
    m_relaxed = nodal_project(phase1.state.m_curr)
    u_relaxed = phase1.state.u_curr
    scheme = replace(cfg, preset="midpoint-newmark").build_scheme(k=cfg.k)
    phase2 = _run_or_fail("pulse phase", ops, material, scheme, cfg.T,
                          m_relaxed, u_relaxed, zeros,
                          record_stride=_stride(cfg))
    write_timeseries(out_dir / "nutation_phase2.csv", phase2.records)
    return NutationResult(phase1, phase2, converged)


@dataclass
class StabilityResult:
    """final_energy[(beta, n, k)] is the end energy or None on failure."""

    n_list: tuple
    k_list: tuple
    beta_list: tuple
    h_list: list[float]
    final_energy: dict

    def failed(self, beta, n, k) -> bool:
        return self.final_energy[(beta, n, k)] is None

    def table(self, beta) -> str:
        lines = ["k\\h " + " ".join(f"{h:8.3f}" for h in self.h_list)]
        for k in self.k_list:
            cells = []
            for n in self.n_list:
                e = self.final_energy[(beta, n, k)]
                cells.append("    Fail" if e is None else f"{e:8.3f}")
            lines.append(f"{k:<8g} " + " ".join(cells))
        return "\n".join(lines)


def cmd_stability(cfg: ExperimentConfig, out_dir=None,
                  threads: int = 1) -> StabilityResult:
    """Final energy or Fail over the (mesh, time-step) grid per beta value."""
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    material = build_material(cfg)
    ops_by_n = {n: MeshOperators(build_structured_cube(n, cfg.mesh_side))
                for n in cfg.stability_n_list}

    tasks = [(beta, n, k) for beta in cfg.stability_beta_list
             for n in cfg.stability_n_list for k in cfg.stability_k_list]

    def one(task):
        beta, n, k = task
        ops = ops_by_n[n]
        m0, u0, udot0 = build_initial_data(cfg, ops.mesh)
        scheme = cfg.build_scheme(k=k, beta=beta)
        res = run(ops, material, scheme, cfg.T, m0, u0, udot0,
                  record_stride=_stride(cfg))
        return task, (None if res.failed else res.final_energy)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(one, tasks))
    else:
        done = [one(t) for t in tasks]

    result = StabilityResult(
        n_list=tuple(cfg.stability_n_list), k_list=tuple(cfg.stability_k_list),
        beta_list=tuple(cfg.stability_beta_list),
        h_list=[ops_by_n[n].mesh.h_max for n in cfg.stability_n_list],
        final_energy=dict(done))
    for beta in cfg.stability_beta_list:
        rows = []
        for k in cfg.stability_k_list:
            row = [float(k)]
            for n in cfg.stability_n_list:
                e = result.final_energy[(beta, n, k)]
                row.append("Fail" if e is None else float(e))
            rows.append(row)
        header = ["k"] + [f"h={h:.3g}" for h in result.h_list]
        write_csv(out_dir / f"stability_beta{beta:g}.csv", header, rows)
    return result


def cmd_single_run(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """One simulation straight from the config, time series to CSV."""
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    mesh = build_structured_cube(cfg.mesh_n, cfg.mesh_side)
    ops = MeshOperators(mesh)
    material = build_material(cfg)
    m0, u0, udot0 = build_initial_data(cfg, mesh)
    scheme = cfg.build_scheme()
    result = run(ops, material, scheme, cfg.T, m0, u0, udot0,
                 record_stride=_stride(cfg))
    write_timeseries(out_dir / "timeseries.csv", result.records)
    return result
