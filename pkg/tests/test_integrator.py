import numpy as np
import pytest

from magnelast.fem import MeshOperators, interpolate
from magnelast.integrator import (SchemeParams, SimulationState, averages,
                                  detect_blowup, energy_components, run,
                                  unit_length_metrics)
from magnelast.magnetization import nodal_project
from magnelast.material import MaterialParams, constant_field
from magnelast.mesh import build_structured_cube

from .oracles import cube_gauss_quadrature, midpoint_identity_residual

MU, LAM, L100 = 19259.2593, 6046.5116, 3e-3


def material(lambda100=L100, f=(1.0, 0.0, 0.0), alpha=0.1):
    return MaterialParams(alpha=alpha, lambda100=lambda100, mu=MU, lam=LAM,
                          zeeman=constant_field(f))


def uniform_m(mesh, direction=(1.0, 0.0, 0.0)):
    return np.tile(np.asarray(direction, float), (mesh.num_nodes, 1))


@pytest.fixture(scope="module")
def ops2():
    return MeshOperators(build_structured_cube(2))


def test_equilibrium_state_stays_put(ops2):
    # uniform magnetization aligned with the field, displacement at its
    # elastic equilibrium (zero for decoupled material): nothing may move
    mat = material(lambda100=0.0)
    m0 = uniform_m(ops2.mesh)
    scheme = SchemeParams.midpoint_newmark(k=1e-3)
    res = run(ops2, mat, scheme, T=0.05, m0=m0)
    assert not res.failed
    assert np.abs(res.state.m_curr - m0).max() < 1e-8
    assert np.abs(res.state.u_curr).max() < 1e-8
    energies = [r.total_energy for r in res.records]
    assert np.abs(np.diff(energies)).max() < 1e-10


def test_decoupled_magnetization_ignores_displacement(ops2):
    mat = material(lambda100=0.0)
    rng = np.random.default_rng(0)
    m0 = nodal_project(rng.standard_normal((ops2.mesh.num_nodes, 3)))
    udot0 = interpolate(ops2.mesh, lambda x, y, z: (0.1 * np.sin(np.pi * y),
                                                    0.0 * x, 0.1 * x))
    scheme = SchemeParams.midpoint_newmark(k=1e-3)
    with_u = run(ops2, mat, scheme, T=0.02, m0=m0, udot0=udot0)
    without_u = run(ops2, mat, scheme, T=0.02, m0=m0, udot0=udot0,
                    skip_displacement=True)
    assert not with_u.failed and not without_u.failed
    assert np.abs(with_u.state.u_curr).max() > 0  # displacement did move
    assert np.array_equal(with_u.state.m_curr, without_u.state.m_curr)


def test_initial_energy_closed_form(ops2):
    mat = material()
    m0 = uniform_m(ops2.mesh)
    state = SimulationState(m_curr=m0, u_curr=np.zeros_like(m0), m_prev=None,
                            u_prev=None, udot0=np.zeros_like(m0),
                            step_index=0, time=0.0)
    en = energy_components(ops2, mat, state)
    assert en.total == pytest.approx(-1.0 + 1.5 * MU * L100 ** 2, rel=1e-12)
    assert en.exchange == pytest.approx(0.0, abs=1e-12)
    assert en.kinetic == 0.0


def test_zero_state_zero_energy(ops2):
    mat = material(lambda100=0.0, f=(0.0, 0.0, 0.0))
    m0 = uniform_m(ops2.mesh, (0.0, 0.0, 1.0))
    state = SimulationState(m_curr=m0, u_curr=np.zeros_like(m0), m_prev=None,
                            u_prev=None, udot0=np.zeros_like(m0),
                            step_index=0, time=0.0)
    en = energy_components(ops2, mat, state)
    assert en.total == pytest.approx(0.0, abs=1e-13)


def test_record_total_is_component_sum(ops2):
    mat = material()
    res = run(ops2, mat, SchemeParams.midpoint_newmark(k=1e-3), T=0.01,
              m0=uniform_m(ops2.mesh))
    for r in res.records:
        parts = (r.exchange_energy + r.zeeman_energy + r.elastic_energy
                 + r.kinetic_energy)
        assert r.total_energy == pytest.approx(parts, abs=1e-12)


def test_unit_length_metrics_examples(ops2):
    m = uniform_m(ops2.mesh)
    assert unit_length_metrics(m, ops2) == (0.0, 0.0)
    m = uniform_m(ops2.mesh, (1.1, 0.0, 0.0))
    err_l1, err_linf = unit_length_metrics(m, ops2)
    assert err_l1 == pytest.approx(0.21, rel=1e-12)
    assert err_linf == pytest.approx(0.1, rel=1e-12)
    err_l1, err_linf = unit_length_metrics(nodal_project(m), ops2)
    assert err_l1 < 1e-14 and abs(err_linf) < 1e-14


def test_averages(ops2):
    mesh = ops2.mesh
    c = np.array([0.3, -0.2, 0.9])
    assert np.allclose(averages(uniform_m(mesh, c), ops2), c, rtol=1e-12)
    fld = np.zeros((mesh.num_nodes, 3))
    fld[:, 0] = mesh.nodes[:, 0]
    assert np.allclose(averages(fld, ops2), [0.5, 0.0, 0.0], atol=1e-12)
    assert np.allclose(averages(np.zeros_like(fld), ops2), 0.0)


def test_detect_blowup():
    assert detect_blowup(np.nan, -0.74)
    assert detect_blowup(np.inf, -0.74)
    assert not detect_blowup(-1.5, -0.74)
    assert detect_blowup(1e7 * 0.74, -0.74)


def test_helical_exchange_energy_vs_quadrature_oracle():
    # the analytic integrand of the swirl datum is constant; Richardson
    # extrapolation of the discrete exchange over two meshes must land on it
    scale = 5.0 / np.sqrt(26.0)
    exact = cube_gauss_quadrature(
        lambda x, y, z: 0.5 * 3 * scale ** 2 * 16.0, order=4)

    def discrete(n):
        ops = MeshOperators(build_structured_cube(n))
        m = interpolate(ops.mesh, lambda x, y, z: (
            np.full_like(x, 0.2 * scale), scale * np.sin(4 * (x + y + z)),
            scale * np.cos(4 * (x + y + z))))
        return 0.5 * np.sum(m * (ops.stiffness @ m))

    e8, e16 = discrete(8), discrete(16)
    extrapolated = (4 * e16 - e8) / 3.0
    assert extrapolated == pytest.approx(exact, rel=1e-2)
    assert abs(e16 - exact) < abs(e8 - exact)


def test_midpoint_energy_identity_short_run(ops2):
    mat = material()
    residuals = []

    def observer(prev, state, v, mag_rep, disp_rep):
        residuals.append(midpoint_identity_residual(ops2, mat, 1e-3, prev,
                                                    state, v))

    res = run(ops2, mat, SchemeParams.midpoint_newmark(k=1e-3), T=0.03,
              m0=uniform_m(ops2.mesh), observers=[observer])
    assert not res.failed
    assert len(residuals) == 30
    assert max(residuals) <= 1e-8


def test_unit_violation_growth_bound(ops2):
    # nodal triangle inequality: the violation gains at most the cross and
    # square terms of the update
    from magnelast.experiments import helical_datum
    mat = material()
    k = 1e-2
    bound_ok = []

    def observer(prev, state, v, mag_rep, disp_rep):
        before = ops2.weights @ np.abs(
            np.einsum("ni,ni->n", prev.m_curr, prev.m_curr) - 1.0)
        after = ops2.weights @ np.abs(
            np.einsum("ni,ni->n", state.m_curr, state.m_curr) - 1.0)
        cross = 2 * k * (ops2.weights @ np.abs(
            np.einsum("ni,ni->n", prev.m_curr, v)))
        sq = k ** 2 * (ops2.weights @ np.einsum("ni,ni->n", v, v))
        bound_ok.append(after <= before + cross + sq + 1e-14)

    res = run(ops2, mat, SchemeParams.midpoint_newmark(k=k), T=0.2,
              m0=helical_datum(ops2.mesh), observers=[observer])
    assert not res.failed
    assert all(bound_ok)


def test_first_order_energy_monotone(ops2):
    mat = material()
    res = run(ops2, mat, SchemeParams.nr2025(k=1e-2), T=1.0,
              m0=uniform_m(ops2.mesh))
    assert not res.failed
    energies = np.array([r.total_energy for r in res.records])
    assert np.all(np.diff(energies) <= 1e-12 * abs(energies[0]))


def test_runs_are_deterministic(ops2):
    mat = material()
    scheme = SchemeParams.midpoint_newmark(k=1e-3)
    r1 = run(ops2, mat, scheme, T=0.01, m0=uniform_m(ops2.mesh))
    r2 = run(ops2, mat, scheme, T=0.01, m0=uniform_m(ops2.mesh))
    e1 = [r.total_energy for r in r1.records]
    e2 = [r.total_energy for r in r2.records]
    assert e1 == e2


def test_explicit_scheme_blows_up_and_is_flagged():
    from magnelast.experiments import helical_datum
    mesh = build_structured_cube(4)
    ops = MeshOperators(mesh)
    mat = material()
    scheme = SchemeParams.midpoint_newmark(k=0.05, beta=0.0)
    res = run(ops, mat, scheme, T=1.0, m0=helical_datum(mesh))
    assert res.failed
    assert res.cause is not None
    assert res.steps_completed < 20
    assert len(res.records) >= 1


def test_input_validation(ops2):
    mat = material()
    scheme = SchemeParams.midpoint_newmark(k=3e-3)
    with pytest.raises(ValueError, match="divide"):
        run(ops2, mat, scheme, T=0.01, m0=uniform_m(ops2.mesh))
    scheme = SchemeParams.midpoint_newmark(k=1e-3)
    with pytest.raises(ValueError, match="unit length"):
        run(ops2, mat, scheme, T=0.01,
            m0=1.2 * uniform_m(ops2.mesh))
    bad_u = np.ones((ops2.mesh.num_nodes, 3))
    with pytest.raises(ValueError, match="clamped"):
        run(ops2, mat, scheme, T=0.01, m0=uniform_m(ops2.mesh), u0=bad_u)


def test_time_and_step_bookkeeping(ops2):
    mat = material()
    res = run(ops2, mat, SchemeParams.midpoint_newmark(k=1e-3), T=0.01,
              m0=uniform_m(ops2.mesh))
    assert res.steps_completed == 10
    assert res.state.time == pytest.approx(0.01)
    assert res.records[-1].t == pytest.approx(0.01)
    assert res.records[0].t == 0.0
