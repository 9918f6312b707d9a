import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magnelast.material import (MaterialParams, constant_field, deviator,
                                elastic_effective_field, hooke, magnetostrain,
                                pulse_field, stress,
                                total_potential_energy_density)

MU, LAM, L100 = 19259.2593, 6046.5116, 3e-3
PARAMS = MaterialParams(alpha=0.1, lambda100=L100, mu=MU, lam=LAM)


def unit_vectors(seed, count=20):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def sym_tensors(seed, count=20, scale=1.0):
    rng = np.random.default_rng(seed)
    a = scale * rng.standard_normal((count, 3, 3))
    return 0.5 * (a + np.transpose(a, (0, 2, 1)))


def test_params_validation():
    with pytest.raises(ValueError):
        MaterialParams(alpha=0.0, lambda100=0.0, mu=1.0, lam=0.0)
    with pytest.raises(ValueError):
        MaterialParams(alpha=0.1, lambda100=0.0, mu=-1.0, lam=0.0)
    with pytest.raises(ValueError):
        MaterialParams(alpha=0.1, lambda100=0.0, mu=1.0, lam=-1.0)


def test_magnetostrain_axis_aligned():
    eps = magnetostrain(np.array([1.0, 0.0, 0.0]), 3e-3)
    assert np.allclose(eps, np.diag([3e-3, -1.5e-3, -1.5e-3]))


def test_magnetostrain_zero_m():
    eps = magnetostrain(np.zeros(3), 3e-3)
    assert np.allclose(eps, -(3e-3 / 2.0) * np.eye(3))


def test_magnetostrain_trace():
    for m in unit_vectors(0):
        assert abs(np.trace(magnetostrain(m, L100))) < 1e-15
    m = np.array([0.5, 0.5, 0.0])
    tr = np.trace(magnetostrain(m, L100))
    assert tr == pytest.approx(1.5 * L100 * (m @ m - 1.0), rel=1e-12)


def test_hooke_identity_and_traceless():
    assert np.allclose(hooke(np.eye(3), MU, LAM), (2 * MU + 3 * LAM) * np.eye(3))
    dev = np.array([[1.0, 0.5, 0.0], [0.5, -1.0, 0.2], [0.0, 0.2, 0.0]])
    assert np.allclose(hooke(dev, MU, LAM), 2 * MU * dev)
    assert np.allclose(hooke(np.zeros((3, 3)), MU, LAM), 0.0)


def test_stress_free_strain():
    m = np.array([0.3, -0.9, 0.4])
    m /= np.linalg.norm(m)
    assert np.abs(stress(magnetostrain(m, L100), m, PARAMS)).max() < 1e-15


def test_stress_compositions():
    s = stress(np.eye(3), np.zeros(3), PARAMS)
    expected = (2 * MU + 3 * LAM) * np.eye(3) * (1.0 + L100 / 2.0)
    assert np.allclose(s, expected, rtol=1e-12)

    s = stress(np.zeros((3, 3)), np.array([1.0, 0.0, 0.0]), PARAMS)
    assert np.allclose(s, -2 * MU * np.diag([3e-3, -1.5e-3, -1.5e-3]), rtol=1e-12)
    assert abs(np.trace(s)) < 1e-12 * MU


def test_effective_field_hydrostatic_vanishes():
    out = elastic_effective_field(4.2 * np.eye(3), np.array([0.1, 0.2, 0.3]), L100)
    assert np.abs(out).max() < 1e-15


def test_effective_field_uniaxial():
    s = np.diag([2.0, 0.0, 0.0])
    out = elastic_effective_field(s, np.array([1.0, 0.0, 0.0]), L100)
    assert np.allclose(out, [2 * L100 * 2.0, 0.0, 0.0], rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_adjoint_identity_validates_closed_form(seed):
    # <Z:(m x m), sigma> = <m x m, Z^T:sigma> with Z the linear deviatoric
    # magnetostriction operator; both sides evaluated independently
    rng = np.random.default_rng(seed)
    m = rng.standard_normal(3)
    sigma = sym_tensors(seed, 1)[0]
    outer = np.outer(m, m)
    z_mm = 1.5 * L100 * (outer - np.trace(outer) * np.eye(3) / 3.0)
    lhs = np.sum(z_mm * sigma)
    zt_sigma = 1.5 * L100 * deviator(sigma)
    rhs = np.sum(outer * zt_sigma)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-15)
    # and the field term is 2 Z^T:sigma m
    field = elastic_effective_field(sigma, m, L100)
    assert np.allclose(field, 2.0 * zt_sigma @ m, rtol=1e-12, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_hooke_self_adjoint(seed):
    a, b = sym_tensors(seed, 2)
    lhs = np.sum(hooke(a, MU, LAM) * b)
    rhs = np.sum(a * hooke(b, MU, LAM))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_hooke_coercive_on_traceless(seed):
    a = sym_tensors(seed, 1)[0]
    a -= np.trace(a) * np.eye(3) / 3.0
    val = np.sum(hooke(a, MU, LAM) * a)
    assert val >= 2 * MU * np.sum(a * a) * (1 - 1e-12)


def test_effective_field_matches_energy_gradient():
    # central finite differences of the elastic energy density with the
    # linear magnetostriction operator inside reproduce the closed form
    rng = np.random.default_rng(42)
    eps_u = sym_tensors(3, 1, scale=5e-3)[0]

    def energy(m):
        outer = np.outer(m, m)
        eps_m = 1.5 * L100 * (outer - np.trace(outer) * np.eye(3) / 3.0)
        e = eps_u - eps_m
        return 0.5 * np.sum(hooke(e, MU, LAM) * e)

    for m in unit_vectors(7, count=5):
        sigma = stress(eps_u, m, PARAMS)
        field = elastic_effective_field(sigma, m, L100)
        h = 1e-6
        grad = np.zeros(3)
        for c in range(3):
            dm = np.zeros(3)
            dm[c] = h
            grad[c] = (energy(m + dm) - energy(m - dm)) / (2 * h)
        assert np.abs(-grad - field).max() < 1e-6 * max(np.abs(field).max(), 1.0)


def test_energy_density_closed_forms():
    m = np.array([1.0, 0.0, 0.0])
    f = np.array([1.0, 0.0, 0.0])
    val = total_potential_energy_density(np.zeros((3, 3)), m, np.zeros((3, 3)),
                                         f, PARAMS)
    assert val == pytest.approx(-1.0 + 1.5 * MU * L100 ** 2, rel=1e-12)

    val = total_potential_energy_density(magnetostrain(m, L100), m,
                                         np.zeros((3, 3)), np.zeros(3), PARAMS)
    assert val == pytest.approx(0.0, abs=1e-15)

    zero_mat = MaterialParams(alpha=0.1, lambda100=0.0, mu=MU, lam=LAM)
    val = total_potential_energy_density(np.zeros((3, 3)), np.zeros(3),
                                         np.zeros((3, 3)), np.array([3.0, 0, 0]),
                                         zero_mat)
    assert val == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_energy_density_nonnegative_without_field(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal(3)
    eps = sym_tensors(seed + 1, 1, scale=1e-2)[0]
    grad_m = rng.standard_normal((3, 3))
    val = total_potential_energy_density(eps, m, grad_m, np.zeros(3), PARAMS)
    assert val >= -1e-12


def test_field_factories():
    f = constant_field((1.0, 2.0, 3.0))
    assert np.array_equal(f(0.0), [1.0, 2.0, 3.0])
    assert np.array_equal(f(17.3), [1.0, 2.0, 3.0])

    p = pulse_field(base=(1.0, 0.0, 0.0))
    assert p(0.15)[1] == pytest.approx(1.0)
    assert p(0.25)[1] == pytest.approx(0.5)
    assert p(0.35)[1] == 0.0
    assert p(0.05)[1] == pytest.approx(0.5)
    assert np.array_equal(p(10.0), [1.0, 0.0, 0.0])
