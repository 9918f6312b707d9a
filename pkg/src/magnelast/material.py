"""Isotropic magnetoelastic material law.

All quantities are dimensionless.  The magnetostriction operator is the
isochoric isotropic one, so the magnetostrain is
(3/2) * lambda100 * (m (x) m - I/3) and its contribution to the effective
field reduces to the closed form 3 * lambda100 * dev(sigma) m, with dev the
stress deviator.  Hooke's law is C:e = 2 mu e + lambda tr(e) I.

Functions accept stacked inputs: m of shape (..., 3), tensors (..., 3, 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_I3 = np.eye(3)


def constant_field(value) -> Callable[[float], np.ndarray]:
    """Zeeman field constant in time."""
    vec = np.asarray(value, float).reshape(3)

    def f(t: float) -> np.ndarray:
        return vec

    return f


def pulse_field(base=(1.0, 0.0, 0.0), component: int = 1, height: float = 1.0,
                t_ramp: float = 0.1, t_hold: float = 0.1, t_fall: float = 0.1):
    """Trapezoidal pulse added to one component of a constant base field.

    The pulse rises linearly to `height` over [0, t_ramp], holds until
    t_ramp + t_hold, falls linearly back to zero at t_ramp + t_hold + t_fall,
    and is zero afterwards.
    """
    base = np.asarray(base, float).reshape(3)
    t1, t2, t3 = t_ramp, t_ramp + t_hold, t_ramp + t_hold + t_fall

    def f(t: float) -> np.ndarray:
        if t <= 0.0 or t >= t3:
            h = 0.0
        elif t < t1:
            h = height * t / t_ramp
        elif t <= t2:
            h = height
        else:
            h = height * (t3 - t) / t_fall
        out = base.copy()
        out[component] += h
        return out

    return f


@dataclass
class MaterialParams:
    """Dimensionless material parameters.

    alpha : Gilbert damping (> 0)
    lambda100 : saturation magnetostrain
    mu, lam : Lame constants (mu > 0, 2 mu + 3 lam > 0)
    zeeman : t -> applied field vector (spatially constant)
    """

    alpha: float
    lambda100: float
    mu: float
    lam: float
    zeeman: Callable[[float], np.ndarray] = field(
        default_factory=lambda: constant_field((0.0, 0.0, 0.0))
    )

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 2 * self.mu + 3 * self.lam > 0:
            raise ValueError("2*mu + 3*lambda must be positive for a "
                             "positive definite elastic tensor")


def magnetostrain(m, lambda100: float) -> np.ndarray:
    """Spontaneous strain (3/2) lambda100 (m (x) m - I/3)."""
    m = np.asarray(m, float)
    outer = m[..., :, None] * m[..., None, :]
    return 1.5 * lambda100 * (outer - _I3 / 3.0)


def hooke(eps, mu: float, lam: float) -> np.ndarray:
    """Isotropic stress 2 mu eps + lambda tr(eps) I."""
    eps = np.asarray(eps, float)
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return 2.0 * mu * eps + lam * tr[..., None, None] * _I3


def stress(eps_u, m, params: MaterialParams) -> np.ndarray:
    """Hooke stress of the elastic strain eps(u) - eps_m(m)."""
    return hooke(np.asarray(eps_u, float) - magnetostrain(m, params.lambda100),
                 params.mu, params.lam)


def deviator(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, float)
    tr = np.trace(sigma, axis1=-2, axis2=-1)
    return sigma - (tr / 3.0)[..., None, None] * _I3


def elastic_effective_field(sigma, m, lambda100: float) -> np.ndarray:
    """Magnetoelastic effective-field contribution 3 lambda100 dev(sigma) m.

    This is the closed form of twice the adjoint magnetostriction operator
    applied to the stress and contracted with m; it is linear in both
    arguments.
    """
    dev = deviator(sigma)
    m = np.asarray(m, float)
    return 3.0 * lambda100 * np.einsum("...ij,...j->...i", dev, m)


def total_potential_energy_density(eps_u, m, grad_m, f, params: MaterialParams):
    """Pointwise energy density: exchange + Zeeman + elastic mismatch.

    grad_m is the 3x3 Jacobian of m; f the applied field vector.
    """
    grad_m = np.asarray(grad_m, float)
    m = np.asarray(m, float)
    exch = 0.5 * np.einsum("...ij,...ij->...", grad_m, grad_m)
    zee = -np.einsum("...i,...i->...", np.broadcast_to(np.asarray(f, float), m.shape), m)
    eps_el = np.asarray(eps_u, float) - magnetostrain(m, params.lambda100)
    elast = 0.5 * np.einsum("...ij,...ij->...", hooke(eps_el, params.mu, params.lam), eps_el)
    return exch + zee + elast
