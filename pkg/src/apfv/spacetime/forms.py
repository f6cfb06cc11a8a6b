r"""
Flux fields
-----------

A flux field on the cylinder :math:`[0, T] \times S^1` is a one-parameter
family of 1-forms

.. math::

    \omega(\bar u) = \omega_0(\bar u; t, \theta)\, d\theta
                   + \omega_1(\bar u; t, \theta)\, dt,

and the conservation law reads :math:`d(\omega(u)) = 0`, i.e.
:math:`\partial_t \omega_0(u) - \partial_\theta \omega_1(u) = 0` with
``dt ^ dtheta`` positively oriented. All callables broadcast over their
three arguments.

.. autoclass:: FluxField1Form
.. autoclass:: SpacetimeMap
.. autofunction:: pullback_flux
.. autofunction:: geometry_compatibility_check
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from apfv.errors import DomainError

Coefficient = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FluxField1Form:
    omega0: Coefficient
    omega1: Coefficient
    d_omega0: Coefficient
    d_omega1: Coefficient
    name: str = ""

    def hyperbolicity_margin(self, t, theta):
        """``min d omega0/du (0; t, theta)`` over the given points."""
        z = np.zeros(np.broadcast(t, theta).shape)
        return float(np.min(self.d_omega0(z, t, theta)))


# {{{ presets

def flat_burgers() -> FluxField1Form:
    """Burgers' equation ``u_t + (u^2/2)_theta = 0`` embedded as a flux field."""
    return FluxField1Form(
        omega0=lambda u, t, th: u + 0 * (t + th),
        omega1=lambda u, t, th: -0.5 * u * u + 0 * (t + th),
        d_omega0=lambda u, t, th: np.ones(np.broadcast(u, t, th).shape),
        d_omega1=lambda u, t, th: -u + 0 * (t + th),
        name="flat-burgers",
    )


def variable_coefficient(amplitude=0.5, cubic=0.1) -> FluxField1Form:
    """``omega0 = (1 + a sin theta) u + c u^3``, ``omega1 = -u^2/2``."""
    if not abs(amplitude) < 1:
        raise DomainError("amplitude must be below 1 for hyperbolicity")
    if cubic < 0:
        raise DomainError("cubic coefficient must be nonnegative")
    return FluxField1Form(
        omega0=lambda u, t, th: (1 + amplitude * np.sin(th)) * u + cubic * u**3 + 0 * t,
        omega1=lambda u, t, th: -0.5 * u * u + 0 * (t + th),
        d_omega0=lambda u, t, th: 1 + amplitude * np.sin(th) + 3 * cubic * u * u + 0 * t,
        d_omega1=lambda u, t, th: -u + 0 * (t + th),
        name="variable-coefficient",
    )

# }}}


# {{{ pullback

@dataclass(frozen=True)
class SpacetimeMap:
    """Smooth map ``(t, theta) -> (T, Theta)`` of the cylinder.

    ``jacobian(t, theta)`` returns ``(T_t, T_theta, Theta_t, Theta_theta)``.
    """

    forward: Callable[[np.ndarray, np.ndarray], tuple]
    jacobian: Callable[[np.ndarray, np.ndarray], tuple]
    inverse: Callable[[np.ndarray, np.ndarray], tuple] | None = None
    name: str = ""


def identity_map() -> SpacetimeMap:
    one = np.ones_like
    zero = np.zeros_like
    return SpacetimeMap(
        forward=lambda t, th: (t + 0 * th, th + 0 * t),
        jacobian=lambda t, th: (one(t + th), zero(t + th), zero(t + th), one(t + th)),
        inverse=lambda t, th: (t + 0 * th, th + 0 * t),
        name="identity",
    )


def shear_map(speed=0.3) -> SpacetimeMap:
    """``(t, theta) -> (t, theta + speed t)``."""
    one = np.ones_like
    zero = np.zeros_like
    return SpacetimeMap(
        forward=lambda t, th: (t + 0 * th, th + speed * t),
        jacobian=lambda t, th: (one(t + th), zero(t + th), speed * one(t + th), one(t + th)),
        inverse=lambda t, th: (t + 0 * th, th - speed * t),
        name=f"shear({speed})",
    )


def theta_reparametrization(amplitude=0.2) -> SpacetimeMap:
    """``(t, theta) -> (t, theta + a sin theta)``, a diffeomorphism for ``|a| < 1``."""
    if not abs(amplitude) < 1:
        raise DomainError("reparametrization amplitude must be below 1")
    one = np.ones_like
    zero = np.zeros_like
    return SpacetimeMap(
        forward=lambda t, th: (t + 0 * th, th + amplitude * np.sin(th)),
        jacobian=lambda t, th: (one(t + th), zero(t + th), zero(t + th),
                                1 + amplitude * np.cos(th) + 0 * t),
        name=f"reparametrization({amplitude})",
    )


def pullback_flux(omega: FluxField1Form, diffeo: SpacetimeMap, *, T=1.0,
                  check_points=64) -> FluxField1Form:
    r"""Pull ``omega`` back along ``diffeo``.

    With :math:`(T, \Theta) = \Phi(t, \theta)`,

    .. math::

        \Phi^*(a\, d\Theta + c\, dT)
        = (a \Theta_\theta + c T_\theta)\, d\theta + (a \Theta_t + c T_t)\, dt.

    Raises :class:`DomainError` when the Jacobian determinant is not positive
    on a sample grid of ``[0, T] x [0, 2 pi)``.
    """
    t, th = np.meshgrid(np.linspace(0, T, check_points),
                        np.linspace(0, 2 * np.pi, check_points, endpoint=False))
    Tt, Tth, Tht, Thth = diffeo.jacobian(t, th)
    det = Tt * Thth - Tth * Tht
    if not np.all(np.isfinite(det)) or np.min(det) <= 0:
        raise DomainError("spacetime map is degenerate or reverses orientation")

    def coefficients(a, c, t, th):
        Tt, Tth, Tht, Thth = diffeo.jacobian(t, th)
        return a * Thth + c * Tth, a * Tht + c * Tt

    def at_image(fn):
        def g(u, t, th):
            Ti, Thi = diffeo.forward(t, th)
            return fn(u, Ti, Thi)
        return g

    w0, w1 = at_image(omega.omega0), at_image(omega.omega1)
    d0, d1 = at_image(omega.d_omega0), at_image(omega.d_omega1)

    return FluxField1Form(
        omega0=lambda u, t, th: coefficients(w0(u, t, th), w1(u, t, th), t, th)[0],
        omega1=lambda u, t, th: coefficients(w0(u, t, th), w1(u, t, th), t, th)[1],
        d_omega0=lambda u, t, th: coefficients(d0(u, t, th), d1(u, t, th), t, th)[0],
        d_omega1=lambda u, t, th: coefficients(d0(u, t, th), d1(u, t, th), t, th)[1],
        name=f"pullback({omega.name}, {diffeo.name})",
    )


def pullback_shear(speed=0.3) -> FluxField1Form:
    return pullback_flux(flat_burgers(), shear_map(speed))


PRESETS = {
    "flat-burgers": flat_burgers,
    "variable-coefficient": variable_coefficient,
    "pullback-shear": pullback_shear,
}


def get_preset(name: str) -> FluxField1Form:
    from apfv.errors import ConfigurationError

    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown flux preset '{name}' (expected one of {', '.join(PRESETS)})") from None

# }}}


# {{{ diagnostics

def geometry_compatibility_check(omega: FluxField1Form, samples=200, seed=0, *,
                                 u_range=(-2.0, 2.0), T=1.0, step=1.0e-5):
    r"""Largest :math:`|\partial_t \omega_0 - \partial_\theta \omega_1|` by
    central differences at seeded ``(u, t, theta)`` samples."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(*u_range, samples)
    t = rng.uniform(step, T - step, samples)
    # stay away from the seam at theta = 0 so non-periodic fields are caught honestly
    th = rng.uniform(step, 2 * np.pi - step, samples)

    dt0 = (omega.omega0(u, t + step, th) - omega.omega0(u, t - step, th)) / (2 * step)
    dth1 = (omega.omega1(u, t, th + step) - omega.omega1(u, t, th - step)) / (2 * step)
    return float(np.max(np.abs(dt0 - dth1)))


def linear_growth_constant(omega: FluxField1Form, samples=200, seed=0, *,
                           u_range=(-2.0, 2.0), T=1.0):
    """Smallest ``C`` with ``|omega0| + |omega1| <= C (1 + |u|)`` on the samples."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(*u_range, samples)
    t = rng.uniform(0, T, samples)
    th = rng.uniform(0, 2 * np.pi, samples)
    size = np.abs(omega.omega0(u, t, th)) + np.abs(omega.omega1(u, t, th))
    return float(np.max(size / (1 + np.abs(u))))

# }}}
