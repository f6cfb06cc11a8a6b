r"""
Relaxation models
-----------------

Balance laws of the form

.. math::

    \epsilon \partial_t U + \partial_x F(U) = -R(U) / \epsilon^q,

together with the structure needed by the late-time analysis: a constant
matrix ``Q`` with ``Q R = 0``, an equilibrium lift ``E(u)`` with
``Q E(u) = u`` and ``R(E(u)) = 0``, Jacobians, and an optional entropy pair.

All state arrays carry the component index on the last axis, so a single
state has shape ``(N,)`` and a grid of states has shape ``(cells, N)``.

.. autoclass:: RelaxationModel
.. autoclass:: EulerFriction
.. autoclass:: M1Radiation
.. autoclass:: EulerM1
.. autoclass:: ShallowWaterFriction
.. autofunction:: get_model
.. autofunction:: verify_structural_conditions
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field, fields
from typing import Callable, ClassVar

import numpy as np

from apfv.errors import ConfigurationError, DomainError

# states closer than this to the boundary of the admissible set are rejected
GUARD = 1.0e-13


# {{{ entropy pair

@dataclass(frozen=True)
class EntropyPair:
    """Mathematical (convex) entropy ``Phi`` with flux ``Psi``.

    ``multiplier(u)`` returns ``nu(u)`` such that ``D_U Phi(E(u)) = nu(u) Q``.
    ``hessian`` may be omitted, in which case a finite-difference Hessian of
    ``gradient`` is used.
    """

    entropy: Callable[[np.ndarray], np.ndarray]
    entropy_flux: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    multiplier: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray] | None = None

    def hessian_at(self, U):
        U = np.asarray(U, dtype=np.float64)
        if self.hessian is not None:
            return self.hessian(U)
        return fd_jacobian(self.gradient, U)

# }}}


# {{{ finite differences

def fd_jacobian(fn, U, rel_step=1.0e-4):
    """Fourth-order central-difference Jacobian of ``fn`` along the last axis.

    Returns an array of shape ``U.shape[:-1] + (M, N)`` where ``M`` is the
    output length of ``fn``. Steps are relative to each component, floored
    at a fraction of the state's largest component so that vanishing
    components still get a usable step.
    """
    U = np.asarray(U, dtype=np.float64)
    N = U.shape[-1]
    floor = 1.0e-2 * np.max(np.abs(U), axis=-1, keepdims=True)
    h = rel_step * np.maximum(np.abs(U), np.maximum(floor, 1.0e-12))

    cols = []
    for k in range(N):
        d = np.zeros_like(U)
        d[..., k] = h[..., k]
        hk = h[..., k][..., None]
        col = (-fn(U + 2 * d) + 8 * fn(U + d) - 8 * fn(U - d) + fn(U - 2 * d)) / (12 * hk)
        cols.append(col)

    return np.stack(cols, axis=-1)


def fd_gradient(fn, U, rel_step=1.0e-4):
    """Gradient of a scalar-valued ``fn`` along the last axis."""
    return fd_jacobian(lambda V: fn(V)[..., None], U, rel_step)[..., 0, :]

# }}}


# {{{ base class

class RelaxationModel(abc.ABC):
    """Abstract late-time/stiff relaxation system.

    Subclasses are frozen dataclasses whose fields are the physical
    parameters. They provide vectorized closed forms for the flux,
    relaxation, their Jacobians and the equilibrium lift.
    """

    name: ClassVar[str]
    N: ClassVar[int]
    n: ClassVar[int]
    #: relaxation exponent ``q``
    q: ClassVar[int] = 1

    @property
    @abc.abstractmethod
    def Q(self) -> np.ndarray:
        pass

    @abc.abstractmethod
    def flux(self, U): ...

    @abc.abstractmethod
    def relaxation(self, U): ...

    @abc.abstractmethod
    def flux_jacobian(self, U): ...

    @abc.abstractmethod
    def relaxation_jacobian(self, U): ...

    @abc.abstractmethod
    def equilibrium_lift(self, u): ...

    @abc.abstractmethod
    def lift_jacobian(self, u):
        """``D_u E(u)`` with shape ``(..., N, n)``."""

    @abc.abstractmethod
    def admissibility_violation(self, U) -> str | None:
        """Describe the first violated constraint among the states ``U``."""

    @abc.abstractmethod
    def equilibrium_violation(self, u) -> str | None:
        pass

    @abc.abstractmethod
    def spectral_radius(self, U):
        """Upper bound for the moduli of the eigenvalues of ``A(U)``."""

    @abc.abstractmethod
    def sample_states(self, rng, size): ...

    @abc.abstractmethod
    def sample_equilibria(self, rng, size): ...

    @property
    def entropy(self) -> EntropyPair | None:
        return None

    def scaling_matrix(self, eps):
        """``M(eps)`` in ``R(E(u) + eps U) = eps^q R(E(u) + M(eps) U)``."""
        return np.eye(self.N)

    def structural_jacobian(self, u, rng=None):
        """Matrix whose kernel/image splitting is tested by Condition 4."""
        return self.relaxation_jacobian(self.equilibrium_lift(u))

    def admissible(self, U):
        return self._admissible_mask(np.asarray(U, dtype=np.float64))

    def _admissible_mask(self, U):
        raise NotImplementedError

    def check_admissible(self, U):
        msg = self.admissibility_violation(U)
        if msg is not None:
            raise DomainError(f"{self.name}: inadmissible state: {msg}")

    def check_equilibrium(self, u):
        msg = self.equilibrium_violation(u)
        if msg is not None:
            raise DomainError(f"{self.name}: equilibrium outside its domain: {msg}")

    def parameters(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _first_bad(mask, message):
    mask = np.asarray(mask)
    if mask.all():
        return None
    idx = np.argwhere(~mask)[0]
    where = "" if mask.ndim == 0 else f" at index {tuple(int(i) for i in idx)}"
    return message + where


def _as_states(U, N):
    U = np.asarray(U, dtype=np.float64)
    if U.shape[-1] != N:
        raise DomainError(f"expected states with {N} components, got shape {U.shape}")
    return U

# }}}


# {{{ Euler with friction

@dataclass(frozen=True)
class EulerFriction(RelaxationModel):
    r"""Isentropic Euler equations with linear friction,
    ``U = (rho, rho v)``, ``R(U) = (0, rho v)``, ``p(rho) = kappa rho^gamma``.
    """

    kappa: float = 1.0
    gamma: float = 2.0

    name: ClassVar[str] = "euler-friction"
    N: ClassVar[int] = 2
    n: ClassVar[int] = 1

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigurationError("kappa must be positive")
        if not self.gamma > 1:
            raise ConfigurationError("gamma must be larger than 1")

    @property
    def Q(self):
        return np.array([[1.0, 0.0]])

    def pressure(self, rho):
        return self.kappa * rho**self.gamma

    def dpressure(self, rho):
        return self.kappa * self.gamma * rho ** (self.gamma - 1)

    def internal_energy(self, rho):
        # normalized by e(0) = 0
        return self.kappa * rho ** (self.gamma - 1) / (self.gamma - 1)

    def flux(self, U):
        U = _as_states(U, 2)
        rho, m = U[..., 0], U[..., 1]
        return np.stack([m, m * m / rho + self.pressure(rho)], axis=-1)

    def relaxation(self, U):
        U = _as_states(U, 2)
        return np.stack([np.zeros_like(U[..., 0]), U[..., 1]], axis=-1)

    def flux_jacobian(self, U):
        U = _as_states(U, 2)
        rho, m = U[..., 0], U[..., 1]
        v = m / rho
        A = np.zeros(U.shape + (2,))
        A[..., 0, 1] = 1.0
        A[..., 1, 0] = -v * v + self.dpressure(rho)
        A[..., 1, 1] = 2 * v
        return A

    def relaxation_jacobian(self, U):
        U = _as_states(U, 2)
        B = np.zeros(U.shape + (2,))
        B[..., 1, 1] = 1.0
        return B

    def equilibrium_lift(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.stack([u[..., 0], np.zeros_like(u[..., 0])], axis=-1)

    def lift_jacobian(self, u):
        u = np.asarray(u, dtype=np.float64)
        D = np.zeros(u.shape[:-1] + (2, 1))
        D[..., 0, 0] = 1.0
        return D

    def _admissible_mask(self, U):
        return np.isfinite(U).all(axis=-1) & (U[..., 0] > GUARD)

    def admissibility_violation(self, U):
        U = _as_states(U, 2)
        msg = _first_bad(np.isfinite(U).all(axis=-1), "non-finite state")
        return msg or _first_bad(U[..., 0] > GUARD, "density must be positive (rho > 0)")

    def equilibrium_violation(self, u):
        u = np.asarray(u, dtype=np.float64)
        return _first_bad(u[..., 0] > GUARD, "density must be positive (rho > 0)")

    def spectral_radius(self, U):
        U = np.asarray(U, dtype=np.float64)
        rho = U[..., 0]
        return np.abs(U[..., 1] / rho) + np.sqrt(self.dpressure(rho))

    def sample_states(self, rng, size):
        rho = rng.uniform(0.2, 3.0, size)
        v = rng.uniform(-1.0, 1.0, size)
        return np.stack([rho, rho * v], axis=-1)

    def sample_equilibria(self, rng, size):
        return rng.uniform(0.2, 3.0, (size, 1))

    @property
    def entropy(self):
        k, g = self.kappa, self.gamma

        def phi(U):
            rho, m = U[..., 0], U[..., 1]
            return 0.5 * m * m / rho + k * rho**g / (g - 1)

        def psi(U):
            rho, m = U[..., 0], U[..., 1]
            return (phi(U) + self.pressure(rho)) * m / rho

        def grad(U):
            rho, m = U[..., 0], U[..., 1]
            v = m / rho
            return np.stack([-0.5 * v * v + k * g * rho ** (g - 1) / (g - 1), v], axis=-1)

        def nu(u):
            return k * g * u ** (g - 1) / (g - 1)

        def hess(U):
            rho, m = U[..., 0], U[..., 1]
            H = np.empty(U.shape + (2,))
            H[..., 0, 0] = m * m / rho**3 + k * g * rho ** (g - 2)
            H[..., 0, 1] = H[..., 1, 0] = -m / rho**2
            H[..., 1, 1] = 1.0 / rho
            return H

        return EntropyPair(phi, psi, grad, nu, hess)

# }}}


# {{{ M1 radiative transfer

def eddington_factor(xi):
    r"""Eddington factor :math:`\chi(\xi) = (3 + 4\xi^2)/(5 + 2\sqrt{4 - 3\xi^2})`."""
    xi = np.asarray(xi, dtype=np.float64)
    if np.any(np.abs(xi) > 1.0):
        raise DomainError("Eddington factor requires |f/e| <= 1")
    return (3 + 4 * xi**2) / (5 + 2 * np.sqrt(4 - 3 * xi**2))


def _eddington_factor(xi):
    return (3 + 4 * xi**2) / (5 + 2 * np.sqrt(4 - 3 * xi**2))


def _eddington_derivative(xi):
    s = np.sqrt(4 - 3 * xi**2)
    num = 3 + 4 * xi**2
    den = 5 + 2 * s
    return (8 * xi * den + num * 6 * xi / s) / den**2


def _boost_parameter(xi):
    # inverse of xi = 4 beta / (3 + beta^2), written without cancellation
    return 3 * xi / (2 + np.sqrt(4 - 3 * xi**2))


def radiative_entropy(e, f):
    """Mathematical entropy of gray radiation (minus the boosted-Planck entropy).

    Returns ``(phi, dphi/de, dphi/df, psi)`` where ``psi`` is the matching
    entropy flux for the flux ``(f, chi(f/e) e)``.
    """
    beta = _boost_parameter(f / e)
    b2 = beta * beta
    Z = (1 - b2) ** 0.25 * (3 / (3 + b2)) ** 0.75
    scale = e**-0.25 * Z
    phi = -4.0 / 3.0 * e * scale
    phi_e = -scale * (3 + b2) / (3 * (1 - b2))
    phi_f = scale * beta * (3 + b2) / (3 * (1 - b2))
    return phi, phi_e, phi_f, beta * phi


def temperature_from_equilibrium(u, rtol=1.0e-14, maxiter=100):
    r"""Invert :math:`u = \tau + \tau^4` for :math:`\tau > 0`.

    Safeguarded Newton iteration started from ``min(u, u^{1/4})``, where the
    residual is nonnegative; iterates leaving the bracket ``[0, tau0]`` are
    replaced by bisection.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any(~(u > 0)):
        raise DomainError("equilibrium energy u = tau + tau^4 must be positive")

    hi = np.minimum(u, u**0.25)
    lo = np.zeros_like(u)
    tau = hi.copy()
    for _ in range(maxiter):
        g = tau**4 + tau - u
        lo = np.where(g < 0, tau, lo)
        hi = np.where(g >= 0, tau, hi)
        step = g / (4 * tau**3 + 1)
        new = tau - step
        outside = (new <= lo) | (new >= hi)
        new = np.where(outside, 0.5 * (lo + hi), new)
        done = np.abs(new - tau) <= rtol * np.abs(new)
        tau = new
        if np.all(done):
            break
    return tau


@dataclass(frozen=True)
class M1Radiation(RelaxationModel):
    r"""Gray M1 radiative transfer coupled to a material temperature,
    ``U = (e, f, tau)`` with ``u = tau + tau^4``.
    """

    name: ClassVar[str] = "m1"
    N: ClassVar[int] = 3
    n: ClassVar[int] = 1

    @property
    def Q(self):
        return np.array([[1.0, 0.0, 1.0]])

    def flux(self, U):
        U = _as_states(U, 3)
        e, f = U[..., 0], U[..., 1]
        return np.stack([f, _eddington_factor(f / e) * e, np.zeros_like(e)], axis=-1)

    def relaxation(self, U):
        U = _as_states(U, 3)
        e, f, tau = U[..., 0], U[..., 1], U[..., 2]
        d = e - tau**4
        return np.stack([d, f, -d], axis=-1)

    def flux_jacobian(self, U):
        U = _as_states(U, 3)
        e, f = U[..., 0], U[..., 1]
        xi = f / e
        dchi = _eddington_derivative(xi)
        A = np.zeros(U.shape + (3,))
        A[..., 0, 1] = 1.0
        A[..., 1, 0] = _eddington_factor(xi) - xi * dchi
        A[..., 1, 1] = dchi
        return A

    def relaxation_jacobian(self, U):
        U = _as_states(U, 3)
        t3 = 4 * U[..., 2] ** 3
        B = np.zeros(U.shape + (3,))
        B[..., 0, 0] = 1.0
        B[..., 0, 2] = -t3
        B[..., 1, 1] = 1.0
        B[..., 2, 0] = -1.0
        B[..., 2, 2] = t3
        return B

    def equilibrium_lift(self, u):
        u = np.asarray(u, dtype=np.float64)
        tau = temperature_from_equilibrium(u[..., 0])
        return np.stack([tau**4, np.zeros_like(tau), tau], axis=-1)

    def lift_jacobian(self, u):
        u = np.asarray(u, dtype=np.float64)
        tau = temperature_from_equilibrium(u[..., 0])
        t3 = 4 * tau**3
        D = np.zeros(u.shape[:-1] + (3, 1))
        D[..., 0, 0] = t3 / (1 + t3)
        D[..., 2, 0] = 1 / (1 + t3)
        return D

    def _admissible_mask(self, U):
        e, f, tau = U[..., 0], U[..., 1], U[..., 2]
        return (np.isfinite(U).all(axis=-1) & (e > GUARD) & (tau > GUARD)
                & (np.abs(f) < (1 - GUARD) * e))

    def admissibility_violation(self, U):
        U = _as_states(U, 3)
        e, f, tau = U[..., 0], U[..., 1], U[..., 2]
        return (_first_bad(np.isfinite(U).all(axis=-1), "non-finite state")
                or _first_bad(e > GUARD, "radiative energy must be positive (e > 0)")
                or _first_bad(tau > GUARD, "temperature must be positive (tau > 0)")
                or _first_bad(np.abs(f) < (1 - GUARD) * e, "flux limitation |f/e| < 1"))

    def equilibrium_violation(self, u):
        u = np.asarray(u, dtype=np.float64)
        return _first_bad(u[..., 0] > GUARD, "u = tau + tau^4 must be positive")

    def spectral_radius(self, U):
        # M1 characteristic speeds never exceed the (normalized) speed of light
        return np.ones(np.shape(U)[:-1])

    def sample_states(self, rng, size):
        e = rng.uniform(0.1, 3.0, size)
        xi = rng.uniform(-0.9, 0.9, size)
        tau = rng.uniform(0.3, 1.5, size)
        return np.stack([e, xi * e, tau], axis=-1)

    def sample_equilibria(self, rng, size):
        tau = rng.uniform(0.3, 1.5, size)
        return (tau + tau**4)[:, None]

    @property
    def entropy(self):
        def parts(U):
            return radiative_entropy(U[..., 0], U[..., 1])

        def phi(U):
            return parts(U)[0] - np.log(U[..., 2])

        def psi(U):
            return parts(U)[3]

        def grad(U):
            _, pe, pf, _ = parts(U)
            return np.stack([pe, pf, -1.0 / U[..., 2]], axis=-1)

        def nu(u):
            return -1.0 / temperature_from_equilibrium(u)

        return EntropyPair(phi, psi, grad, nu)

# }}}


# {{{ coupled Euler / M1

@dataclass(frozen=True)
class EulerM1(RelaxationModel):
    r"""Euler equations with friction coupled to M1 radiation,
    ``U = (rho, rho v, e, f)``, ``p(rho) = c_p rho^eta``.

    ``radiation_weight`` scales the radiative part of the entropy; ``None``
    selects ``10 sigma / kappa``, which keeps ``D Phi . R >= 0`` on the
    sampling box used by :func:`verify_structural_conditions`.
    """

    kappa: float = 1.0
    sigma: float = 1.0
    c_p: float = 0.01
    eta: float = 1.5
    radiation_weight: float | None = None

    name: ClassVar[str] = "euler-m1"
    N: ClassVar[int] = 4
    n: ClassVar[int] = 2

    def __post_init__(self):
        for key in ("kappa", "sigma", "c_p"):
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"{key} must be positive")
        if not self.eta > 1:
            raise ConfigurationError("eta must be larger than 1")

    @property
    def Q(self):
        return np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])

    @property
    def weight(self):
        if self.radiation_weight is None:
            return 10.0 * self.sigma / self.kappa
        return self.radiation_weight

    def pressure(self, rho):
        return self.c_p * rho**self.eta

    def dpressure(self, rho):
        return self.c_p * self.eta * rho ** (self.eta - 1)

    def flux(self, U):
        U = _as_states(U, 4)
        rho, m, e, f = (U[..., k] for k in range(4))
        return np.stack([m, m * m / rho + self.pressure(rho), f,
                         _eddington_factor(f / e) * e], axis=-1)

    def relaxation(self, U):
        U = _as_states(U, 4)
        m, f = U[..., 1], U[..., 3]
        z = np.zeros_like(m)
        return np.stack([z, self.kappa * m - self.sigma * f, z, self.sigma * f], axis=-1)

    def flux_jacobian(self, U):
        U = _as_states(U, 4)
        rho, m, e, f = (U[..., k] for k in range(4))
        v = m / rho
        xi = f / e
        dchi = _eddington_derivative(xi)
        A = np.zeros(U.shape + (4,))
        A[..., 0, 1] = 1.0
        A[..., 1, 0] = -v * v + self.dpressure(rho)
        A[..., 1, 1] = 2 * v
        A[..., 2, 3] = 1.0
        A[..., 3, 2] = _eddington_factor(xi) - xi * dchi
        A[..., 3, 3] = dchi
        return A

    def relaxation_jacobian(self, U):
        U = _as_states(U, 4)
        B = np.zeros(U.shape + (4,))
        B[..., 1, 1] = self.kappa
        B[..., 1, 3] = -self.sigma
        B[..., 3, 3] = self.sigma
        return B

    def equilibrium_lift(self, u):
        u = np.asarray(u, dtype=np.float64)
        z = np.zeros_like(u[..., 0])
        return np.stack([u[..., 0], z, u[..., 1], z], axis=-1)

    def lift_jacobian(self, u):
        u = np.asarray(u, dtype=np.float64)
        D = np.zeros(u.shape[:-1] + (4, 2))
        D[..., 0, 0] = 1.0
        D[..., 2, 1] = 1.0
        return D

    def _admissible_mask(self, U):
        rho, e, f = U[..., 0], U[..., 2], U[..., 3]
        return (np.isfinite(U).all(axis=-1) & (rho > GUARD) & (e > GUARD)
                & (np.abs(f) < (1 - GUARD) * e))

    def admissibility_violation(self, U):
        U = _as_states(U, 4)
        rho, e, f = U[..., 0], U[..., 2], U[..., 3]
        return (_first_bad(np.isfinite(U).all(axis=-1), "non-finite state")
                or _first_bad(rho > GUARD, "density must be positive (rho > 0)")
                or _first_bad(e > GUARD, "radiative energy must be positive (e > 0)")
                or _first_bad(np.abs(f) < (1 - GUARD) * e, "flux limitation |f/e| < 1"))

    def equilibrium_violation(self, u):
        u = np.asarray(u, dtype=np.float64)
        return (_first_bad(u[..., 0] > GUARD, "density must be positive (rho > 0)")
                or _first_bad(u[..., 1] > GUARD, "radiative energy must be positive (e > 0)"))

    def spectral_radius(self, U):
        U = np.asarray(U, dtype=np.float64)
        rho = U[..., 0]
        fluid = np.abs(U[..., 1] / rho) + np.sqrt(self.dpressure(rho))
        return np.maximum(fluid, 1.0)

    def sample_states(self, rng, size):
        rho = rng.uniform(0.2, 3.0, size)
        v = rng.uniform(-1.0, 1.0, size)
        e = rng.uniform(0.1, 3.0, size)
        xi = rng.uniform(-0.9, 0.9, size)
        return np.stack([rho, rho * v, e, xi * e], axis=-1)

    def sample_equilibria(self, rng, size):
        return np.stack([rng.uniform(0.2, 3.0, size), rng.uniform(0.1, 3.0, size)], axis=-1)

    @property
    def entropy(self):
        c, eta, lam = self.c_p, self.eta, self.weight

        def phi(U):
            rho, m = U[..., 0], U[..., 1]
            rad = radiative_entropy(U[..., 2], U[..., 3])[0]
            return 0.5 * m * m / rho + c * rho**eta / (eta - 1) + lam * rad

        def psi(U):
            rho, m = U[..., 0], U[..., 1]
            fluid = 0.5 * m * m / rho + c * rho**eta / (eta - 1) + self.pressure(rho)
            return fluid * m / rho + lam * radiative_entropy(U[..., 2], U[..., 3])[3]

        def grad(U):
            rho, m = U[..., 0], U[..., 1]
            v = m / rho
            _, pe, pf, _ = radiative_entropy(U[..., 2], U[..., 3])
            return np.stack([-0.5 * v * v + c * eta * rho ** (eta - 1) / (eta - 1), v,
                             lam * pe, lam * pf], axis=-1)

        def nu(u):
            return np.stack([c * eta * u[..., 0] ** (eta - 1) / (eta - 1),
                             -lam * u[..., 1] ** -0.25], axis=-1)

        return EntropyPair(phi, psi, grad, nu)

# }}}


# {{{ shallow water with nonlinear friction

@dataclass(frozen=True)
class ShallowWaterFriction(RelaxationModel):
    r"""Shallow water with Manning-type friction in the ``q = 2`` scaling,
    ``R(U) = (0, kappa(h)^2 g hv |hv|)`` with ``kappa(h) = kappa0 / h``.
    """

    g: float = 1.0
    kappa0: float = 1.0

    name: ClassVar[str] = "shallow-water-friction"
    N: ClassVar[int] = 2
    n: ClassVar[int] = 1
    q: ClassVar[int] = 2

    def __post_init__(self):
        if not self.g > 0:
            raise ConfigurationError("g must be positive")
        if not self.kappa0 > 0:
            raise ConfigurationError("kappa0 must be positive")

    @property
    def Q(self):
        return np.array([[1.0, 0.0]])

    def friction(self, h):
        return self.kappa0 / h

    def pressure(self, h):
        return 0.5 * self.g * h * h

    def flux(self, U):
        U = _as_states(U, 2)
        h, m = U[..., 0], U[..., 1]
        return np.stack([m, m * m / h + self.pressure(h)], axis=-1)

    def relaxation(self, U):
        U = _as_states(U, 2)
        h, m = U[..., 0], U[..., 1]
        k = self.friction(h)
        return np.stack([np.zeros_like(h), k * k * self.g * m * np.abs(m)], axis=-1)

    def flux_jacobian(self, U):
        U = _as_states(U, 2)
        h, m = U[..., 0], U[..., 1]
        v = m / h
        A = np.zeros(U.shape + (2,))
        A[..., 0, 1] = 1.0
        A[..., 1, 0] = -v * v + self.g * h
        A[..., 1, 1] = 2 * v
        return A

    def relaxation_jacobian(self, U):
        U = _as_states(U, 2)
        h, m = U[..., 0], U[..., 1]
        k2 = self.kappa0**2 / h**2
        B = np.zeros(U.shape + (2,))
        B[..., 1, 0] = -2 * k2 / h * self.g * m * np.abs(m)
        B[..., 1, 1] = 2 * k2 * self.g * np.abs(m)
        return B

    def scaling_matrix(self, eps):
        return np.diag([eps, 1.0])

    def structural_jacobian(self, u, rng=None):
        # B(E(u)) vanishes identically for q = 2; the kernel/image splitting
        # holds for the rescaled relaxation U -> R(E(u) + M(0) U) at the
        # first-order corrector state (0, beta) instead.
        u = np.asarray(u, dtype=np.float64)
        rng = np.random.default_rng(0) if rng is None else rng
        slope = rng.uniform(0.1, 2.0, u.shape[:-1]) * rng.choice([-1.0, 1.0], u.shape[:-1])
        h = u[..., 0]
        beta = -np.sqrt(h) / self.friction(h) * slope / np.sqrt(np.abs(slope))
        M0 = self.scaling_matrix(0.0)

        def rescaled(V):
            return self.relaxation(self.equilibrium_lift(u) + V @ M0.T)

        V = np.stack([np.zeros_like(h), beta], axis=-1)
        return fd_jacobian(rescaled, V)

    def _admissible_mask(self, U):
        return np.isfinite(U).all(axis=-1) & (U[..., 0] > GUARD)

    def admissibility_violation(self, U):
        U = _as_states(U, 2)
        msg = _first_bad(np.isfinite(U).all(axis=-1), "non-finite state")
        return msg or _first_bad(U[..., 0] > GUARD, "water height must be positive (h > 0)")

    def equilibrium_violation(self, u):
        u = np.asarray(u, dtype=np.float64)
        return _first_bad(u[..., 0] > GUARD, "water height must be positive (h > 0)")

    def equilibrium_lift(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.stack([u[..., 0], np.zeros_like(u[..., 0])], axis=-1)

    def lift_jacobian(self, u):
        u = np.asarray(u, dtype=np.float64)
        D = np.zeros(u.shape[:-1] + (2, 1))
        D[..., 0, 0] = 1.0
        return D

    def spectral_radius(self, U):
        U = np.asarray(U, dtype=np.float64)
        h = U[..., 0]
        return np.abs(U[..., 1] / h) + np.sqrt(self.g * h)

    def sample_states(self, rng, size):
        h = rng.uniform(0.2, 3.0, size)
        v = rng.uniform(-1.0, 1.0, size)
        return np.stack([h, h * v], axis=-1)

    def sample_equilibria(self, rng, size):
        return rng.uniform(0.2, 3.0, (size, 1))

    @property
    def entropy(self):
        g = self.g

        def phi(U):
            h, m = U[..., 0], U[..., 1]
            return 0.5 * m * m / h + 0.5 * g * h * h

        def psi(U):
            h, m = U[..., 0], U[..., 1]
            return (0.5 * m * m / h + g * h * h) * m / h

        def grad(U):
            h, m = U[..., 0], U[..., 1]
            v = m / h
            return np.stack([-0.5 * v * v + g * h, v], axis=-1)

        def nu(u):
            return g * u

        def hess(U):
            h, m = U[..., 0], U[..., 1]
            H = np.empty(U.shape + (2,))
            H[..., 0, 0] = m * m / h**3 + g
            H[..., 0, 1] = H[..., 1, 0] = -m / h**2
            H[..., 1, 1] = 1.0 / h
            return H

        return EntropyPair(phi, psi, grad, nu, hess)

# }}}


# {{{ registry

MODELS = {cls.name: cls for cls in (EulerFriction, M1Radiation, EulerM1, ShallowWaterFriction)}


def get_model(name: str, **params) -> RelaxationModel:
    """Instantiate a registered model by its string identifier."""
    try:
        cls = MODELS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model '{name}' (expected one of {', '.join(MODELS)})") from None

    known = {f.name for f in fields(cls)}
    unknown = set(params) - known
    if unknown:
        raise ConfigurationError(
            f"unknown parameter(s) for model '{name}': {', '.join(sorted(unknown))}")
    return cls(**params)


def evaluate_flux(model: RelaxationModel, U):
    model.check_admissible(U)
    return model.flux(U)


def evaluate_relaxation(model: RelaxationModel, U):
    model.check_admissible(U)
    return model.relaxation(U)


def equilibrium_lift(model: RelaxationModel, u):
    model.check_equilibrium(u)
    return model.equilibrium_lift(u)

# }}}


# {{{ structural conditions

@dataclass
class ConditionResult:
    name: str
    max_residual: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class StructureReport:
    model: str
    samples: int
    seed: int
    results: list[ConditionResult] = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def add(self, name, residual, tol, *, lower=False, detail=""):
        residual = float(residual)
        ok = residual >= -tol if lower else residual <= tol
        self.results.append(ConditionResult(name, residual, tol, bool(ok), detail))


def _kernel_image_split(C, n, rtol=1.0e-10):
    """Return ``(kernel dimension, smallest singular value of [ker | im])``."""
    Uc, s, Vh = np.linalg.svd(C)
    rank = int(np.sum(s > rtol * max(s[0], 1.0)))
    ker = Vh[rank:].T
    im = Uc[:, :rank]
    smin = np.linalg.svd(np.hstack([ker, im]), compute_uv=False)[-1]
    return C.shape[0] - rank, smin


def verify_structural_conditions(model: RelaxationModel, sample_count: int = 100,
                                 seed: int = 0, *, closed_tol=1.0e-10,
                                 fd_tol=1.0e-6) -> StructureReport:
    """Check the structural assumptions on seeded random samples.

    Closed-form identities (Conditions 1-3, the equilibrium part of
    Condition 6) are checked at ``closed_tol``; anything involving finite
    differences (Jacobians, Condition 5) at ``fd_tol`` relative. Failures are
    reported, never raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")

    rng = np.random.default_rng(seed)
    report = StructureReport(model.name, sample_count, seed)
    Q = model.Q

    U = model.sample_states(rng, sample_count)
    u = model.sample_equilibria(rng, sample_count)
    E = model.equilibrium_lift(u)

    def inf(x):
        return float(np.max(np.abs(x))) if np.size(x) else 0.0

    # Conditions 1-3
    report.add("condition-1", inf(model.relaxation(U) @ Q.T), closed_tol,
               detail="|Q R(U)|")
    report.add("condition-2",
               max(inf(model.relaxation(E)), inf(E @ Q.T - u)), closed_tol,
               detail="|R(E(u))|, |Q E(u) - u|")
    report.add("condition-3", inf(model.flux(E) @ Q.T), closed_tol,
               detail="|Q F(E(u))|")

    # Condition 4: kernel of dimension n, trivial intersection with the image
    worst = 0.0
    margin = np.inf
    for k in range(sample_count):
        C = model.structural_jacobian(u[k], rng)
        dim, smin = _kernel_image_split(C, model.n)
        margin = min(margin, smin)
        worst = max(worst, abs(dim - model.n), 0.0 if smin > 1.0e-8 else 1.0)
    report.add("condition-4", worst, 0.0, detail=f"min singular value of [ker|im]: {margin:.3e}")

    # Jacobians against finite differences
    def rel(a, b):
        scale = np.maximum(1.0, np.max(np.abs(b), axis=(-2, -1)))
        return float(np.max(np.max(np.abs(a - b), axis=(-2, -1)) / scale))

    report.add("flux-jacobian", rel(model.flux_jacobian(U), fd_jacobian(model.flux, U)), fd_tol)
    report.add("relaxation-jacobian",
               rel(model.relaxation_jacobian(U), fd_jacobian(model.relaxation, U)), fd_tol)

    ent = model.entropy
    if ent is None:
        report.add("condition-5", np.inf, fd_tol, detail="no entropy pair")
        report.add("condition-6", np.inf, closed_tol, detail="no entropy pair")
        return report

    # Condition 5: D Phi A = D Psi, gradient consistency, convexity on M
    grad = ent.gradient(U)
    lhs = np.einsum("...i,...ij->...j", grad, model.flux_jacobian(U))
    dpsi = fd_gradient(ent.entropy_flux, U)
    dphi = fd_gradient(ent.entropy, U)
    scale = np.maximum(1.0, np.max(np.abs(dpsi), axis=-1))
    res5 = float(np.max(np.max(np.abs(lhs - dpsi), axis=-1) / scale))
    scale = np.maximum(1.0, np.max(np.abs(dphi), axis=-1))
    res_grad = float(np.max(np.max(np.abs(grad - dphi), axis=-1) / scale))
    hess = fd_jacobian(ent.gradient, E)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    min_eig = float(np.min(np.linalg.eigvalsh(hess)))
    report.add("condition-5", max(res5, res_grad), fd_tol,
               detail=f"|D Phi A - D Psi|, gradient check; min Hessian eigenvalue on M {min_eig:.3e}")
    report.add("entropy-convexity", min_eig, 0.0, lower=True)
    if min_eig <= 0:
        report.results[-1].passed = False

    # Condition 6: dissipation and D Phi(E(u)) = nu(u) Q
    dissipation = np.einsum("...i,...i->...", grad, model.relaxation(U))
    report.add("condition-6-dissipation", float(np.min(dissipation)), closed_tol, lower=True,
               detail="min D Phi(U) . R(U)")
    gE = ent.gradient(E)
    nu_ls, *_ = np.linalg.lstsq(Q.T, gE.T, rcond=None)
    res_ls = inf(nu_ls.T @ Q - gE)
    res_nu = inf(np.reshape(ent.multiplier(u), (sample_count, model.n)) @ Q - gE)
    report.add("condition-6-equilibrium", max(res_ls, res_nu), closed_tol,
               detail="|D Phi(E(u)) - nu(u) Q|")
    return report


def nonlinear_scaling_check(model: RelaxationModel, eps, U, u):
    r"""Residual of :math:`R(E(u) + \epsilon U) = \epsilon^q R(E(u) + M(\epsilon) U)`."""
    if not 0 < eps <= 1:
        raise DomainError("eps must lie in (0, 1]")
    U = np.asarray(U, dtype=np.float64)
    base = model.equilibrium_lift(np.asarray(u, dtype=np.float64))
    perturbed = base + eps * U
    model.check_admissible(perturbed)
    scaled = base + U @ model.scaling_matrix(eps).T
    model.check_admissible(scaled)
    lhs = model.relaxation(perturbed)
    rhs = eps**model.q * model.relaxation(scaled)
    return float(np.max(np.abs(lhs - rhs)))

# }}}
