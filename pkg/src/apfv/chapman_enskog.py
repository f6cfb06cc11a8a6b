r"""
Chapman-Enskog machinery
------------------------

First-order corrector, effective diffusion matrices and the entropy form of
the effective equations. For a ``q = 1`` model the formal limit is

.. math::

    \partial_t u = \partial_x\big(M(u) \partial_x u\big)
                 = \partial_x\big(L(u) \partial_x \nu(u)^T\big),

with ``M`` assembled from correctors and ``L = S \mathcal{L}^{-1} S^T``.

.. autofunction:: constrained_generalized_inverse
.. autofunction:: first_order_corrector
.. autofunction:: effective_diffusion_matrix
.. autofunction:: closed_form_effective
.. autofunction:: nonlinear_relaxation_coefficient
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from apfv.errors import PreconditionError, StructureError, UnsupportedError
from apfv.models import (
    EulerFriction,
    EulerM1,
    M1Radiation,
    RelaxationModel,
    ShallowWaterFriction,
    fd_jacobian,
    temperature_from_equilibrium,
)


# {{{ constrained solve

def constrained_generalized_inverse(C, Q, J, *, rtol=1.0e-10):
    """Solve ``C V = J`` subject to ``Q V = 0``.

    The bordered system ``[C; Q] V = [J; 0]`` is solved in the least-squares
    sense; uniqueness requires the stacked matrix to have full column rank,
    which is the kernel/image splitting of ``C`` restricted by ``Q``.
    """
    C = np.asarray(C, dtype=np.float64)
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    J = np.asarray(J, dtype=np.float64)
    N = C.shape[0]
    n = Q.shape[0]

    scale = max(1.0, float(np.max(np.abs(J), initial=0.0)))
    if np.max(np.abs(Q @ J), initial=0.0) > 1.0e-12 * scale:
        raise PreconditionError("right-hand side is not annihilated by Q (QJ != 0)")

    K = np.vstack([C, Q])
    rhs = np.concatenate([J, np.zeros(n)])
    V, _, rank, sv = np.linalg.lstsq(K, rhs, rcond=None)
    if rank < N or sv[-1] <= 1.0e-12 * sv[0]:
        raise StructureError("bordered system [C; Q] is rank deficient; "
                             "the kernel of C does not complement its image")

    resid = max(float(np.max(np.abs(C @ V - J))), float(np.max(np.abs(Q @ V))))
    # backward error: compare against the size of the terms that cancel
    scale = max(scale, float(np.max(np.abs(C))) * float(np.max(np.abs(V), initial=0.0)))
    if resid > rtol * scale:
        raise StructureError(f"no exact solution of C V = J with QV = 0 (residual {resid:.3e})")
    return V

# }}}


# {{{ first-order corrector

@dataclass(frozen=True)
class CorrectorSolution:
    U1: np.ndarray
    constraint_residual: float
    equation_residual: float


def _require_linear(model, what):
    if model.q != 1:
        raise UnsupportedError(
            f"{what} applies to q = 1 models only; model '{model.name}' has "
            f"q = {model.q}, use closed_form_effective / nonlinear_relaxation_coefficient")


def first_order_corrector(model: RelaxationModel, u, du_dx) -> CorrectorSolution:
    """Solve ``B(E(u)) U1 = -d_x F(E(u))`` with ``Q U1 = 0``."""
    _require_linear(model, "the linear corrector problem")
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    du_dx = np.atleast_1d(np.asarray(du_dx, dtype=np.float64))
    model.check_equilibrium(u)

    E = model.equilibrium_lift(u)
    dF = model.flux_jacobian(E) @ (model.lift_jacobian(u) @ du_dx)
    B = model.relaxation_jacobian(E)
    U1 = constrained_generalized_inverse(B, model.Q, -dF)
    return CorrectorSolution(
        U1=U1,
        constraint_residual=float(np.max(np.abs(model.Q @ U1))),
        equation_residual=float(np.max(np.abs(B @ U1 + dF))),
    )

# }}}


# {{{ effective diffusion

@dataclass(frozen=True)
class EffectiveDiffusion:
    u: np.ndarray
    M: np.ndarray
    L: np.ndarray | None = None
    S: np.ndarray | None = None
    Lcal: np.ndarray | None = None
    #: Jacobian of the entropy multiplier, ``M = L Dnu``
    Dnu: np.ndarray | None = None


def effective_diffusion_matrix(model: RelaxationModel, u) -> EffectiveDiffusion:
    """Assemble ``M(u)`` column by column from correctors.

    When the model carries an entropy pair, ``S = Q A(E)``,
    ``Lcal = D^2 Phi(E) B(E)`` and ``L = S Lcal^{-1} S^T`` are filled as well,
    with ``Lcal^{-1}`` the inverse constrained by ``Q``.
    """
    _require_linear(model, "the assembled effective diffusion")
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    model.check_equilibrium(u)
    n = model.n

    E = model.equilibrium_lift(u)
    A = model.flux_jacobian(E)
    QA = model.Q @ A

    M = np.empty((n, n))
    for j in range(n):
        M[:, j] = -QA @ first_order_corrector(model, u, np.eye(n)[j]).U1

    ent = model.entropy
    if ent is None:
        return EffectiveDiffusion(u, M)

    H = ent.hessian_at(E)
    H = 0.5 * (H + H.T)
    Lcal = H @ model.relaxation_jacobian(E)
    S = QA
    V = np.stack([constrained_generalized_inverse(Lcal, model.Q, S[j]) for j in range(n)],
                 axis=-1)
    L = S @ V
    Dnu = fd_jacobian(lambda w: np.reshape(ent.multiplier(w), np.shape(w)), u)
    return EffectiveDiffusion(u, M, L, S, Lcal, Dnu)

# }}}


# {{{ closed forms

@dataclass(frozen=True)
class EffectiveEquation:
    """Closed-form limit equation ``d_t u = d_x G(u, d_x u)``.

    ``diffusion(u)`` returns ``M(u)`` with shape ``(..., n, n)`` when the
    limit is of the form ``G = M(u) d_x u``; ``flux(u, du_dx)`` always
    returns ``G``.
    """

    model: str
    description: str
    flux: Callable[[np.ndarray, np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray] | None = None

    def __str__(self):
        return self.description


def regularized_en2_flux(h, dh_dx, kappa, delta=1.0e-8):
    r"""Regularized limit flux :math:`(\sqrt{h}/\kappa(h))\, h_x / \sqrt{\max(|h_x|, \delta)}`."""
    from apfv.errors import DomainError

    h = np.asarray(h, dtype=np.float64)
    dh_dx = np.asarray(dh_dx, dtype=np.float64)
    if np.any(~(h > 0)):
        raise DomainError("water height must be positive (h > 0)")
    if not delta > 0:
        raise DomainError("regularization delta must be positive")
    return np.sqrt(h) / kappa(h) * dh_dx / np.sqrt(np.maximum(np.abs(dh_dx), delta))


def _diffusion_flux(diffusion):
    def flux(u, du_dx):
        return np.einsum("...ij,...j->...i", diffusion(u), du_dx)
    return flux


@functools.lru_cache(maxsize=64)
def closed_form_effective(model: RelaxationModel, *, delta=1.0e-8) -> EffectiveEquation:
    """Closed-form effective equation of a registered model."""
    if isinstance(model, EulerFriction):
        def diffusion(u):
            u = np.asarray(u, dtype=np.float64)
            return model.dpressure(u[..., 0])[..., None, None]

        return EffectiveEquation(model.name, "∂t ρ = ∂x² p(ρ)",
                                 _diffusion_flux(diffusion), diffusion)

    if isinstance(model, M1Radiation):
        def diffusion(u):
            u = np.asarray(u, dtype=np.float64)
            tau = temperature_from_equilibrium(u[..., 0])
            t3 = tau**3
            return (4.0 / 3.0 * t3 / (1 + 4 * t3))[..., None, None]

        return EffectiveEquation(model.name, "∂t(τ+τ⁴) = ∂x((4/3)τ³ ∂x τ)",
                                 _diffusion_flux(diffusion), diffusion)

    if isinstance(model, EulerM1):
        def diffusion(u):
            u = np.asarray(u, dtype=np.float64)
            M = np.zeros(u.shape[:-1] + (2, 2))
            M[..., 0, 0] = model.dpressure(u[..., 0]) / model.kappa
            M[..., 0, 1] = 1.0 / (3 * model.kappa)
            M[..., 1, 1] = 1.0 / (3 * model.sigma)
            return M

        return EffectiveEquation(
            model.name,
            "∂t ρ = (1/κ) ∂x² p(ρ) + (1/(3κ)) ∂x² e; ∂t e = (1/(3σ)) ∂x² e",
            _diffusion_flux(diffusion), diffusion)

    if isinstance(model, ShallowWaterFriction):
        def flux(u, du_dx):
            u = np.asarray(u, dtype=np.float64)
            du_dx = np.asarray(du_dx, dtype=np.float64)
            return regularized_en2_flux(u[..., 0], du_dx[..., 0], model.friction, delta)[..., None]

        return EffectiveEquation(model.name, "∂t h = ∂x((√h/κ(h)) ∂x h/√|∂x h|)", flux)

    raise UnsupportedError(f"no closed-form effective equation for model '{model.name}'")

# }}}


# {{{ nonlinear friction coefficient

@dataclass(frozen=True)
class NonlinearCoefficient:
    c: float
    corrector: np.ndarray
    residual: float

    def __float__(self):
        return self.c


def nonlinear_relaxation_coefficient(model: RelaxationModel, u, du_dx) -> NonlinearCoefficient:
    r"""Coefficient :math:`c(u) = g \kappa(h) \sqrt{h |\partial_x h|}` of the
    rescaled friction, together with the residual of
    :math:`R(E(u) + M(0)\bar U_1) = c(u) \bar U_1`.
    """
    if not isinstance(model, ShallowWaterFriction):
        raise UnsupportedError(f"nonlinear relaxation coefficient undefined for '{model.name}'")

    h = float(np.ravel(u)[0])
    hx = float(np.ravel(du_dx)[0])
    model.check_equilibrium(np.array([h]))

    k = float(model.friction(h))
    c = model.g * k * np.sqrt(h * abs(hx))
    beta = 0.0 if hx == 0 else -np.sqrt(h) / k * hx / np.sqrt(abs(hx))
    U1 = np.array([0.0, beta])
    lhs = model.relaxation(model.equilibrium_lift(np.array([h])) + model.scaling_matrix(0.0) @ U1)
    residual = float(np.max(np.abs(lhs - c * U1)))
    return NonlinearCoefficient(float(c), U1, residual)

# }}}
