"""
Parabolic reference solvers
---------------------------

Explicit conservative schemes for the closed-form limit equations
``d_t u = d_x G(u, d_x u)`` on a periodic grid. These are deliberately
independent of the AP code path and serve as late-time oracles.

.. autoclass:: ParabolicProblem
.. autofunction:: parabolic_problem
.. autofunction:: solve_parabolic
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from apfv.chapman_enskog import closed_form_effective, regularized_en2_flux
from apfv.errors import ConfigurationError, DomainError, NumericalFailure
from apfv.models import RelaxationModel, ShallowWaterFriction

SAFETY = 0.45


@dataclass(frozen=True)
class ParabolicProblem:
    """Divergence-form problem on a periodic grid.

    ``interface_flux(u, dx)`` returns ``G`` at every ``x_{i+1/2}`` (shape
    ``(cells, n)``) and ``max_diffusion(u, dx)`` the largest effective
    diffusivity, which sets ``dt = 0.45 dx^2 / max_diffusion``.
    """

    n: int
    interface_flux: Callable[[np.ndarray, float], np.ndarray]
    max_diffusion: Callable[[np.ndarray, float], float]
    check: Callable[[np.ndarray], None] | None = None
    name: str = ""

    def rhs(self, u, dx):
        G = self.interface_flux(u, dx)
        return (G - np.roll(G, 1, axis=0)) / dx


def _matrix_problem(diffusion, n, check=None, name=""):
    def coefficients(u):
        M = diffusion(u)
        return 0.5 * (M + np.roll(M, -1, axis=0))

    def interface_flux(u, dx):
        return np.einsum("kij,kj->ki", coefficients(u), (np.roll(u, -1, axis=0) - u) / dx)

    def max_diffusion(u, dx):
        return float(np.max(np.linalg.norm(coefficients(u), ord=2, axis=(-2, -1))))

    return ParabolicProblem(n, interface_flux, max_diffusion, check, name)


def heat_problem(coefficient) -> ParabolicProblem:
    """Scalar heat equation ``d_t u = coefficient d_x^2 u``."""
    if not coefficient > 0:
        raise ConfigurationError("heat coefficient must be positive")
    return _matrix_problem(lambda u: np.full((u.shape[0], 1, 1), coefficient), 1,
                           name="heat")


def parabolic_problem(model: RelaxationModel, delta=1.0e-8) -> ParabolicProblem:
    """Reference problem for the closed-form limit of ``model``.

    Coefficients are averaged over the two cells adjacent to an interface.
    The shallow water limit uses the regularized flux with parameter
    ``delta`` on the interface slope.
    """
    eq = closed_form_effective(model)

    def check(u):
        model.check_equilibrium(u)

    if isinstance(model, ShallowWaterFriction):
        def interface_flux(u, dx):
            h = u[:, 0]
            hp = np.roll(h, -1)
            return regularized_en2_flux(0.5 * (h + hp), (hp - h) / dx, model.friction,
                                        delta)[:, None]

        def max_diffusion(u, dx):
            h = u[:, 0]
            hp = np.roll(h, -1)
            hm = 0.5 * (h + hp)
            slope = np.maximum(np.abs(hp - h) / dx, delta)
            return float(np.max(np.sqrt(hm) / model.friction(hm) / np.sqrt(slope)))

        return ParabolicProblem(1, interface_flux, max_diffusion, check, model.name)

    return _matrix_problem(eq.diffusion, model.n, check, model.name)


def solve_parabolic(problem: ParabolicProblem, u0, T, dx, callback=None, max_steps=None):
    """Forward Euler with ``dt = 0.45 dx^2 / max|M|``, landing exactly on ``T``."""
    if T < 0:
        raise ConfigurationError("final time must be nonnegative")
    if not dx > 0:
        raise ConfigurationError("dx must be positive")
    u = np.array(u0, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if problem.check is not None:
        problem.check(u)

    t = 0.0
    steps = 0
    while t < T:
        D = problem.max_diffusion(u, dx)
        if not np.isfinite(D):
            raise NumericalFailure("diffusion coefficient overflow")
        dt = T - t if D == 0 else min(SAFETY * dx * dx / D, T - t)
        u = u + dt * problem.rhs(u, dx)
        if not np.all(np.isfinite(u)):
            raise NumericalFailure(f"non-finite values at t = {t + dt:.6g}")
        t = t + dt if dt < T - t else T
        steps += 1
        if problem.check is not None:
            try:
                problem.check(u)
            except DomainError as exc:
                raise NumericalFailure(f"reference solution left its domain: {exc}") from exc
        if callback is not None:
            callback(t, u)
        if max_steps is not None and steps >= max_steps:
            raise NumericalFailure(f"step limit {max_steps} reached before T")
    return u
