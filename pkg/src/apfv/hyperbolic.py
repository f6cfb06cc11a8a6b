"""
HLL finite volumes
------------------

First-order HLL scheme with a single global wave speed ``b`` for the
homogeneous system ``d_t U + d_x F(U) = 0`` on a periodic grid.

.. autoclass:: UniformGrid1D
.. autoclass:: DiscreteField
.. autofunction:: intermediate_state
.. autofunction:: hll_flux
.. autofunction:: step_homogeneous
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from apfv.errors import ConfigurationError, InvariantViolation, NumericalFailure
from apfv.models import RelaxationModel

# slack when comparing a CFL number against its bound
CFL_SLACK = 1.0e-12


@dataclass(frozen=True)
class UniformGrid1D:
    cells: int
    length: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        if self.cells < 4:
            raise ConfigurationError("cells must be at least 4")
        if not self.length > 0:
            raise ConfigurationError("domain length must be positive")

    @property
    def dx(self):
        return self.length / self.cells

    @property
    def centers(self):
        return self.origin + (np.arange(self.cells) + 0.5) * self.dx


@dataclass(frozen=True)
class DiscreteField:
    grid: UniformGrid1D
    states: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.states.shape[0] != self.grid.cells:
            raise ConfigurationError("number of states does not match the grid")

    def totals(self):
        """Discrete integral of every component."""
        return self.grid.dx * np.sum(self.states, axis=0)


def intermediate_state(model: RelaxationModel, UL, UR, b):
    """HLL intermediate state ``(UL + UR)/2 - (F(UR) - F(UL))/(2b)``."""
    UL = np.asarray(UL, dtype=np.float64)
    UR = np.asarray(UR, dtype=np.float64)
    return 0.5 * (UL + UR) - (model.flux(UR) - model.flux(UL)) / (2 * b)


def hll_flux(model: RelaxationModel, UL, UR, b, FL=None, FR=None):
    """``(F(UL) + F(UR))/2 - b (UR - UL)/2``; fluxes may be passed in."""
    UL = np.asarray(UL, dtype=np.float64)
    UR = np.asarray(UR, dtype=np.float64)
    FL = model.flux(UL) if FL is None else FL
    FR = model.flux(UR) if FR is None else FR
    return 0.5 * (FL + FR) - 0.5 * b * (UR - UL)


def cfl_timestep(b, dx, safety=1.0):
    if not (b > 0 and dx > 0):
        raise ConfigurationError("b and dx must be positive")
    if not 0 < safety <= 1:
        raise ConfigurationError("safety must lie in (0, 1]")
    return safety * dx / (2 * b)


def wave_speed(model: RelaxationModel, U, factor=1.1):
    """Global HLL speed: ``factor`` times the largest spectral radius."""
    return factor * float(np.max(model.spectral_radius(U)))


def check_cfl(b, dt, dx):
    if b * dt / dx > 0.5 + CFL_SLACK:
        raise NumericalFailure(f"CFL condition violated: b dt/dx = {b * dt / dx:.6g} > 1/2")


def check_field(model: RelaxationModel, U, what="state"):
    bad = ~model.admissible(U)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise InvariantViolation(
            f"{model.name}: inadmissible {what} in cell {idx}: "
            f"{model.admissibility_violation(U[idx])}", index=idx)


def step_homogeneous(model: RelaxationModel, field: DiscreteField, b, dt) -> DiscreteField:
    """One forward Euler HLL step with periodic wrap."""
    dx = field.grid.dx
    check_cfl(b, dt, dx)

    U = field.states
    F = model.flux(U)
    Fh = hll_flux(model, U, np.roll(U, -1, axis=0), b, F, np.roll(F, -1, axis=0))
    new = U - (dt / dx) * (Fh - np.roll(Fh, 1, axis=0))
    check_field(model, new)
    return replace(field, states=new, time=field.time + dt)


def run_hll(model: RelaxationModel, field: DiscreteField, t_final, safety=0.9, b=None,
            callback=None) -> DiscreteField:
    """Advance to ``t_final``; ``b=None`` recomputes the speed every step."""
    if t_final < field.time:
        raise ConfigurationError("final time precedes the current time")
    check_field(model, field.states)

    while field.time < t_final:
        bb = wave_speed(model, field.states) if b is None else b
        if b is not None and b < float(np.max(model.spectral_radius(field.states))):
            raise NumericalFailure(f"wave speed b = {b} is below the spectral radius")
        dt = min(cfl_timestep(bb, field.grid.dx, safety), t_final - field.time)
        field = step_homogeneous(model, field, bb, dt)
        if callback is not None:
            callback(field)
    return field
