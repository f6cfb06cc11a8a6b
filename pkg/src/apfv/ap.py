r"""
Asymptotic-preserving finite volumes
------------------------------------

Modified HLL solver with a matrix-valued parameter :math:`\underline\sigma`
for

.. math::

    \epsilon \partial_t U + \partial_x F(U) = -\gamma R(U),
    \qquad \gamma = \epsilon^{-q},

written in the late-time variable ``t``. With
:math:`\bar\alpha = (I + \tfrac{\gamma \Delta x}{2b}(I + \underline\sigma))^{-1}`
one step reads

.. math::

    U_i^{m+1} = U_i^m - \frac{\Delta t}{\epsilon\Delta x}
        (\bar\alpha_{+} F^{HLL}_{+} - \bar\alpha_{-} F^{HLL}_{-})
      + \frac{\Delta t}{\epsilon\Delta x}(\bar\alpha_{+} - \bar\alpha_{-}) F(U_i^m)
      - \frac{\gamma\Delta t}{2\epsilon}(\bar\alpha_{+} + \bar\alpha_{-}) R(U_i^m).

The parameter is built so that
:math:`Q(I + \underline\sigma)^{-1} = \mathcal{M} Q / b^2` with
:math:`\mathcal{M}` the target effective diffusion at the interface. As
:math:`\epsilon \to 0` the conserved part then follows the three-point
scheme of :func:`discrete_asymptotic_step`.

.. autoclass:: APConfig
.. autofunction:: alpha_matrix
.. autofunction:: sigma_from_target_diffusion
.. autofunction:: modified_interface_states
.. autofunction:: ap_step
.. autofunction:: discrete_asymptotic_step
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numba import njit

from apfv.chapman_enskog import closed_form_effective
from apfv.errors import ConfigurationError, NumericalFailure
from apfv.hyperbolic import (
    CFL_SLACK,
    DiscreteField,
    check_cfl,
    check_field,
    intermediate_state,
    wave_speed,
)
from apfv.models import RelaxationModel, ShallowWaterFriction

MAX_CONDITION = 1.0e12
MIN_DIFFUSION = 1.0e-8


# {{{ configuration

@dataclass(frozen=True)
class APConfig:
    """Parameters of the AP scheme.

    ``sigma=None`` selects the target-diffusion rule, otherwise the given
    ``N x N`` matrix is used at every interface. ``b=None`` takes 1.1 times
    the largest spectral radius at every step. ``gamma=None`` means
    ``eps^-q``; ``gamma=0`` switches the relaxation coupling off.
    """

    eps: float
    b: float | None = None
    sigma: np.ndarray | None = None
    gamma: float | None = None
    b_factor: float = 1.1
    min_diffusion: float = MIN_DIFFUSION
    #: regularization of the shallow water target diffusion
    delta: float = 1.0e-8

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ConfigurationError("epsilon must lie in (0, 1]")
        if self.b is not None and not self.b > 0:
            raise ConfigurationError("b must be positive")
        if self.gamma is not None and self.gamma < 0:
            raise ConfigurationError("gamma must be nonnegative")

    def gamma_for(self, model):
        return self.eps ** (-model.q) if self.gamma is None else self.gamma

# }}}


# {{{ matrices

def alpha_matrix(gamma, dx, b, sigma):
    r""":math:`(I + \tfrac{\gamma \Delta x}{2b}(I + \sigma))^{-1}`, batched over leading axes."""
    if gamma < 0 or not (dx > 0 and b > 0):
        raise ConfigurationError("alpha_matrix needs gamma >= 0, dx > 0, b > 0")
    sigma = np.asarray(sigma, dtype=np.float64)
    eye = np.eye(sigma.shape[-1])
    K = eye + gamma * dx / (2 * b) * (eye + sigma)
    cond = np.linalg.cond(K)
    if np.any(~np.isfinite(cond)) or np.any(cond > MAX_CONDITION):
        raise ConfigurationError("I + (gamma dx/2b)(I + sigma) is singular or ill-conditioned")
    return np.linalg.inv(K)


@functools.lru_cache(maxsize=None)
def _adapted(Qbytes, shape):
    Q = np.frombuffer(Qbytes).reshape(shape)
    _, _, Vh = np.linalg.svd(Q)
    T = np.vstack([Q, Vh[shape[0]:]])
    return T, np.linalg.inv(T)


def adapted_coordinates(Q):
    """Return ``(T, T^{-1})`` with ``T = [Q; P]`` and ``P`` spanning ``ker Q``.

    In these coordinates ``(I + sigma)^{-1}`` is block diagonal. For a
    selection matrix ``Q`` this is a permutation.
    """
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    return _adapted(Q.tobytes(), Q.shape)


def _block(T, Tinv, top, bottom):
    """``T^{-1} blockdiag(top, bottom) T``, batched; ``bottom`` multiplies the identity."""
    n = top.shape[-1]
    N = T.shape[0]
    D = np.zeros(top.shape[:-2] + (N, N))
    D[..., :n, :n] = top
    idx = np.arange(n, N)
    D[..., idx, idx] = np.asarray(bottom)[..., None]
    return Tinv @ D @ T


def _clamp(M, floor):
    if M.shape[-1] == 1:
        return np.maximum(M, floor)
    w = np.linalg.eigvals(M).real.min(axis=-1)
    shift = np.maximum(floor - w, 0.0)
    return M + shift[..., None, None] * np.eye(M.shape[-1])


def target_diffusion(model: RelaxationModel, uL, uR, dx, eps=1.0, *,
                     min_diffusion=MIN_DIFFUSION, delta=1.0e-8):
    """Interface diffusion ``M((uL + uR)/2)`` scaled by ``eps^(1-q)``.

    For shallow water the fully nonlinear limit flux is linearized around the
    interface slope ``(uR - uL)/dx``.
    """
    uL = np.asarray(uL, dtype=np.float64)
    uR = np.asarray(uR, dtype=np.float64)
    um = 0.5 * (uL + uR)
    model.check_equilibrium(um)

    if isinstance(model, ShallowWaterFriction):
        h = um[..., 0]
        slope = np.abs(uR[..., 0] - uL[..., 0]) / dx
        M = (np.sqrt(h) / model.friction(h) / np.sqrt(np.maximum(slope, delta)))[..., None, None]
    else:
        M = closed_form_effective(model).diffusion(um)
    M = _clamp(M, min_diffusion)
    return M * eps ** (1 - model.q)


def sigma_from_target_diffusion(model: RelaxationModel, uL, uR, b, dx=1.0, eps=1.0, *,
                                min_diffusion=MIN_DIFFUSION, delta=1.0e-8):
    """Return ``(sigma, Mcal)`` satisfying ``Q (I + sigma)^{-1} = Mcal Q / b^2``."""
    Mcal = target_diffusion(model, uL, uR, dx, eps, min_diffusion=min_diffusion, delta=delta)
    T, Tinv = adapted_coordinates(model.Q)
    n = model.n
    top = b * b * np.linalg.inv(Mcal) - np.eye(n)
    cond = np.linalg.cond(top + np.eye(n))
    if np.any(cond > MAX_CONDITION):
        raise ConfigurationError("target diffusion makes I + sigma ill-conditioned; try a larger b")
    sigma = _block(T, Tinv, top, np.zeros(top.shape[:-2]))
    return sigma, Mcal


def commutation_residual(Q, sigma, Mcal, b):
    """``|Q (I + sigma)^{-1} - Mcal Q / b^2|_inf``."""
    N = sigma.shape[-1]
    lhs = Q @ np.linalg.inv(np.eye(N) + sigma)
    return float(np.max(np.abs(lhs - Mcal @ Q / b**2)))


def source_rewriting_residual(alpha, sigma, R, b, dx, gamma):
    """``|(b/dx)(I - alpha) Rbar - (gamma/2) alpha R|_inf`` with ``Rbar = (I + sigma)^{-1} R``."""
    N = alpha.shape[-1]
    Rbar = np.linalg.solve(np.eye(N) + sigma, R)
    lhs = b / dx * (np.eye(N) - alpha) @ Rbar
    return float(np.max(np.abs(lhs - 0.5 * gamma * alpha @ R)))

# }}}


# {{{ interface data

def _shift(a, k):
    """Periodic shift: ``_shift(a, 1)[i] = a[i + 1]``."""
    return np.concatenate((a[k:], a[:k]))


@dataclass(frozen=True)
class InterfaceData:
    """Per-interface parameters; index ``i`` refers to ``x_{i+1/2}``.

    With the target-diffusion rule the matrices are stored factored in
    adapted coordinates, ``alpha = T^{-1} blockdiag(top, bottom I) T``, and
    applied without forming dense arrays.
    """

    b: float
    gamma: float
    dense_alpha: np.ndarray | None = None
    dense_sigma: np.ndarray | None = None
    top: np.ndarray | None = None
    bottom: np.ndarray | None = None
    T: np.ndarray | None = None
    Tinv: np.ndarray | None = None
    Mcal: np.ndarray | None = None

    @property
    def alpha(self):
        if self.dense_alpha is not None:
            return self.dense_alpha
        return _block(self.T, self.Tinv, self.top, self.bottom)

    @property
    def sigma(self):
        if self.dense_sigma is not None:
            return self.dense_sigma
        n = self.top.shape[-1]
        inner = self.b**2 * np.linalg.inv(self.Mcal) - np.eye(n)
        return _block(self.T, self.Tinv, inner, np.zeros(inner.shape[:-2]))

    def apply(self, V, shift=0):
        """``alpha_{i+1/2+shift} V_i`` for every cell ``i``."""
        if self.dense_alpha is not None:
            a = self.dense_alpha if shift == 0 else _shift(self.dense_alpha, shift)
            return np.einsum("kij,kj->ki", a, V)
        top, bottom = self.top, self.bottom
        if shift:
            top, bottom = _shift(top, shift), _shift(bottom, shift)
        W = V @ self.T.T
        n = top.shape[-1]
        if n == 1:
            W[:, :1] *= top[:, 0]
        else:
            W[:, :n] = np.einsum("kij,kj->ki", top, W[:, :n])
        W[:, n:] *= bottom[:, None]
        return W @ self.Tinv.T


def interface_data(model: RelaxationModel, U, cfg: APConfig, dx, b=None) -> InterfaceData:
    b = _speed(model, U, cfg) if b is None else b
    gamma = cfg.gamma_for(model)
    cells, N = U.shape

    if cfg.sigma is not None:
        sigma = np.broadcast_to(np.asarray(cfg.sigma, dtype=np.float64), (cells, N, N))
        alpha = np.broadcast_to(alpha_matrix(gamma, dx, b, sigma[0]), (cells, N, N))
        return InterfaceData(b, gamma, dense_alpha=alpha, dense_sigma=sigma)

    u = U @ model.Q.T
    Mcal = target_diffusion(model, u, _shift(u, 1), dx, cfg.eps,
                            min_diffusion=cfg.min_diffusion, delta=cfg.delta)
    ratio = b * b / Mcal[..., 0, 0] if model.n == 1 else None
    if ratio is not None:
        if np.any(ratio > MAX_CONDITION) or np.any(ratio < 1 / MAX_CONDITION):
            raise ConfigurationError(
                "target diffusion makes I + sigma ill-conditioned; try a larger b")
    else:
        sigma_from_target_diffusion(model, u, _shift(u, 1), b, dx, cfg.eps,
                                    min_diffusion=cfg.min_diffusion, delta=cfg.delta)

    # Q block Mcal (Mcal + c b^2)^{-1}, complement 1/(1 + c)
    T, Tinv = adapted_coordinates(model.Q)
    c = gamma * dx / (2 * b)
    if model.n == 1:
        top = Mcal / (Mcal + c * b * b)
    else:
        top = Mcal @ np.linalg.inv(Mcal + c * b * b * np.eye(model.n))
    return InterfaceData(b, gamma, top=top, bottom=np.full(cells, 1.0 / (1.0 + c)),
                         T=T, Tinv=Tinv, Mcal=Mcal)


def _speed(model, U, cfg):
    rho = float(np.max(model.spectral_radius(U)))
    if cfg.b is None:
        return cfg.b_factor * rho
    if cfg.b < rho:
        raise NumericalFailure(
            f"wave speed b = {cfg.b} is below the spectral radius {rho:.6g}")
    return cfg.b


def modified_interface_states(model: RelaxationModel, UL, UR, alpha, sigma, b):
    r"""Starred states :math:`\bar\alpha \bar U^\star + (I - \bar\alpha)(U - \bar R(U))`."""
    UL = np.asarray(UL, dtype=np.float64)
    UR = np.asarray(UR, dtype=np.float64)
    N = UL.shape[-1]
    K = np.eye(N) + np.asarray(sigma)
    if np.any(np.linalg.cond(K) > MAX_CONDITION):
        raise ConfigurationError("I + sigma is singular")

    def rbar(U):
        return np.linalg.solve(K, model.relaxation(U)[..., None])[..., 0]

    star = intermediate_state(model, UL, UR, b)
    I_a = np.eye(N) - alpha
    common = np.einsum("...ij,...j->...i", alpha, star)
    SL = common + np.einsum("...ij,...j->...i", I_a, UL - rbar(UL))
    SR = common + np.einsum("...ij,...j->...i", I_a, UR - rbar(UR))
    return SL, SR

# }}}


# {{{ stepping

def ap_step(model: RelaxationModel, field: DiscreteField, cfg: APConfig, dt,
            *, data: InterfaceData | None = None) -> DiscreteField:
    """One step of the AP scheme in the late-time variable.

    ``dt`` is checked against ``b dt/dx <= 1/2``. Stability of the explicit
    relaxation term additionally needs ``b (dt/eps)/dx <= 1/2``, which is
    what :func:`run_ap` uses.
    """
    dx = field.grid.dx
    U = field.states
    eps = cfg.eps
    data = interface_data(model, U, cfg, dx) if data is None else data
    b = data.b
    check_cfl(b, dt, dx)

    F = model.flux(U)
    lam = dt / (eps * dx)
    rcoef = data.gamma * dt / (2 * eps)

    if data.dense_alpha is None:
        new = _ap_update(U, F, model.relaxation(U), data.top, data.bottom,
                         data.T, data.Tinv, b, lam, rcoef, data.gamma != 0)
    else:
        Fh = 0.5 * (F + _shift(F, 1)) - 0.5 * b * (_shift(U, 1) - U)
        aF = data.apply(Fh)
        new = U - lam * (aF - _shift(aF, -1))
        if data.gamma != 0:
            R = model.relaxation(U)
            new += lam * (data.apply(F) - data.apply(F, -1))
            new -= rcoef * (data.apply(R) + data.apply(R, -1))

    check_field(model, new)
    return replace(field, states=new, time=field.time + dt)


@njit(cache=True, inline="always")
def _apply_factored(top, bottom, T, Tinv, k, v, w, z, out):
    # out = T^{-1} blockdiag(top[k], bottom[k] I) T v; w, z are scratch
    N = T.shape[0]
    n = top.shape[1]
    for i in range(N):
        acc = 0.0
        for j in range(N):
            acc += T[i, j] * v[j]
        w[i] = acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += top[k, i, j] * w[j]
        z[i] = acc
    for i in range(n, N):
        z[i] = bottom[k] * w[i]
    for i in range(N):
        acc = 0.0
        for j in range(N):
            acc += Tinv[i, j] * z[j]
        out[i] = acc


@njit(cache=True)
def _ap_update(U, F, R, top, bottom, T, Tinv, b, lam, rcoef, relax):
    cells, N = U.shape
    w = np.empty(N)
    z = np.empty(N)
    v = np.empty(N)
    out = np.empty(N)

    # alpha_{k+1/2} applied to the HLL flux at x_{k+1/2}
    aFh = np.empty((cells, N))
    for k in range(cells):
        kp = k + 1 if k + 1 < cells else 0
        for i in range(N):
            v[i] = 0.5 * (F[k, i] + F[kp, i]) - 0.5 * b * (U[kp, i] - U[k, i])
        _apply_factored(top, bottom, T, Tinv, k, v, w, z, out)
        for i in range(N):
            aFh[k, i] = out[i]

    new = np.empty((cells, N))
    for k in range(cells):
        km = k - 1 if k > 0 else cells - 1
        for i in range(N):
            new[k, i] = U[k, i] - lam * (aFh[k, i] - aFh[km, i])
        if relax:
            # alpha_+ (lam F - rcoef R) - alpha_- (lam F + rcoef R)
            for i in range(N):
                v[i] = lam * F[k, i] - rcoef * R[k, i]
            _apply_factored(top, bottom, T, Tinv, k, v, w, z, out)
            for i in range(N):
                new[k, i] += out[i]
            for i in range(N):
                v[i] = lam * F[k, i] + rcoef * R[k, i]
            _apply_factored(top, bottom, T, Tinv, km, v, w, z, out)
            for i in range(N):
                new[k, i] -= out[i]
    return new


def ap_timestep(b, dx, eps, safety=0.9):
    """Late-time step with ``b (dt/eps)/dx = safety/2``."""
    if not 0 < safety <= 1:
        raise ConfigurationError("safety must lie in (0, 1]")
    return safety * eps * dx / (2 * b)


def run_ap(model: RelaxationModel, field: DiscreteField, cfg: APConfig, t_final,
           safety=0.9, callback=None, max_steps=None) -> DiscreteField:
    """Advance the AP scheme to the late time ``t_final``."""
    if t_final < field.time:
        raise ConfigurationError("final time precedes the current time")
    check_field(model, field.states)

    steps = 0
    while field.time < t_final:
        data = interface_data(model, field.states, cfg, field.grid.dx)
        dt = min(ap_timestep(data.b, field.grid.dx, cfg.eps, safety), t_final - field.time)
        field = ap_step(model, field, cfg, dt, data=data)
        steps += 1
        if callback is not None:
            callback(field)
        if max_steps is not None and steps >= max_steps:
            break
    return field

# }}}


# {{{ limit scheme and diagnostics

def discrete_asymptotic_step(model: RelaxationModel, u, dt, dx,
                             mcal_rule: Callable | None = None):
    """Three-point limit scheme
    ``u + dt/dx^2 (M+ (u_{i+1} - u_i) + M- (u_{i-1} - u_i))``."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if mcal_rule is None:
        def mcal_rule(uL, uR, dx):
            return target_diffusion(model, uL, uR, dx)

    up = np.roll(u, -1, axis=0)
    Mp = mcal_rule(u, up, dx)
    Mm = np.roll(Mp, 1, axis=0)
    bound = dt * float(np.max(np.linalg.norm(Mp, ord=2, axis=(-2, -1)))) / dx**2
    if bound > 0.5 + CFL_SLACK:
        raise NumericalFailure(f"parabolic stability bound violated: dt |M|/dx^2 = {bound:.6g}")

    flux = np.einsum("kij,kj->ki", Mp, up - u)
    return u + dt / dx**2 * (flux - np.einsum("kij,kj->ki", Mm, u - np.roll(u, 1, axis=0)))


@dataclass(frozen=True)
class StarredViolation:
    interface: int
    side: str
    message: str


def ap_invariant_domain_check(model: RelaxationModel, field: DiscreteField,
                              cfg: APConfig) -> list[StarredViolation]:
    """Starred states outside the admissible set, with interface indices."""
    U = field.states
    data = interface_data(model, U, cfg, field.grid.dx)
    SL, SR = modified_interface_states(model, U, np.roll(U, -1, axis=0),
                                       data.alpha, data.sigma, data.b)
    out = []
    for side, S in (("L", SL), ("R", SR)):
        for k in np.flatnonzero(~model.admissible(S)):
            out.append(StarredViolation(int(k), side, model.admissibility_violation(S[k])))
    return out


def entropy_monotonicity_diagnostic(model: RelaxationModel, trajectory):
    """Discrete total entropy ``dx sum_i Phi(U_i)`` along a trajectory."""
    ent = model.entropy
    if ent is None:
        raise ConfigurationError(f"model '{model.name}' has no entropy pair")
    return np.array([f.grid.dx * float(np.sum(ent.entropy(f.states))) for f in trajectory])

# }}}
