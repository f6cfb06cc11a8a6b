"""
Entropy and contraction diagnostics
-----------------------------------

.. autofunction:: entropy_residual
.. autofunction:: entropy_dissipation_total
.. autofunction:: dissipation_bound
.. autofunction:: kruzkov_contraction
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from apfv.errors import PreconditionError
from apfv.spacetime.mesh import N_K
from apfv.spacetime.scheme import (
    DiscreteSpacetimeSolution,
    SlabResult,
    SpacelikeFaces,
    hyperbolicity_bounds,
    lf_flux,
    spacelike_faces,
)

# Gauss-Legendre nodes on [0, 1] for integrals in the state variable
_SX, _SW = np.polynomial.legendre.leggauss(8)
_SX = 0.5 * (_SX + 1)
_SW = 0.5 * _SW


# {{{ Kruzkov entropy residuals

def kruzkov_face_flux(omega, faces: SpacelikeFaces, x, c):
    """Face average of ``sgn(x - c) (omega0(x) - omega0(c))``; broadcasts ``(..., J)``."""
    x = np.asarray(x, dtype=np.float64)[..., None]
    c = np.asarray(c, dtype=np.float64)[..., None]
    vals = np.sign(x - c) * (omega.omega0(x, faces.t, faces.theta)
                             - omega.omega0(c, faces.t, faces.theta))
    return np.sum(faces.weights * vals, axis=-1) / faces.measure


def entropy_residual(omega, slab: SlabResult, c):
    """Discrete Kruzkov entropy residuals of one slab.

    Returns an array of shape ``(len(c), J, 2)`` whose entries are
    ``phi^Omega(u~) - phi^Omega(u^-) + (N_K/|e^+|) (Q(u^-, v^-, c) - Q(u^-, u^-, c))``
    for the left (0) and right (1) node track of every element, with
    ``Q(u, v, c) = q(u max c, v max c) - q(u min c, v min c)``. All entries
    are nonpositive up to round-off for a monotone scheme.
    """
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))[:, None]
    u = slab.u_minus[None, :]
    vert, upper = slab.vertical, slab.upper
    D = slab.D
    nbr = (np.roll(slab.u_minus, 1)[None, :], np.roll(slab.u_minus, -1)[None, :])

    def I_track(x, side):
        # side 0: track j evaluated at x_j; side 1: track j+1 evaluated at x_j
        if side == 0:
            return vert.integral(omega, x)
        return np.roll(vert.integral(omega, np.roll(x, 1, axis=-1)), -1, axis=-1)

    def q(x, y, side):
        sign = 1 if side == 0 else -1
        Dj = D if side == 0 else np.roll(D, -1)
        return lf_flux(I_track(x, side), I_track(y, side), x, y, Dj, sign)

    def Q(x, y, side):
        return q(np.maximum(x, c), np.maximum(y, c), side) - q(np.minimum(x, c),
                                                              np.minimum(y, c), side)

    base = kruzkov_face_flux(omega, upper, u, c)
    out = np.empty((c.shape[0], u.shape[1], 2))
    for side in (0, 1):
        uu = np.broadcast_to(u, (c.shape[0], u.shape[1]))
        vv = np.broadcast_to(nbr[side], uu.shape)
        jump = Q(uu, vv, side) - Q(uu, uu, side)
        tilde = np.broadcast_to(slab.intermediates[:, side], uu.shape)
        out[..., side] = (kruzkov_face_flux(omega, upper, tilde, c) - base
                          + N_K / upper.measure * jump)
    return out


def max_entropy_residual(solution: DiscreteSpacetimeSolution, c):
    return max((float(np.max(entropy_residual(solution.omega, s, c)))
                for s in solution.slabs), default=0.0)

# }}}


# {{{ quadratic entropy

def quadratic_entropy_flux0(omega, x, t, theta):
    """``Omega0(x) = int_0^x s d omega0/du (s) ds``, the ``dtheta`` part of the
    entropy flux paired with ``U(u) = u^2/2``."""
    x = np.asarray(x, dtype=np.float64)[..., None]
    s = x * _SX
    vals = s * omega.d_omega0(s, np.asarray(t)[..., None], np.asarray(theta)[..., None])
    return x[..., 0] * np.sum(_SW * vals, axis=-1)


def quadratic_face_entropy(omega, faces: SpacelikeFaces, x):
    """``|e| phi^Omega_e(x)`` for element values ``x`` of shape ``(J,)``."""
    x = np.asarray(x, dtype=np.float64)[:, None]
    vals = quadratic_entropy_flux0(omega, np.broadcast_to(x, faces.theta.shape), faces.t,
                                   faces.theta)
    return np.sum(faces.weights * vals, axis=-1)


def continuous_initial_entropy(omega, u0, samples=4096):
    """``int_{H_0} Omega0(u0)`` by the composite midpoint rule on the circle."""
    th = (np.arange(samples) + 0.5) * (2 * np.pi / samples)
    vals = quadratic_entropy_flux0(omega, u0(th), 0.0, th)
    return float(np.sum(vals) * 2 * np.pi / samples)


def entropy_dissipation_total(solution: DiscreteSpacetimeSolution):
    """``sum (|e_K^+|/N_K) |u~ - u_K^+|^2`` over all elements and node tracks."""
    total = 0.0
    for s in solution.slabs:
        d = s.intermediates - s.u_plus[:, None]
        total += float(np.sum(s.upper.measure[:, None] / N_K * d * d))
    return total


@dataclass(frozen=True)
class DissipationBound:
    total: float
    constant: float
    initial_entropy: float
    beta: float
    c_lower: float
    c_upper: float
    discrete_to_continuous: float

    @property
    def bound(self):
        return self.constant * self.initial_entropy

    @property
    def ratio(self):
        return self.total / self.bound if self.bound > 0 else 0.0

    @property
    def holds(self):
        return self.total <= self.bound * (1 + 1e-12) + 1e-300


def dissipation_bound(solution: DiscreteSpacetimeSolution) -> DissipationBound:
    r"""Measured dissipation against ``C int_{H_0} Omega(u0)``.

    ``beta`` is the sampled infimum of ``(phi^Omega o phi^{-1})''`` over the
    data range, which for ``U = u^2/2`` equals ``1/phi'``. Convexity turns the
    quadratic entropy balance into a bound on ``|phi(u~) - phi(u^+)|^2``, and
    ``|u~ - u^+| <= |phi(u~) - phi(u^+)| / c_lower`` converts it to the
    state variable. Hence ``C = 2 r / (beta c_lower^2)`` with ``r >= 1`` the
    ratio of discrete to continuous initial entropy when it exceeds one.
    """
    omega, mesh = solution.omega, solution.mesh
    lows, highs = [], []
    for i in range(1, mesh.slabs + 1):
        lo, hi = hyperbolicity_bounds(omega, spacelike_faces(omega, mesh, i), solution.data_range)
        lows.append(np.min(lo))
        highs.append(np.max(hi))
    c_lower, c_upper = float(min(lows)), float(max(highs))
    beta = 1.0 / c_upper

    faces0 = spacelike_faces(omega, mesh, 0)
    discrete = float(np.sum(quadratic_face_entropy(omega, faces0, solution.values[0])))
    continuous = continuous_initial_entropy(omega, solution.u0)
    ratio = discrete / continuous if continuous > 0 else 1.0
    C = 2.0 * max(1.0, ratio) / (beta * c_lower**2)
    return DissipationBound(entropy_dissipation_total(solution), C, continuous, beta,
                            c_lower, c_upper, ratio)

# }}}


# {{{ contraction

def kruzkov_contraction(solution_u: DiscreteSpacetimeSolution,
                        solution_v: DiscreteSpacetimeSolution):
    """``I_t = sum_e |int_e omega0(u_e) - omega0(v_e)|`` on every slice."""
    if not solution_u.mesh.same_as(solution_v.mesh):
        raise PreconditionError("contraction needs both solutions on the same triangulation")
    if solution_u.omega is not solution_v.omega:
        raise PreconditionError("contraction needs both solutions for the same flux field")
    omega, mesh = solution_u.omega, solution_u.mesh
    out = np.empty(mesh.slabs + 1)
    for i in range(mesh.slabs + 1):
        faces = spacelike_faces(omega, mesh, i)
        diff = (faces.integrate(omega.omega0, solution_u.values[i])
                - faces.integrate(omega.omega0, solution_v.values[i]))
        out[i] = np.sum(np.abs(diff))
    return out

# }}}


# {{{ reference solutions and distances

def burgers_riemann_circle(theta, t, u_left=1.0, u_right=0.0):
    """Exact Burgers solution on the circle for ``u = u_left`` on ``[0, pi)``
    and ``u_right`` elsewhere, valid for ``t < 2 pi/(u_left - u_right)``
    while the rarefaction and the shock stay apart; requires
    ``u_left > u_right >= 0``."""
    if not u_left > u_right >= 0:
        raise PreconditionError("the closed form needs u_left > u_right >= 0")
    th = np.mod(np.asarray(theta, dtype=np.float64), 2 * np.pi)
    shock = np.pi + 0.5 * (u_left + u_right) * t
    lo = u_right * t
    hi = u_left * t
    out = np.where(th < shock, u_left, u_right)
    fan = (th > lo) & (th < hi)
    if t > 0:
        out = np.where(fan, th / t, out)
    return np.where(th <= lo, u_right, out)


def piecewise_l1_distance(edges_a, values_a, edges_b, values_b):
    """Exact L1 distance on the circle between two piecewise constant functions.

    ``edges_*`` are the left ends of the pieces (any real angles, increasing
    mod 2 pi after sorting); piece ``k`` extends to the next edge.
    """
    def canon(edges, values):
        e = np.mod(np.asarray(edges, dtype=np.float64), 2 * np.pi)
        order = np.argsort(e)
        return e[order], np.asarray(values, dtype=np.float64)[order]

    ea, va = canon(edges_a, values_a)
    eb, vb = canon(edges_b, values_b)
    cuts = np.unique(np.concatenate([ea, eb, [0.0, 2 * np.pi]]))
    cuts = cuts[(cuts >= 0) & (cuts <= 2 * np.pi)]
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    lengths = np.diff(cuts)

    def lookup(e, v, x):
        # the piece containing x starts at the last edge <= x, wrapping to the last piece
        k = np.searchsorted(e, x, side="right") - 1
        return v[k]  # k = -1 selects the wrapped last piece

    return float(np.sum(lengths * np.abs(lookup(ea, va, mids) - lookup(eb, vb, mids))))

# }}}
