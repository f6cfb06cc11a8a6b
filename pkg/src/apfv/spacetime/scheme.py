r"""
Geometry-preserving finite volumes on slab meshes
-------------------------------------------------

Element values are updated through averaged fluxes on spacelike faces,

.. math::

    |e_K^+|\, \varphi_{e_K^+}(u_K^+) = |e_K^-|\, \varphi_{e_K^-}(u_K^-)
        - \sum_{e^0} q_{K,e^0}(u_K^-, u_{K_{e^0}}^-),

with a face-integrated Lax-Friedrichs total flux on the two vertical faces.
The left vertical face of an element enters with sign ``+1`` and the right
one with ``-1``; ``I_j(u)`` is the integral of ``omega(u)`` along node track
``j`` traversed upward in time.

.. autofunction:: face_measure
.. autofunction:: averaged_flux
.. autofunction:: numerical_flux
.. autofunction:: discretize_initial_data
.. autofunction:: spacetime_step
.. autofunction:: solve_spacetime
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from apfv.errors import (
    ConfigurationError,
    DomainError,
    HyperbolicityError,
    NumericalFailure,
)
from apfv.spacetime.forms import FluxField1Form
from apfv.spacetime.mesh import N_K, SpacetimeTriangulation

GAUSS_X, GAUSS_W = np.polynomial.legendre.leggauss(5)
_TRACK_W = 0.5 * GAUSS_W
D_FACTOR = 1.1
BISECTION_WIDTH = 1.0e-8
NEWTON_TOL = 1.0e-13
DECOMPOSITION_TOL = 1.0e-12
# sample count for Lipschitz and hyperbolicity bounds over the data range
RANGE_SAMPLES = 33


# {{{ quadrature on faces

@dataclass(frozen=True)
class SpacelikeFaces:
    """Quadrature data for all faces of one slice (arrays of shape ``(J, 5)``)."""

    t: float
    theta: np.ndarray
    half: np.ndarray
    measure: np.ndarray

    @property
    def weights(self):
        return self.half[:, None] * GAUSS_W

    def integrate(self, fn, u):
        """``int_e fn(u_e; t, theta) dtheta`` with ``u`` broadcast as ``(..., J)``."""
        u = np.asarray(u, dtype=np.float64)[..., None]
        return (fn(u, self.t, self.theta) @ GAUSS_W) * self.half

    def averaged(self, omega, u):
        return self.integrate(omega.omega0, u) / self.measure

    def averaged_derivative(self, omega, u):
        return self.integrate(omega.d_omega0, u) / self.measure


def spacelike_faces(omega: FluxField1Form, mesh: SpacetimeTriangulation, i) -> SpacelikeFaces:
    a, b = mesh.face_bounds(i)
    half = 0.5 * (b - a)
    theta = a[:, None] + half[:, None] * (GAUSS_X + 1)
    t = float(mesh.slice_times[i])
    measure = (omega.d_omega0(np.zeros_like(theta), t, theta) @ GAUSS_W) * half
    bad = ~(measure > 0)
    if np.any(bad):
        raise HyperbolicityError(
            f"slice {i}, face {int(np.flatnonzero(bad)[0])}: nonpositive face measure")
    return SpacelikeFaces(t, theta, half, measure)


@dataclass(frozen=True)
class VerticalFaces:
    """Node tracks of one slab, traversed upward; arrays of shape ``(J, 5)``."""

    t: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    tau: float

    def integral(self, omega, u):
        """``I_j(u)`` for ``u`` broadcast as ``(..., J)``."""
        u = np.asarray(u, dtype=np.float64)[..., None]
        integrand = (omega.omega0(u, self.t, self.theta) * self.dtheta
                     + omega.omega1(u, self.t, self.theta) * self.tau)
        return integrand @ _TRACK_W

    def derivative(self, omega, u):
        u = np.asarray(u, dtype=np.float64)[..., None]
        integrand = (omega.d_omega0(u, self.t, self.theta) * self.dtheta
                     + omega.d_omega1(u, self.t, self.theta) * self.tau)
        return integrand @ _TRACK_W


def vertical_faces(mesh: SpacetimeTriangulation, i) -> VerticalFaces:
    s = 0.5 * (GAUSS_X + 1)
    t0, t1 = mesh.slice_times[i], mesh.slice_times[i + 1]
    th0, th1 = mesh.nodes[i], mesh.nodes[i + 1]
    dtheta = (th1 - th0)[:, None]
    theta = th0[:, None] + dtheta * s
    t = np.broadcast_to(t0 + (t1 - t0) * s, theta.shape)
    return VerticalFaces(t, theta, dtheta, float(t1 - t0))

# }}}


# {{{ single-face operations

def face_measure(omega: FluxField1Form, t, a, b) -> float:
    """``|e| = int_a^b d omega0/du (0; t, theta) dtheta`` on the face ``[a, b]`` of slice ``t``."""
    half = 0.5 * (b - a)
    theta = a + half * (GAUSS_X + 1)
    m = float(np.sum(half * GAUSS_W * omega.d_omega0(np.zeros_like(theta), t, theta)))
    if not m > 0:
        raise HyperbolicityError(f"nonpositive face measure {m:.3e} on [{a}, {b}] at t = {t}")
    return m


def averaged_flux(omega: FluxField1Form, t, a, b, u):
    """``(phi_e(u), d phi_e/du (u))`` on the face ``[a, b]`` of slice ``t``."""
    m = face_measure(omega, t, a, b)
    half = 0.5 * (b - a)
    theta = a + half * (GAUSS_X + 1)
    u = np.asarray(u, dtype=np.float64)[..., None]
    w = half * GAUSS_W
    return (np.sum(w * omega.omega0(u, t, theta), axis=-1) / m,
            np.sum(w * omega.d_omega0(u, t, theta), axis=-1) / m)


def lipschitz_bound(vertical: VerticalFaces, omega, data_range):
    """``sup |I_j'(u)|`` over sampled ``u`` in the data range, per node track."""
    u = np.linspace(data_range[0], data_range[1], RANGE_SAMPLES)[:, None]
    return np.max(np.abs(vertical.derivative(omega, u)), axis=0)


def lf_flux(I_u, I_v, u, v, D, sign):
    """Total flux through a vertical face with orientation ``sign``."""
    return 0.5 * sign * (I_u + I_v) + 0.5 * D * (u - v)


def numerical_flux(omega: FluxField1Form, vertical: VerticalFaces, j, u, v, D, *, sign=1,
                   check_range=None):
    """Lax-Friedrichs total flux through node track ``j`` seen from the element
    on its right (``sign=+1``) or on its left (``sign=-1``).

    With ``check_range`` the monotonicity of the flux in both arguments is
    verified by sampling ``I_j'`` over that range.
    """
    sl = slice(j, j + 1)
    sub = VerticalFaces(vertical.t[sl], vertical.theta[sl], vertical.dtheta[sl],
                        vertical.tau)
    if check_range is not None:
        lip = float(lipschitz_bound(sub, omega, check_range)[0])
        if D < lip:
            raise NumericalFailure(
                f"node track {j}: D = {D:.6g} below the Lipschitz bound {lip:.6g}, "
                "flux is not monotone")
    Iu = sub.integral(omega, np.atleast_1d(u)[..., None])[..., 0]
    Iv = sub.integral(omega, np.atleast_1d(v)[..., None])[..., 0]
    out = lf_flux(Iu, Iv, np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64),
                  D, sign)
    return out if np.ndim(u) or np.ndim(v) else float(np.ravel(out)[0])

# }}}


# {{{ monotone inversion

def invert_averaged_flux(omega: FluxField1Form, faces: SpacelikeFaces, target, bracket):
    """Solve ``phi_e(u) = target`` face by face inside ``bracket``.

    Bisection to width ``1e-8`` followed by safeguarded Newton until the step
    falls below ``1e-13`` relative.
    """
    target = np.asarray(target, dtype=np.float64)
    lo = np.full(target.shape, float(bracket[0]))
    hi = np.full(target.shape, float(bracket[1]))
    f_lo = faces.averaged(omega, lo) - target
    f_hi = faces.averaged(omega, hi) - target
    bad = (f_lo > 0) | (f_hi < 0) | ~np.isfinite(target)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise NumericalFailure(
            f"face {k}: root not bracketed in [{bracket[0]:.6g}, {bracket[1]:.6g}]")

    while np.max(hi - lo) > BISECTION_WIDTH:
        mid = 0.5 * (lo + hi)
        above = faces.averaged(omega, mid) > target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)

    u = 0.5 * (lo + hi)
    for _ in range(20):
        step = (faces.averaged(omega, u) - target) / faces.averaged_derivative(omega, u)
        u_new = np.clip(u - step, lo - BISECTION_WIDTH, hi + BISECTION_WIDTH)
        done = np.max(np.abs(u_new - u) / np.maximum(1.0, np.abs(u)))
        u = u_new
        if done <= NEWTON_TOL:
            break
    else:
        raise NumericalFailure("Newton iteration did not converge in the inversion")
    return u


def expanded_range(data_range):
    lo, hi = float(data_range[0]), float(data_range[1])
    if not hi >= lo:
        raise ConfigurationError("data range must satisfy lo <= hi")
    pad = 0.1 * max(hi - lo, 1e-3 * max(1.0, abs(lo), abs(hi)))
    return lo - pad, hi + pad

# }}}


# {{{ initial data

def discretize_initial_data(omega: FluxField1Form, mesh: SpacetimeTriangulation, u0,
                            data_range=None):
    """Element values on ``H_0`` from ``phi_e(u_K) = (1/|e|) int_e omega0(u0)``."""
    faces = spacelike_faces(omega, mesh, 0)
    values = np.asarray(u0(faces.theta), dtype=np.float64)
    if values.shape != faces.theta.shape or not np.all(np.isfinite(values)):
        raise DomainError("initial data must be finite and vectorized over theta")
    w = faces.weights * omega.omega0(values, faces.t, faces.theta)
    target = np.sum(w, axis=-1) / faces.measure
    if data_range is None:
        data_range = (float(np.min(values)), float(np.max(values)))
    return invert_averaged_flux(omega, faces, target, expanded_range(data_range))

# }}}


# {{{ slab update

@dataclass(frozen=True)
class SlabResult:
    index: int
    lower: SpacelikeFaces
    upper: SpacelikeFaces
    vertical: VerticalFaces
    u_minus: np.ndarray
    u_plus: np.ndarray
    #: intermediate values, column 0 for the left node track and 1 for the right
    intermediates: np.ndarray
    D: np.ndarray
    lipschitz: np.ndarray
    decomposition_residual: float
    conservation_residual: float
    #: per-face ``inf d phi/du`` on the upper slice, reused by the next slab
    upper_inf: np.ndarray | None = None


def hyperbolicity_bounds(omega, faces: SpacelikeFaces, data_range):
    """``(inf, sup)`` of ``d phi_e/du`` over sampled ``u``, per face."""
    u = np.linspace(data_range[0], data_range[1], RANGE_SAMPLES)[:, None]
    d = faces.averaged_derivative(omega, np.broadcast_to(u, (u.shape[0], faces.measure.size)))
    return np.min(d, axis=0), np.max(d, axis=0)


def cfl_margin(lower, upper, lower_inf, upper_inf, D, lip):
    """Per element: smallest ``|e| inf phi_e'`` minus ``N_K max (D + L)/2``.

    Nonnegative margins make the update and the intermediate maps monotone.
    """
    load = 0.5 * (D + lip)
    worst = N_K * np.maximum(load, np.roll(load, -1))
    return np.minimum(lower.measure * lower_inf, upper.measure * upper_inf) - worst


def spacetime_step(omega: FluxField1Form, mesh: SpacetimeTriangulation, i, u_minus,
                   data_range, *, D=None, check_cfl=True, lower_inf=None) -> SlabResult:
    """Advance element values from slice ``i`` to slice ``i + 1``.

    ``D`` defaults to ``1.1 sup |I_j'|`` over ``data_range``, per node track.
    Raises :class:`NumericalFailure` on a CFL violation (naming the element)
    or an inversion failure. ``lower_inf`` may carry the hyperbolicity
    bounds of slice ``i`` from the previous slab.
    """
    lower = spacelike_faces(omega, mesh, i)
    upper = spacelike_faces(omega, mesh, i + 1)
    vert = vertical_faces(mesh, i)
    u = np.asarray(u_minus, dtype=np.float64)

    lip = lipschitz_bound(vert, omega, data_range)
    if D is None:
        D = D_FACTOR * lip
    D = np.broadcast_to(np.asarray(D, dtype=np.float64), lip.shape)

    upper_inf = None
    if check_cfl:
        if lower_inf is None:
            lower_inf = hyperbolicity_bounds(omega, lower, data_range)[0]
        upper_inf = hyperbolicity_bounds(omega, upper, data_range)[0]
        margin = cfl_margin(lower, upper, lower_inf, upper_inf, D, lip)
        if np.any(margin < 0):
            k = int(np.argmin(margin))
            raise NumericalFailure(f"slab {i}, element {k}: CFL condition violated "
                                   f"(margin {margin[k]:.3e})")

    # node track j separates element j-1 (left) from element j (right)
    u_left = np.roll(u, 1)
    u_right = np.roll(u, -1)
    I_own = vert.integral(omega, u)          # I_j(u_j)
    I_nbr = vert.integral(omega, u_left)     # I_j(u_{j-1})
    IR_own = np.roll(I_nbr, -1)              # I_{j+1}(u_j)
    IR_nbr = np.roll(I_own, -1)              # I_{j+1}(u_{j+1})
    D_right = np.roll(D, -1)
    q_left = lf_flux(I_own, I_nbr, u, u_left, D, +1)
    q_right = lf_flux(IR_own, IR_nbr, u, u_right, D_right, -1)

    mass_minus = lower.integrate(omega.omega0, u)
    mass_plus = mass_minus - q_left - q_right
    bracket = expanded_range(data_range)
    u_plus = invert_averaged_flux(omega, upper, mass_plus / upper.measure, bracket)

    # intermediates: each track alone acts on the upper face with weight N_K
    q_left_self = I_own
    q_right_self = -IR_own
    phi_u = upper.averaged(omega, u)
    phi_tilde = np.stack([
        phi_u - N_K / upper.measure * (q_left - q_left_self),
        phi_u - N_K / upper.measure * (q_right - q_right_self),
    ])
    tilde = invert_averaged_flux(omega, upper, phi_tilde, bracket).T

    phi_plus = upper.averaged(omega, u_plus)
    decomp = float(np.max(np.abs(phi_plus - np.mean(phi_tilde, axis=0))))
    mass_new = upper.integrate(omega.omega0, u_plus)
    scale = max(1.0, float(np.sum(np.abs(mass_minus))))
    cons = abs(float(np.sum(mass_new) - np.sum(mass_minus))) / scale
    return SlabResult(i, lower, upper, vert, u, u_plus, tilde, np.array(D), lip, decomp, cons,
                      upper_inf)

# }}}


# {{{ driver

@dataclass
class DiscreteSpacetimeSolution:
    omega: FluxField1Form
    mesh: SpacetimeTriangulation
    data_range: tuple
    u0: object
    #: element values on every slice, shape ``(slices, J)``
    values: np.ndarray
    slabs: list = field(default_factory=list)

    @property
    def max_decomposition_residual(self):
        return max((s.decomposition_residual for s in self.slabs), default=0.0)

    @property
    def max_conservation_residual(self):
        return max((s.conservation_residual for s in self.slabs), default=0.0)

    def final(self):
        return self.values[-1]


def initial_range(u0, samples=4096):
    th = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    v = np.asarray(u0(th), dtype=np.float64)
    return float(np.min(v)), float(np.max(v))


def solve_spacetime(omega: FluxField1Form, mesh: SpacetimeTriangulation, u0, *,
                    data_range=None, D=None, check_cfl=True, enforce_cd=True,
                    callback=None) -> DiscreteSpacetimeSolution:
    """Run all slabs of ``mesh`` from the initial data ``u0(theta)``.

    ``data_range`` bounds the Lipschitz and hyperbolicity samples and the
    inversion bracket; it defaults to the sampled range of ``u0`` and should
    be shared by runs that are compared with each other.
    """
    if data_range is None:
        data_range = initial_range(u0)
    u = discretize_initial_data(omega, mesh, u0, data_range)
    values = np.empty((mesh.slabs + 1, mesh.elements))
    values[0] = u
    sol = DiscreteSpacetimeSolution(omega, mesh, tuple(data_range), u0, values)
    bounds = None
    for i in range(mesh.slabs):
        res = spacetime_step(omega, mesh, i, u, data_range, D=D, check_cfl=check_cfl,
                             lower_inf=bounds)
        bounds = res.upper_inf
        if enforce_cd and res.decomposition_residual > DECOMPOSITION_TOL:
            raise NumericalFailure(f"slab {i}: convex decomposition residual "
                                   f"{res.decomposition_residual:.3e} above {DECOMPOSITION_TOL:g}")
        sol.slabs.append(res)
        u = res.u_plus
        values[i + 1] = u
        if callback is not None:
            callback(res)
    return sol


def stable_slab_count(omega: FluxField1Form, elements, T, data_range, *, safety=0.9,
                      jitter=0.0, seed=0, start=None, max_slabs=1_000_000, probe=16):
    """Smallest slab count (doubling then bisecting) whose mesh satisfies the
    CFL condition with margin ``1 - safety``; returns ``(slabs, mesh)``.

    Candidates are screened on at most ``probe`` evenly spaced slabs; the
    solver still checks every slab.
    """
    if not 0 < safety <= 1:
        raise ConfigurationError("safety must lie in (0, 1]")

    def make(S):
        if jitter:
            return SpacetimeTriangulation.jittered(elements, S, T, jitter, seed)
        return SpacetimeTriangulation.uniform(elements, S, T)

    def ok(S):
        mesh = make(S)
        for i in np.unique(np.linspace(0, mesh.slabs - 1, min(probe, mesh.slabs)).astype(int)):
            lower = spacelike_faces(omega, mesh, i)
            upper = spacelike_faces(omega, mesh, i + 1)
            vert = vertical_faces(mesh, i)
            lip = lipschitz_bound(vert, omega, data_range)
            # the safety factor inflates the flux load
            margin = cfl_margin(lower, upper,
                                hyperbolicity_bounds(omega, lower, data_range)[0],
                                hyperbolicity_bounds(omega, upper, data_range)[0],
                                D_FACTOR * lip / safety, lip / safety)
            if np.any(margin < 0):
                return False
        return True

    S = start or max(1, int(np.ceil(T * elements / (2 * np.pi))))
    while not ok(S):
        S *= 2
        if S > max_slabs:
            raise NumericalFailure("no stable slab count below the limit")
    lo, hi = S // 2, S
    while hi - lo > max(1, hi // 50):
        mid = (lo + hi) // 2
        if mid and ok(mid):
            hi = mid
        else:
            lo = mid
    return hi, make(hi)

# }}}
