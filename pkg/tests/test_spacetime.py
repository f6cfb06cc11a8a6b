import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apfv.errors import (
    ConfigurationError,
    DomainError,
    NumericalFailure,
    PreconditionError,
    StructureError,
)
from apfv.spacetime import (
    FluxField1Form,
    SpacetimeTriangulation,
    mesh_sweep_check,
    averaged_flux,
    burgers_riemann_circle,
    discretize_initial_data,
    dissipation_bound,
    entropy_residual,
    face_measure,
    flat_burgers,
    geometry_compatibility_check,
    get_preset,
    kruzkov_contraction,
    linear_growth_constant,
    numerical_flux,
    piecewise_l1_distance,
    pullback_flux,
    pullback_shear,
    shear_map,
    solve_spacetime,
    spacetime_step,
    stable_slab_count,
    theta_reparametrization,
    variable_coefficient,
)
from apfv.spacetime.scheme import spacelike_faces, vertical_faces

FORMS = [flat_burgers(), variable_coefficient(), pullback_shear(0.3)]


def jittered(J=32, S=64, T=0.5, amplitude=0.3, seed=1):
    return SpacetimeTriangulation.jittered(J, S, T, amplitude, seed)


# {{{ flux fields

def test_face_measure_variable_coefficient():
    # int_0^pi (1 + sin(theta)/2) dtheta = pi + 1
    assert face_measure(variable_coefficient(0.5, 0.0), 0.0, 0.0, np.pi) == pytest.approx(
        np.pi + 1, rel=1e-6)
    assert face_measure(flat_burgers(), 0.3, 0.1, 0.4) == pytest.approx(0.3)


def test_averaged_flux_flat_is_identity():
    phi, dphi = averaged_flux(flat_burgers(), 0.0, 0.0, 0.5, np.array([-1.0, 0.3, 2.0]))
    assert np.allclose(phi, [-1.0, 0.3, 2.0]) and np.allclose(dphi, 1.0)


def test_averaged_flux_cubic_on_short_face():
    # with a = 0: phi(u) = u + c u^3 exactly
    phi, dphi = averaged_flux(variable_coefficient(0.0, 0.1), 0.0, 1.0, 1.2, 2.0)
    assert phi == pytest.approx(2.8) and dphi == pytest.approx(2.2)


def test_pullback_of_burgers_by_shear():
    # a dTheta + c dT with Theta = theta + s t: omega0 = u, omega1 = s u - u^2/2
    om = pullback_flux(flat_burgers(), shear_map(0.3))
    u, t, th = np.array([0.7, -1.2]), np.array([0.1, 0.8]), np.array([2.0, 5.0])
    assert np.allclose(om.omega0(u, t, th), u)
    assert np.allclose(om.omega1(u, t, th), 0.3 * u - 0.5 * u * u)
    assert np.allclose(om.d_omega1(u, t, th), 0.3 - u)


def test_pullback_by_reparametrization():
    om = pullback_flux(flat_burgers(), theta_reparametrization(0.2))
    th = np.linspace(0, 6, 7)
    assert np.allclose(om.omega0(2.0, 0.0, th), 2.0 * (1 + 0.2 * np.cos(th)))
    assert np.allclose(om.omega1(2.0, 0.0, th), -2.0)


def test_pullback_rejects_orientation_reversal():
    from apfv.spacetime import SpacetimeMap

    flip = SpacetimeMap(lambda t, th: (t, -th),
                        lambda t, th: (np.ones_like(t + th), np.zeros_like(t + th),
                                       np.zeros_like(t + th), -np.ones_like(t + th)))
    with pytest.raises(DomainError):
        pullback_flux(flat_burgers(), flip)
    with pytest.raises(DomainError):
        theta_reparametrization(1.0)
    with pytest.raises(DomainError):
        variable_coefficient(amplitude=1.2)


@pytest.mark.parametrize("omega", FORMS + [pullback_flux(variable_coefficient(),
                                                          theta_reparametrization(0.2))],
                         ids=lambda o: o.name)
def test_presets_are_closed(omega):
    assert geometry_compatibility_check(omega) < 1e-8
    assert linear_growth_constant(omega, u_range=(-1, 1)) < 5


def test_compatibility_negative_control():
    # omega1 = theta u is not closed: d_t omega0 - d_theta omega1 = -u
    bad = FluxField1Form(lambda u, t, th: u + 0 * t, lambda u, t, th: th * u,
                         lambda u, t, th: 1 + 0 * (u + t + th), lambda u, t, th: th + 0 * u)
    assert geometry_compatibility_check(bad) > 0.5


def test_preset_registry():
    assert get_preset("flat-burgers").name == "flat-burgers"
    with pytest.raises(ConfigurationError, match="unknown flux preset"):
        get_preset("sphere")

# }}}


# {{{ meshes

def test_mesh_validation():
    with pytest.raises(ConfigurationError):
        SpacetimeTriangulation([0.0, 0.0], np.zeros((2, 4)))
    with pytest.raises(StructureError, match="not increasing"):
        SpacetimeTriangulation([0.0, 1.0], np.array([[0, 1, 0.5, 3]] * 2, dtype=float))
    nodes = np.tile(np.linspace(0, 2 * np.pi, 8, endpoint=False), (2, 1))
    nodes[1] += 4.0
    with pytest.raises(StructureError, match="seam"):
        SpacetimeTriangulation([0.0, 1.0], nodes)
    with pytest.raises(ConfigurationError):
        SpacetimeTriangulation.jittered(8, 4, 1.0, amplitude=0.5)


def test_sweep_check():
    good = [SpacetimeTriangulation.uniform(J, 2 * J, 1.0) for J in (8, 16, 32)]
    r = mesh_sweep_check(good)
    assert r.shape == (3, 2) and np.all(np.diff(r, axis=0) < 0)
    with pytest.raises(PreconditionError):
        mesh_sweep_check(good[::-1])
    with pytest.raises(PreconditionError):
        mesh_sweep_check(good[:1])

# }}}


# {{{ numerical flux

@given(st.floats(-1, 1), st.floats(-1, 1))
def test_numerical_flux_properties(u, v):
    omega = pullback_shear(0.3)
    mesh = jittered()
    vert = vertical_faces(mesh, 3)
    D = 1.1 * 1.4 * mesh.tau_max
    # consistency and antisymmetry between the two sides of a node track
    I_u = numerical_flux(omega, vert, 5, u, u, D)
    assert I_u == pytest.approx(float(vert.integral(omega, np.full(mesh.elements, u))[5]))
    assert (numerical_flux(omega, vert, 5, u, v, D)
            + numerical_flux(omega, vert, 5, v, u, D, sign=-1)) == pytest.approx(0, abs=1e-15)
    # monotone: nondecreasing in the own value, nonincreasing in the neighbor
    dq = 1e-3
    assert numerical_flux(omega, vert, 5, u + dq, v, D) >= numerical_flux(omega, vert, 5, u, v, D)
    assert numerical_flux(omega, vert, 5, u, v + dq, D) <= numerical_flux(omega, vert, 5, u, v, D)


def test_numerical_flux_monotonicity_guard():
    mesh = jittered()
    vert = vertical_faces(mesh, 0)
    with pytest.raises(NumericalFailure, match="Lipschitz"):
        numerical_flux(flat_burgers(), vert, 0, 1.0, 0.0, 1e-6, check_range=(-1, 1))


def test_flux_example_flat_uniform():
    # flat uniform track: I(u) = -tau u^2/2, so q = -tau (u^2 + v^2)/4 + D (u - v)/2
    mesh = SpacetimeTriangulation.uniform(16, 8, 1.0)
    vert = vertical_faces(mesh, 0)
    q = numerical_flux(flat_burgers(), vert, 2, 1.0, 0.5, 0.3)
    assert q == pytest.approx(-0.125 * (1.0 + 0.25) / 4 + 0.15 * 0.5)

# }}}


# {{{ initial data

def test_initial_data_against_independent_quadrature():
    omega = variable_coefficient()
    mesh = SpacetimeTriangulation.jittered(16, 4, 1.0, 0.3, seed=5)

    def u0(th):
        return 0.8 * np.sin(th) + 0.1

    got = discretize_initial_data(omega, mesh, u0)
    a, b = mesh.face_bounds(0)
    for k in range(mesh.elements):
        # composite Simpson and plain bisection, independent of the library path
        th = np.linspace(a[k], b[k], 2001)
        w = np.full(th.size, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= (th[1] - th[0]) / 3
        mass = np.sum(w * omega.omega0(u0(th), 0.0, th))
        lo, hi = -2.0, 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if np.sum(w * omega.omega0(mid, 0.0, th)) < mass else (lo, mid)
        assert got[k] == pytest.approx(0.5 * (lo + hi), abs=1e-9)


def test_initial_data_rejects_bad_functions():
    mesh = SpacetimeTriangulation.uniform(8, 2, 1.0)
    with pytest.raises(DomainError):
        discretize_initial_data(flat_burgers(), mesh, lambda th: np.nan * th)

# }}}


# {{{ scheme

def test_stokes_identity_on_elements():
    # constant states: top - bottom + I_j - I_{j+1} = 0 on every element
    for omega in FORMS:
        mesh = jittered(J=24, S=12)
        for i in (0, 5):
            lo, up = spacelike_faces(omega, mesh, i), spacelike_faces(omega, mesh, i + 1)
            vert = vertical_faces(mesh, i)
            for ubar in (-0.7, 0.4):
                u = np.full(mesh.elements, ubar)
                I = vert.integral(omega, u)
                res = up.integrate(omega.omega0, u) - lo.integrate(omega.omega0, u) + I - np.roll(I, -1)
                assert np.max(np.abs(res)) < 1e-9


def test_flat_uniform_matches_lax_friedrichs():
    J, S, T = 100, 200, 1.0
    mesh = SpacetimeTriangulation.uniform(J, S, T)
    h, tau, D = 2 * np.pi / J, T / S, 0.02

    def u0(th):
        return 0.5 + 0.4 * np.sin(th)

    sol = solve_spacetime(flat_burgers(), mesh, u0, D=D, check_cfl=False)
    u = sol.values[0].copy()
    for _ in range(S):
        f = 0.5 * u * u
        u = (u - tau / (2 * h) * (np.roll(f, -1) - np.roll(f, 1))
             + D / (2 * h) * (np.roll(u, -1) - 2 * u + np.roll(u, 1)))
    assert np.max(np.abs(sol.final() - u)) < 1e-13


@pytest.mark.parametrize("omega", FORMS, ids=lambda o: o.name)
def test_constants_preserved(omega):
    sol = solve_spacetime(omega, jittered(), lambda th: 0.4 + 0 * th, data_range=(-1, 1))
    assert np.max(np.abs(sol.values - 0.4)) < 1e-13


@pytest.mark.parametrize("omega", FORMS, ids=lambda o: o.name)
def test_slab_invariants(omega):
    sol = solve_spacetime(omega, jittered(), lambda th: np.sin(th), data_range=(-1, 1))
    assert sol.max_conservation_residual < 1e-12
    assert sol.max_decomposition_residual < 1e-12
    # intermediate values stay inside the data range (maximum principle)
    assert all(np.all(np.abs(s.intermediates) <= 1 + 1e-12) for s in sol.slabs)
    c = np.linspace(-1.2, 1.2, 13)
    assert max(float(np.max(entropy_residual(omega, s, c))) for s in sol.slabs) < 1e-12


def test_cfl_violation_names_element():
    mesh = SpacetimeTriangulation.uniform(32, 2, 2.0)
    with pytest.raises(NumericalFailure, match="slab 0, element .*CFL"):
        spacetime_step(flat_burgers(), mesh, 0, np.ones(32), (-1, 1))


def test_stable_slab_count_is_stable():
    S, mesh = stable_slab_count(variable_coefficient(), 40, 1.0, (-1, 1), jitter=0.2)
    sol = solve_spacetime(variable_coefficient(), mesh, np.sin, data_range=(-1, 1))
    assert sol.mesh.slabs == S
    with pytest.raises(NumericalFailure):
        solve_spacetime(variable_coefficient(),
                        SpacetimeTriangulation.jittered(40, S // 3, 1.0, 0.2),
                        np.sin, data_range=(-1, 1))


def test_contraction_between_solutions():
    omega = variable_coefficient()
    mesh = jittered()
    rng = np.random.default_rng(0)
    for _ in range(3):
        a, b = rng.uniform(-0.9, 0.9, 2)
        su = solve_spacetime(omega, mesh, lambda th: np.clip(np.sin(th + a) + b, -1, 1),
                             data_range=(-1, 1))
        sv = solve_spacetime(omega, mesh, lambda th: np.sign(np.cos(th - b)) * 0.8,
                             data_range=(-1, 1))
        I = kruzkov_contraction(su, sv)
        assert np.max(np.diff(I)) <= 1e-12


def test_contraction_preconditions():
    omega = flat_burgers()
    s1 = solve_spacetime(omega, jittered(S=64), np.sin, data_range=(-1, 1))
    s2 = solve_spacetime(omega, jittered(S=80), np.sin, data_range=(-1, 1))
    with pytest.raises(PreconditionError):
        kruzkov_contraction(s1, s2)
    s3 = solve_spacetime(flat_burgers(), s1.mesh, np.sin, data_range=(-1, 1))
    with pytest.raises(PreconditionError):
        kruzkov_contraction(s1, s3)


def test_dissipation_bound_holds():
    sol = solve_spacetime(flat_burgers(), jittered(J=64, S=128),
                          lambda th: 0.5 + 0.5 * np.sign(np.sin(th)), data_range=(0, 1))
    db = dissipation_bound(sol)
    assert db.total > 0 and db.holds
    assert db.c_lower == pytest.approx(1.0) and db.c_upper == pytest.approx(1.0)

# }}}


# {{{ reference solutions

def test_riemann_closed_form():
    th = np.array([0.1, 0.5, 1.0, 3.0, 3.5, 4.0])
    u = burgers_riemann_circle(th, 1.0)
    # fan theta/t on (0, 1), left state up to the shock at pi + 1/2
    assert np.allclose(u, [0.1, 0.5, 1.0, 1.0, 1.0, 0.0])
    with pytest.raises(PreconditionError):
        burgers_riemann_circle(th, 1.0, 0.0, 1.0)


def test_piecewise_l1_distance():
    tw = 2 * np.pi
    assert piecewise_l1_distance([0.0], [1.0], [0.0], [1.0]) == 0.0
    assert piecewise_l1_distance([0.0, np.pi], [1.0, 0.0], [0.0], [0.0]) == pytest.approx(np.pi)
    # shifting the edges by a full turn changes nothing
    assert piecewise_l1_distance([tw, tw + 1.0], [2.0, 0.0], [0.0, 1.0], [2.0, 0.0]) == 0.0
    assert piecewise_l1_distance([-0.5, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]) == \
        pytest.approx(0.5)

# }}}
