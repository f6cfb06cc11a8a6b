import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apfv.ap import (
    APConfig,
    alpha_matrix,
    ap_invariant_domain_check,
    ap_step,
    ap_timestep,
    commutation_residual,
    discrete_asymptotic_step,
    entropy_monotonicity_diagnostic,
    interface_data,
    modified_interface_states,
    run_ap,
    sigma_from_target_diffusion,
    source_rewriting_residual,
)
from apfv.errors import ConfigurationError, NumericalFailure
from apfv.hyperbolic import DiscreteField, UniformGrid1D, step_homogeneous
from apfv.models import EulerFriction, EulerM1, M1Radiation, ShallowWaterFriction

MODELS = [EulerFriction(), M1Radiation(), EulerM1(), ShallowWaterFriction()]


def equilibrium_field(model, cells=40, amplitude=0.3):
    grid = UniformGrid1D(cells)
    x = grid.centers
    u = np.stack([1 + amplitude * np.sin(2 * np.pi * (x + 0.1 * k)) for k in range(model.n)],
                 axis=-1)
    return DiscreteField(grid, model.equilibrium_lift(u))


def test_config_validation():
    for kw in ({"eps": 0.0}, {"eps": 1.5}, {"eps": 0.5, "b": -1.0},
               {"eps": 0.5, "gamma": -1.0}):
        with pytest.raises(ConfigurationError):
            APConfig(**kw)
    assert APConfig(0.1).gamma_for(ShallowWaterFriction()) == pytest.approx(100.0)
    with pytest.raises(ConfigurationError):
        ap_timestep(1.0, 0.1, 0.1, safety=0.0)


def test_alpha_matrix_scalar_value():
    a = alpha_matrix(4.0, 0.5, 2.0, np.array([[1.0]]))
    assert a[0, 0] == pytest.approx(1 / (1 + 4 * 0.5 / 4 * 2))
    with pytest.raises(ConfigurationError):
        alpha_matrix(-1.0, 0.5, 2.0, np.eye(1))


def test_without_relaxation_reduces_to_hll():
    m = EulerFriction()
    rng = np.random.default_rng(0)
    grid = UniformGrid1D(30)
    f = DiscreteField(grid, m.sample_states(rng, 30))
    cfg = APConfig(1.0, b=4.0, gamma=0.0, sigma=np.zeros((2, 2)))
    dt = 0.4 * grid.dx / 4.0
    assert np.allclose(ap_step(m, f, cfg, dt).states,
                       step_homogeneous(m, f, 4.0, dt).states, atol=1e-14)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_factored_matches_dense_on_uniform_state(model):
    u = np.full((12, model.n), 0.9)
    f = DiscreteField(UniformGrid1D(12), model.equilibrium_lift(u))
    f = DiscreteField(f.grid, f.states + 0.01 * np.eye(model.N)[1])
    cfg = APConfig(1e-2)
    data = interface_data(model, f.states, cfg, f.grid.dx)
    dense = APConfig(1e-2, b=data.b, sigma=data.sigma[0])
    dt = 0.4 * 1e-2 * f.grid.dx / data.b
    assert np.allclose(ap_step(model, f, cfg, dt).states,
                       ap_step(model, f, dense, dt).states, atol=1e-12)


@pytest.mark.parametrize("model", MODELS[:3], ids=lambda m: m.name)
def test_commutation_and_source_rewriting(model):
    uL, uR = np.full(model.n, 0.8), np.full(model.n, 1.1)
    b, dx, gamma = 5.0, 0.01, 1e3
    sigma, Mcal = sigma_from_target_diffusion(model, uL, uR, b, dx)
    assert commutation_residual(model.Q, sigma, Mcal, b) < 1e-12
    # sigma acts only on Q; the relaxation term lives in ker Q
    R = model.relaxation(model.equilibrium_lift(uL) + 0.05)
    alpha = alpha_matrix(gamma, dx, b, sigma)
    assert source_rewriting_residual(alpha, sigma, R, b, dx, gamma) < 1e-9


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_q_totals_conserved_for_constant_sigma(model):
    f = equilibrium_field(model)
    cfg = APConfig(1e-2, sigma=np.zeros((model.N, model.N)))
    out = run_ap(model, f, cfg, 5e-2)
    q0, q1 = f.totals() @ model.Q.T, out.totals() @ model.Q.T
    assert np.max(np.abs(q1 - q0)) <= 1e-12 * np.max(np.abs(q0))


def test_equilibrium_constant_is_steady():
    m = EulerM1()
    f = DiscreteField(UniformGrid1D(10), m.equilibrium_lift(np.tile([1.1, 0.6], (10, 1))))
    out = run_ap(m, f, APConfig(1e-4), 1e-3)
    assert np.allclose(out.states, f.states, atol=1e-13)


def test_cfl_and_speed_failures():
    m = EulerFriction()
    f = equilibrium_field(m)
    with pytest.raises(NumericalFailure, match="CFL"):
        ap_step(m, f, APConfig(0.5, b=3.0), 10 * f.grid.dx)
    with pytest.raises(NumericalFailure, match="spectral radius"):
        ap_step(m, f, APConfig(0.5, b=0.01), 1e-6)


@pytest.mark.parametrize("model", [MODELS[0], MODELS[3]], ids=lambda m: m.name)
@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-5])
def test_starred_states_admissible(model, eps):
    rng = np.random.default_rng(11)
    f = DiscreteField(UniformGrid1D(30), model.sample_states(rng, 30))
    assert ap_invariant_domain_check(model, f, APConfig(eps)) == []


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_equilibrium_field_has_empty_report(model):
    assert ap_invariant_domain_check(model, equilibrium_field(model), APConfig(1e-3)) == []


def test_tiny_b_starred_states_leave_domain():
    m = EulerFriction()
    UL, UR = np.array([1.0, -2.0]), np.array([1.0, 2.0])
    SL, SR = modified_interface_states(m, UL, UR, np.eye(2), np.zeros((2, 2)), 0.1)
    assert not m.admissible(SL)


def test_starred_states_against_direct_formula():
    # Euler-friction, sigma = diag(1, 0), b = 2, dx = 0.1, eps = 0.1
    m = EulerFriction()
    UL, UR = np.array([1.0, 0.2]), np.array([1.0, -0.2])
    sigma = np.diag([1.0, 0.0])
    b, dx, gamma = 2.0, 0.1, 10.0
    alpha = alpha_matrix(gamma, dx, b, sigma)
    # alpha = diag(1/(1 + 0.5), 1/(1 + 0.25))
    assert np.allclose(alpha, np.diag([1 / 1.5, 1 / 1.25]))
    # mean state (1, 0) minus (F(UR) - F(UL))/(2b), F = (rho v, rho v^2 + rho^2)
    star = np.array([1.1, 0.0])
    rL, rR = np.array([0.0, 0.2]), np.array([0.0, -0.2])
    SL, SR = modified_interface_states(m, UL, UR, alpha, sigma, b)
    I_a = np.eye(2) - alpha
    assert np.allclose(SL, alpha @ star + I_a @ (UL - rL))
    assert np.allclose(SR, alpha @ star + I_a @ (UR - rR))


def test_limit_scheme_three_cells():
    m = EulerFriction()

    def unit(uL, uR, dx):
        return np.ones(uL.shape[:-1] + (1, 1))

    out = discrete_asymptotic_step(m, np.array([1.0, 0.0, 0.0]), 0.25, 1.0, unit)
    assert np.allclose(out[:, 0], [0.5, 0.25, 0.25])


def test_pure_relaxation_decreases_entropy():
    m = EulerFriction()
    f = DiscreteField(UniformGrid1D(4), np.tile([1.0, 0.5], (4, 1)))
    traj = [f]
    for _ in range(5):
        traj.append(run_ap(m, traj[-1], APConfig(0.1), 10.0, max_steps=1))
    H = entropy_monotonicity_diagnostic(m, traj)
    assert np.all(np.diff(H) < 0)


def test_starred_states_reduce_to_hll_intermediate():
    m = EulerFriction()
    UL, UR = np.array([1.0, 0.2]), np.array([1.4, -0.1])
    SL, SR = modified_interface_states(m, UL, UR, np.eye(2), np.zeros((2, 2)), 3.0)
    assert np.allclose(SL, SR)
    assert np.allclose(SL, 0.5 * (UL + UR) - (m.flux(UR) - m.flux(UL)) / 6.0)


def test_limit_scheme_stability_guard():
    m = EulerFriction()
    rho = np.full(10, 1.0)
    with pytest.raises(NumericalFailure, match="parabolic"):
        discrete_asymptotic_step(m, rho, 1.0, 0.1)
    # constant data is a fixed point of the limit scheme
    assert np.allclose(discrete_asymptotic_step(m, rho, 1e-3, 0.1), 1.0)


@given(st.floats(1e-6, 1.0))
def test_entropy_nonincreasing_single_step(eps):
    m = EulerFriction()
    rng = np.random.default_rng(int(eps * 1e6) + 1)
    f = DiscreteField(UniformGrid1D(20), m.sample_states(rng, 20))
    out = run_ap(m, f, APConfig(eps), 10.0, max_steps=1)
    H = entropy_monotonicity_diagnostic(m, [f, out])
    assert H[1] <= H[0] + 1e-10
