"""Acceptance criteria 1-12.

Each test records a one-line verdict (see ``conftest.record``) and then
asserts the criterion at its stated tolerance.
"""

import numpy as np
import pytest

from apfv.ap import (
    APConfig,
    ap_invariant_domain_check,
    ap_step,
    discrete_asymptotic_step,
    entropy_monotonicity_diagnostic,
    run_ap,
)
from apfv.chapman_enskog import (
    closed_form_effective,
    effective_diffusion_matrix,
    first_order_corrector,
)
from apfv.hyperbolic import DiscreteField, UniformGrid1D
from apfv.models import (
    EulerFriction,
    EulerM1,
    M1Radiation,
    ShallowWaterFriction,
    verify_structural_conditions,
)
from apfv.parabolic import parabolic_problem, solve_parabolic
from apfv.spacetime import (
    SpacetimeTriangulation,
    mesh_sweep_check,
    burgers_riemann_circle,
    dissipation_bound,
    entropy_residual,
    flat_burgers,
    kruzkov_contraction,
    piecewise_l1_distance,
    pullback_shear,
    solve_spacetime,
    stable_slab_count,
    variable_coefficient,
)

# stated tolerances
EQUALITY_TOL = 1e-10
CORRECTOR_TOL = 1e-12
EFFECTIVE_TOL = 1e-8
AP_RATIO = (5.0, 20.0)
LATE_TIME_REL = 0.05
ENTROPY_SLACK = 1e-10
LF_TOL = 1e-14
RIEMANN_L1 = 0.05
DEI_TOL = 1e-12
CONTRACTION_TOL = 1e-12
COVARIANCE_FACTOR = 1.8
C_SPREAD = 2.0


# {{{ relaxation systems

def test_criterion_01_structural_conditions(verdict):
    failed = []
    for m in (EulerFriction(), M1Radiation(), EulerM1(), ShallowWaterFriction()):
        rep = verify_structural_conditions(m, 1000, seed=0)
        failed += [f"{m.name}:{r.name}" for r in rep.results if not r.passed]
    ok = verdict(1, not failed, f"4 models x 1000 samples, failing: {failed or 'none'}")
    assert ok


def test_criterion_02_corrector_exactness(verdict):
    # Euler-friction, p = rho^2, rho = 1, rho_x = 2
    euler = first_order_corrector(EulerFriction(), [1.0], [2.0]).U1
    e_err = float(np.max(np.abs(euler - [0.0, -4.0])))
    # M1 at tau = 1, tau_x = 1; the model advances u = tau + tau^4, u_x = (1 + 4 tau^3) tau_x
    m1 = first_order_corrector(M1Radiation(), [2.0], [5.0]).U1
    m_err = float(np.max(np.abs(m1 - [0.0, 4.0 / 3.0, 0.0])))
    ok = verdict(2, e_err <= CORRECTOR_TOL and m_err <= CORRECTOR_TOL,
                 f"euler U1 = {euler.tolist()} (err {e_err:.1e}); "
                 f"m1 U1 = {m1.tolist()} vs (0, 4/3, 0) (err {m_err:.1e})")
    assert ok


def test_criterion_03_effective_matrix(verdict):
    rng = np.random.default_rng(0)
    worst_m = worst_l = 0.0
    for m in (EulerFriction(), M1Radiation(), EulerM1()):
        for _ in range(50):
            u = rng.uniform(0.2, 3.0, m.n)
            eff = effective_diffusion_matrix(m, u)
            closed = closed_form_effective(m).diffusion(u[None])[0]
            worst_m = max(worst_m, np.max(np.abs(eff.M - closed)) / np.max(np.abs(closed)))
            ux = rng.normal(size=m.n)
            lhs, rhs = eff.L @ (eff.Dnu @ ux), eff.M @ ux
            worst_l = max(worst_l, np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
    ok = verdict(3, worst_m <= EFFECTIVE_TOL and worst_l <= EFFECTIVE_TOL,
                 f"max rel. error M {worst_m:.1e}, entropy form {worst_l:.1e}")
    assert ok

# }}}


# {{{ AP scheme

def test_criterion_04_discrete_ap_limit(verdict):
    m = EulerFriction()
    grid = UniformGrid1D(100, 1.0)
    rho = 1 + 0.3 * np.sin(2 * np.pi * grid.centers)
    field = DiscreteField(grid, m.equilibrium_lift(rho[:, None]))
    # a parabolic step; b dt/(eps dx) stays far below 1/2 for these eps
    dt = 0.2 * grid.dx**2 / 3.9
    ref = discrete_asymptotic_step(m, rho, dt, grid.dx)
    err = {}
    for eps in (1e-6, 1e-7):
        got = ap_step(m, field, APConfig(eps), dt).states @ m.Q.T
        err[eps] = float(np.max(np.abs(got - ref)))
    ratio = err[1e-6] / err[1e-7]
    ok = verdict(4, AP_RATIO[0] <= ratio <= AP_RATIO[1],
                 f"errors {err[1e-6]:.2e} -> {err[1e-7]:.2e}, ratio {ratio:.2f}")
    assert ok


@pytest.fixture(scope="module")
def late_time_runs():
    m = EulerFriction()
    grid = UniformGrid1D(200, 20.0)
    rho = 0.5 + np.exp(-((grid.centers - 10.0) / 2.0) ** 2)
    ref = solve_parabolic(parabolic_problem(m), rho, 0.5, grid.dx)[:, 0]
    runs = {}
    for eps in (1e-2, 1e-3, 1e-4):
        field = DiscreteField(grid, m.equilibrium_lift(rho[:, None]))
        traj = [field] if eps == 1e-3 else None
        out = run_ap(m, field, APConfig(eps), 0.5,
                     callback=traj.append if traj is not None else None)
        runs[eps] = (out, traj)
    return m, grid, ref, runs


def test_criterion_05_late_time_accuracy(verdict, late_time_runs):
    m, grid, ref, runs = late_time_runs
    norm = np.sum(np.abs(ref)) * grid.dx
    rel = [np.sum(np.abs(runs[e][0].states @ m.Q.T - ref[:, None])) * grid.dx / norm
           for e in (1e-2, 1e-3, 1e-4)]
    ok = verdict(5, bool(rel[0] > rel[1] > rel[2] and rel[2] < LATE_TIME_REL),
                 "relative L1 at eps 1e-2, 1e-3, 1e-4: "
                 + ", ".join(f"{r:.2e}" for r in rel))
    assert ok


def test_criterion_07_entropy_monotonicity(verdict, late_time_runs):
    m, _, _, runs = late_time_runs
    S = entropy_monotonicity_diagnostic(m, runs[1e-3][1])
    worst = float(np.max(np.diff(S)))
    ok = verdict(7, worst <= ENTROPY_SLACK,
                 f"{S.size - 1} steps, largest increase {worst:.2e}")
    assert ok


def test_criterion_06_invariant_domain(verdict):
    steps, bad = 10_000, []
    for m in (EulerFriction(), ShallowWaterFriction()):
        for eps in (1.0, 1e-3):
            rng = np.random.default_rng(42)
            field = DiscreteField(UniformGrid1D(50, 1.0), m.sample_states(rng, 50))
            cfg = APConfig(eps)

            def check(f, m=m, cfg=cfg, eps=eps):
                if not np.all(m.admissible(f.states)):
                    bad.append((m.name, eps, "cell"))
                if ap_invariant_domain_check(m, f, cfg):
                    bad.append((m.name, eps, "starred"))

            check(field)
            run_ap(m, field, cfg, np.inf, callback=check, max_steps=steps)
    ok = verdict(6, not bad, f"euler-friction and shallow water, eps 1 and 1e-3, "
                             f"{steps} steps each, violations: {bad[:3] or 'none'}")
    assert ok

# }}}


# {{{ spacetime scheme

def test_criterion_08_flat_equivalence(verdict):
    mesh = SpacetimeTriangulation.uniform(100, 200, 1.0)
    h, tau = mesh.h, mesh.tau_max
    sol = solve_spacetime(flat_burgers(), mesh, lambda th: np.where(th < np.pi, 1.0, 0.0),
                          data_range=(0.0, 1.0))
    worst = 0.0
    for s in sol.slabs:
        u, D = s.u_minus, float(s.D[0])
        f = 0.5 * u * u
        lf = (u - tau / (2 * h) * (np.roll(f, -1) - np.roll(f, 1))
              + D / (2 * h) * (np.roll(u, -1) - 2 * u + np.roll(u, 1)))
        worst = max(worst, float(np.max(np.abs(s.u_plus - lf))))

    # h <= 1/400 needs 2 pi/J <= 1/400
    J = int(np.ceil(800 * np.pi))
    S, fine = stable_slab_count(flat_burgers(), J, 1.0, (0.0, 1.0))
    ref = solve_spacetime(flat_burgers(), fine, lambda th: np.where(th < np.pi, 1.0, 0.0),
                          data_range=(0.0, 1.0))
    a, b = fine.face_bounds(S)
    sub = (np.arange(16) + 0.5) / 16
    th = a[:, None] + (b - a)[:, None] * sub
    exact = burgers_riemann_circle(th, 1.0)
    l1 = float(np.sum(np.mean(np.abs(ref.final()[:, None] - exact), axis=1) * (b - a)))
    ok = verdict(8, worst <= LF_TOL and l1 <= RIEMANN_L1,
                 f"per-step LF deviation {worst:.1e}; L1 at h = {fine.h:.2e} "
                 f"({J} elements, {S} slabs): {l1:.4f}")
    assert ok


def test_criterion_09_entropy_inequalities(verdict):
    worst = {}
    c = np.linspace(-1.25, 1.25, 50)
    for omega in (flat_burgers(), pullback_shear(0.3)):
        mesh = SpacetimeTriangulation.jittered(80, 160, 1.0, 0.4, seed=3)
        sol = solve_spacetime(omega, mesh, lambda th: np.where(np.sin(th) > 0, 1.0, -0.5)
                              + 0.2 * np.cos(3 * th), data_range=(-1.0, 1.2))
        worst[omega.name] = max(float(np.max(entropy_residual(omega, s, c)))
                                for s in sol.slabs)
    ok = verdict(9, max(worst.values()) <= DEI_TOL,
                 "max residual " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_10_contraction(verdict):
    rng = np.random.default_rng(2024)
    worst = {}
    for omega in (flat_burgers(), variable_coefficient(), pullback_shear(0.3)):
        S, mesh = stable_slab_count(omega, 64, 1.0, (-1.0, 1.0), jitter=0.3, seed=1)
        w = -np.inf
        for _ in range(20):
            p = rng.uniform(0, 2 * np.pi, 4)
            a = rng.uniform(0.3, 1.0, 2)

            def u(th, p=p, a=a):
                return np.clip(a[0] * np.sin(th + p[0]) + 0.3 * np.sign(np.sin(2 * th + p[1])),
                               -1, 1)

            def v(th, p=p, a=a):
                return np.clip(a[1] * np.cos(th + p[2]) - 0.3 * np.sign(np.cos(th + p[3])),
                               -1, 1)

            I = kruzkov_contraction(solve_spacetime(omega, mesh, u, data_range=(-1, 1)),
                                    solve_spacetime(omega, mesh, v, data_range=(-1, 1)))
            w = max(w, float(np.max(np.diff(I))))
        worst[omega.name] = w
    ok = verdict(10, max(worst.values()) <= CONTRACTION_TOL,
                 "largest increase " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


@pytest.fixture(scope="module")
def covariance_sweep():
    # T = pi/3 makes the shift 0.3 T = pi/10 a whole number of cells for every J
    T, speed, rng = np.pi / 3, 0.3, (0.25, 0.75)

    def u0(th):
        return 0.5 + 0.25 * np.sin(th)

    direct, pulled = flat_burgers(), pullback_shear(speed)
    rows = []
    for J in (100, 200, 400, 800):
        S = max(stable_slab_count(direct, J, T, rng)[0], stable_slab_count(pulled, J, T, rng)[0])
        mesh = SpacetimeTriangulation.uniform(J, S, T)
        sd = solve_spacetime(direct, mesh, u0, data_range=rng)
        sp = solve_spacetime(pulled, mesh, u0, data_range=rng)
        dist = piecewise_l1_distance(mesh.nodes[-1] + speed * T, sp.final(),
                                     mesh.nodes[-1], sd.final())
        rows.append((mesh, dist, sd, sp))
    return rows


def test_criterion_11_covariance(verdict, covariance_sweep):
    ratios = mesh_sweep_check([r[0] for r in covariance_sweep])
    d = np.array([r[1] for r in covariance_sweep])
    factors = d[:-1] / d[1:]
    ok = verdict(11, bool(np.all(factors >= COVARIANCE_FACTOR)),
                 "distances " + ", ".join(f"{x:.2e}" for x in d)
                 + "; factors " + ", ".join(f"{x:.2f}" for x in factors)
                 + f"; mesh ratios decrease ({ratios[0, 0]:.3f} -> {ratios[-1, 0]:.3f})")
    assert ok


def test_criterion_12_dissipation_bound(verdict, covariance_sweep):
    bounds = [dissipation_bound(s) for r in covariance_sweep for s in (r[2], r[3])]
    C = np.array([b.constant for b in bounds])
    holds = all(b.holds for b in bounds)
    spread = float(C.max() / C.min())
    ok = verdict(12, holds and spread <= C_SPREAD,
                 f"bound holds on all {len(bounds)} runs: {holds}; "
                 f"max total/bound {max(b.ratio for b in bounds):.2e}; C spread x{spread:.3f}")
    assert ok

# }}}
