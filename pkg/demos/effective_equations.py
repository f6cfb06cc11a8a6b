"""From relaxation systems to their diffusive limits.

Run with ``python3 demos/effective_equations.py``.

For each linear-scaling model we solve the corrector problem at a few
equilibria, assemble the effective diffusion matrix column by column and
compare it with the closed form. The friction-dominated shallow water
system has a nonlinear scaling and is treated through its relaxation
coefficient instead.
"""

import numpy as np

from apfv.chapman_enskog import (
    closed_form_effective,
    effective_diffusion_matrix,
    first_order_corrector,
    nonlinear_relaxation_coefficient,
)
from apfv.models import EulerFriction, EulerM1, M1Radiation, ShallowWaterFriction


def main():
    print("Corrector for Euler with friction, p = rho^2:")
    sol = first_order_corrector(EulerFriction(), [1.0], [2.0])
    print(f"  rho = 1, rho_x = 2  ->  U1 = {sol.U1}  (momentum carries -p_x)\n")

    for model in (EulerFriction(), M1Radiation(), EulerM1()):
        eq = closed_form_effective(model)
        print(f"{model.name}:  {eq}")
        for u in ([0.5] * model.n, [1.5] * model.n):
            eff = effective_diffusion_matrix(model, u)
            closed = eq.diffusion(np.asarray([u]))[0]
            print(f"  u = {u}:  M = {np.round(eff.M, 6).tolist()}"
                  f"  |M - closed| = {np.max(np.abs(eff.M - closed)):.1e}")
        print()

    sw = ShallowWaterFriction()
    print(f"{sw.name}:  {closed_form_effective(sw)}")
    for h, hx in ((1.0, 0.5), (4.0, 1.0)):
        c = nonlinear_relaxation_coefficient(sw, [h], [hx])
        print(f"  h = {h}, h_x = {hx}:  c = {float(c):.4f}, residual {c.residual:.1e}")


if __name__ == "__main__":
    main()
