# Ground state of a 1D Kerr problem with a sign-changing coefficient, checked
# against the shooting oracle.
#
# Omega = (-1, 1), V = 0, p = 4, Q = +1 on |x| < 0.25 and -1 outside.

import numpy as np

from indefconc.mesh import ScalarField, build_grid, lq_norm
from indefconc.oracle import shoot_1d, shrinking_ball_1d
from indefconc.problem import make_instance
from indefconc.solver import solve_ground_state

grid = build_grid(1, -1.0, 1.0, 2000)
x = grid.points[:, 0]
Q = ScalarField(grid, np.where(np.abs(x) < 0.25, 1.0, -1.0))
inst = make_instance(grid, grid.constant(0.0), Q, 4.0, [0.0], scale=0.25)

gs = solve_ground_state(inst)
print("multistart runs:")
for run in gs.runs:
    print(f"  {run.label:10s} s = {run.s:.12f}  iterations = {run.iterations}")
print("kept:", gs.start_label, " residual:", f"{gs.residual:.2e}")

# The shooting oracle integrates the ODE from u(0) = u0, u'(0) = 0 and
# bisects on u0 until u(1) = 0.
shot = shoot_1d(shrinking_ball_1d(0.25))
print(f"oracle u0 = {shot.u0:.10f}, solver max u = {gs.u.values.max():.10f}")
print(f"oracle s  = {shot.s_value:.10f}, solver s  = {gs.s:.10f}")
print(f"relative gap {abs(gs.s - shot.s_value) / shot.s_value:.2e}")

# the profile is even and decays fast outside the focusing region
for xi in (0.0, 0.25, 0.5, 0.75):
    i = np.argmin(np.abs(x - xi))
    print(f"  u({x[i]:+.3f}) = {gs.u.values[i]:.6f}")
print("sup norm:", lq_norm(gs.u, np.inf))
