"""
Recovering classical Douglas-Rachford from the general scheme
=============================================================

The two-resolvent member of the scheme family is the classical DR iteration
in disguise: rescale the dual variable by sqrt(2) and read gamma_k as half
the usual relaxation parameter.  This script runs both side by side on the
toy inclusion 0 in (x - 1) + (x + 1) and prints the gap.
"""

import numpy as np

from splitdev import (
    ParamSchedule,
    Problem,
    StopRule,
    affine_monotone,
    douglas_rachford,
    solve,
)

# the two subdifferentials; their sum vanishes at x = 0
f1 = affine_monotone(np.eye(1), -np.ones(1), label="(x-1)^2/2")
f2 = affine_monotone(np.eye(1), np.ones(1), label="(x+1)^2/2")
problem = Problem((f1, f2), dim=1)

gamma_k = 0.45  # textbook relaxation lambda_k = 2 * gamma_k = 0.9

result = solve(problem, douglas_rachford(gamma=1.0),
               schedule=ParamSchedule(gamma=gamma_k, xi=0.0),
               stop=StopRule(tol=-1.0, max_iter=30),
               record_states=True)

# hand-rolled textbook iteration: x1 = J_F1(z), x2 = J_F2(2 x1 - z),
# z <- z - lambda (x1 - x2), with analytic resolvents
z_ref = 0.0
print(f"{'k':>3} {'solver z*sqrt(2)':>18} {'textbook z':>14} {'gap':>10}")
for k in range(31):
    ours = float(np.sqrt(2.0) * result.trajectory.z_states[k][0, 0])
    if k % 5 == 0:
        print(f"{k:>3} {ours:>18.12f} {z_ref:>14.12f} {abs(ours - z_ref):>10.1e}")
    x1 = (z_ref + 1.0) / 2.0
    x2 = (2.0 * x1 - z_ref - 1.0) / 2.0
    z_ref -= 2.0 * gamma_k * (x1 - x2)

print()
print("last block of the final sweep:", result.x, "(true solution is 0)")
