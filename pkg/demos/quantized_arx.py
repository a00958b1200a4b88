"""Conditional vs unconditional central estimate for an ARX model seen through a binary sensor.

w(t) = 0.6 w(t-1) + 0.6 u(t) + d(t), y(t) = [w(t) >= 1], |d(t)| <= 0.1, N = 20.
The feasible parameter set is nonconvex.  The conditional center is computed
over that set, the unconditional one over its bounding box only.  On this
seed the unconditional one lands outside the set.  Takes a few minutes.
"""
import numpy as np

from polyminmax.estimation import arx_conditional_center, simulate_quantized_arx, solve_two_stage, unconditional_center
from polyminmax.oracle import projected_violation

inst = simulate_quantized_arx(seed=1, N=20)
print("bits:", inst.data.outputs.astype(int))
prob = arx_conditional_center(inst)
res = solve_two_stage(prob)
print("outer box:", np.round(res.box.lower, 3), np.round(res.box.upper, 3))
print("conditional center:", np.round(res.estimate, 4), " residual", res.feasibility_residuals["residual"])
u, _ = unconditional_center(res)
viol, _ = projected_violation(prob.M, dict(zip(prob.theta_names, map(float, u))))
print("unconditional center:", np.round(u, 4), " violation", round(viol, 4))
print("timings:", {k: round(v, 1) for k, v in res.timings.items()})
