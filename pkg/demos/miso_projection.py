"""Robust least-squares estimate for a static MISO model with errors in the inputs.

Parameters theta1 and theta3, N = 10 samples, |xi| <= 0.2, |eta| <= 0.25.
The worst-case squared residual is bounded by a polynomial in theta (stage
one, one clique per sample) and minimized over the feasible set (stage two).
Takes several minutes.
"""
import numpy as np

from polyminmax.estimation import miso_robust_projection, simulate_miso_static, solve_two_stage
from polyminmax.oracle import grid_max

inst = simulate_miso_static(seed=0, N=10, subset=[1, 3], terms=[1, 3])
prob = miso_robust_projection(inst)
res = solve_two_stage(prob)
print("true parameters:", inst.data.theta_true)
print("estimate:", np.round(res.estimate, 4), " residual", res.feasibility_residuals["residual"])
inner = grid_max(prob.J, res.estimate, prob.S, 201)
print(f"stage-one bound {res.outer_value:.4f} >= grid worst case {inner.value:.4f}")
print("warnings:", *res.warnings, sep="\n  ")
