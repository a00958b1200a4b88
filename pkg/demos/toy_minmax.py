"""Two-stage min-max on J = (theta - alpha)^2 with alpha, theta in [-1, 1].

The inner max is (1 + |theta|)^2, minimized at theta = 0 with value 1.  Stage
one replaces it by a polynomial upper bound of degree 2*tau; stage two
minimizes that polynomial.  The kink at 0 keeps the bound above 1.
"""
import numpy as np

from polyminmax import Box, Polynomial, SemialgebraicSet, VariableSpace
from polyminmax.estimation import general_problem, solve_two_stage
from polyminmax.sos_relaxation import approximate_value_function

sp = VariableSpace.from_blocks(["theta"], ["alpha"])
th, al = Polynomial.variable(sp, "theta"), Polynomial.variable(sp, "alpha")
J = (th - al) ** 2
S = SemialgebraicSet(sp, [1 - al ** 2])
st = VariableSpace.from_blocks(["theta"])
M = SemialgebraicSet(st, [1 - Polynomial.variable(st, "theta") ** 2])

grid = np.linspace(-1, 1, 9)
print("theta     " + "  ".join(f"{t:6.2f}" for t in grid))
print("true      " + "  ".join(f"{v:6.3f}" for v in (1 + np.abs(grid)) ** 2))
for tau in (1, 2, 3):
    vf = approximate_value_function(J, S, Box([-1.0], [1.0]), tau)
    print(f"tau = {tau}   " + "  ".join(f"{v:6.3f}" for v in vf(grid[:, None])))

res = solve_two_stage(general_problem(J, S, M), tau_list=[1, 2, 3])
print("\nrunning best over tau:", np.round(res.best.best, 4).tolist())
print("estimate", res.estimate, "feasibility", res.feasibility_residuals)
