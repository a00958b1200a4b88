"""Moment hierarchy on (theta^2 - 1)^2 over [-2, 2]: two global minimizers.

At order 2 the moment matrix is flat with rank 2 and both minimizers are
read off its atoms.
"""
from polyminmax import Polynomial, SemialgebraicSet, VariableSpace
from polyminmax.lasserre_hierarchy import solve_hierarchy

sp = VariableSpace.from_blocks(["theta"])
th = Polynomial.variable(sp, "theta")
res = solve_hierarchy((th ** 2 - 1) ** 2, SemialgebraicSet(sp, [4 - th ** 2]), 2, 4)
for rec in res.records:
    print(f"t = {rec.t}: bound {rec.bound:.3e}  status {rec.status}  ranks {rec.ranks}  flat {rec.flat}")
print("minimizers:", [round(float(m[0]), 6) for m in res.minimizers])
