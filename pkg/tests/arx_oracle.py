"""Exact membership test for the quantized ARX feasible set, vectorized over parameter points.

For fixed parameters the noise recursion is affine in one scalar per step, so the
feasible values of e(t) form an interval that can be propagated forward.
"""
import numpy as np


def e_interval(y, C, w_bound):
    lo = np.where(y > 0, y - w_bound, np.maximum(-C, y - w_bound))
    hi = np.where(y > 0, np.minimum(1 - C, y + w_bound), y + w_bound)
    return lo, hi


def arx_feasible(inst, thetas, slack=1e-9):
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    t1, t2 = th[:, 0], th[:, 1]
    u, y = inst.data.inputs, inst.data.outputs
    C, wb, db = inst.data.meta["threshold"], inst.data.meta["w_bound"], inst.data.noise_bounds["d"]
    elo, ehi = e_interval(y, C, wb)
    ok = np.all((th >= -2.0 - slack) & (th <= 2.0 + slack), axis=1)
    lo = np.full(len(th), elo[0])
    hi = np.full(len(th), ehi[0])
    for t in range(1, len(y)):
        # e(t) = y(t) - t1*y(t-1) + t1*e(t-1) - t2*u(t) - d(t)
        a, b = t1 * lo, t1 * hi
        base = y[t] - t1 * y[t - 1] - t2 * u[t]
        lo = np.maximum(base + np.minimum(a, b) - db, elo[t])
        hi = np.minimum(base + np.maximum(a, b) + db, ehi[t])
        ok &= hi >= lo - slack
    return ok
