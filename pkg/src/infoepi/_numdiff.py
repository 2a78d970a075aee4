"""Central finite differences used as the numeric oracle for closed forms."""

import numpy as np
from scipy.optimize import linear_sum_assignment


def jacobian(func, x, h=1e-6):
    """Central-difference Jacobian with the step scaled by ``max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x), dtype=float)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        hj = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += hj
        xm[j] -= hj
        J[:, j] = (np.asarray(func(xp), dtype=float) - np.asarray(func(xm), dtype=float)) / (2.0 * hj)
    return J


def match_eigenvalues(a, b):
    """Pair two eigenvalue lists by minimal total distance.

    Returns ``(a_sorted, b_matched, max_abs_diff)``; sorting alone is not
    reliable once complex pairs or near-ties appear.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return a[rows], b[cols], float(cost[rows, cols].max()) if len(rows) else 0.0
