"""Independent reference solvers for the feasibility program (test-only)."""
import math

import numpy as np
from scipy.optimize import linprog


def lp_min_phi(inst):
    """Exact minimum of phi when the Ky-Fan norm equals the trace (k >= d)."""
    Z = inst.points - inst.mu
    q = np.einsum("ij,ij->i", Z, Z)
    n = inst.n
    res = linprog(q - inst.slope, A_ub=-np.ones((1, n)), b_ub=[-inst.mass_lb],
                  bounds=[(0.0, 1.0)] * n, method="highs")
    assert res.status == 0
    return float(res.fun)


def sdp_min_phi(inst):
    """Minimum of phi over the box via a conic solver (Ky-Fan as sum of largest eigenvalues)."""
    import cvxpy as cp

    Z = inst.points - inst.mu
    n, d = Z.shape
    k = min(inst.kyfan_k, d)
    w = cp.Variable(n)
    M = sum(w[i] * np.outer(Z[i], Z[i]) for i in range(n))
    M = (M + M.T) / 2
    obj = cp.lambda_sum_largest(M, k) - inst.slope * cp.sum(w)
    prob = cp.Problem(cp.Minimize(obj), [w >= 0, w <= 1, cp.sum(w) >= inst.mass_lb])
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def random_instance(rng, n, d, alpha, spread=1.0):
    from finecluster.feasibility import ProgramInstance

    X = rng.standard_normal((n, d)) * spread
    X[: max(1, n // 3)] *= rng.uniform(0.05, 0.5)
    mu = rng.standard_normal(d) * 0.2
    Z = X - mu
    q = np.sort(np.einsum("ij,ij->i", Z, Z))
    # scale near the borderline: c close to a typical per-point energy
    target = q[min(n - 1, int(math.ceil(0.97 * alpha * n)))] * rng.uniform(0.02, 0.8)
    s = math.sqrt(max(target, 1e-12) * alpha / 2.0)
    return ProgramInstance(X, mu, s, alpha)
