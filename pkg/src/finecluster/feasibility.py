"""Decide the weighted second-moment program used to certify candidate means.

Given points ``x``, a candidate mean ``mu`` and a scale ``s``, the program
asks for ``w`` in ``[0, 1]^n`` with

* ``sum(w) >= mass_lb_factor * alpha * n``
* ``||sum_x w_x (x - mu)(x - mu)^T||_(k) <= (rhs_factor * s^2 / alpha) * sum(w)``

where ``||.||_(k)`` is the Ky-Fan k-norm and ``k = ceil(1/alpha)``.

The solver minimises ``phi(w) = ||M(w)||_(k) - c * sum(w)`` by Frank-Wolfe.
``phi`` is convex, and for every Fantope point ``P`` the linear function
``<P, M(v)> - c sum(v)`` lies below it, so the linear minimisation oracle
also yields a certified lower bound. That bound decides infeasibility.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import _backend
from .spectral import eigvalsh_desc, kyfan_norm, top_k_eigs

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"


def kyfan_index(alpha):
    return max(1, math.ceil(1.0 / alpha - 1e-9))


@dataclass
class ProgramInstance:
    points: np.ndarray
    mu: np.ndarray
    scale: float
    alpha: float
    mass_lb_factor: float = 0.97
    rhs_factor: float = 2.0
    kyfan_k: Optional[int] = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if self.kyfan_k is None:
            self.kyfan_k = kyfan_index(self.alpha)
        if self.kyfan_k < 1:
            raise ValueError("kyfan_k must be at least 1")
        if not 0 < self.mass_lb_factor <= 1:
            raise ValueError("mass_lb_factor must lie in (0, 1]")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def mass_lb(self):
        return self.mass_lb_factor * self.alpha * self.n

    @property
    def slope(self):
        """Coefficient c of sum(w) on the right-hand side."""
        return self.rhs_factor * self.scale ** 2 / self.alpha


@dataclass
class FeasibilityResult:
    status: str
    w: Optional[np.ndarray]
    residual: float
    iterations: int
    lower_bound: float = -math.inf
    reason: str = ""

    @property
    def feasible(self):
        return self.status == FEASIBLE


class CheckResult(NamedTuple):
    mass_ok: bool
    kyfan_ok: bool
    mass_slack: float
    kyfan_slack: float


def lmo(h, mass):
    """Minimise <h, v> over v in [0,1]^n with sum(v) >= mass.

    Every negative coordinate gets 1; if that is not enough mass the
    smallest remaining coordinates are filled (stable order), the last one
    fractionally.
    """
    n = h.size
    order = np.argsort(h, kind="stable")
    v = np.zeros(n)
    neg = int(np.count_nonzero(h < 0))
    full = max(neg, int(math.floor(mass)))
    full = min(full, n)
    v[order[:full]] = 1.0
    rem = mass - full
    if rem > 1e-12 and full < n:
        v[order[full]] = rem
    return v


def trace_bound(q_sorted, prefix, c, mass, ratio):
    """Minimum of sum_x (ratio * q_x - c) v_x over the mass-constrained box.

    ``q_sorted`` holds the squared norms ``||x - mu||^2`` ascending and
    ``prefix[i]`` the sum of its first ``i`` entries. Since the Ky-Fan
    k-norm of a PSD matrix is at least ``k/d`` times its trace, this is a
    lower bound on the program's objective, and it is exact when ``k >= d``.
    """
    n = q_sorted.size
    if ratio > 0:
        neg = int(np.searchsorted(q_sorted, c / ratio, side="left"))
    else:
        neg = n if c > 0 else 0
    full = min(n, max(neg, int(math.floor(mass))))
    val = ratio * prefix[full] - c * full
    rem = mass - full
    if rem > 1e-12 and full < n:
        val += rem * (ratio * q_sorted[full] - c)
    return float(val)


def _objective(M, k, c, total):
    vals = eigvalsh_desc(M)
    return float(vals[:k].sum()) - c * total


def check_solution(inst, w, tol=1e-3):
    """Evaluate both constraints of the program for ``w`` directly.

    ``kyfan_slack`` is ``rhs - ||M(w)||_(k)``; ``kyfan_ok`` allows a relative
    shortfall of ``tol`` of the right-hand side (the solver's acceptance
    tolerance).
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (inst.n,):
        raise ValueError("weight vector length must match the number of points")
    if np.any(w < -1e-12) or np.any(w > 1 + 1e-12):
        raise ValueError("weights must lie in [0, 1]")
    total = float(w.sum())
    mass_slack = total - inst.mass_lb
    Z = np.ascontiguousarray(inst.points - inst.mu)
    M = _backend.weighted_scatter(Z, np.clip(w, 0.0, 1.0))
    kf = kyfan_norm(M, inst.kyfan_k)
    rhs = inst.slope * total
    kf_slack = rhs - kf
    mass_ok = mass_slack >= -1e-9 * max(1.0, inst.mass_lb)
    kyfan_ok = kf <= rhs * (1.0 + tol) + 1e-12 * max(1.0, kf)
    return CheckResult(bool(mass_ok), bool(kyfan_ok), float(mass_slack), float(kf_slack))


@dataclass
class _Prepared:
    Z: np.ndarray
    q: np.ndarray
    q_sorted: np.ndarray = field(init=False)
    prefix: np.ndarray = field(init=False)

    def __post_init__(self):
        self.q_sorted = np.sort(self.q, kind="stable")
        self.prefix = np.concatenate([[0.0], np.cumsum(self.q_sorted)])


def prepare(points, mu):
    """Centered points and squared norms, reusable across scales for one ``mu``."""
    Z = np.ascontiguousarray(np.asarray(points, dtype=np.float64) - np.asarray(mu, dtype=np.float64))
    return _Prepared(Z, np.einsum("ij,ij->i", Z, Z))


def solve(inst, tol=1e-3, max_iter=500, prepared=None):
    """Frank-Wolfe decision procedure for the program.

    Returns ``feasible`` with a certificate ``w`` once
    ``phi(w) <= tol * c * sum(w)``; returns ``infeasible`` as soon as the
    certified lower bound on ``min phi`` is positive, or when the iteration
    cap is reached first.
    """
    n, d = inst.points.shape
    mass = inst.mass_lb
    if mass > n * (1 + 1e-12):
        return FeasibilityResult(INFEASIBLE, None, math.inf, 0, math.inf, "mass bound exceeds n")
    mass = min(mass, float(n))
    prep = prepared if prepared is not None else prepare(inst.points, inst.mu)
    Z, q = prep.Z, prep.q
    k = min(inst.kyfan_k, d)
    c = inst.slope
    ratio = k / d
    zero_tol = 1e-12 * (float(prep.prefix[-1]) + c * n + 1e-300)

    lb = trace_bound(prep.q_sorted, prep.prefix, c, mass, ratio)
    if lb > zero_tol:
        return FeasibilityResult(INFEASIBLE, None, lb, 0, lb, "trace bound")

    w = lmo(ratio * q - c, mass)
    if k == d:
        # Ky-Fan norm equals the trace, so the vertex above is optimal
        total = float(w.sum())
        if lb <= tol * c * total:
            return FeasibilityResult(FEASIBLE, w, lb, 0, lb, "trace exact")
        return FeasibilityResult(INFEASIBLE, None, lb, 0, lb, "trace exact")

    M = _backend.weighted_scatter(Z, w)
    total = float(w.sum())
    P_avg = np.zeros((d, d))
    best = math.inf
    for it in range(1, max_iter + 1):
        vals, U = top_k_eigs(M, k)
        phi = float(vals.sum()) - c * total
        best = min(best, phi)
        if phi <= tol * c * total:
            # incremental updates drift; confirm on a fresh assembly
            M = _backend.weighted_scatter(Z, w)
            total = float(w.sum())
            phi = _objective(M, k, c, total)
            if phi <= tol * c * total:
                return FeasibilityResult(FEASIBLE, w, phi, it, lb, "objective within tolerance")
            continue
        g = _backend.projected_energy(Z, np.ascontiguousarray(U))
        v = lmo(g - c, mass)
        lb = max(lb, float((g - c) @ v))
        P_avg += (U @ U.T - P_avg) / it
        g_avg = np.einsum("ij,jk,ik->i", Z, P_avg, Z, optimize=False)
        lb = max(lb, float((g_avg - c) @ lmo(g_avg - c, mass)))
        if lb > zero_tol:
            return FeasibilityResult(INFEASIBLE, None, best, it, lb, "dual bound")
        Mv = _backend.weighted_scatter(Z, v)
        tv = float(v.sum())

        def line(gamma):
            return _objective((1 - gamma) * M + gamma * Mv, k, c, (1 - gamma) * total + gamma * tv)

        res = minimize_scalar(line, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10})
        gamma, val = float(res.x), float(res.fun)
        end = line(1.0)
        if end < val:
            gamma, val = 1.0, end
        if val >= phi:
            gamma = 0.0 if line(0.0) <= val else gamma
            if gamma == 0.0:
                # no descent along the FW direction: stationary up to tolerance
                return FeasibilityResult(INFEASIBLE, None, best, it, lb, "stalled with positive objective")
        w = (1 - gamma) * w + gamma * v
        M = (1 - gamma) * M + gamma * Mv
        total = (1 - gamma) * total + gamma * tv
    return FeasibilityResult(INFEASIBLE, None, best, max_iter, lb, "iteration cap")
