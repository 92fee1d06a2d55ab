"""Ground-truth oracles: refinement checks, sub-cluster spot checks, metrics.

Refinement report JSON schema (``RefinementReport.to_json``)::

    {
      "pass": bool,
      "alpha": float, "c_const": float, "separation_factor": float,
      "n": int, "k": int, "m": int,
      "H": [[int, ...], ...],            # output set ids grouped per true cluster
      "clauses": {
        "<name>": {"pass": bool, "value": float, "bound": float, "detail": str}
      },
      "purity": {"min": float, "bound": 0.96, "pass": bool}
    }

Clause names: ``m_at_least_k``, ``item1_size``, ``item2a_missing``,
``item2b_extra``, ``item2c_mean``, ``item2d_separation``,
``item3_classified``. ``value`` is the worst measured quantity and
``bound`` the limit it is compared against.
"""
import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .spectral import max_stdev

PURITY_BOUND = 0.96
CLAUSES = ("m_at_least_k", "item1_size", "item2a_missing", "item2b_extra",
           "item2c_mean", "item2d_separation", "item3_classified")
# the refinement-separation factors quoted by the analysis, for reference
SEPARATION_FACTORS = {"definition": "100*c", "simplified_theorem": "366*c", "general_theorem": "4761*C"}


@dataclass
class ClauseResult:
    passed: bool
    value: float
    bound: float
    detail: str = ""

    def to_dict(self):
        return {"pass": bool(self.passed), "value": _num(self.value), "bound": _num(self.bound),
                "detail": self.detail}


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class RefinementReport:
    clauses: dict
    H: list
    purity_min: float
    alpha: float
    c_const: float
    separation_factor: float
    n: int
    k: int
    m: int
    metrics: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.clauses.values())

    @property
    def purity_passed(self):
        return self.purity_min >= PURITY_BOUND

    def to_dict(self):
        return {
            "pass": self.passed,
            "alpha": self.alpha, "c_const": self.c_const, "separation_factor": self.separation_factor,
            "n": self.n, "k": self.k, "m": self.m,
            "H": [list(map(int, h)) for h in self.H],
            "clauses": {name: self.clauses[name].to_dict() for name in CLAUSES},
            "purity": {"min": _num(self.purity_min), "bound": PURITY_BOUND, "pass": self.purity_passed},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["clause", "pass", "value", "bound", "detail"])
        for name in CLAUSES:
            c = self.clauses[name]
            w.writerow([name, int(c.passed), repr(_num(c.value)), repr(_num(c.bound)), c.detail])
        return buf.getvalue()


def _overlap_assignment(sets, labels, k):
    """Owner true cluster per output set: largest overlap, ties to the lowest index; -1 if none."""
    owner = []
    for B in sets:
        labs = labels[np.asarray(B, dtype=np.int64)]
        labs = labs[labs >= 0]
        if labs.size == 0:
            owner.append(-1)
            continue
        owner.append(int(np.argmax(np.bincount(labs, minlength=k))))
    return owner


def verify_refinement(out, truth, alpha, c_const=13.0, separation_factor=None):
    """Check each refinement clause literally against ground truth.

    ``out`` is a ClusterOutput (sets with their means and standard
    deviations); ``truth`` supplies labels (outliers
    carry -1 and belong to no ``S_i``), component means and standard
    deviation bounds. Output set ``j`` joins ``H_i`` for the true cluster it
    overlaps most. ``separation_factor`` multiplies
    ``(sigma_Bj + sigma_Bj') / sqrt(alpha)`` in the pairwise separation
    clause; the default is ``100 * c_const``.
    """
    sets = [np.asarray(B, dtype=np.int64) for B in out.sets]
    n, k, m = truth.n, truth.k, len(sets)
    if separation_factor is None:
        separation_factor = 100.0 * c_const
    fail = ClauseResult(False, math.nan, math.nan, "empty output")
    if m == 0:
        return RefinementReport({name: fail for name in CLAUSES}, [[] for _ in range(k)], math.nan,
                                alpha, c_const, separation_factor, n, k, 0)
    clauses = {}
    owner = _overlap_assignment(sets, truth.labels, k)
    H = [[j for j in range(m) if owner[j] == i] for i in range(k)]
    clauses["m_at_least_k"] = ClauseResult(m >= k, m, k)

    sizes = np.array([B.size for B in sets])
    floor_size = 0.92 * alpha * n
    clauses["item1_size"] = ClauseResult(bool(sizes.min() >= floor_size), sizes.min(), floor_size,
                                         f"smallest set {int(np.argmin(sizes))}")

    worst_missing, worst_extra, worst_mean = -math.inf, -math.inf, -math.inf
    miss_detail = extra_detail = mean_detail = ""
    mean_ok = True
    stats = list(zip(out.centers, out.scales))
    orphan = [j for j in range(m) if owner[j] < 0]
    for i in range(k):
        S = np.flatnonzero(truth.labels == i)
        union = np.concatenate([sets[j] for j in H[i]]) if H[i] else np.empty(0, dtype=np.int64)
        missing = np.setdiff1d(S, union).size / max(1, S.size)
        extra = np.setdiff1d(union, S).size
        if missing > worst_missing:
            worst_missing, miss_detail = missing, f"cluster {i}"
        if extra > worst_extra:
            worst_extra, extra_detail = extra, f"cluster {i}"
        for j in H[i]:
            err = float(np.linalg.norm(stats[j][0] - truth.means[i]))
            limit = c_const * truth.sigmas[i] * math.sqrt(S.size / sets[j].size)
            ratio = err / limit if limit > 0 else (0.0 if err <= 1e-9 else math.inf)
            if err > limit + 1e-9:
                mean_ok = False
            if ratio > worst_mean:
                worst_mean, mean_detail = ratio, f"set {j} vs cluster {i}"
    clauses["item2a_missing"] = ClauseResult(worst_missing <= 0.045, worst_missing, 0.045, miss_detail)
    extra_bound = 0.03 * alpha * n
    clauses["item2b_extra"] = ClauseResult(worst_extra <= extra_bound and not orphan, worst_extra, extra_bound,
                                           extra_detail + (f"; unassigned sets {orphan}" if orphan else ""))
    clauses["item2c_mean"] = ClauseResult(mean_ok and not orphan, worst_mean, 1.0,
                                          "ratio of error to bound; " + mean_detail)

    worst_sep, sep_detail = math.inf, ""
    for j, jj in itertools.combinations(range(m), 2):
        gap = float(np.linalg.norm(stats[j][0] - stats[jj][0]))
        need = separation_factor * (stats[j][1] + stats[jj][1]) / math.sqrt(alpha)
        ratio = gap / need if need > 0 else (math.inf if gap > 0 else 0.0)
        if ratio < worst_sep:
            worst_sep, sep_detail = ratio, f"sets {j},{jj}"
    clauses["item2d_separation"] = ClauseResult(worst_sep > 1.0, worst_sep, 1.0,
                                                "ratio of gap to threshold; " + sep_detail)

    classified = int(np.unique(np.concatenate(sets)).size)
    clauses["item3_classified"] = ClauseResult(classified >= 0.95 * n, classified / n, 0.95)

    purity = []
    for j, B in enumerate(sets):
        if B.size == 0 or owner[j] < 0:
            purity.append(0.0)
        else:
            purity.append(float(np.mean(truth.labels[B] == owner[j])))
    return RefinementReport(clauses, H, min(purity), alpha, c_const, separation_factor, n, k, m,
                            clustering_metrics(out, truth))


class NLSCResult(NamedTuple):
    passed: bool
    worst_ratio: float
    vacuous: bool
    examined: int


def _ratios(X, subsets, base):
    out = np.empty(len(subsets))
    for t, idx in enumerate(subsets):
        s = max_stdev(X[np.asarray(idx)])
        out[t] = s / base if base > 0 else (1.0 if s == 0 else math.inf)
    return out


def nlsc_spotcheck(X, S, alpha, n_total, trials=500, seed=0, mode="sampled", threshold=0.1):
    """Look for a large subset of ``S`` with collapsed spread.

    Every examined subset ``S'`` of ``S`` with ``|S'| >= 0.8 * alpha * n_total``
    must keep ``sigma_S' >= threshold * sigma_S``. ``sampled`` mode draws
    ``trials`` random subsets of the minimum size plus nearest-neighbour
    balls of that size around random anchors; it can refute the condition
    but never certify it. ``exhaustive`` mode (``|S| <= 18``) examines every
    subset of at least the minimum size.
    """
    X = np.asarray(X, dtype=np.float64)
    S = np.asarray(S, dtype=np.int64)
    size = math.ceil(0.8 * alpha * n_total - 1e-9)
    if size > S.size:
        return NLSCResult(True, math.inf, True, 0)
    size = max(size, 1)
    P = X[S]
    base = max_stdev(P)
    if mode == "exhaustive":
        if S.size > 18:
            raise ValueError("exhaustive mode is limited to 18 points")
        subsets = [c for r in range(size, S.size + 1) for c in itertools.combinations(range(S.size), r)]
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        subsets = [rng.choice(S.size, size=size, replace=False) for _ in range(trials)]
        anchors = rng.choice(S.size, size=min(S.size, max(1, trials // 5)), replace=False)
        for a in anchors:
            dist = np.einsum("ij,ij->i", P - P[a], P - P[a])
            subsets.append(np.argsort(dist, kind="stable")[:size])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ratios = _ratios(P, subsets, base)
    worst = float(ratios.min())
    return NLSCResult(bool(worst >= threshold), worst, False, len(subsets))


def clustering_metrics(out, truth):
    """Per-cluster and per-set quality numbers.

    Output sets are attached to true clusters by largest overlap. Rows are
    keyed by true cluster (``clusters``) and by output set (``sets``); the
    cluster rows do not depend on the order of ``sets``.
    """
    sets = [np.asarray(B, dtype=np.int64) for B in out.sets]
    k, n = truth.k, truth.n
    owner = _overlap_assignment(sets, truth.labels, k) if sets else []
    clusters = []
    for i in range(k):
        S = np.flatnonzero(truth.labels == i)
        members = [j for j in range(len(sets)) if owner[j] == i]
        union = np.unique(np.concatenate([sets[j] for j in members])) if members else np.empty(0, dtype=np.int64)
        errs = [float(np.linalg.norm(out.centers[j] - truth.means[i])) for j in members if sets[j].size]
        sig = float(truth.sigmas[i])
        err = max(errs) if errs else math.nan
        clusters.append({
            "cluster": i,
            "size": int(S.size),
            "n_sets": len(members),
            "sym_diff": int(np.setxor1d(S, union).size),
            "sym_diff_frac": np.setxor1d(S, union).size / max(1, S.size),
            "missing_frac": np.setdiff1d(S, union).size / max(1, S.size),
            "extra": int(np.setdiff1d(union, S).size),
            "mean_error": err,
            "mean_error_over_sigma": err / sig if sig > 0 else (0.0 if err == 0 else math.inf),
        })
    rows = []
    for j, B in enumerate(sets):
        i = owner[j]
        rows.append({
            "set": j,
            "size": int(B.size),
            "cluster": i,
            "purity": float(np.mean(truth.labels[B] == i)) if B.size and i >= 0 else 0.0,
            "sigma": float(out.scales[j]),
        })
    classified = int(np.unique(np.concatenate(sets)).size) if sets else 0
    return {"m": len(sets), "k": k, "n": n, "classified_frac": classified / max(1, n),
            "clusters": clusters, "sets": rows}


def metrics_csv(metrics):
    """Fixed-column CSV of the per-cluster rows."""
    cols = ["cluster", "size", "n_sets", "sym_diff", "sym_diff_frac", "missing_frac", "extra",
            "mean_error", "mean_error_over_sigma"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in metrics["clusters"]:
        w.writerow([repr(_num(row[c])) if isinstance(row[c], float) else row[c] for c in cols])
    return buf.getvalue()
