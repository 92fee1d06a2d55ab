"""End-to-end clustering: candidate generation, certification and pruning."""
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import _backend
from .feasibility import ProgramInstance, prepare, solve, trace_bound
from .robustcore import DenseBallDecoder, candidate_stdevs, filter as spectral_filter
from .spectral import max_stdev

# seed stream tags
STAGE_DISTANCE = 1
STAGE_OUTPUT = 2


class NoViableCenters(RuntimeError):
    """Every candidate center was pruned."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class ConstantsProfile:
    """Thresholds used by the pipeline.

    ``paper`` keeps the constants of the analysis; ``practical`` replaces the
    proof-scale ones with values that behave at desk scale.
    """

    name: str
    C: float
    dedup_factor: float
    mass_lb_factor: float
    rhs_factor: float
    size_prune_factor: float
    distance_prune_factor: float
    filter_epsilon: float
    c_ld: float
    filter_stop_factor: float = 9.0
    feas_tol: float = 1e-3
    feas_max_iter: int = 500
    stdev_mode: str = "grid"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool) and not v > 0:
                raise ValueError(f"profile field {f.name} must be positive, got {v}")
        if self.stdev_mode not in ("grid", "pairs"):
            raise ValueError("stdev_mode must be 'grid' or 'pairs'")

    @classmethod
    def paper(cls, C=1.0):
        return cls("paper", C, 99.0 * C, 0.97, 2.0 * C * C, 0.96, 4761.0 * C, 0.04, C)

    @classmethod
    def practical(cls, C=1.0):
        return cls("practical", C, 6.0 * C, 0.97, 4.0 * C * C, 0.96, 8.0 * C, 0.04, 2.0 * C)

    @classmethod
    def named(cls, name, C=1.0):
        if name not in ("paper", "practical"):
            raise ValueError(f"unknown profile {name!r}")
        return getattr(cls, name)(C)

    def with_overrides(self, overrides):
        """Copy with fields replaced; string values are coerced to the field's type."""
        types = {f.name: f.type for f in fields(self)}
        clean = {}
        for key, value in overrides.items():
            if key not in types or key == "name":
                raise ValueError(f"unknown profile field {key!r}")
            current = getattr(self, key)
            clean[key] = type(current)(value) if isinstance(value, str) else value
        return replace(self, **clean)

    def to_dict(self):
        return asdict(self)


@dataclass
class PipelineState:
    L_stdev: np.ndarray = field(default_factory=lambda: np.empty(0))
    L_mean: list = field(default_factory=list)
    L: list = field(default_factory=list)
    J_deleted: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def log(self, stage, event, **info):
        self.trace.append({"stage": stage, "event": event, **info})


@dataclass
class ClusterOutput:
    sets: list
    centers: np.ndarray
    scales: np.ndarray
    state: PipelineState = None

    @property
    def m(self):
        return len(self.sets)

    @classmethod
    def from_sets(cls, T, sets, state=None):
        """Output record for given index sets, with empirical means and standard deviations."""
        X = np.asarray(T, dtype=np.float64)
        sets = [np.sort(np.asarray(B, dtype=np.int64)) for B in sets]
        means = [X[B].mean(axis=0) if B.size else np.full(X.shape[1], np.nan) for B in sets]
        scales = [max_stdev(X[B]) if B.size else math.nan for B in sets]
        return cls(sets, np.array(means).reshape(len(sets), X.shape[1]), np.array(scales), state)

    def assignment(self, n):
        out = np.full(n, -1, dtype=np.int64)
        for j, idx in enumerate(self.sets):
            out[idx] = j
        return out


def _seed(seed, *tags):
    return np.random.SeedSequence([int(seed) % (2 ** 63), *[int(t) for t in tags]])


def voronoi_partition(T, centers):
    """Nearest-center cells; ties go to the lowest center index."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if centers.shape[0] == 0:
        raise ValueError("voronoi_partition needs at least one center")
    X = np.ascontiguousarray(T, dtype=np.float64)
    labels = _backend.nearest_center(X, np.ascontiguousarray(centers))
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(centers.shape[0] + 1))
    return [order[bounds[j]:bounds[j + 1]] for j in range(centers.shape[0])]


def filtered_voronoi(T, centers, profile, seed, delta=0.1, stage=STAGE_OUTPUT, iteration=0):
    """Voronoi cells, each passed through the spectral filter.

    Cell ``j`` is filtered with randomness derived from
    ``(seed, stage, iteration, j)``.
    """
    X = np.asarray(T, dtype=np.float64)
    cells = voronoi_partition(X, centers)
    sets, means, scales = [], [], []
    for j, A in enumerate(cells):
        if A.size == 0:
            B = A
        else:
            try:
                out = spectral_filter(X[A], epsilon=profile.filter_epsilon, delta=delta,
                                      seed=_seed(seed, stage, iteration, j),
                                      stop_factor=profile.filter_stop_factor)
            except RuntimeError as err:
                raise RuntimeError(f"filter failed on cell {j}: {err}") from err
            B = np.sort(A[out.kept_indices])
        sets.append(B)
        means.append(X[B].mean(axis=0) if B.size else np.full(X.shape[1], np.nan))
        scales.append(max_stdev(X[B]) if B.size else math.nan)
    return ClusterOutput(sets, np.array(means).reshape(len(sets), X.shape[1]), np.array(scales))


def main_pruning_loop(T, L_stdev, L_mean, alpha, profile, state=None):
    """Accept candidate means in order of increasing scale.

    A candidate is tested at scale ``s`` only if it is farther than
    ``dedup_factor * s / sqrt(alpha)`` from every mean already accepted, and
    it is accepted if the feasibility program is satisfiable at ``(mu, s)``.
    """
    state = state if state is not None else PipelineState()
    X = np.asarray(T, dtype=np.float64)
    n, d = X.shape
    accepted = []
    prepared = {}
    k = min(math.ceil(1.0 / alpha - 1e-9), d)
    mass = profile.mass_lb_factor * alpha * n
    for s in np.sort(np.asarray(L_stdev, dtype=np.float64)):
        radius = profile.dedup_factor * s / math.sqrt(alpha)
        c = profile.rhs_factor * s * s / alpha
        skipped, screened = [], []
        for idx, cand in enumerate(L_mean):
            mu = cand.mean
            if accepted:
                gaps = np.linalg.norm(np.array([a.mean for a in accepted]) - mu, axis=1)
                if gaps.min() <= radius:
                    skipped.append(list(cand.origin))
                    continue
            prep = prepared.get(idx)
            if prep is None:
                prep = prepared[idx] = prepare(X, mu)
            # cheap certified rejection before any eigen-work
            if trace_bound(prep.q_sorted, prep.prefix, c, mass, k / d) > 1e-12 * (prep.prefix[-1] + c * n):
                screened.append(list(cand.origin))
                continue
            inst = ProgramInstance(X, mu, float(s), alpha, profile.mass_lb_factor, profile.rhs_factor)
            try:
                res = solve(inst, tol=profile.feas_tol, max_iter=profile.feas_max_iter, prepared=prep)
            except Exception as err:
                raise RuntimeError(f"feasibility solve failed for candidate {cand.origin} at s={s:.6g}: {err}") from err
            state.log("main", "tested", candidate=list(cand.origin), s=float(s),
                      status=res.status, iterations=res.iterations, reason=res.reason)
            if res.feasible:
                accepted.append(cand._replace(scale=float(s)))
                state.log("main", "accepted", candidate=list(cand.origin), s=float(s),
                          mean=[float(v) for v in mu])
        if skipped:
            state.log("main", "dedup", s=float(s), candidates=skipped)
        if screened:
            state.log("main", "screened", s=float(s), status="infeasible", reason="trace bound",
                      candidates=screened)
    state.L = accepted
    return accepted


def size_based_pruning(centers, T, alpha, profile, state=None):
    """Delete centers whose Voronoi cell holds fewer than ``size_prune_factor * alpha * n`` points.

    One center is removed per round (smallest cell first, ties to the lowest
    index) and the cells are recomputed over the survivors.
    """
    X = np.asarray(T, dtype=np.float64)
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    alive = list(range(centers.shape[0]))
    floor_size = profile.size_prune_factor * alpha * X.shape[0]
    while alive:
        cells = voronoi_partition(X, centers[alive])
        sizes = np.array([c.size for c in cells])
        if state is not None:
            state.log("size", "cells", survivors=list(alive), sizes=sizes.tolist())
        small = np.flatnonzero(sizes < floor_size)
        if small.size == 0:
            return centers[alive], alive
        victim = int(small[np.argmin(sizes[small])])
        if state is not None:
            state.J_deleted.append(alive[victim])
            state.log("size", "deleted", center=alive[victim], size=int(sizes[victim]),
                      floor=float(floor_size))
        del alive[victim]
    raise NoViableCenters("size-based pruning deleted every center", state)


def _normalised_gap(means, scales, j):
    others = [t for t in range(len(means)) if t != j]
    if not others:
        return math.inf
    dist = min(float(np.linalg.norm(means[j] - means[t])) for t in others)
    if scales[j] == 0:
        return math.inf
    return dist / scales[j]


def distance_based_pruning(centers, T, alpha, profile, seed, delta=0.1, state=None):
    """Delete centers whose filtered cells sit too close together.

    Pairs are scanned lexicographically; for the first pair within
    ``distance_prune_factor * (sigma_j + sigma_j') / sqrt(alpha)`` the set
    with the smaller nearest-neighbour distance (in units of its own
    standard deviation) is deleted. A zero standard deviation counts as
    infinitely separated. Cells left empty by the filter are deleted first.
    """
    X = np.asarray(T, dtype=np.float64)
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    alive = list(range(centers.shape[0]))
    it = 0
    while True:
        if not alive:
            raise NoViableCenters("distance-based pruning deleted every center", state)
        out = filtered_voronoi(X, centers[alive], profile, seed, delta, STAGE_DISTANCE, it)
        it += 1
        empty = [j for j, B in enumerate(out.sets) if B.size == 0]
        if empty:
            victim = empty[0]
            reason = "empty"
        else:
            victim = None
            m = len(alive)
            for j in range(m):
                for jj in range(j + 1, m):
                    gap = float(np.linalg.norm(out.centers[j] - out.centers[jj]))
                    need = profile.distance_prune_factor * (out.scales[j] + out.scales[jj]) / math.sqrt(alpha)
                    if gap <= need:
                        dj = _normalised_gap(out.centers, out.scales, j)
                        djj = _normalised_gap(out.centers, out.scales, jj)
                        victim = j if dj < djj else jj
                        reason = "pair"
                        if state is not None:
                            state.log("distance", "violation", pair=[alive[j], alive[jj]], gap=gap,
                                      threshold=need, d=dj, d_prime=djj)
                        break
                if victim is not None:
                    break
            if victim is None:
                return centers[alive], alive, out
        if state is not None:
            state.J_deleted.append(alive[victim])
            state.log("distance", "deleted", center=alive[victim], reason=reason)
        del alive[victim]


def cluster(T, alpha, delta=0.1, profile=None, seed=0, decoder=None):
    """Cluster ``T`` into disjoint sets.

    Parameters
    ----------
    T : array, shape (n, d)
    alpha : float
        Lower bound on the weight of every component.
    delta : float
        Failure probability budget of the randomised filter.
    profile : ConstantsProfile, optional
        Defaults to the practical profile.
    seed : int
    decoder : callable, optional
        List decoder with a ``decode_many(T, scales, alpha)`` method.

    Returns
    -------
    ClusterOutput
        Final sets, their means and standard deviations, and the full
        pipeline state (candidate lists and decision trace).
    """
    X = np.ascontiguousarray(T, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("cluster needs a 2-d array with at least two points")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    profile = profile or ConstantsProfile.practical()
    decoder = decoder or DenseBallDecoder(c_ld=profile.c_ld)
    state = PipelineState()

    stdevs = candidate_stdevs(X, mode=profile.stdev_mode)
    if stdevs.degenerate:
        state.log("stdev", "degenerate")
        idx = np.arange(X.shape[0])
        return ClusterOutput([idx], X[:1].copy(), np.zeros(1), state)
    state.L_stdev = stdevs.values
    state.L_mean = decoder.decode_many(X, stdevs.values, alpha)
    state.log("mean", "decoded", candidates=len(state.L_mean), scales=int(stdevs.values.size))

    accepted = main_pruning_loop(X, stdevs.values, state.L_mean, alpha, profile, state)
    if not accepted:
        raise NoViableCenters("no candidate mean passed the feasibility program", state)
    centers = np.array([a.mean for a in accepted])
    centers, _ = size_based_pruning(centers, X, alpha, profile, state)
    centers, _, _ = distance_based_pruning(centers, X, alpha, profile, seed, delta, state)
    out = filtered_voronoi(X, centers, profile, seed, delta, STAGE_OUTPUT, 0)
    out.state = state
    state.log("output", "done", m=out.m, sizes=[int(B.size) for B in out.sets])
    return out
