"""Synthetic mixtures, adversarial corruption and named fixtures."""
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .spectral import eigvalsh_desc, max_stdev

OUTLIER = -1
KINDS = ("gaussian", "uniform_ball", "student_t", "point_mass", "axis_grid")
STRATEGIES = ("far_blob", "fake_cluster", "bridge", "replace_random")
SEPARATION_SLACK = 1e-9


class SpecError(ValueError):
    """A mixture specification violates one of its invariants."""


@dataclass
class ComponentSpec:
    kind: str
    mean: np.ndarray
    sigma: float
    weight: float
    dof: Optional[float] = None
    cov: Optional[np.ndarray] = None
    axis: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        if self.cov is not None:
            self.cov = np.asarray(self.cov, dtype=np.float64)
        if self.kind not in KINDS:
            raise SpecError(f"unknown component kind {self.kind!r}")
        if self.sigma < 0:
            raise SpecError("sigma must be nonnegative")
        if not 0 < self.weight <= 1:
            raise SpecError("weight must lie in (0, 1]")
        if self.kind == "student_t" and (self.dof is None or self.dof <= 2):
            raise SpecError("student_t needs dof > 2 for a finite covariance")
        if self.cov is not None:
            if self.kind != "gaussian":
                raise SpecError("an explicit covariance is only supported for gaussian components")
            top = eigvalsh_desc(self.cov)
            if top[-1] < -1e-12 or top[0] > self.sigma ** 2 * (1 + 1e-9):
                raise SpecError("explicit covariance must be PSD with operator norm <= sigma^2")


def pairwise_separation_violations(means, sigmas, alpha, factor):
    """Pairs (i, j) with ``||mu_i - mu_j|| <= factor (sigma_i + sigma_j) / sqrt(alpha)``."""
    bad = []
    for i, j in itertools.combinations(range(len(means)), 2):
        dist = float(np.linalg.norm(np.asarray(means[i]) - np.asarray(means[j])))
        need = factor * (sigmas[i] + sigmas[j]) / math.sqrt(alpha)
        if not dist > need - SEPARATION_SLACK * max(1.0, need):
            bad.append((i, j, dist, need))
    return bad


@dataclass
class MixtureSpec:
    dim: int
    components: list
    alpha: float
    separation_factor: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise SpecError("alpha must lie in (0, 1)")
        if not self.components:
            raise SpecError("a mixture needs at least one component")
        for c in self.components:
            if c.mean.shape != (self.dim,):
                raise SpecError(f"component mean has shape {c.mean.shape}, expected ({self.dim},)")
            if c.cov is not None and c.cov.shape != (self.dim, self.dim):
                raise SpecError("component covariance has the wrong shape")
        weights = np.array([c.weight for c in self.components])
        if abs(weights.sum() - 1.0) > 1e-9:
            raise SpecError(f"weights sum to {weights.sum():.12g}, not 1")
        if weights.min() < self.alpha * (1 - 1e-12):
            raise SpecError(f"minimum weight {weights.min():.6g} is below alpha={self.alpha:.6g}")
        bad = pairwise_separation_violations(
            [c.mean for c in self.components], [c.sigma for c in self.components],
            self.alpha, self.separation_factor)
        if bad:
            detail = ", ".join(f"({i},{j}): {dist:.6g} <= {need:.6g}" for i, j, dist, need in bad)
            raise SpecError(f"separation violated for pairs {detail}")

    @property
    def k(self):
        return len(self.components)

    def to_dict(self):
        comps = []
        for c in self.components:
            entry = asdict(c)
            entry["mean"] = c.mean.tolist()
            entry["cov"] = None if c.cov is None else c.cov.tolist()
            comps.append(entry)
        return {"dim": self.dim, "alpha": self.alpha,
                "separation_factor": self.separation_factor, "components": comps}

    @classmethod
    def from_dict(cls, data):
        comps = [ComponentSpec(**c) for c in data["components"]]
        return cls(dim=int(data["dim"]), components=comps, alpha=float(data["alpha"]),
                   separation_factor=float(data["separation_factor"]))


def save_spec(path, spec, **extra):
    payload = spec.to_dict()
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_spec(path):
    with open(path) as fh:
        data = json.load(fh)
    return MixtureSpec.from_dict(data), data


@dataclass
class GroundTruth:
    labels: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    weights: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.n = int(self.labels.size)

    @property
    def k(self):
        return len(self.sigmas)

    @property
    def index_sets(self):
        return [np.flatnonzero(self.labels == i) for i in range(self.k)]

    @property
    def outliers(self):
        return np.flatnonzero(self.labels == OUTLIER)

    @classmethod
    def from_labels(cls, X, labels):
        """Ground truth with empirical means and standard deviations per label."""
        labels = np.asarray(labels, dtype=np.int64)
        k = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
        means, sigmas, weights = [], [], []
        for i in range(k):
            pts = X[labels == i]
            means.append(pts.mean(axis=0) if len(pts) else np.full(X.shape[1], np.nan))
            sigmas.append(max_stdev(pts))
            weights.append(len(pts) / max(1, labels.size))
        return cls(labels, np.array(means).reshape(k, X.shape[1]), np.array(sigmas), np.array(weights))


def _largest_remainder(weights, n):
    raw = np.asarray(weights) * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def _sample_component(comp, m, d, rng):
    mu, s = comp.mean, comp.sigma
    if m == 0:
        return np.empty((0, d))
    if comp.kind == "point_mass":
        return np.tile(mu, (m, 1))
    if comp.kind == "gaussian":
        if comp.cov is not None:
            return rng.multivariate_normal(mu, comp.cov, size=m, method="eigh")
        return mu + s * rng.standard_normal((m, d))
    if comp.kind == "uniform_ball":
        # radius R gives covariance R^2/(d+2) I
        radius = s * math.sqrt(d + 2)
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = radius * rng.random(m) ** (1.0 / d)
        return mu + g * r[:, None]
    if comp.kind == "student_t":
        nu = comp.dof
        scale = s * math.sqrt((nu - 2) / nu)
        chi = rng.chisquare(nu, size=m)
        return mu + scale * rng.standard_normal((m, d)) / np.sqrt(chi / nu)[:, None]
    if comp.kind == "axis_grid":
        # discrete uniform grid whose standard deviation is exactly sigma
        half = s * math.sqrt(3.0 * (m - 1) / (m + 1)) if m > 1 else 0.0
        pts = np.tile(mu, (m, 1))
        pts[:, comp.axis] += np.linspace(-half, half, m)
        return pts
    raise SpecError(f"unknown component kind {comp.kind!r}")


def generate(spec, n, seed, exact_counts=False):
    """Draw ``n`` points from the mixture.

    With ``exact_counts`` the per-component counts are the largest-remainder
    rounding of ``weight * n`` (labels still randomly permuted); otherwise
    each point's component is drawn independently from the weights.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    weights = np.array([c.weight for c in spec.components])
    if exact_counts:
        labels = np.repeat(np.arange(spec.k), _largest_remainder(weights, n))
        rng.shuffle(labels)
    else:
        labels = rng.choice(spec.k, size=n, p=weights / weights.sum())
    X = np.empty((n, spec.dim))
    for i, comp in enumerate(spec.components):
        idx = np.flatnonzero(labels == i)
        X[idx] = _sample_component(comp, idx.size, spec.dim, rng)
    truth = GroundTruth(labels, np.array([c.mean for c in spec.components]),
                        np.array([c.sigma for c in spec.components]), weights)
    return X, truth


class Corruption(NamedTuple):
    data: np.ndarray
    truth: GroundTruth
    replaced: np.ndarray


def corrupt(X, truth, fraction, strategy, seed, alpha=None):
    """Replace ``floor(fraction * n)`` points according to ``strategy``."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    X = np.array(X, dtype=np.float64, copy=True)
    n, d = X.shape
    count = int(math.floor(fraction * n + 1e-9))
    labels = truth.labels.copy()
    if count == 0:
        return Corruption(X, replace(truth, labels=labels), np.empty(0, dtype=np.int64))
    rng = np.random.default_rng(seed)
    pool = np.flatnonzero(labels != OUTLIER)
    replaced = np.sort(rng.choice(pool, size=count, replace=False))
    scale = float(np.max(truth.sigmas)) if truth.k else 1.0
    scale = scale if scale > 0 else 1.0
    centroid = X.mean(axis=0)

    if strategy == "far_blob":
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        X[replaced] = centroid + 1e6 * scale * u
    elif strategy == "fake_cluster":
        if alpha is not None and count >= 0.8 * alpha * n:
            raise ValueError("fake_cluster size must stay below 0.8 * alpha * n")
        i = int(np.argmax(truth.weights))
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        sig = truth.sigmas[i] if truth.sigmas[i] > 0 else scale
        spot = truth.means[i] + 3.0 * sig * u
        X[replaced] = spot + 0.05 * sig * rng.standard_normal((count, d))
    elif strategy == "bridge":
        if truth.k < 2:
            raise ValueError("bridge needs at least two clusters")
        pairs = list(itertools.combinations(range(truth.k), 2))
        pick = rng.integers(len(pairs), size=count)
        t = rng.random(count)[:, None]
        a = truth.means[[pairs[p][0] for p in pick]]
        b = truth.means[[pairs[p][1] for p in pick]]
        X[replaced] = a + t * (b - a)
    else:
        lo, hi = X.min(axis=0), X.max(axis=0)
        pad = 0.1 * (hi - lo) + 1e-12
        X[replaced] = rng.uniform(lo - pad, hi + pad, size=(count, d))
    labels[replaced] = OUTLIER
    return Corruption(X, replace(truth, labels=labels), replaced)


def nlsc_counterexample(alpha, C, grid_points_per_side):
    """Axis-embedded uniform grids: copies of U at +-C/sqrt(alpha) on every axis.

    The dimension is ``ceil(1/(2 alpha))`` and U is a uniform grid of
    ``grid_points_per_side`` points on [-1/2, 1/2]. Every copy is its own
    ground-truth cluster (label 2i for the positive side of axis i, 2i+1
    for the negative side).
    """
    d = max(1, math.ceil(1.0 / (2.0 * alpha) - 1e-12))
    U = np.linspace(-0.5, 0.5, grid_points_per_side)
    off = C / math.sqrt(alpha)
    blocks, labels, means = [], [], []
    for i in range(d):
        for side, sign in enumerate((1.0, -1.0)):
            pts = np.zeros((U.size, d))
            pts[:, i] = U + sign * off
            blocks.append(pts)
            labels.append(np.full(U.size, 2 * i + side))
            mu = np.zeros(d)
            mu[i] = sign * off
            means.append(mu)
    X = np.vstack(blocks)
    sig = float(U.std())
    k = 2 * d
    return X, GroundTruth(np.concatenate(labels), np.array(means), np.full(k, sig), np.full(k, 1.0 / k))


def nonidentifiable_fixture(n, pair_gap=1.0, pair_distance=100.0):
    """Four equal point masses in two pairs; returns the data and both k=3 ground truths.

    Locations (2-d): a=(0,0), b=(gap,0), c=(D,0), e=(D+gap,0). Points are
    stored in four consecutive blocks of n/4.
    """
    if n % 4:
        raise ValueError("n must be divisible by 4")
    q = n // 4
    locs = np.array([[0.0, 0.0], [pair_gap, 0.0], [pair_distance, 0.0], [pair_distance + pair_gap, 0.0]])
    X = np.repeat(locs, q, axis=0)
    block = np.repeat(np.arange(4), q)
    half = pair_gap / 2.0

    def truth(groups):
        labels = np.empty(n, dtype=np.int64)
        means, sigmas, weights = [], [], []
        for lab, members in enumerate(groups):
            labels[np.isin(block, members)] = lab
            means.append(locs[members].mean(axis=0))
            sigmas.append(half if len(members) == 2 else 0.0)
            weights.append(len(members) / 4.0)
        return GroundTruth(labels, np.array(means), np.array(sigmas), np.array(weights))

    return X, [truth([[0, 1], [2], [3]]), truth([[0], [1], [2, 3]])]


def label_disagreement(a, b):
    """Smallest fraction of points labelled differently over relabelings of ``b``."""
    a, b = np.asarray(a), np.asarray(b)
    la, lb = np.unique(a), np.unique(b)
    best = 1.0
    size = max(len(la), len(lb))
    for perm in itertools.permutations(range(size), len(lb)):
        mapping = {lab: (la[p] if p < len(la) else None) for lab, p in zip(lb, perm)}
        mapped = np.array([mapping[x] if mapping[x] is not None else -10**9 for x in b])
        best = min(best, float(np.mean(mapped != a)))
    return best


def chain_means(sigmas, alpha, factor, dim, margin=1.01, seed=0):
    """Means on a line along a random direction, consecutive pairs at ``margin`` times the required gap."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    pos = [0.0]
    for a, b in zip(sigmas[:-1], sigmas[1:]):
        pos.append(pos[-1] + margin * factor * (a + b) / math.sqrt(alpha))
    return [p * u for p in pos]


def a1_spec(dim=10, sigmas=(0.5, 1.0, 2.0), alpha=1 / 3, separation_factor=12.0, seed=0):
    """Uniform Gaussian mixture separated at ``separation_factor``."""
    k = len(sigmas)
    means = chain_means(list(sigmas), alpha, separation_factor, dim, seed=seed)
    comps = [ComponentSpec("gaussian", m, s, 1.0 / k) for m, s in zip(means, sigmas)]
    return MixtureSpec(dim, comps, alpha, separation_factor)


def fig1_spec(dim=10, v_norm=50.0, w_norm=0.15, tight_sigma=1e-3, alpha=1 / 3, separation_factor=12.0):
    """Wide identity-covariance component on a subspace V at the origin, two tight components at v +- w.

    v lies on axis 0, w on axis 1, V spans the remaining axes.
    """
    if dim < 3:
        raise ValueError("fig1 needs dim >= 3")
    v = np.zeros(dim)
    v[0] = v_norm
    w = np.zeros(dim)
    w[1] = w_norm
    wide_cov = np.diag([0.0, 0.0] + [1.0] * (dim - 2))
    comps = [
        ComponentSpec("gaussian", np.zeros(dim), 1.0, 1 / 3, cov=wide_cov),
        ComponentSpec("gaussian", v + w, tight_sigma, 1 / 3),
        ComponentSpec("gaussian", v - w, tight_sigma, 1 / 3),
    ]
    return MixtureSpec(dim, comps, alpha, separation_factor)
