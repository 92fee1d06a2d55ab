"""Spectral filtering, candidate scales and list-decodable mean estimation."""
import itertools
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _backend
from .spectral import covariance, eigvalsh_desc, top_k_eigs

DEDUP_RTOL = 1e-12
MAD_TO_SD = 1.4826


class FilterError(RuntimeError):
    """The filter hit its iteration cap."""


class StdevList(NamedTuple):
    values: np.ndarray
    degenerate: bool


class Candidate(NamedTuple):
    mean: np.ndarray
    scale: float
    origin: tuple

    def key(self):
        return self.origin


def _pair_distance_range(X, chunk=512):
    dmax, dmin = 0.0, np.inf
    for start in range(0, X.shape[0], chunk):
        block = X[start:start + chunk]
        sq = np.einsum("ij,ij->i", block, block)[:, None] + np.einsum("ij,ij->i", X, X)[None, :] - 2 * block @ X.T
        d = np.sqrt(np.maximum(sq, 0.0))
        # exact recheck near zero, where cancellation hides small gaps
        rows, cols = np.nonzero(d <= 1e-6 * max(1.0, float(np.abs(X).max())))
        if rows.size:
            d[rows, cols] = np.linalg.norm(block[rows] - X[cols], axis=1)
        dmax = max(dmax, float(d.max()))
        pos = d[d > 0]
        if pos.size:
            dmin = min(dmin, float(pos.min()))
    return dmin, dmax


def _dedup_sorted(vals):
    vals = np.sort(np.asarray(vals, dtype=np.float64))
    if vals.size == 0:
        return vals
    keep = [vals[0]]
    for v in vals[1:]:
        if v - keep[-1] > DEDUP_RTOL * max(abs(v), abs(keep[-1])):
            keep.append(v)
    return np.array(keep)


def candidate_stdevs(T, mode="pairs"):
    """Candidate standard deviations for every subset of ``T``.

    ``mode="pairs"`` lists ``sqrt(2) * 2**(-j/2) * ||x - y||`` for every pair
    and ``j = 0 .. ceil(log2(2 m^2))``. ``mode="grid"`` uses one sqrt(2)
    ladder from ``sqrt(2) * max pair distance`` down to the same relative
    depth below the smallest positive pair distance; it has the same
    covering property with O(log) entries.

    Returns
    -------
    StdevList
        Sorted ascending values and a flag set when all points coincide.
    """
    X = np.asarray(T, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    if m < 2:
        raise ValueError("candidate_stdevs needs at least two points")
    depth = math.ceil(math.log2(2.0 * m * m))
    if mode == "pairs":
        i, j = np.triu_indices(m, 1)
        dist = np.linalg.norm(X[i] - X[j], axis=1)
        dist = dist[dist > 0]
        if dist.size == 0:
            return StdevList(np.empty(0), True)
        dist = _dedup_sorted(dist)
        ladder = math.sqrt(2.0) * np.sqrt(2.0 ** -np.arange(depth + 1))
        return StdevList(_dedup_sorted(np.outer(dist, ladder).ravel()), False)
    if mode == "grid":
        dmin, dmax = _pair_distance_range(X)
        if dmax == 0.0:
            return StdevList(np.empty(0), True)
        steps = math.ceil(math.log2(2.0 * m * m * (dmax / dmin) ** 2))
        vals = math.sqrt(2.0) * dmax * np.sqrt(2.0 ** -np.arange(steps + 1))
        return StdevList(vals[::-1].copy(), False)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class FilterOutcome:
    kept_indices: np.ndarray
    iterations: int
    final_top_eigenvalue: float
    attempts: int = 1


def _filter_once(X, rng, stop_factor, stop_threshold, max_iter):
    n = X.shape[0]
    kept = np.arange(n)
    top = 0.0
    for it in range(max_iter + 1):
        pts = X[kept]
        if kept.size < 2:
            return kept, it, 0.0
        mu = pts.mean(axis=0)
        vals, vecs = top_k_eigs(covariance(pts), 1)
        top = float(vals[0])
        if top <= 0.0:
            return kept, it, top
        proj = (pts - mu) @ vecs[:, 0]
        if stop_threshold is not None:
            limit = stop_threshold
        else:
            mad = MAD_TO_SD * float(np.median(np.abs(proj - np.median(proj))))
            limit = stop_factor * mad * mad
        if top <= limit:
            return kept, it, top
        if it == max_iter:
            break
        tau = proj * proj
        drop = rng.random(kept.size) * tau.max() < tau
        kept = kept[~drop]
    raise FilterError(f"filter exceeded {max_iter} iterations on {n} points "
                      f"({kept.size} kept, top eigenvalue {top:.6g})")


def filter(A, epsilon=0.04, delta=0.1, seed=0, stop_factor=9.0, stop_threshold=None, max_iter=None):
    """Randomised spectral outlier filter.

    Each round removes every point independently with probability
    proportional to its squared projection on the top covariance direction.
    The loop stops once the top eigenvalue is within ``stop_factor`` of a
    robust (MAD) variance estimate along the same direction, or below an
    absolute ``stop_threshold`` if one is given.

    A run that discards more than ``2 * epsilon`` of the input is repeated
    with fresh randomness, up to ``ceil(log2(1/delta))`` attempts; the run
    keeping the most points is returned.
    """
    X = np.asarray(A, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("filter expects a 2-d array")
    n = X.shape[0]
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if epsilon > 0.04:
        warnings.warn("filter guarantees assume epsilon <= 0.04", stacklevel=2)
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    if n < 2:
        return FilterOutcome(np.arange(n), 0, 0.0)
    attempts = max(1, math.ceil(math.log2(1.0 / delta))) if 0 < delta < 1 else 1
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    best = None
    for a, child in enumerate(ss.spawn(attempts)):
        kept, its, top = _filter_once(X, np.random.default_rng(child), stop_factor, stop_threshold, max_iter)
        if best is None or kept.size > best.kept_indices.size:
            best = FilterOutcome(kept, its, top, a + 1)
        if n - kept.size <= 2 * epsilon * n:
            break
    return best


class DenseBallDecoder:
    """Dense-ball list decoder.

    For a scale ``s`` every point whose ball of radius
    ``r = 2 * c_ld * s / sqrt(alpha)`` holds at least ``0.5 * alpha * n``
    points is a candidate. Candidates are deduplicated greedily at radius
    ``r`` (largest count first, then lowest index), each survivor is moved
    to the mean of its ball (a few mean-shift steps), and at most
    ``floor(2 / alpha)`` are kept.
    """

    name = "dense-ball"

    def __init__(self, c_ld=2.0, min_frac=0.5, refine_steps=3):
        self.c_ld = c_ld
        self.min_frac = min_frac
        self.refine_steps = refine_steps

    def radius(self, s, alpha):
        return 2.0 * self.c_ld * s / math.sqrt(alpha)

    def _select(self, X, counts, r, s, alpha, run):
        n = X.shape[0]
        cap = int(math.floor(2.0 / alpha + 1e-12))
        order = np.lexsort((np.arange(n), -counts))
        order = order[counts[order] >= self.min_frac * alpha * n]
        chosen = []
        for i in order:
            if len(chosen) >= cap:
                break
            if all(np.linalg.norm(X[i] - X[c]) > r for c in chosen):
                chosen.append(int(i))
        out = []
        for i in chosen:
            mu = X[i].copy()
            for _ in range(self.refine_steps):
                inside = np.einsum("ij,ij->i", X - mu, X - mu) <= r * r
                if not inside.any():
                    break
                mu = X[inside].mean(axis=0)
            out.append(Candidate(mu, float(s), (run, i)))
        return out

    def __call__(self, T, s, alpha, run=0):
        X = np.ascontiguousarray(T, dtype=np.float64)
        r = self.radius(s, alpha)
        counts = _backend.ball_counts(X, np.array([r]))[0]
        return self._select(X, counts, r, s, alpha, run)

    def decode_many(self, T, scales, alpha):
        """One decoder run per scale; run ``i`` uses ``scales[i]``."""
        X = np.ascontiguousarray(T, dtype=np.float64)
        radii = np.array([self.radius(s, alpha) for s in scales])
        if radii.size == 0:
            return []
        counts = _backend.ball_counts(X, radii)
        out = []
        for run, (s, r) in enumerate(zip(scales, radii)):
            out.extend(self._select(X, counts[run], r, s, alpha, run))
        return out


def list_decode_means(T, s, alpha, decoder=None, run=0):
    if s < 0 or not 0 < alpha < 1:
        raise ValueError("need s >= 0 and 0 < alpha < 1")
    decoder = decoder or DenseBallDecoder()
    return decoder(T, s, alpha, run=run)


def _removal_scores(X, mu, sigma, eps, removals):
    """C needed for each removal set (rows of a boolean mask matrix)."""
    m = X.shape[0]
    Z = X - mu
    tot_z = Z.sum(axis=0)
    tot_M = Z.T @ Z
    out = np.empty(len(removals))
    for r, R in enumerate(removals):
        R = np.asarray(R, dtype=np.int64)
        mass = m - R.size
        zr = Z[R]
        shift = np.linalg.norm((tot_z - zr.sum(axis=0)) / mass)
        second = (tot_M - zr.T @ zr) / mass
        lam = max(float(eigvalsh_desc(second)[0]), 0.0)
        out[r] = max(shift / (sigma * math.sqrt(eps)), math.sqrt(lam) / sigma)
    return out


def stability_certificate(S, mu, sigma, epsilon, mode="auto", trials=2000, seed=0):
    """Smallest C for which every examined weighting meets both stability clauses.

    Weightings examined are ``1 - indicator(R)`` for removal sets ``R`` with
    ``|R| <= floor(epsilon * m)``. ``exhaustive`` enumerates all of them
    (``m <= 18``); ``sampled`` draws random removals plus adversarial ones
    (extreme projections along top eigenvectors and random directions), so it
    only lower-bounds the true constant. ``sigma == 0`` with any spread about
    ``mu`` returns ``inf``.
    """
    X = np.atleast_2d(np.asarray(S, dtype=np.float64))
    mu = np.asarray(mu, dtype=np.float64)
    m, d = X.shape
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    if sigma == 0:
        return 0.0 if np.allclose(X, mu, rtol=0, atol=0) else math.inf
    budget = int(math.floor(epsilon * m + 1e-12))
    if mode == "auto":
        mode = "exhaustive" if m <= 18 else "sampled"
    if mode == "exhaustive":
        if m > 18:
            raise ValueError("exhaustive mode is limited to 18 points")
        removals = [c for size in range(budget + 1) for c in itertools.combinations(range(m), size)]
        return float(_removal_scores(X, mu, sigma, epsilon, removals).max())
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    removals = [()]
    if budget > 0:
        removals += [rng.choice(m, size=budget, replace=False) for _ in range(trials)]
        Z = X - mu
        k = min(d, 3)
        _, vecs = top_k_eigs(Z.T @ Z, k)
        dirs = [vecs[:, i] for i in range(k)] + [mu_dir / np.linalg.norm(mu_dir)
                                                 for mu_dir in rng.standard_normal((8, d))]
        centroid_dir = Z.mean(axis=0)
        if np.linalg.norm(centroid_dir) > 0:
            dirs.append(centroid_dir / np.linalg.norm(centroid_dir))
        for u in dirs:
            p = Z @ u
            order = np.argsort(p, kind="stable")
            removals += [order[:budget], order[-budget:], np.argsort(np.abs(p), kind="stable")[:budget]]
    return float(_removal_scores(X, mu, sigma, epsilon, removals).max())
