import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finecluster import robustcore as rc
from finecluster.spectral import covariance, max_stdev


def covered(values, var):
    """Some candidate s has var <= s^2 <= 2 var."""
    sq = np.asarray(values) ** 2
    lo = np.searchsorted(sq, var * (1 - 1e-12), side="left")
    return lo < sq.size and sq[lo] <= 2 * var * (1 + 1e-12)


def test_stdevs_two_points():
    res = rc.candidate_stdevs([0.0, 2.0])
    assert not res.degenerate
    for v in (2 * math.sqrt(2), 2.0, math.sqrt(2), 1.0):
        assert np.any(np.isclose(res.values, v, rtol=1e-12))
    # Cov({0,2}) = 1 and sqrt(2) is the witness
    assert covered(res.values, 1.0)
    assert np.all(np.diff(res.values) > 0)


def test_stdevs_degenerate():
    res = rc.candidate_stdevs(np.ones((6, 3)))
    assert res.degenerate and res.values.size == 0
    assert rc.candidate_stdevs(np.ones((6, 3)), mode="grid").degenerate


def test_stdevs_list_length_bound():
    X = np.random.default_rng(0).standard_normal((15, 2))
    m = 15
    res = rc.candidate_stdevs(X)
    assert res.values.size <= m * (m - 1) / 2 * (math.ceil(math.log2(2 * m * m)) + 1)


def _subset_vars_1d(x, size):
    idx = np.array(list(itertools.combinations(range(x.size), size)))
    return x[idx].var(axis=1)


@pytest.mark.parametrize("mode", ["pairs", "grid"])
def test_stdevs_cover_subsets_1d(mode):
    rng = np.random.default_rng(1)
    x = rng.standard_normal(30) * rng.uniform(0.1, 10)
    vals = rc.candidate_stdevs(x, mode=mode).values
    for size in range(2, 6):
        for var in _subset_vars_1d(x, size):
            if var > 0:
                assert covered(vals, var)
    for _ in range(300):
        sub = rng.choice(30, size=rng.integers(6, 31), replace=False)
        assert covered(vals, x[sub].var())


@settings(max_examples=25, deadline=None)
@given(m=st.integers(2, 9), d=st.integers(1, 3), seed=st.integers(0, 2 ** 32 - 1))
def test_stdevs_cover_every_subset(m, d, seed):
    X = np.random.default_rng(seed).standard_normal((m, d))
    vals = rc.candidate_stdevs(X).values
    for size in range(2, m + 1):
        for sub in itertools.combinations(range(m), size):
            var = max_stdev(X[list(sub)]) ** 2
            if var > 1e-12:
                assert covered(vals, var)


def test_filter_identical_points():
    out = rc.filter(np.ones((50, 3)), seed=0)
    assert out.kept_indices.size == 50 and out.iterations == 0


def test_filter_removes_planted_outliers():
    rng = np.random.default_rng(2)
    n = 10_000
    X = rng.standard_normal((n, 5))
    bad = rng.choice(n, size=400, replace=False)
    u = rng.standard_normal((400, 5))
    X[bad] = 1e3 * u / np.linalg.norm(u, axis=1, keepdims=True)
    clean = np.setdiff1d(np.arange(n), bad)
    out = rc.filter(X, epsilon=0.04, seed=3)
    assert not np.isin(bad, out.kept_indices).any()
    kept = out.kept_indices
    C = rc.stability_certificate(X[clean], np.zeros(5), 1.0, 0.04, mode="sampled", trials=200)
    assert np.linalg.norm(X[kept].mean(axis=0)) <= 10 * C * math.sqrt(0.04)


def test_filter_clean_set():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((3000, 5)) * 2.0
    out = rc.filter(X, epsilon=0.04, seed=0)
    assert out.kept_indices.size >= 0.96 * 3000
    sigma = max_stdev(X)
    assert np.linalg.norm(X[out.kept_indices].mean(axis=0) - X.mean(axis=0)) <= 2 * sigma * math.sqrt(0.04)


def test_filter_deterministic():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.standard_normal((500, 3)), 50 + rng.standard_normal((20, 3))])
    a = rc.filter(X, seed=11)
    b = rc.filter(X, seed=11)
    assert np.array_equal(a.kept_indices, b.kept_indices)


def test_filter_iteration_cap():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((200, 2))
    with pytest.raises(rc.FilterError):
        rc.filter(X, seed=0, stop_threshold=1e-30, max_iter=1)


def test_filter_warns_on_large_epsilon():
    with pytest.warns(UserWarning):
        rc.filter(np.random.default_rng(0).standard_normal((20, 2)), epsilon=0.2)


def test_decoder_single_location():
    cands = rc.list_decode_means(np.zeros((40, 2)), 1.0, 0.3)
    assert len(cands) == 1 and np.all(cands[0].mean == 0)


def test_decoder_two_masses():
    X = np.r_[np.zeros((50, 1)), np.full((50, 1), 100.0)]
    cands = rc.list_decode_means(X, 1.0, 0.4)
    tol = 2.0 * 1.0 / math.sqrt(0.4)
    for target in (0.0, 100.0):
        assert any(abs(c.mean[0] - target) <= tol for c in cands)


def test_decoder_planted_cluster_in_background():
    rng = np.random.default_rng(7)
    n = 2000
    inl = rng.standard_normal((int(0.3 * n), 3))
    bg = rng.uniform(-500, 500, size=(n - inl.shape[0], 3))
    X = np.vstack([inl, bg])
    cands = rc.list_decode_means(X, 1.0, 0.3)
    mu = inl.mean(axis=0)
    assert any(np.linalg.norm(c.mean - mu) <= 2.0 / math.sqrt(0.3) for c in cands)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.05, 0.9), s=st.floats(0.01, 5.0), seed=st.integers(0, 1000))
def test_decoder_list_length(alpha, s, seed):
    X = np.random.default_rng(seed).standard_normal((120, 2)) * 3
    assert len(rc.list_decode_means(X, s, alpha)) <= 2 / alpha + 1e-9


def test_decode_many_matches_single_runs():
    rng = np.random.default_rng(8)
    X = np.vstack([rng.standard_normal((60, 2)), 20 + rng.standard_normal((60, 2))])
    dec = rc.DenseBallDecoder()
    scales = [0.3, 1.0, 3.0]
    many = dec.decode_many(X, scales, 0.4)
    single = [c for run, s in enumerate(scales) for c in dec(X, s, 0.4, run=run)]
    assert [c.origin for c in many] == [c.origin for c in single]
    assert all(np.allclose(a.mean, b.mean) for a, b in zip(many, single))


def test_certificate_two_points():
    assert rc.stability_certificate(np.array([[-1.0], [1.0]]), [0.0], 1.0, 0.04) == pytest.approx(1.0)


def test_certificate_sigma_zero():
    assert rc.stability_certificate(np.ones((3, 2)), [0.0, 0.0], 0.0, 0.04) == math.inf
    assert rc.stability_certificate(np.zeros((3, 2)), [0.0, 0.0], 0.0, 0.04) == 0.0


def test_certificate_circle_matches_enumeration():
    t = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    S = np.c_[np.cos(t), np.sin(t)]
    mu, sigma, eps = np.zeros(2), 1.0, 0.1
    best = 0.0
    for R in [()] + [(i,) for i in range(12)]:
        w = np.ones(12)
        w[list(R)] = 0.0
        mean = (w[:, None] * S).sum(axis=0) / w.sum()
        second = sum(w[i] * np.outer(S[i] - mu, S[i] - mu) for i in range(12)) / w.sum()
        need = max(np.linalg.norm(mean - mu) / (sigma * math.sqrt(eps)),
                   math.sqrt(np.linalg.eigvalsh(second).max()) / sigma)
        best = max(best, need)
    assert rc.stability_certificate(S, mu, sigma, eps, mode="exhaustive") == pytest.approx(best, rel=1e-12)


def test_certificate_subset_bound():
    rng = np.random.default_rng(9)
    S = rng.standard_normal((400, 3))
    alpha = 0.25
    C = rc.stability_certificate(S, np.zeros(3), 1.0, 0.04, mode="sampled", trials=300)
    for t in range(5):
        sub = S[rng.choice(400, size=int(alpha * 400), replace=False)]
        Csub = rc.stability_certificate(sub, np.zeros(3), 1.0, 0.04, mode="sampled", trials=300, seed=t)
        assert Csub <= 1.23 * C / math.sqrt(0.04 * alpha)


@settings(max_examples=200, deadline=None)
@given(m=st.integers(2, 40), d=st.integers(1, 4), alpha=st.floats(0.05, 1.0), seed=st.integers(0, 2 ** 32 - 1))
def test_weighted_mean_shift(m, d, alpha, seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((m, d)) * rng.uniform(0.1, 3, size=d)
    w = rng.random(m)
    need = alpha * m
    if w.sum() < need:
        w = np.minimum(1.0, w * need / w.sum() + 1e-12)
        if w.sum() < need:
            w[:] = 1.0
    shift = np.linalg.norm(w @ S / w.sum() - S.mean(axis=0))
    assert shift <= math.sqrt(np.linalg.eigvalsh(covariance(S)).max() / alpha) + 1e-9
