import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from finecluster import _kernels_py

try:
    from finecluster import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

BACKENDS = [pytest.param(_kernels_py, id="python"),
            pytest.param(_kernels_c, id="cython",
                         marks=pytest.mark.skipif(_kernels_c is None, reason="extension not built"))]


def naive_scatter(Z, w):
    out = np.zeros((Z.shape[1], Z.shape[1]))
    for i in range(Z.shape[0]):
        for a in range(Z.shape[1]):
            for b in range(Z.shape[1]):
                out[a, b] += w[i] * Z[i, a] * Z[i, b]
    return out


@pytest.mark.parametrize("mod", BACKENDS)
def test_weighted_scatter_matches_loop(mod):
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((37, 4))
    w = rng.random(37)
    w[::5] = 0.0
    got = mod.weighted_scatter(Z, w)
    assert np.allclose(got, naive_scatter(Z, w), atol=1e-12)
    assert np.array_equal(got, got.T)


@pytest.mark.parametrize("mod", BACKENDS)
def test_ball_counts_brute_force(mod):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 3))
    radii = np.array([0.0, 0.5, 1.0, 10.0])
    got = mod.ball_counts(np.ascontiguousarray(X), radii)
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    want = np.stack([(D <= r).sum(axis=1) for r in radii])
    assert np.array_equal(got, want)
    assert np.all(got[0] >= 1)


@pytest.mark.parametrize("mod", BACKENDS)
def test_nearest_center_tie_goes_low(mod):
    X = np.array([[5.0], [1.0], [9.0]])
    C = np.array([[0.0], [10.0]])
    assert mod.nearest_center(X, C).tolist() == [0, 0, 1]


@pytest.mark.parametrize("mod", BACKENDS)
def test_projected_energy(mod):
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((25, 5))
    U, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    U = np.ascontiguousarray(U)
    assert np.allclose(mod.projected_energy(Z, U), ((Z @ U) ** 2).sum(axis=1))


@pytest.mark.skipif(_kernels_c is None, reason="extension not built")
def test_backends_agree_on_scatter():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((500, 7)) * 1e3
    w = rng.random(500)
    a = _kernels_c.weighted_scatter(Z, w)
    b = _kernels_py.weighted_scatter(Z, w)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-9)


def test_env_forces_python_backend():
    code = "import finecluster._backend as b; print(b.BACKEND)"
    env = dict(os.environ, FINECLUSTER_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
