import os
import subprocess
import sys

import numpy as np
import pytest

from cswd import kernels
from cswd._accel import HAS_NUMBA


def _inputs(dtype, B=3, T=6, H=5, seed=0):
    rng = np.random.default_rng(seed)
    xp = rng.normal(size=(B, T, 4 * H)).astype(dtype)
    U = (0.3 * rng.normal(size=(H, 4 * H))).astype(dtype)
    dhs = rng.normal(size=(B, T, H)).astype(dtype)
    return xp, U, dhs


def _lstm_step_reference(xp, U):
    """Single-row scalar loop written from the gate equations."""
    T, H4 = xp.shape
    H = H4 // 4
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    h, c = np.zeros(H), np.zeros(H)
    out = []
    for t in range(T):
        z = xp[t] + h @ U
        i, f, g, o = sig(z[:H]), sig(z[H : 2 * H]), np.tanh(z[2 * H : 3 * H]), sig(z[3 * H :])
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


def test_numpy_forward_matches_scalar_reference():
    xp, U, _ = _inputs(np.float64)
    hs, _, _ = kernels.lstm_forward_numpy(xp, U)
    for b in range(xp.shape[0]):
        np.testing.assert_allclose(hs[b], _lstm_step_reference(xp[b], U), rtol=1e-12)


def test_numpy_backward_matches_finite_differences():
    xp, U, dhs = _inputs(np.float64, B=2, T=4, H=3)

    def loss(xp_, U_):
        return float(np.sum(kernels.lstm_forward_numpy(xp_, U_)[0] * dhs))

    hs, cs, gates = kernels.lstm_forward_numpy(xp, U)
    dxp, dU = kernels.lstm_backward_numpy(dhs, hs, cs, gates, U)
    eps = 1e-6
    for idx in [(0, 0, 0), (1, 3, 11), (0, 2, 7)]:
        p, m = xp.copy(), xp.copy()
        p[idx] += eps
        m[idx] -= eps
        np.testing.assert_allclose(dxp[idx], (loss(p, U) - loss(m, U)) / (2 * eps), rtol=1e-6, atol=1e-9)
    for idx in [(0, 0), (2, 11), (1, 5)]:
        p, m = U.copy(), U.copy()
        p[idx] += eps
        m[idx] -= eps
        np.testing.assert_allclose(dU[idx], (loss(xp, p) - loss(xp, m)) / (2 * eps), rtol=1e-6, atol=1e-9)


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
def test_numba_matches_numpy(dtype, tol):
    xp, U, dhs = _inputs(dtype, B=4, T=9, H=7, seed=3)
    a = kernels.lstm_forward_numpy(xp, U)
    b = kernels.lstm_forward_numba(xp, U)
    for x, y in zip(a, b):
        assert y.dtype == dtype
        np.testing.assert_allclose(x, y, rtol=tol, atol=tol)
    ga = kernels.lstm_backward_numpy(dhs, *a, U)
    gb = kernels.lstm_backward_numba(dhs, *a, U)
    for x, y in zip(ga, gb):
        np.testing.assert_allclose(x, y, rtol=tol, atol=tol)


def test_sigmoid_is_stable_for_large_inputs():
    z = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    s = kernels._sigmoid(z)
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s, [0.0, 1 / (1 + np.exp(30)), 0.5, 1 / (1 + np.exp(-30)), 1.0], rtol=1e-12)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, CSWD_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from cswd import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
