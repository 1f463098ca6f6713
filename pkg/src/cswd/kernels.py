"""Hot inner loops: the LSTM recurrence, forward and backward.

Each kernel has a numba implementation and a numpy implementation with an
identical signature. ``lstm_forward`` / ``lstm_backward`` dispatch on
``cswd._accel.USE_NUMBA``; the explicit variants are exported for tests and
the benchmark.

Gate layout along the last axis of the pre-activations is ``[i, f, g, o]``.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


def _sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward_numpy(xp, U):
    """Run the recurrence given input pre-activations.

    xp: (B, T, 4H) input projections including bias.
    U: (H, 4H) recurrent weights.
    Returns hs, cs (B, T, H) and activated gates (B, T, 4H).
    """
    B, T, H4 = xp.shape
    H = H4 // 4
    hs = np.empty((B, T, H), dtype=xp.dtype)
    cs = np.empty((B, T, H), dtype=xp.dtype)
    gates = np.empty((B, T, H4), dtype=xp.dtype)
    h = np.zeros((B, H), dtype=xp.dtype)
    c = np.zeros((B, H), dtype=xp.dtype)
    for t in range(T):
        z = xp[:, t] + h @ U
        a = gates[:, t]
        a[:, : 2 * H] = _sigmoid(z[:, : 2 * H])
        a[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        a[:, 3 * H :] = _sigmoid(z[:, 3 * H :])
        c = a[:, H : 2 * H] * c + a[:, :H] * a[:, 2 * H : 3 * H]
        h = a[:, 3 * H :] * np.tanh(c)
        cs[:, t] = c
        hs[:, t] = h
    return hs, cs, gates


def lstm_backward_numpy(dhs, hs, cs, gates, U):
    """Backpropagate through time.

    Returns dxp (B, T, 4H) and dU (H, 4H).
    """
    B, T, H = dhs.shape
    dxp = np.empty((B, T, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros((B, H), dtype=dhs.dtype)
    dc_next = np.zeros((B, H), dtype=dhs.dtype)
    zeros = np.zeros((B, H), dtype=dhs.dtype)
    for t in range(T - 1, -1, -1):
        a = gates[:, t]
        i, f, g, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
        c_prev = cs[:, t - 1] if t > 0 else zeros
        tc = np.tanh(cs[:, t])
        dh = dhs[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dxp[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ U.T
    h_prev = np.zeros_like(hs)
    h_prev[:, 1:] = hs[:, :-1]
    dU = h_prev.reshape(B * T, H).T @ dxp.reshape(B * T, 4 * H)
    return dxp, dU


@njit(cache=True, fastmath=False)
def _lstm_forward_nb(xp, U):
    B, T, H4 = xp.shape
    H = H4 // 4
    hs = np.empty((B, T, H), dtype=xp.dtype)
    cs = np.empty((B, T, H), dtype=xp.dtype)
    gates = np.empty((B, T, H4), dtype=xp.dtype)
    h = np.zeros((B, H), dtype=xp.dtype)
    c = np.zeros((B, H), dtype=xp.dtype)
    for t in range(T):
        z = np.dot(h, U)
        for b in range(B):
            for j in range(H4):
                v = z[b, j] + xp[b, t, j]
                if j >= 2 * H and j < 3 * H:
                    gates[b, t, j] = np.tanh(v)
                elif v >= 0:
                    gates[b, t, j] = 1.0 / (1.0 + np.exp(-v))
                else:
                    e = np.exp(v)
                    gates[b, t, j] = e / (1.0 + e)
            for j in range(H):
                cn = gates[b, t, H + j] * c[b, j] + gates[b, t, j] * gates[b, t, 2 * H + j]
                c[b, j] = cn
                h[b, j] = gates[b, t, 3 * H + j] * np.tanh(cn)
                cs[b, t, j] = cn
                hs[b, t, j] = h[b, j]
    return hs, cs, gates


@njit(cache=True, fastmath=False)
def _lstm_backward_nb(dhs, hs, cs, gates, U):
    B, T, H = dhs.shape
    dxp = np.empty((B, T, 4 * H), dtype=dhs.dtype)
    dz = np.empty((B, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros((B, H), dtype=dhs.dtype)
    dc_next = np.zeros((B, H), dtype=dhs.dtype)
    Ut = np.ascontiguousarray(U.T)
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(H):
                i = gates[b, t, j]
                f = gates[b, t, H + j]
                g = gates[b, t, 2 * H + j]
                o = gates[b, t, 3 * H + j]
                c_prev = cs[b, t - 1, j] if t > 0 else 0.0
                tc = np.tanh(cs[b, t, j])
                dh = dhs[b, t, j] + dh_next[b, j]
                dc = dh * o * (1.0 - tc * tc) + dc_next[b, j]
                dz[b, j] = dc * g * i * (1.0 - i)
                dz[b, H + j] = dc * c_prev * f * (1.0 - f)
                dz[b, 2 * H + j] = dc * i * (1.0 - g * g)
                dz[b, 3 * H + j] = dh * tc * o * (1.0 - o)
                dc_next[b, j] = dc * f
        dxp[:, t, :] = dz
        dh_next = np.dot(dz, Ut)
    h_prev = np.zeros_like(hs)
    h_prev[:, 1:, :] = hs[:, :-1, :]
    dU = np.dot(h_prev.reshape(B * T, H).T.copy(), dxp.reshape(B * T, 4 * H))
    return dxp, dU


def lstm_forward_numba(xp, U):
    return _lstm_forward_nb(np.ascontiguousarray(xp), np.ascontiguousarray(U))


def lstm_backward_numba(dhs, hs, cs, gates, U):
    return _lstm_backward_nb(
        np.ascontiguousarray(dhs),
        np.ascontiguousarray(hs),
        np.ascontiguousarray(cs),
        np.ascontiguousarray(gates),
        np.ascontiguousarray(U),
    )


if USE_NUMBA:
    lstm_forward = lstm_forward_numba
    lstm_backward = lstm_backward_numba
else:
    lstm_forward = lstm_forward_numpy
    lstm_backward = lstm_backward_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
