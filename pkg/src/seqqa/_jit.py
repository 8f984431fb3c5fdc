"""numba kernels for the float64 LSTM recurrences (same math as lstm._recur_*_np)."""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sig(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


@njit(cache=True)
def recur_forward(pre_x, Wy, Wsif, Wso, tanh_cand):
    T = pre_x.shape[0]
    H = Wso.shape[0]
    gates = np.empty((T, 4 * H))
    S = np.empty((T, H))
    Y = np.empty((T, H))
    s_prev = np.zeros((T, H))
    y_prev = np.zeros((T, H))
    s = np.zeros(H)
    y = np.zeros(H)
    a = np.empty(4 * H)
    for t in range(T):
        s_prev[t] = s
        y_prev[t] = y
        for r in range(4 * H):
            acc = pre_x[t, r]
            for k in range(H):
                acc += Wy[r, k] * y[k]
            if r < 2 * H:
                for k in range(H):
                    acc += Wsif[r, k] * s[k]
            a[r] = acc
        for r in range(H):
            gi = _sig(a[r])
            gf = _sig(a[H + r])
            gc = math.tanh(a[2 * H + r]) if tanh_cand else _sig(a[2 * H + r])
            gates[t, r] = gi
            gates[t, H + r] = gf
            gates[t, 2 * H + r] = gc
            s[r] = gf * s[r] + gi * gc
        for r in range(H):
            acc = a[3 * H + r]
            for k in range(H):
                acc += Wso[r, k] * s[k]
            go = _sig(acc)
            gates[t, 3 * H + r] = go
            y[r] = go * math.tanh(s[r])
        S[t] = s
        Y[t] = y
    return gates, S, Y, s_prev, y_prev


@njit(cache=True)
def recur_backward(dY, gates, tanh_s, s_prev, Wy, Wsif, Wso, tanh_cand):
    T, H = dY.shape
    dA = np.zeros((T, 4 * H))
    dy_next = np.zeros(H)
    ds_next = np.zeros(H)
    ds = np.empty(H)
    for t in range(T - 1, -1, -1):
        for r in range(H):
            o = gates[t, 3 * H + r]
            th = tanh_s[t, r]
            dy = dY[t, r] + dy_next[r]
            dA[t, 3 * H + r] = dy * th * o * (1.0 - o)
            ds[r] = dy * o * (1.0 - th * th) + ds_next[r]
        for k in range(H):
            acc = 0.0
            for r in range(H):
                acc += Wso[r, k] * dA[t, 3 * H + r]
            ds[k] += acc
        for r in range(H):
            i = gates[t, r]
            f = gates[t, H + r]
            c = gates[t, 2 * H + r]
            dA[t, r] = ds[r] * c * i * (1.0 - i)
            dA[t, H + r] = ds[r] * s_prev[t, r] * f * (1.0 - f)
            dc = ds[r] * i
            dA[t, 2 * H + r] = dc * (1.0 - c * c) if tanh_cand else dc * c * (1.0 - c)
        for k in range(H):
            acc = ds[k] * gates[t, H + k]
            for r in range(2 * H):
                acc += Wsif[r, k] * dA[t, r]
            ds_next[k] = acc
            acc = 0.0
            for r in range(4 * H):
                acc += Wy[r, k] * dA[t, r]
            dy_next[k] = acc
    return dA
