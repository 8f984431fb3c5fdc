"""LSTM with full state-to-gate matrices and a sigmoid candidate.

    i  = sig(W_xi x + W_yi y + W_si s + b_i)
    f  = sig(W_xf x + W_yf y + W_sf s + b_f)
    s' = f*s + i*sig(W_xs x + W_ys y + b_s)
    o  = sig(W_xo x + W_yo y + W_so s' + b_o)
    y' = o*tanh(s')

The output gate reads the *new* state. ``candidate="tanh"`` swaps the
candidate squashing function for the conventional one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numeric import ConfigError, ParamStore, glorot_uniform

GATES = ("i", "f", "s", "o")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LstmParams:
    def __init__(self, store: ParamStore, scope: str, input_dim: int, width: int,
                 rng: Optional[np.random.Generator] = None, candidate: str = "sigmoid"):
        if candidate not in ("sigmoid", "tanh"):
            raise ConfigError(f"unknown candidate nonlinearity {candidate!r}")
        self.scope = scope
        self.input_dim = input_dim
        self.width = width
        self.candidate = candidate
        H, I = width, input_dim

        def mat(rows, cols):
            if rng is None:
                return np.zeros((rows, cols))
            return glorot_uniform(rng, rows, cols)

        self.W_x = [store.add(f"{scope}.W_x{g}", mat(H, I)) for g in GATES]
        self.W_y = [store.add(f"{scope}.W_y{g}", mat(H, H)) for g in GATES]
        # no state input to the candidate
        self.W_s = [store.add(f"{scope}.W_s{g}", mat(H, H)) for g in ("i", "f", "o")]
        self.b = [store.add(f"{scope}.b_{g}", np.zeros(H)) for g in GATES]

    def tensors(self):
        return [*self.W_x, *self.W_y, *self.W_s, *self.b]

    def stacked(self):
        """Gate-stacked copies (i, f, s, o) used by the vectorized passes."""
        Wx = np.concatenate([p.value for p in self.W_x])
        Wy = np.concatenate([p.value for p in self.W_y])
        Wsif = np.concatenate([self.W_s[0].value, self.W_s[1].value])
        Wso = self.W_s[2].value
        b = np.concatenate([p.value for p in self.b])
        return Wx, Wy, Wsif, Wso, b


@dataclass
class LstmTrace:
    """Per-step activations in processing order (already reversed if ``reverse``)."""
    x: np.ndarray        # T x I
    s_prev: np.ndarray   # T x H
    y_prev: np.ndarray   # T x H
    gates: np.ndarray    # T x 4H activations (i, f, candidate, o)
    s: np.ndarray        # T x H
    tanh_s: np.ndarray   # T x H
    y: np.ndarray        # T x H
    reverse: bool

    def __len__(self):
        return self.x.shape[0]


def lstm_step(params: LstmParams, x, s_prev, y_prev):
    """Single step; returns ``(s, y, gates)`` with gates = dict(i, f, candidate, o)."""
    x = np.asarray(x, dtype=float)
    s_prev = np.asarray(s_prev, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    H = params.width
    if x.shape != (params.input_dim,) or s_prev.shape != (H,) or y_prev.shape != (H,):
        raise ConfigError(
            f"{params.scope}: expected x({params.input_dim}), s/y({H}); got "
            f"{x.shape}, {s_prev.shape}, {y_prev.shape}")
    Wxi, Wxf, Wxs, Wxo = (p.value for p in params.W_x)
    Wyi, Wyf, Wys, Wyo = (p.value for p in params.W_y)
    Wsi, Wsf, Wso = (p.value for p in params.W_s)
    bi, bf, bs, bo = (p.value for p in params.b)
    squash = sigmoid if params.candidate == "sigmoid" else np.tanh
    i = sigmoid(Wxi @ x + Wyi @ y_prev + Wsi @ s_prev + bi)
    f = sigmoid(Wxf @ x + Wyf @ y_prev + Wsf @ s_prev + bf)
    c = squash(Wxs @ x + Wys @ y_prev + bs)
    s = f * s_prev + i * c
    o = sigmoid(Wxo @ x + Wyo @ y_prev + Wso @ s + bo)
    y = o * np.tanh(s)
    return s, y, {"i": i, "f": f, "candidate": c, "o": o}


def _recur_forward_np(pre_x, Wy, Wsif, Wso, tanh_cand):
    T, H4 = pre_x.shape
    H = H4 // 4
    dt = pre_x.dtype   # float64, or longdouble under extended-precision checks
    gates = np.empty((T, 4 * H), dtype=dt)
    S = np.empty((T, H), dtype=dt)
    Y = np.empty((T, H), dtype=dt)
    s_prev_all = np.empty((T, H), dtype=dt)
    y_prev_all = np.empty((T, H), dtype=dt)
    s = np.zeros(H, dtype=dt)
    y = np.zeros(H, dtype=dt)
    for t in range(T):
        s_prev_all[t] = s
        y_prev_all[t] = y
        a = pre_x[t] + Wy @ y
        a[:2 * H] += Wsif @ s
        g = gates[t]
        g[:2 * H] = sigmoid(a[:2 * H])
        g[2 * H:3 * H] = np.tanh(a[2 * H:3 * H]) if tanh_cand else sigmoid(a[2 * H:3 * H])
        s = g[H:2 * H] * s + g[:H] * g[2 * H:3 * H]
        g[3 * H:] = sigmoid(a[3 * H:] + Wso @ s)
        y = g[3 * H:] * np.tanh(s)
        S[t] = s
        Y[t] = y
    return gates, S, Y, s_prev_all, y_prev_all


def _recur_backward_np(dY, gates, tanh_s, s_prev, Wy, Wsif, Wso, tanh_cand):
    T, H = dY.shape
    dA = np.zeros((T, 4 * H))
    dy_next = np.zeros(H)
    ds_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        g = gates[t]
        i, f, c, o = g[:H], g[H:2 * H], g[2 * H:3 * H], g[3 * H:]
        th = tanh_s[t]
        dy = dY[t] + dy_next
        da = dA[t]
        da[3 * H:] = dy * th * o * (1.0 - o)
        ds = dy * o * (1.0 - th * th) + Wso.T @ da[3 * H:] + ds_next
        da[:H] = ds * c * i * (1.0 - i)
        da[H:2 * H] = ds * s_prev[t] * f * (1.0 - f)
        dc = ds * i
        da[2 * H:3 * H] = dc * (1.0 - c * c) if tanh_cand else dc * c * (1.0 - c)
        ds_next = ds * f + Wsif.T @ da[:2 * H]
        dy_next = Wy.T @ da
    return dA


_recur_forward_jit = _recur_backward_jit = None
if os.environ.get("SEQQA_NO_JIT", "") in ("", "0"):
    try:
        from ._jit import recur_backward as _recur_backward_jit
        from ._jit import recur_forward as _recur_forward_jit
    except ImportError:  # pragma: no cover - numba missing
        pass


def _use_jit(*arrays) -> bool:
    return _recur_forward_jit is not None and all(a.dtype == np.float64 for a in arrays)


def lstm_forward(params: LstmParams, xs, reverse: bool = False):
    """Unroll over ``xs`` (T x I) from zero state.

    Outputs are aligned with input positions whatever the direction.
    """
    xs = np.asarray(xs)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("lstm_forward needs a nonempty T x I sequence")
    if xs.shape[1] != params.input_dim:
        raise ConfigError(f"{params.scope}: input dim {xs.shape[1]} != {params.input_dim}")
    X = xs[::-1] if reverse else xs
    Wx, Wy, Wsif, Wso, b = params.stacked()
    tanh_cand = params.candidate == "tanh"
    pre_x = X @ Wx.T + b
    if _use_jit(pre_x, Wy, Wsif, Wso):
        gates, S, Y, s_prev, y_prev = _recur_forward_jit(
            np.ascontiguousarray(pre_x), Wy, Wsif, Wso, tanh_cand)
    else:
        gates, S, Y, s_prev, y_prev = _recur_forward_np(pre_x, Wy, Wsif, Wso, tanh_cand)
    trace = LstmTrace(X, s_prev, y_prev, gates, S, np.tanh(S), Y, reverse)
    ys = Y[::-1].copy() if reverse else Y
    return ys, trace


def lstm_backward(params: LstmParams, trace: LstmTrace, dys) -> np.ndarray:
    """BPTT. Accumulates parameter grads and returns d(loss)/d(inputs), position-aligned."""
    dys = np.asarray(dys, dtype=float)
    T = len(trace)
    H = params.width
    if dys.shape != (T, H):
        raise ConfigError(f"{params.scope}: dys shape {dys.shape} != {(T, H)}")
    dY = np.ascontiguousarray(dys[::-1] if trace.reverse else dys)
    Wx, Wy, Wsif, Wso, _ = params.stacked()
    tanh_cand = params.candidate == "tanh"
    if _use_jit(trace.gates, Wy):
        dA = _recur_backward_jit(dY, trace.gates, trace.tanh_s, trace.s_prev, Wy, Wsif, Wso,
                                 tanh_cand)
    else:
        dA = _recur_backward_np(dY, trace.gates, trace.tanh_s, trace.s_prev, Wy, Wsif, Wso,
                                tanh_cand)

    dWx = dA.T @ trace.x
    dWy = dA.T @ trace.y_prev
    dWsif = dA[:, :2 * H].T @ trace.s_prev
    dWso = dA[:, 3 * H:].T @ trace.s
    db = dA.sum(axis=0)
    for k, p in enumerate(params.W_x):
        p.grad += dWx[k * H:(k + 1) * H]
    for k, p in enumerate(params.W_y):
        p.grad += dWy[k * H:(k + 1) * H]
    params.W_s[0].grad += dWsif[:H]
    params.W_s[1].grad += dWsif[H:]
    params.W_s[2].grad += dWso
    for k, p in enumerate(params.b):
        p.grad += db[k * H:(k + 1) * H]
    dX = dA @ Wx
    return dX[::-1].copy() if trace.reverse else dX
