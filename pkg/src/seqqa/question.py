"""Question encoder: one LSTM layer pooled into a single vector r_q."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lstm import LstmParams, LstmTrace, lstm_backward, lstm_forward
from .numeric import ConfigError, ParamStore, ParamTensor, dropout_mask, glorot_uniform

POOLING_MODES = ("attention", "max", "average")


class AttentionParams:
    """Single-time attention: score_i = v_q . tanh(W_a q_i)."""

    def __init__(self, store: ParamStore, scope: str, width: int,
                 rng: Optional[np.random.Generator] = None):
        if rng is None:
            v, W = np.zeros(width), np.zeros((width, width))
        else:
            v = glorot_uniform(rng, width, 1)[:, 0]
            W = glorot_uniform(rng, width, width)
        self.v_q = store.add(f"{scope}.v_q", v)
        self.W_a = store.add(f"{scope}.W_a", W)

    def tensors(self):
        return [self.v_q, self.W_a]


@dataclass
class QuestionEncoding:
    q_states: np.ndarray   # N x H, after dropout
    alpha: np.ndarray      # N; pooling weights (one-hot rows are not used for max)
    r_q: np.ndarray        # H
    pooling_mode: str


@dataclass
class QuestionTrace:
    token_ids: np.ndarray
    lstm: LstmTrace
    mask: Optional[np.ndarray]
    enc: QuestionEncoding
    att_hidden: Optional[np.ndarray]   # N x H, tanh(W_a q_i)
    argmax: Optional[np.ndarray]       # H, row index per component (max mode)


def softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def encode_question(token_ids, embeddings: ParamTensor, lstm: LstmParams,
                    attn: AttentionParams, mode: str = "attention",
                    dropout: float = 0.0, training: bool = False,
                    rng: Optional[np.random.Generator] = None):
    if mode not in POOLING_MODES:
        raise ConfigError(f"pooling_mode must be one of {POOLING_MODES}, got {mode!r}")
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty question")
    E = embeddings.value
    if ids.min() < 0 or ids.max() >= E.shape[1]:
        raise ValueError(f"token id out of range [0, {E.shape[1]})")
    q_raw, ltrace = lstm_forward(lstm, E[:, ids].T)
    mask = dropout_mask(q_raw.shape, dropout, rng, training)
    q = q_raw * mask if mask is not None else q_raw
    N = q.shape[0]
    att_hidden = argmax = None
    if mode == "attention":
        att_hidden = np.tanh(q @ attn.W_a.value.T)
        alpha = softmax(att_hidden @ attn.v_q.value)
        r_q = alpha @ q
    elif mode == "max":
        argmax = np.argmax(q, axis=0)   # lowest index on ties
        r_q = q[argmax, np.arange(q.shape[1])]
        alpha = np.full(N, 1.0 / N, dtype=q.dtype)
    else:
        alpha = np.full(N, 1.0 / N, dtype=q.dtype)
        r_q = q.mean(axis=0)
    enc = QuestionEncoding(q, alpha, r_q, mode)
    return enc, QuestionTrace(ids, ltrace, mask, enc, att_hidden, argmax)


def encode_question_backward(trace: QuestionTrace, d_rq, embeddings: ParamTensor,
                             lstm: LstmParams, attn: AttentionParams):
    d_rq = np.asarray(d_rq, dtype=float)
    enc = trace.enc
    q = enc.q_states
    if d_rq.shape != enc.r_q.shape:
        raise ConfigError(f"d_rq shape {d_rq.shape} != {enc.r_q.shape}")
    if enc.pooling_mode == "attention":
        alpha = enc.alpha
        dq = np.outer(alpha, d_rq)
        d_alpha = q @ d_rq
        d_score = alpha * (d_alpha - alpha @ d_alpha)
        u = trace.att_hidden
        attn.v_q.grad += d_score @ u
        dz = np.outer(d_score, attn.v_q.value) * (1.0 - u * u)
        attn.W_a.grad += dz.T @ q
        dq += dz @ attn.W_a.value
    elif enc.pooling_mode == "max":
        dq = np.zeros_like(q)
        dq[trace.argmax, np.arange(q.shape[1])] = d_rq
    else:
        dq = np.tile(d_rq / q.shape[0], (q.shape[0], 1))
    if trace.mask is not None:
        dq = dq * trace.mask
    dx = lstm_backward(lstm, trace.lstm, dq)
    if embeddings.trainable:
        np.add.at(embeddings.grad.T, trace.token_ids, dx)
