"""Evidence encoder: up to three stacked LSTM layers.

Layer 1 runs forward over [word embedding; r_q; q-e feature; e-e feature],
layer 2 runs in reverse over layer 1, and layer 3 runs forward over the
concatenation of layers 1 and 2 (or layer 2 alone without cross links).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .lstm import LstmParams, LstmTrace, lstm_backward, lstm_forward
from .numeric import ConfigError, ParamStore, ParamTensor, dropout_mask, glorot_uniform


@dataclass
class FeatureIds:
    qe: np.ndarray
    ee: np.ndarray

    def __post_init__(self):
        self.qe = np.asarray(self.qe, dtype=np.int64)
        self.ee = np.asarray(self.ee, dtype=np.int64)
        if self.qe.shape != self.ee.shape:
            raise ValueError("qe/ee length mismatch")
        if not (np.isin(self.qe, (0, 1)).all() and np.isin(self.ee, (0, 1)).all()):
            raise ValueError("feature values must be 0/1")

    def __len__(self):
        return len(self.qe)


class EvidenceParams:
    def __init__(self, store: ParamStore, word_dim: int, width: int, feat_dims=(2, 2),
                 n_layers: int = 3, cross_links: bool = True,
                 rng: Optional[np.random.Generator] = None, candidate: str = "sigmoid"):
        if n_layers not in (1, 2, 3):
            raise ConfigError(f"n_layers must be 1, 2 or 3, got {n_layers}")
        d1, d2 = feat_dims
        self.word_dim = word_dim
        self.width = width
        self.n_layers = n_layers
        self.cross_links = cross_links

        def feat(rows):
            return np.zeros((rows, 2)) if rng is None else glorot_uniform(rng, rows, 2)

        self.F1 = store.add("evidence.F1", feat(d1))
        self.F2 = store.add("evidence.F2", feat(d2))
        in1 = word_dim + width + d1 + d2
        self.layers: List[LstmParams] = [
            LstmParams(store, "evidence.l1", in1, width, rng, candidate)]
        if n_layers >= 2:
            self.layers.append(LstmParams(store, "evidence.l2", width, width, rng, candidate))
        if n_layers == 3:
            in3 = 2 * width if cross_links else width
            self.layers.append(LstmParams(store, "evidence.l3", in3, width, rng, candidate))

    def tensors(self):
        out = [self.F1, self.F2]
        for layer in self.layers:
            out.extend(layer.tensors())
        return out


@dataclass
class EvidenceStates:
    e1: np.ndarray
    e2: Optional[np.ndarray]
    e3: Optional[np.ndarray]

    @property
    def final(self) -> np.ndarray:
        for e in (self.e3, self.e2, self.e1):
            if e is not None:
                return e
        raise AssertionError


@dataclass
class EvidenceTrace:
    token_ids: np.ndarray
    feats: FeatureIds
    lstm: List[LstmTrace]
    masks: List[Optional[np.ndarray]]
    states: EvidenceStates


def _drop(x, mask):
    return x if mask is None else x * mask


def encode_evidence(token_ids, r_q, feats: FeatureIds, embeddings: ParamTensor,
                    params: EvidenceParams, dropout: float = 0.0, training: bool = False,
                    rng: Optional[np.random.Generator] = None):
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty evidence")
    if len(feats) != ids.size:
        raise ConfigError(f"evidence has {ids.size} tokens but {len(feats)} feature values")
    E = embeddings.value
    if ids.min() < 0 or ids.max() >= E.shape[1]:
        raise ValueError(f"token id out of range [0, {E.shape[1]})")
    M = ids.size
    x1 = np.concatenate([
        E[:, ids].T,
        np.broadcast_to(r_q, (M, r_q.shape[0])),
        params.F1.value[:, feats.qe].T,
        params.F2.value[:, feats.ee].T,
    ], axis=1)
    traces, masks, outs = [], [], []
    e1, t1 = lstm_forward(params.layers[0], x1)
    m1 = dropout_mask(e1.shape, dropout, rng, training)
    e1 = _drop(e1, m1)
    traces.append(t1), masks.append(m1), outs.append(e1)
    e2 = e3 = None
    if params.n_layers >= 2:
        e2, t2 = lstm_forward(params.layers[1], e1, reverse=True)
        m2 = dropout_mask(e2.shape, dropout, rng, training)
        e2 = _drop(e2, m2)
        traces.append(t2), masks.append(m2)
    if params.n_layers == 3:
        x3 = np.concatenate([e1, e2], axis=1) if params.cross_links else e2
        e3, t3 = lstm_forward(params.layers[2], x3)
        m3 = dropout_mask(e3.shape, dropout, rng, training)
        e3 = _drop(e3, m3)
        traces.append(t3), masks.append(m3)
    states = EvidenceStates(e1, e2, e3)
    return states, EvidenceTrace(ids, feats, traces, masks, states)


def encode_evidence_backward(trace: EvidenceTrace, d_final, embeddings: ParamTensor,
                             params: EvidenceParams) -> np.ndarray:
    """Backprop from the final layer's outputs; returns d(loss)/d(r_q)."""
    d_final = np.asarray(d_final, dtype=float)
    H = params.width
    if d_final.shape != trace.states.final.shape:
        raise ConfigError(f"d_final shape {d_final.shape} != {trace.states.final.shape}")
    d_e1 = np.zeros_like(trace.states.e1)
    d_e2 = None
    if params.n_layers == 3:
        d_in3 = lstm_backward(params.layers[2], trace.lstm[2], _drop(d_final, trace.masks[2]))
        if params.cross_links:
            d_e1 += d_in3[:, :H]
            d_e2 = d_in3[:, H:]
        else:
            d_e2 = d_in3
    elif params.n_layers == 2:
        d_e2 = d_final
    else:
        d_e1 += d_final
    if d_e2 is not None:
        d_e1 += lstm_backward(params.layers[1], trace.lstm[1], _drop(d_e2, trace.masks[1]))
    dx1 = lstm_backward(params.layers[0], trace.lstm[0], _drop(d_e1, trace.masks[0]))
    D = params.word_dim
    d1 = params.F1.value.shape[0]
    if embeddings.trainable:
        np.add.at(embeddings.grad.T, trace.token_ids, dx1[:, :D])
    d_rq = dx1[:, D:D + H].sum(axis=0)
    np.add.at(params.F1.grad.T, trace.feats.qe, dx1[:, D + H:D + H + d1])
    np.add.at(params.F2.grad.T, trace.feats.ee, dx1[:, D + H + d1:])
    return d_rq
