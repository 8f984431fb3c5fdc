"""Emission scores and the three label decoders (CRF, softmax, softmax(k-1)).

Labels are integer indices into ``LABELS``. Transition matrices have one
extra row, ``START``, scoring the first label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .numeric import ConfigError, ParamStore, ParamTensor, glorot_uniform

LABELS = ("B", "I", "O1", "O2")
B, I, O1, O2 = range(4)
NUM_LABELS = len(LABELS)
START = NUM_LABELS
DECODERS = ("crf", "softmax", "softmax_prev")


def label_ids(names: Sequence[str]) -> np.ndarray:
    table = {"O": O1, **{n: k for k, n in enumerate(LABELS)}}
    return np.array([table[n] for n in names], dtype=np.int64)


def label_names(ids) -> list:
    return [LABELS[k] for k in ids]


def logsumexp(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


def log_softmax(z):
    return z - logsumexp(z, axis=-1)[..., None]


@dataclass
class Lattice:
    emissions: np.ndarray    # M x L
    transitions: np.ndarray  # (L+1) x L, last row START

    def __post_init__(self):
        M, L = self.emissions.shape
        if M < 1:
            raise ValueError("lattice needs at least one position")
        if self.transitions.shape != (L + 1, L):
            raise ConfigError(f"transitions shape {self.transitions.shape} != {(L + 1, L)}")

    @property
    def length(self):
        return self.emissions.shape[0]

    def score(self, labels) -> float:
        y = np.asarray(labels)
        L = self.emissions.shape[1]
        s = self.transitions[L, y[0]] + self.emissions[np.arange(len(y)), y].sum()
        return s + self.transitions[y[:-1], y[1:]].sum()


def emissions(final_states, W_e: ParamTensor) -> np.ndarray:
    """Row j = W_e @ state_j."""
    X = np.asarray(final_states)
    if X.ndim != 2 or X.shape[1] != W_e.value.shape[1]:
        raise ConfigError(f"states {X.shape} incompatible with W_e {W_e.value.shape}")
    return X @ W_e.value.T


def _forward(lat: Lattice):
    em, tr = lat.emissions, lat.transitions
    M, L = em.shape
    alpha = np.empty((M, L), dtype=np.result_type(em, tr))
    alpha[0] = tr[L] + em[0]
    for j in range(1, M):
        alpha[j] = logsumexp(alpha[j - 1][:, None] + tr[:L], axis=0) + em[j]
    return alpha


def _backward(lat: Lattice):
    em, tr = lat.emissions, lat.transitions
    M, L = em.shape
    beta = np.zeros((M, L), dtype=np.result_type(em, tr))
    for j in range(M - 2, -1, -1):
        beta[j] = logsumexp(tr[:L] + (em[j + 1] + beta[j + 1])[None, :], axis=1)
    return beta


def crf_log_partition(lat: Lattice) -> float:
    return logsumexp(_forward(lat)[-1])


def crf_marginals(lat: Lattice):
    """Unary marginals (M x L), pairwise marginals ((M-1) x L x L) and log Z."""
    alpha, beta = _forward(lat), _backward(lat)
    log_z = logsumexp(alpha[-1])
    unary = np.exp(alpha + beta - log_z)
    L = lat.emissions.shape[1]
    tr = lat.transitions[:L]
    pair = np.exp(alpha[:-1, :, None] + tr[None] + (lat.emissions[1:] + beta[1:])[:, None, :]
                  - log_z)
    return unary, pair, log_z


def crf_viterbi(lat: Lattice) -> Tuple[np.ndarray, float]:
    em, tr = lat.emissions, lat.transitions
    M, L = em.shape
    delta = tr[L] + em[0]
    back = np.zeros((M, L), dtype=np.int64)
    for j in range(1, M):
        cand = delta[:, None] + tr[:L]
        back[j] = np.argmax(cand, axis=0)
        delta = cand[back[j], np.arange(L)] + em[j]
    path = np.empty(M, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    best = delta[path[-1]]
    for j in range(M - 1, 0, -1):
        path[j - 1] = back[j, path[j]]
    return path, best


def _check_golden(golden, M, L):
    y = np.asarray(golden, dtype=np.int64)
    if y.shape != (M,):
        raise ConfigError(f"golden length {y.shape} != ({M},)")
    if y.min() < 0 or y.max() >= L:
        raise ConfigError(f"label index out of range [0, {L})")
    return y


def crf_nll_and_grad(lat: Lattice, golden):
    """Negative log-likelihood of ``golden`` with grads w.r.t. emissions and transitions."""
    M, L = lat.emissions.shape
    y = _check_golden(golden, M, L)
    unary, pair, log_z = crf_marginals(lat)
    nll = log_z - lat.score(y)
    d_em = unary.copy()
    d_em[np.arange(M), y] -= 1.0
    d_tr = np.zeros_like(lat.transitions)
    d_tr[:L] = pair.sum(axis=0)
    np.add.at(d_tr, (y[:-1], y[1:]), -1.0)
    d_tr[L] = unary[0]
    d_tr[L, y[0]] -= 1.0
    return nll, d_em, d_tr


def softmax_nll_and_decode(em, golden=None):
    """Independent per-position softmax. Returns ``(nll, d_em, decoded)``; nll/d_em None without golden."""
    em = np.asarray(em)
    decoded = np.argmax(em, axis=1)
    if golden is None:
        return None, None, decoded
    M, L = em.shape
    y = _check_golden(golden, M, L)
    logp = log_softmax(em)
    nll = -logp[np.arange(M), y].sum()
    d_em = np.exp(logp)
    d_em[np.arange(M), y] -= 1.0
    return nll, d_em, decoded


def softmax_prev_decode(em, U) -> np.ndarray:
    """Greedy left-to-right decode feeding each predicted label forward."""
    M, L = em.shape
    out = np.empty(M, dtype=np.int64)
    prev = L
    for j in range(M):
        prev = int(np.argmax(em[j] + U[:, prev]))
        out[j] = prev
    return out


def softmax_prev_nll_and_decode(em, U: np.ndarray, golden=None):
    """Softmax with an additive previous-label term ``U[:, y_{j-1}]`` (START for j=0).

    Training uses the golden previous labels. Returns ``(nll, d_em, d_U, decoded)``.
    """
    em = np.asarray(em)
    M, L = em.shape
    if U.shape != (L, L + 1):
        raise ConfigError(f"U shape {U.shape} != {(L, L + 1)}")
    decoded = softmax_prev_decode(em, U)
    if golden is None:
        return None, None, None, decoded
    y = _check_golden(golden, M, L)
    prev = np.concatenate([[L], y[:-1]])
    logits = em + U[:, prev].T
    logp = log_softmax(logits)
    nll = -logp[np.arange(M), y].sum()
    d_em = np.exp(logp)
    d_em[np.arange(M), y] -= 1.0
    d_U = np.zeros_like(U)
    np.add.at(d_U.T, prev, d_em)
    return nll, d_em, d_U, decoded


class DecoderParams:
    """W_e plus the decoder-specific transition or feedback matrix."""

    def __init__(self, store: ParamStore, kind: str, width: int,
                 rng: Optional[np.random.Generator] = None, num_labels: int = NUM_LABELS):
        if kind not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}, got {kind!r}")
        self.kind = kind
        L = num_labels
        W = np.zeros((L, width)) if rng is None else glorot_uniform(rng, L, width)
        self.W_e = store.add("decoder.W_e", W)
        self.transitions = self.U = None
        if kind == "crf":
            self.transitions = store.add("decoder.transitions", np.zeros((L + 1, L)))
        elif kind == "softmax_prev":
            self.U = store.add("decoder.U", np.zeros((L, L + 1)))

    def tensors(self):
        return [p for p in (self.W_e, self.transitions, self.U) if p is not None]

    def nll_and_backward(self, states, golden) -> Tuple[float, np.ndarray]:
        """NLL of ``golden``; accumulates decoder grads and returns d(nll)/d(states)."""
        em = emissions(states, self.W_e)
        if self.kind == "crf":
            nll, d_em, d_tr = crf_nll_and_grad(Lattice(em, self.transitions.value), golden)
            if self.transitions.trainable:
                self.transitions.grad += d_tr
        elif self.kind == "softmax":
            nll, d_em, _ = softmax_nll_and_decode(em, golden)
        else:
            nll, d_em, d_U, _ = softmax_prev_nll_and_decode(em, self.U.value, golden)
            self.U.grad += d_U
        self.W_e.grad += d_em.T @ states
        return float(nll), d_em @ self.W_e.value

    def nll(self, states, golden) -> float:
        em = emissions(states, self.W_e)
        if self.kind == "crf":
            lat = Lattice(em, self.transitions.value)
            return crf_log_partition(lat) - lat.score(golden)
        if self.kind == "softmax":
            return softmax_nll_and_decode(em, golden)[0]
        return softmax_prev_nll_and_decode(em, self.U.value, golden)[0]

    def decode(self, states) -> np.ndarray:
        em = emissions(states, self.W_e)
        if self.kind == "crf":
            return crf_viterbi(Lattice(em, self.transitions.value))[0]
        if self.kind == "softmax":
            return np.argmax(em, axis=1)
        return softmax_prev_decode(em, self.U.value)
