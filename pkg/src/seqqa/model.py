"""The full labeler: question encoder -> evidence encoder -> decoder."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .config import TrainConfig
from .data import Example
from .decoders import DecoderParams
from .evidence import EvidenceParams, encode_evidence, encode_evidence_backward
from .lstm import LstmParams
from .numeric import ConfigError, ParamStore, ParamTensor, glorot_uniform
from .question import AttentionParams, encode_question, encode_question_backward


class QAModel:
    def __init__(self, cfg: TrainConfig, embeddings: ParamTensor,
                 rng: Optional[np.random.Generator]):
        if embeddings.value.shape[0] != cfg.D:
            raise ConfigError(f"embedding rows {embeddings.value.shape[0]} != D={cfg.D}")
        self.cfg = cfg
        self.store = ParamStore()
        self.embeddings = self.store.register(embeddings)
        self.q_lstm = LstmParams(self.store, "question", cfg.D, cfg.H, rng, cfg.candidate)
        self.attn = AttentionParams(self.store, "question.attention", cfg.H, rng)
        self.evidence = EvidenceParams(self.store, cfg.D, cfg.H, (cfg.D1, cfg.D2), cfg.n_layers,
                                       cfg.cross_links, rng, cfg.candidate)
        self.decoder = DecoderParams(self.store, cfg.decoder, cfg.H, rng)

    @classmethod
    def random(cls, cfg: TrainConfig, vocab_size: int, rng: np.random.Generator,
               trainable_embeddings: bool = True) -> "QAModel":
        E = ParamTensor("embedding.E", glorot_uniform(rng, cfg.D, vocab_size),
                        trainable_embeddings)
        return cls(cfg, E, rng)

    @property
    def vocab_size(self):
        return self.embeddings.value.shape[1]

    def _forward(self, ex: Example, training: bool, rng):
        cfg = self.cfg
        q_drop = cfg.dropout if cfg.question_dropout else 0.0
        qenc, qtrace = encode_question(ex.question_ids, self.embeddings, self.q_lstm, self.attn,
                                       cfg.pooling, q_drop, training, rng)
        states, etrace = encode_evidence(ex.evidence_ids, qenc.r_q, ex.feats, self.embeddings,
                                         self.evidence, cfg.dropout, training, rng)
        return qtrace, etrace, states.final

    def forward_backward(self, ex: Example, training: bool = False, rng=None) -> float:
        """Instance NLL; accumulates its gradient into every parameter's ``grad``."""
        if ex.labels is None:
            raise ValueError("forward_backward needs golden labels")
        if len(ex.labels) != len(ex.evidence_ids):
            raise ConfigError(
                f"{len(ex.labels)} labels for an evidence of {len(ex.evidence_ids)} tokens")
        qtrace, etrace, final = self._forward(ex, training, rng)
        nll, d_final = self.decoder.nll_and_backward(final, ex.labels)
        d_rq = encode_evidence_backward(etrace, d_final, self.embeddings, self.evidence)
        encode_question_backward(qtrace, d_rq, self.embeddings, self.q_lstm, self.attn)
        return nll

    def nll(self, ex: Example) -> float:
        _, _, final = self._forward(ex, False, None)
        return self.decoder.nll(final, ex.labels)

    def decode(self, ex: Example) -> np.ndarray:
        _, _, final = self._forward(ex, False, None)
        return self.decoder.decode(final)

    def l2(self) -> float:
        return float(sum(np.sum(p.value * p.value) for p in self.store.trainable()))
