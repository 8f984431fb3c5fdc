"""Minibatch training with rmsprop, L2, validation-based model selection and checkpoints."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .config import TrainConfig, diff_arch
from .data import (DataError, Example, QAInstance, SynonymDict, TrainingSampler, Vocab,
                   build_vocab_and_embeddings, to_char_mode)
from .evaluation import evaluate
from .model import QAModel
from .numeric import (CheckpointError, ParamTensor, make_rng, read_tensors, rmsprop_step,
                      split_rng, write_tensors)

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class EpochLog:
    epoch: int
    loss: float
    nll: float
    l2: float
    precision: float
    recall: float
    f1: float
    seconds: float

    def line(self) -> str:
        return (f"{self.epoch}\t{self.loss:.10g}\t{self.nll:.10g}\t{self.l2:.10g}\t"
                f"{self.precision:.6f}\t{self.recall:.6f}\t{self.f1:.6f}\t{self.seconds:.2f}")


@dataclass
class BatchLoss:
    loss: float
    nll: float
    l2: float


@dataclass
class TrainResult:
    model: QAModel
    vocab: Vocab
    cfg: TrainConfig
    best_epoch: int
    best_f1: float
    log: List[EpochLog] = field(default_factory=list)
    batch_losses: List[float] = field(default_factory=list)


def loss_forward_backward(model: QAModel, ex: Example, training: bool = False, rng=None) -> float:
    """Single-instance NLL; gradient contributions are added to the model's grads."""
    return model.forward_backward(ex, training, rng)


def l2_coefficient(cfg: TrainConfig, n_train: int) -> float:
    """Per-step L2 weight.

    The objective sums the NLL over the training set and adds lambda/2
    ||theta||^2 once, so a mean-NLL step carries lambda/N of the penalty.
    ``l2_scale="batch"`` applies the full lambda at every step instead.
    """
    if cfg.l2_scale == "batch":
        return cfg.lam
    return cfg.lam / max(n_train, 1)


def batch_objective(model: QAModel, batch: Sequence[Example], training: bool = True,
                    rng=None, lam: Optional[float] = None) -> BatchLoss:
    """mean NLL + lam/2 ||theta||^2 with its gradient left in ``grad``.

    ``lam`` defaults to the configured lambda.
    """
    model.store.zero_grad()
    total = 0.0
    for ex in batch:
        total += float(model.forward_backward(ex, training, rng))
    n = len(batch)
    lam = model.cfg.lam if lam is None else lam
    sq = 0.0
    for p in model.store.trainable():
        p.grad /= n
        p.grad += lam * p.value
        sq += float(np.sum(p.value * p.value))
    nll = total / n
    l2 = 0.5 * lam * sq
    return BatchLoss(nll + l2, nll, l2)


def batch_objective_value(model: QAModel, batch: Sequence[Example],
                          lam: Optional[float] = None):
    """Forward-only version of :func:`batch_objective` (dropout off)."""
    lam = model.cfg.lam if lam is None else lam
    nll = sum(model.nll(ex) for ex in batch) / len(batch)
    sq = sum(np.sum(p.value * p.value) for p in model.store.trainable())
    return nll + 0.5 * lam * sq


def prepare_corpora(cfg: TrainConfig, *corpora, synonyms: Optional[SynonymDict] = None):
    if not cfg.char_mode:
        return corpora, synonyms
    out = tuple([to_char_mode(i) for i in c] if c is not None else None for c in corpora)
    return out, synonyms.to_char_mode() if synonyms is not None else None


def train(train_corpus: Sequence[QAInstance], valid_corpus: Sequence[QAInstance],
          cfg: TrainConfig, synonyms: Optional[SynonymDict] = None, embedding_file=None,
          log_path=None, checkpoint_path=None,
          on_epoch: Optional[Callable[[EpochLog], None]] = None) -> TrainResult:
    if not train_corpus:
        raise DataError("empty training corpus")
    (train_corpus, valid_corpus), synonyms = prepare_corpora(
        cfg, train_corpus, valid_corpus, synonyms=synonyms)
    init_rng, sample_rng, drop_rng = split_rng(make_rng(cfg.seed), 3)
    vocab, E = build_vocab_and_embeddings(
        train_corpus, cfg.D, init_rng, embedding_file, cfg.min_freq,
        None if cfg.freeze_embeddings is None else not cfg.freeze_embeddings)
    model = QAModel(cfg, E, init_rng)
    sampler = TrainingSampler(train_corpus, synonyms, cfg.o_split, cfg.noise_rate,
                              cfg.annotated_share)
    n_batches = math.ceil(len(sampler) / cfg.batch_size)
    lam = l2_coefficient(cfg, n_batches * cfg.batch_size)
    params = list(model.store)

    result = TrainResult(model, vocab, cfg, 0, -1.0)
    best_values = model.store.snapshot()
    stale = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            sums = np.zeros(3)
            for b in range(n_batches):
                batch = sampler.sample_batch(cfg.batch_size, cfg.noise, sample_rng, vocab)
                bl = batch_objective(model, batch, True, drop_rng, lam)
                if not np.isfinite(bl.loss):
                    raise TrainingError(f"non-finite loss {bl.loss} at epoch {epoch} batch {b}")
                rmsprop_step(params, cfg.lr, cfg.rms_decay, cfg.rms_eps)
                sums += (bl.loss, bl.nll, bl.l2)
                result.batch_losses.append(bl.loss)
            mean = sums / n_batches
            if valid_corpus:
                m = evaluate(valid_corpus, model, vocab, "annotated", synonyms,
                             seed=cfg.seed).metrics["strict"]
                p, r, f1 = m.precision, m.recall, m.f1
            else:
                p = r = f1 = 0.0
            row = EpochLog(epoch, *mean, p, r, f1, time.perf_counter() - t0)
            result.log.append(row)
            if log_fh:
                log_fh.write(row.line() + "\n")
                log_fh.flush()
            logger.info("epoch %d loss %.5f (nll %.5f l2 %.5f) valid P/R/F1 %.4f/%.4f/%.4f",
                        epoch, row.loss, row.nll, row.l2, p, r, f1)
            if on_epoch:
                on_epoch(row)
            if f1 > result.best_f1:
                result.best_f1, result.best_epoch = f1, epoch
                best_values = model.store.snapshot()
                stale = 0
                if checkpoint_path:
                    save_checkpoint(checkpoint_path, model, vocab, epoch, f1)
            else:
                stale += 1
                if stale > cfg.patience:
                    logger.info("early stop after %d stale epochs", stale)
                    break
    finally:
        if log_fh:
            log_fh.close()
    model.store.restore(best_values)
    return result


# ---------------------------------------------------------------------------
# checkpoints: tensor file + JSON sidecar (config, vocab, epoch, score)


def _meta_path(path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(path, model: QAModel, vocab: Vocab, epoch: int = 0,
                    score: float = 0.0):
    write_tensors(path, model.store)
    meta = {
        "config": model.cfg.to_dict(),
        "embeddings_trainable": model.embeddings.trainable,
        "epoch": epoch,
        "valid_f1": score,
        "vocab": vocab.itos,
    }
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, ensure_ascii=False, indent=1)


@dataclass
class Checkpoint:
    model: QAModel
    vocab: Vocab
    cfg: TrainConfig
    epoch: int
    valid_f1: float


def load_checkpoint(path, cfg: Optional[TrainConfig] = None) -> Checkpoint:
    """Rebuild the model stored at ``path``.

    With ``cfg`` given, every architecture key must agree with the stored
    configuration; otherwise a :class:`CheckpointError` lists the differences.
    """
    try:
        with open(_meta_path(path), encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint metadata {_meta_path(path)}: {exc}")
    stored = TrainConfig(**meta["config"])
    if cfg is not None:
        diffs = diff_arch(stored.arch(), cfg.arch())
        if diffs:
            raise CheckpointError("checkpoint config mismatch: " + "; ".join(diffs))
    tensors = read_tensors(path)
    vocab = Vocab(meta["vocab"])
    E = ParamTensor("embedding.E", np.zeros((stored.D, len(vocab))),
                    meta.get("embeddings_trainable", True))
    model = QAModel(stored if cfg is None else cfg, E, None)
    names = set(model.store.names())
    if names != set(tensors):
        raise CheckpointError(
            f"tensor set mismatch: missing {sorted(names - set(tensors))}, "
            f"unexpected {sorted(set(tensors) - names)}")
    for p in model.store:
        arr = tensors[p.name]
        if arr.shape != p.matrix_shape:
            raise CheckpointError(f"{p.name}: shape {arr.shape} vs {p.matrix_shape}")
        p.value[...] = arr.reshape(p.value.shape)
    return Checkpoint(model, vocab, model.cfg, meta.get("epoch", 0), meta.get("valid_f1", 0.0))
