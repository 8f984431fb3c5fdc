"""Corpus I/O, vocabulary/embeddings, golden labels, features and samplers."""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .decoders import B, I, O1, O2
from .evidence import FeatureIds
from .numeric import ConfigError, ParamTensor, glorot_uniform

logger = logging.getLogger(__name__)

POLARITIES = ("positive", "annotated_negative", "retrieved_negative")
UNK = "<unk>"

Tokens = Tuple[str, ...]


class DataError(ValueError):
    """Malformed corpus, embedding or synonym data."""


@dataclass
class Evidence:
    tokens: Tokens
    polarity: str = "positive"
    retrieved: Optional[bool] = None

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        if self.polarity not in POLARITIES:
            raise DataError(f"unknown polarity {self.polarity!r}")
        if self.retrieved is None:
            self.retrieved = self.polarity == "retrieved_negative"

    @property
    def is_positive(self):
        return self.polarity == "positive"


@dataclass
class QAInstance:
    id: str
    question: Tokens
    answers: List[Tokens]
    evidences: List[Evidence]

    def __post_init__(self):
        self.question = tuple(self.question)
        self.answers = [tuple(a) for a in self.answers]

    @property
    def golden(self) -> Optional[Tokens]:
        return self.answers[0] if self.answers else None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": list(self.question),
            "answers": [list(a) for a in self.answers],
            "evidences": [
                {"tokens": list(e.tokens), "polarity": e.polarity, "retrieved": e.retrieved}
                for e in self.evidences
            ],
        }


@dataclass
class LoadReport:
    errors: List[Tuple[int, str]] = field(default_factory=list)

    def __bool__(self):
        return bool(self.errors)


def _parse_instance(obj, require_answers: bool) -> QAInstance:
    if not isinstance(obj, dict):
        raise DataError("line is not a JSON object")
    for key in ("id", "question", "evidences") + (("answers",) if require_answers else ()):
        if key not in obj:
            raise DataError(f"missing key {key!r}")

    def toks(v, what):
        if not isinstance(v, list) or not all(isinstance(t, str) for t in v):
            raise DataError(f"{what} must be an array of strings")
        return tuple(v)

    question = toks(obj["question"], "question")
    if not question:
        raise DataError("empty question")
    answers = [toks(a, "answer") for a in obj.get("answers", [])]
    if require_answers and not answers:
        raise DataError("no answers")
    if any(not a for a in answers):
        raise DataError("empty answer")
    evidences = []
    for ev in obj["evidences"]:
        if not isinstance(ev, dict) or "tokens" not in ev:
            raise DataError("evidence must be an object with 'tokens'")
        tokens = toks(ev["tokens"], "evidence tokens")
        if not tokens:
            raise DataError("empty evidence")
        evidences.append(Evidence(tokens, ev.get("polarity", "positive"), ev.get("retrieved")))
    return QAInstance(str(obj["id"]), question, answers, evidences)


def load_corpus(path, strict: bool = False, require_answers: bool = True):
    """Read a JSON-lines corpus. Returns ``(instances, report)``.

    Malformed lines are skipped and listed in the report, or raise
    :class:`DataError` when ``strict``.
    """
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    instances, report = [], LoadReport()
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                instances.append(_parse_instance(json.loads(line), require_answers))
            except (json.JSONDecodeError, DataError) as exc:
                if strict:
                    raise DataError(f"{path}:{lineno}: {exc}") from exc
                report.errors.append((lineno, str(exc)))
    if report:
        logger.warning("%s: skipped %d malformed lines", path, len(report.errors))
    return instances, report


def save_corpus(path, instances: Iterable[QAInstance]):
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")


class SynonymDict:
    """Symmetric synonym relation over token sequences."""

    def __init__(self, pairs: Iterable[Tuple[Sequence[str], Sequence[str]]] = ()):
        self._syn: Dict[Tokens, Set[Tokens]] = defaultdict(set)
        for a, b in pairs:
            self.add(a, b)

    def add(self, a, b):
        a, b = tuple(a), tuple(b)
        if a != b:
            self._syn[a].add(b)
            self._syn[b].add(a)

    def synonyms(self, answer) -> Set[Tokens]:
        return set(self._syn.get(tuple(answer), ()))

    def are_synonyms(self, a, b) -> bool:
        return tuple(b) in self._syn.get(tuple(a), ())

    def __len__(self):
        return len(self._syn)

    def to_char_mode(self) -> "SynonymDict":
        out = SynonymDict()
        for a, others in self._syn.items():
            for b in others:
                out.add(split_chars(a), split_chars(b))
        return out

    @classmethod
    def load(cls, path) -> "SynonymDict":
        out = cls()
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read synonyms {path}: {exc}") from exc
        with fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                    raise DataError(f"{path}:{lineno}: expected '<canonical>\\t<synonym>'")
                out.add(parts[0].split(" "), parts[1].split(" "))
        return out

    def save(self, path):
        seen = set()
        with open(path, "w", encoding="utf-8") as fh:
            for a in sorted(self._syn):
                for b in sorted(self._syn[a]):
                    if (b, a) not in seen:
                        seen.add((a, b))
                        fh.write(" ".join(a) + "\t" + " ".join(b) + "\n")


# ---------------------------------------------------------------------------
# labels and features


def answer_variants(answers: Iterable[Sequence[str]], synonyms: Optional[SynonymDict]) -> Set[Tokens]:
    out = set()
    for a in answers:
        a = tuple(a)
        out.add(a)
        if synonyms is not None:
            out |= synonyms.synonyms(a)
    return {a for a in out if a}


def find_answer_span(tokens: Sequence[str], candidates: Iterable[Sequence[str]]):
    """Earliest occurrence of any candidate; longest candidate wins at equal start.

    Returns ``(start, end)`` with ``end`` exclusive, or None.
    """
    cands = sorted({tuple(c) for c in candidates if c}, key=len, reverse=True)
    tokens = tuple(tokens)
    for start in range(len(tokens)):
        for c in cands:
            if tokens[start:start + len(c)] == c:
                return start, start + len(c)
    return None


def labels_for_span(length: int, span, o_split: bool = True) -> np.ndarray:
    labels = np.full(length, O1, dtype=np.int64)
    if span is not None:
        start, end = span
        labels[start] = B
        labels[start + 1:end] = I
        if o_split:
            labels[end:] = O2
    return labels


def generate_labels(evidence: Evidence, answers, synonyms: Optional[SynonymDict] = None,
                    o_split: bool = True) -> np.ndarray:
    """Golden labels marking the first answer occurrence.

    Without ``o_split`` every outside token is O1 (plain O). Negative
    evidences are all O1 whatever they contain.
    """
    if not evidence.tokens:
        raise ValueError("empty evidence")
    span = None
    if evidence.is_positive:
        span = find_answer_span(evidence.tokens, answer_variants(answers, synonyms))
    return labels_for_span(len(evidence.tokens), span, o_split)


def compute_common_word_features(question: Sequence[str], evidence: Sequence[str],
                                 other_evidence: Optional[Sequence[str]] = None) -> FeatureIds:
    qset = set(question)
    qe = np.array([t in qset for t in evidence], dtype=np.int64)
    if other_evidence is None:
        ee = np.zeros(len(evidence), dtype=np.int64)
    else:
        oset = set(other_evidence)
        ee = np.array([t in oset for t in evidence], dtype=np.int64)
    return FeatureIds(qe, ee)


def sample_companion_evidence(instance: QAInstance, target: int,
                              rng: np.random.Generator) -> Optional[Evidence]:
    n = len(instance.evidences)
    if n <= 1:
        return None
    k = int(rng.integers(n - 1))
    return instance.evidences[k + (k >= target)]


def split_chars(tokens: Sequence[str]) -> Tokens:
    return tuple(ch for tok in tokens for ch in tok)


def to_char_mode(instance: QAInstance) -> QAInstance:
    return QAInstance(
        instance.id,
        split_chars(instance.question),
        [split_chars(a) for a in instance.answers],
        [Evidence(split_chars(e.tokens), e.polarity, e.retrieved) for e in instance.evidences],
    )


# ---------------------------------------------------------------------------
# vocabulary and embeddings


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if not tokens or tokens[0] != UNK:
            tokens = [UNK] + [t for t in tokens if t != UNK]
        if len(set(tokens)) != len(tokens):
            raise DataError("duplicate tokens in vocabulary")
        self.itos = tokens
        self.stoi = {t: k for k, t in enumerate(tokens)}
        self.unk_hits = 0

    @classmethod
    def build(cls, corpus: Iterable[QAInstance], min_freq: int = 1) -> "Vocab":
        counts = Counter()
        for inst in corpus:
            counts.update(inst.question)
            for a in inst.answers:
                counts.update(a)
            for e in inst.evidences:
                counts.update(e.tokens)
        counts.pop(UNK, None)
        kept = sorted((t for t, c in counts.items() if c >= min_freq),
                      key=lambda t: (-counts[t], t))
        return cls([UNK] + kept)

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.empty(len(tokens), dtype=np.int64)
        for k, t in enumerate(tokens):
            idx = self.stoi.get(t)
            if idx is None:
                self.unk_hits += 1
                idx = 0
            out[k] = idx
        return out


def load_embedding_file(path) -> Tuple[Dict[str, np.ndarray], int]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read embeddings {path}: {exc}") from exc
    with fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: header must be '<count> <dim>'")
        count, dim = int(header[0]), int(header[1])
        vectors = {}
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise ConfigError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            vectors[parts[0]] = np.array(parts[1:], dtype=float)
    if len(vectors) != count:
        logger.warning("%s: header says %d vectors, read %d", path, count, len(vectors))
    return vectors, dim


def build_vocab_and_embeddings(corpus: Sequence[QAInstance], dim: int,
                               rng: np.random.Generator, embedding_file=None,
                               min_freq: int = 1, trainable: Optional[bool] = None):
    """Vocabulary plus the D x |V| embedding tensor ``embedding.E``.

    ``trainable=None`` freezes file-initialized embeddings and trains random ones.
    """
    vocab = Vocab.build(corpus, min_freq)
    E = glorot_uniform(rng, dim, len(vocab))
    if embedding_file is not None:
        vectors, file_dim = load_embedding_file(embedding_file)
        if file_dim != dim:
            raise ConfigError(f"embedding file dimension {file_dim} != D={dim}")
        hits = 0
        for tok, k in vocab.stoi.items():
            vec = vectors.get(tok)
            if vec is not None:
                E[:, k] = vec
                hits += 1
        coverage = hits / max(len(vocab) - 1, 1)
        if coverage < 0.5:
            logger.warning("embedding file covers only %.1f%% of the vocabulary", 100 * coverage)
    if trainable is None:
        trainable = embedding_file is None
    return vocab, ParamTensor("embedding.E", E, trainable)


# ---------------------------------------------------------------------------
# training examples


@dataclass
class Example:
    """Model-ready (question, evidence) pair; ``labels`` is None at prediction time."""
    question_ids: np.ndarray
    evidence_ids: np.ndarray
    feats: FeatureIds
    labels: Optional[np.ndarray] = None
    evidence_tokens: Tokens = ()
    polarity: str = "positive"


def make_example(vocab: Vocab, question, evidence: Evidence, labels=None,
                 companion: Optional[Evidence] = None) -> Example:
    feats = compute_common_word_features(
        question, evidence.tokens, companion.tokens if companion is not None else None)
    return Example(vocab.encode(question), vocab.encode(evidence.tokens), feats,
                   None if labels is None else np.asarray(labels, dtype=np.int64),
                   evidence.tokens, evidence.polarity)


@dataclass
class LabeledItem:
    instance: QAInstance
    index: int
    labels: np.ndarray


class TrainingSampler:
    """Draws training batches, optionally mixing in negative evidences.

    Positive slots walk a reshuffled pass over all labelled positives; with
    ``noise`` each slot independently becomes a negative with probability
    ``noise_rate``, annotated with probability ``annotated_share`` among those.
    """

    def __init__(self, corpus: Sequence[QAInstance], synonyms: Optional[SynonymDict] = None,
                 o_split: bool = True, noise_rate: float = 0.2, annotated_share: float = 0.25):
        self.noise_rate = noise_rate
        self.annotated_share = annotated_share
        self.positives: List[LabeledItem] = []
        self.annotated_neg: List[LabeledItem] = []
        self.retrieved_neg: List[LabeledItem] = []
        self.inconsistent = 0
        for inst in corpus:
            variants = answer_variants(inst.answers, synonyms)
            for k, ev in enumerate(inst.evidences):
                if ev.is_positive:
                    span = find_answer_span(ev.tokens, variants)
                    if span is None:
                        self.inconsistent += 1
                        continue
                    self.positives.append(
                        LabeledItem(inst, k, labels_for_span(len(ev.tokens), span, o_split)))
                else:
                    pool = (self.annotated_neg if ev.polarity == "annotated_negative"
                            else self.retrieved_neg)
                    pool.append(LabeledItem(inst, k, labels_for_span(len(ev.tokens), None)))
        if self.inconsistent:
            logger.warning("%d positive evidences contain no answer; excluded",
                           self.inconsistent)
        if not self.positives:
            raise DataError("no labelled positive evidences in training corpus")
        self._order = np.arange(0)
        self._cursor = 0
        self._warned = set()

    def __len__(self):
        return len(self.positives)

    def _next_positive(self, rng) -> LabeledItem:
        if self._cursor >= len(self._order):
            self._order = rng.permutation(len(self.positives))
            self._cursor = 0
        item = self.positives[self._order[self._cursor]]
        self._cursor += 1
        return item

    def _pick(self, pool, name, rng):
        if not pool:
            if name not in self._warned:
                logger.warning("no %s evidences available; using positives", name)
                self._warned.add(name)
            return self._next_positive(rng)
        return pool[int(rng.integers(len(pool)))]

    def draw(self, rng: np.random.Generator, noise: bool) -> LabeledItem:
        if noise:
            u = rng.random()
            if u < self.noise_rate * self.annotated_share:
                return self._pick(self.annotated_neg, "annotated_negative", rng)
            if u < self.noise_rate:
                return self._pick(self.retrieved_neg, "retrieved_negative", rng)
        return self._next_positive(rng)

    def sample_batch(self, batch_size: int, noise: bool, rng: np.random.Generator,
                     vocab: Optional[Vocab] = None):
        """``batch_size`` items; as :class:`Example` when a vocab is given."""
        items = [self.draw(rng, noise) for _ in range(batch_size)]
        if vocab is None:
            return items
        out = []
        for it in items:
            companion = sample_companion_evidence(it.instance, it.index, rng)
            out.append(make_example(vocab, it.instance.question,
                                    it.instance.evidences[it.index], it.labels, companion))
        return out


def sample_training_batch(corpus, batch_size: int, noise: bool, rng: np.random.Generator,
                          vocab: Optional[Vocab] = None, synonyms=None, o_split=True):
    return TrainingSampler(corpus, synonyms, o_split).sample_batch(batch_size, noise, rng, vocab)
