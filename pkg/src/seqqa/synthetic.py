"""Synthetic QA corpora for smoke tests and learnability checks.

A question reads ``qw<k> t<x> t<y> ?``: a type word plus two topic words.
A positive evidence contains the segment ``t<x> cue<k> ANSWER`` among
distractor segments ``t<z> cue<j> OTHER`` with ``j != k`` and filler words.
Retrieved negatives carry ``t<z> cue<k> WRONG`` with a topic absent from the
question, so only a model that checks the question topic (the q-e feature)
can reject them. Some retrieved positives spell the answer with a trailing
``city`` token, a synonym of the golden form.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from .data import Evidence, QAInstance, SynonymDict

N_TYPES = 4
TOPICS = [f"t{k}" for k in range(10)]
FILLERS = [f"w{k}" for k in range(15)]
ANSWER_WORDS = [f"a{k}" for k in range(20)]
SUFFIX = "city"


def _span(rng, exclude=()) -> Tuple[str, ...]:
    while True:
        n = int(rng.integers(1, 4))
        span = tuple(rng.choice(ANSWER_WORDS, size=n, replace=False))
        if span not in exclude:
            return span


def _fillers(rng, lo, hi) -> List[str]:
    return list(rng.choice(FILLERS, size=int(rng.integers(lo, hi + 1))))


def _layout(rng, segments) -> Tuple[str, ...]:
    order = rng.permutation(len(segments))
    out = _fillers(rng, 0, 2)
    for k in order:
        out += segments[k] + _fillers(rng, 1, 2)
    return tuple(out)


def _distractors(rng, qtype, topics, answer, n):
    out = []
    for _ in range(n):
        j = int(rng.choice([t for t in range(N_TYPES) if t != qtype]))
        z = str(rng.choice([t for t in TOPICS if t not in topics]))
        out.append([z, f"cue{j}", *_span(rng, exclude=(answer,))])
    return out


def positive_evidence(rng, qtype, topics, answer, surface=None) -> Tuple[str, ...]:
    main = [topics[0], f"cue{qtype}", *(surface or answer)]
    return _layout(rng, [main] + _distractors(rng, qtype, topics, answer,
                                              int(rng.integers(1, 3))))


def retrieved_negative(rng, qtype, topics, answer) -> Tuple[str, ...]:
    z = str(rng.choice([t for t in TOPICS if t not in topics]))
    trap = [z, f"cue{qtype}", *_span(rng, exclude=(answer,))]
    return _layout(rng, [trap] + _distractors(rng, qtype, topics, answer,
                                              int(rng.integers(0, 2))))


def annotated_negative(rng, qtype, topics, answer) -> Tuple[str, ...]:
    return _layout(rng, _distractors(rng, qtype, topics, answer, int(rng.integers(1, 3))))


def generate_corpus(n_questions: int, rng: np.random.Generator, split: str = "train",
                    n_retrieved: int = 5, retrieved_negative_rate: float = 0.3,
                    synonym_rate: float = 0.2, id_prefix: Optional[str] = None):
    """Return ``(instances, synonyms)``.

    ``split="train"``: two annotated positives, one annotated negative and two
    retrieved negatives per question. Otherwise: one annotated positive plus
    an annotated companion, and ``n_retrieved`` retrieved evidences of which
    each is negative with probability ``retrieved_negative_rate``.
    """
    prefix = id_prefix or split
    synonyms = SynonymDict()
    out = []
    for q in range(n_questions):
        qtype = int(rng.integers(N_TYPES))
        topics = tuple(rng.choice(TOPICS, size=2, replace=False))
        answer = _span(rng)
        synonyms.add(answer, answer + (SUFFIX,))
        question = (f"qw{qtype}", *topics, "?")
        evs = [Evidence(positive_evidence(rng, qtype, topics, answer), "positive", False),
               Evidence(positive_evidence(rng, qtype, topics, answer), "positive", False)]
        if split == "train":
            evs.append(Evidence(annotated_negative(rng, qtype, topics, answer),
                                "annotated_negative", False))
            evs += [Evidence(retrieved_negative(rng, qtype, topics, answer),
                             "retrieved_negative", True) for _ in range(2)]
        else:
            for _ in range(n_retrieved):
                if rng.random() < retrieved_negative_rate:
                    evs.append(Evidence(retrieved_negative(rng, qtype, topics, answer),
                                        "retrieved_negative", True))
                else:
                    surface = answer + (SUFFIX,) if rng.random() < synonym_rate else None
                    evs.append(Evidence(positive_evidence(rng, qtype, topics, answer, surface),
                                        "positive", True))
        out.append(QAInstance(f"{prefix}-{q}", question, [answer], evs))
    return out, synonyms


def einstein_instance() -> QAInstance:
    """A one-question, one-evidence instance with a two-token answer."""
    return QAInstance(
        "einstein",
        "Who is the first wife of Albert Einstein ?".split(),
        [("Mileva", "Marić")],
        [Evidence("Einstein married his first wife Mileva Marić in 1903".split(), "positive")],
    )


def toy_task(corpus_seed: int = 1234, n_train: int = 500, n_eval: int = 100):
    """Train / valid / test splits of the toy task with one merged synonym dictionary."""
    rng = np.random.default_rng(corpus_seed)
    train, s1 = generate_corpus(n_train, rng, "train")
    valid, s2 = generate_corpus(n_eval, rng, "valid")
    test, s3 = generate_corpus(n_eval, rng, "test")
    synonyms = SynonymDict()
    for d in (s1, s2, s3):
        for a, bs in d._syn.items():
            for b in bs:
                synonyms.add(a, b)
    return train, valid, test, synonyms
