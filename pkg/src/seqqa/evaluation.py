"""Answer extraction, voting, strict/fuzzy matching and P/R/F1."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .data import QAInstance, SynonymDict, Tokens, Vocab, make_example
from .decoders import B, I
from .numeric import make_rng

logger = logging.getLogger(__name__)

SETTINGS = ("annotated", "retrieved")
MATCH_MODES = ("strict", "fuzzy")


@dataclass(frozen=True)
class AnswerSpan:
    tokens: Tokens
    evidence_index: int
    start: int
    end: int   # exclusive


def extract_answer(labels, tokens: Sequence[str], evidence_index: int = 0) -> Optional[AnswerSpan]:
    """Span from the first B through the I's that immediately follow it."""
    labels = list(labels)
    if len(labels) != len(tokens):
        raise ValueError(f"{len(labels)} labels for {len(tokens)} tokens")
    try:
        start = labels.index(B)
    except ValueError:
        return None
    end = start + 1
    while end < len(labels) and labels[end] == I:
        end += 1
    return AnswerSpan(tuple(tokens[start:end]), evidence_index, start, end)


def vote_answers(per_evidence: Sequence[Optional[AnswerSpan]]) -> Optional[Tokens]:
    """Most frequent answer; ties go to the answer seen first."""
    counts: Counter = Counter()
    first: Dict[Tokens, int] = {}
    for k, span in enumerate(per_evidence):
        if span is None:
            continue
        counts[span.tokens] += 1
        first.setdefault(span.tokens, k)
    if not counts:
        return None
    return min(counts, key=lambda a: (-counts[a], first[a]))


def match_answer(produced: Optional[Sequence[str]], goldens: Sequence[Sequence[str]],
                 synonyms: Optional[SynonymDict] = None, mode: str = "strict") -> bool:
    if mode not in MATCH_MODES:
        raise ValueError(f"match mode must be one of {MATCH_MODES}")
    if produced is None:
        return False
    produced = tuple(produced)
    goldens = [tuple(g) for g in goldens]
    if produced in goldens:
        return True
    if mode == "fuzzy" and synonyms is not None:
        return any(synonyms.are_synonyms(g, produced) for g in goldens)
    return False


@dataclass
class Metrics:
    correct: int
    produced: int
    questions: int

    def __post_init__(self):
        if not 0 <= self.correct <= self.produced <= self.questions:
            raise ValueError(f"need 0 <= |C| <= |A| <= |Q|, got {self.counts}")

    @property
    def counts(self):
        return self.correct, self.produced, self.questions

    @property
    def precision(self) -> float:
        return self.correct / self.produced if self.produced else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.questions if self.questions else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def row(self) -> str:
        return (f"|C|={self.correct} |A|={self.produced} |Q|={self.questions} "
                f"P={100 * self.precision:.2f} R={100 * self.recall:.2f} F1={100 * self.f1:.2f}")


@dataclass
class QuestionRecord:
    id: str
    answer: Optional[Tokens]
    correct: Dict[str, bool]
    decodes: List[Tuple[int, List[int]]] = field(default_factory=list)


@dataclass
class EvalResult:
    setting: str
    metrics: Dict[str, Metrics]
    records: List[QuestionRecord]


def instance_synonyms(instance: QAInstance, synonyms: Optional[SynonymDict]) -> SynonymDict:
    """Global dictionary plus the instance's own alternative answers."""
    out = SynonymDict()
    if synonyms is not None:
        for a in instance.answers:
            for s in synonyms.synonyms(a):
                out.add(a, s)
    if instance.answers:
        for alt in instance.answers[1:]:
            out.add(instance.answers[0], alt)
    return out


def _annotated_inputs(inst: QAInstance):
    annotated = [k for k, e in enumerate(inst.evidences) if not e.retrieved]
    major = next((k for k in annotated if inst.evidences[k].is_positive),
                 annotated[0] if annotated else None)
    if major is None:
        return []
    companion = next((inst.evidences[k] for k in annotated if k != major), None)
    return [(major, companion)]


def _retrieved_inputs(inst: QAInstance, max_retrieved: int, rng):
    idx = [k for k, e in enumerate(inst.evidences) if e.retrieved][:max_retrieved]
    out = []
    for k in idx:
        others = [inst.evidences[j] for j in idx if j != k]
        companion = others[int(rng.integers(len(others)))] if others else None
        out.append((k, companion))
    return out


def predict_instance(model, vocab: Vocab, inst: QAInstance, setting: str,
                     max_retrieved: int = 20, seed: int = 0):
    """Decode the evidences the setting calls for; returns ``(answer, decodes)``."""
    if setting == "annotated":
        inputs = _annotated_inputs(inst)
    elif setting == "retrieved":
        inputs = _retrieved_inputs(inst, max_retrieved, make_rng(seed))
    else:
        raise ValueError(f"setting must be one of {SETTINGS}")
    spans, decodes = [], []
    for k, companion in inputs:
        ev = inst.evidences[k]
        labels = model.decode(make_example(vocab, inst.question, ev, None, companion))
        decodes.append((k, labels.tolist()))
        spans.append(extract_answer(labels, ev.tokens, k))
    if setting == "annotated":
        answer = spans[0].tokens if spans and spans[0] is not None else None
    else:
        answer = vote_answers(spans)
    return answer, decodes, bool(inputs)


def evaluate(corpus: Sequence[QAInstance], model, vocab: Vocab, setting: str = "annotated",
             synonyms: Optional[SynonymDict] = None, max_retrieved: int = 20,
             seed: int = 0, threads: int = 1) -> EvalResult:
    """Strict and fuzzy metrics for one setting (both modes share the same decodes)."""
    if setting not in SETTINGS:
        raise ValueError(f"setting must be one of {SETTINGS}")

    def run(item):
        qidx, inst = item
        answer, decodes, had_inputs = predict_instance(
            model, vocab, inst, setting, max_retrieved, seed * 1_000_003 + qidx)
        if not had_inputs:
            logger.warning("question %s has no %s evidences; counted unanswered", inst.id, setting)
        syn = instance_synonyms(inst, synonyms)
        goldens = inst.answers[:1]
        correct = {m: match_answer(answer, goldens, syn, m) for m in MATCH_MODES}
        return QuestionRecord(inst.id, answer, correct, decodes)

    items = list(enumerate(corpus))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(run, items))
    else:
        records = [run(it) for it in items]
    produced = sum(r.answer is not None for r in records)
    metrics = {m: Metrics(sum(r.correct[m] for r in records), produced, len(records))
               for m in MATCH_MODES}
    return EvalResult(setting, metrics, records)


def write_predictions(path, records: Sequence[QuestionRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            answer = " ".join(r.answer) if r.answer is not None else ""
            fh.write(f"{r.id}\t{answer}\t{int(r.correct.get('strict', False))}"
                     f"\t{int(r.correct.get('fuzzy', False))}\n")


def format_report(results: Sequence[EvalResult], modes: Sequence[str] = MATCH_MODES) -> str:
    """Plain-text block: counts and P/R/F1 per (setting, mode)."""
    lines = [f"{'setting':<10} {'match':<7} {'|C|':>6} {'|A|':>6} {'|Q|':>6} "
             f"{'P':>7} {'R':>7} {'F1':>7}"]
    for res in results:
        for mode in modes:
            m = res.metrics[mode]
            lines.append(f"{res.setting:<10} {mode:<7} {m.correct:>6} {m.produced:>6} "
                         f"{m.questions:>6} {100 * m.precision:>7.2f} {100 * m.recall:>7.2f} "
                         f"{100 * m.f1:>7.2f}")
    return "\n".join(lines)
