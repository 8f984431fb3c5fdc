"""Exhaustive-enumeration reference for the linear-chain CRF.

Used by ``qa oracle-check`` and the tests; only practical for short lattices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .decoders import Lattice, crf_log_partition, crf_marginals, crf_viterbi, logsumexp
from .numeric import make_rng


def enumerate_paths(lat: Lattice):
    """All label sequences with their scores, in lexicographic order."""
    M, L = lat.emissions.shape
    paths = list(itertools.product(range(L), repeat=M))
    return paths, np.array([lat.score(p) for p in paths])


def brute_force(lat: Lattice):
    """Returns ``(log_z, best_path, best_score, unary_marginals)``.

    ``np.argmax`` over lexicographically ordered paths picks the
    lexicographically smallest path among exact ties.
    """
    M, L = lat.emissions.shape
    paths, scores = enumerate_paths(lat)
    log_z = logsumexp(scores)
    k = int(np.argmax(scores))
    probs = np.exp(scores - log_z)
    unary = np.zeros((M, L))
    P = np.array(paths)
    for j in range(M):
        np.add.at(unary[j], P[:, j], probs)
    return log_z, np.array(paths[k]), scores[k], unary


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)))


@dataclass
class OracleReport:
    n_lattices: int = 0
    max_rel: dict = field(default_factory=lambda: {"log_z": 0.0, "viterbi_score": 0.0,
                                                   "marginals": 0.0})
    path_mismatches: List[int] = field(default_factory=list)
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return not self.path_mismatches and all(v <= self.tol for v in self.max_rel.values())

    def format(self) -> str:
        parts = [f"{k}={v:.2e}" for k, v in self.max_rel.items()]
        return (f"{self.n_lattices} lattices, path mismatches={len(self.path_mismatches)}, "
                f"max rel: " + " ".join(parts))


def crf_oracle_suite(n: int = 200, max_len: int = 6, num_labels: int = 4, seed: int = 0,
                     scale: float = 2.0, tol: float = 1e-9) -> OracleReport:
    """Random lattices with entries ~ U(-scale, scale), lengths 1..max_len."""
    rng = make_rng(seed)
    rep = OracleReport(tol=tol)
    L = num_labels
    for i in range(n):
        M = int(rng.integers(1, max_len + 1))
        lat = Lattice(rng.uniform(-scale, scale, (M, L)), rng.uniform(-scale, scale, (L + 1, L)))
        log_z, path, score, unary = brute_force(lat)
        got_path, got_score = crf_viterbi(lat)
        got_unary = crf_marginals(lat)[0]
        errs = {"log_z": _rel(crf_log_partition(lat), log_z),
                "viterbi_score": _rel(got_score, score),
                "marginals": _rel(got_unary, unary)}
        for k, v in errs.items():
            rep.max_rel[k] = max(rep.max_rel[k], v)
        if not np.array_equal(got_path, path):
            rep.path_mismatches.append(i)
        rep.n_lattices += 1
    return rep
