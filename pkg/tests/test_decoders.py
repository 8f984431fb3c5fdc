import itertools
import math

import numpy as np
import pytest

from seqqa.decoders import (B, I, O1, O2, DecoderParams, Lattice, crf_log_partition,
                            crf_marginals, crf_nll_and_grad, crf_viterbi, label_ids,
                            label_names, logsumexp, softmax_nll_and_decode,
                            softmax_prev_decode, softmax_prev_nll_and_decode)
from seqqa.numeric import ConfigError, ParamStore, make_rng


def enumerate_scores(em, tr):
    """Independent reference: explicit Python loops over every path."""
    M, L = em.shape
    out = {}
    for path in itertools.product(range(L), repeat=M):
        s = tr[L][path[0]] + em[0][path[0]]
        for j in range(1, M):
            s += tr[path[j - 1]][path[j]] + em[j][path[j]]
        out[path] = s
    return out


def random_lattice(rng, M, L=4):
    return Lattice(rng.uniform(-2, 2, (M, L)), rng.uniform(-2, 2, (L + 1, L)))


def test_label_tables():
    assert (B, I, O1, O2) == (0, 1, 2, 3)
    np.testing.assert_array_equal(label_ids(["B", "I", "O", "O2"]), [0, 1, 2, 3])
    assert label_names([0, 1, 2, 3]) == ["B", "I", "O1", "O2"]


def test_logsumexp_is_stable():
    assert logsumexp(np.array([1000.0, 1000.0])) == pytest.approx(1000 + math.log(2))
    np.testing.assert_allclose(logsumexp(np.array([[0.0, 0.0], [-1e4, 0.0]]), axis=1),
                               [math.log(2), 0.0])


def test_hand_computed_two_step_lattice():
    em = np.array([[1.0, 0.0], [0.0, 2.0]])
    tr = np.array([[0.5, -0.5], [0.0, 1.0], [0.0, 0.3]])
    lat = Lattice(em, tr)
    scores = {(0, 0): 0 + 1 + 0.5 + 0, (0, 1): 0 + 1 - 0.5 + 2,
              (1, 0): 0.3 + 0 + 0 + 0, (1, 1): 0.3 + 0 + 1 + 2}
    log_z = math.log(sum(math.exp(s) for s in scores.values()))
    assert crf_log_partition(lat) == pytest.approx(log_z, rel=1e-14)
    path, best = crf_viterbi(lat)
    assert tuple(path) == (1, 1)
    assert best == pytest.approx(3.3)
    for p, s in scores.items():
        assert lat.score(p) == pytest.approx(s)


@pytest.mark.parametrize("M", [1, 2, 3, 5, 6])
def test_forward_backward_against_enumeration(M):
    rng = make_rng(M)
    for _ in range(10):
        lat = random_lattice(rng, M)
        scores = enumerate_scores(lat.emissions, lat.transitions)
        vals = np.array(list(scores.values()))
        log_z = math.log(np.exp(vals - vals.max()).sum()) + vals.max()
        assert crf_log_partition(lat) == pytest.approx(log_z, rel=1e-12)
        unary, pair, lz = crf_marginals(lat)
        ref_u = np.zeros((M, 4))
        ref_p = np.zeros((max(M - 1, 0), 4, 4))
        for path, s in scores.items():
            w = math.exp(s - log_z)
            for j, y in enumerate(path):
                ref_u[j, y] += w
            for j in range(M - 1):
                ref_p[j, path[j], path[j + 1]] += w
        np.testing.assert_allclose(unary, ref_u, rtol=1e-10, atol=1e-15)
        np.testing.assert_allclose(pair, ref_p, rtol=1e-10, atol=1e-15)
        best_path = max(scores, key=scores.get)
        path, best = crf_viterbi(lat)
        assert tuple(path) == best_path
        assert best == pytest.approx(scores[best_path], rel=1e-13)


def test_marginals_are_consistent():
    lat = random_lattice(make_rng(0), 6)
    unary, pair, _ = crf_marginals(lat)
    np.testing.assert_allclose(unary.sum(axis=1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(pair.sum(axis=2), unary[:-1], rtol=1e-12)
    np.testing.assert_allclose(pair.sum(axis=1), unary[1:], rtol=1e-12)


def test_viterbi_ties_resolve_to_lowest_labels():
    lat = Lattice(np.zeros((4, 4)), np.zeros((5, 4)))
    path, best = crf_viterbi(lat)
    np.testing.assert_array_equal(path, [0, 0, 0, 0])
    assert best == 0.0


def test_crf_gradient_against_finite_differences():
    rng = make_rng(3)
    lat = random_lattice(rng, 5)
    y = np.array([2, 0, 1, 3, 3])
    nll, d_em, d_tr = crf_nll_and_grad(lat, y)
    assert nll == pytest.approx(crf_log_partition(lat) - lat.score(y))
    h = 1e-6
    for arr, grad in ((lat.emissions, d_em), (lat.transitions, d_tr)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = crf_log_partition(lat) - lat.score(y)
            arr[idx] = old - h
            down = crf_log_partition(lat) - lat.score(y)
            arr[idx] = old
            assert grad[idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)


def test_golden_is_validated():
    lat = random_lattice(make_rng(0), 3)
    with pytest.raises(ConfigError):
        crf_nll_and_grad(lat, [0, 1])
    with pytest.raises(ConfigError):
        crf_nll_and_grad(lat, [0, 1, 4])
    with pytest.raises(ConfigError):
        Lattice(np.zeros((3, 4)), np.zeros((4, 4)))


def test_softmax_decoder():
    em = np.array([[2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 3.0]])
    nll, d_em, dec = softmax_nll_and_decode(em, [0, 3])
    np.testing.assert_array_equal(dec, [0, 3])
    ref = -(2 - math.log(math.exp(2) + 3)) - (3 - math.log(math.exp(3) + 3))
    assert nll == pytest.approx(ref)
    np.testing.assert_allclose(d_em.sum(axis=1), 0.0, atol=1e-15)


def test_softmax_prev_uses_golden_history_in_training_and_own_in_decoding():
    L = 4
    U = np.zeros((L, L + 1))
    U[I, B] = 5.0    # after B, strongly prefer I
    em = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
    np.testing.assert_array_equal(softmax_prev_decode(em, U), [B, I])
    nll, d_em, d_U, _ = softmax_prev_nll_and_decode(em, U, [O1, O1])
    logits = em + U[:, [L, O1]].T
    ref = -sum(logits[j, O1] - logsumexp(logits[j]) for j in range(2))
    assert nll == pytest.approx(ref)
    # only columns for the golden previous labels (START, O1) receive gradient
    assert not d_U[:, [B, I, O2]].any()
    h = 1e-6
    for idx in [(0, L), (2, O1), (3, O1)]:
        Up, Um = U.copy(), U.copy()
        Up[idx] += h
        Um[idx] -= h
        num = (softmax_prev_nll_and_decode(em, Up, [O1, O1])[0]
               - softmax_prev_nll_and_decode(em, Um, [O1, O1])[0]) / (2 * h)
        assert d_U[idx] == pytest.approx(num, rel=1e-6)


def test_zero_transitions_reduce_crf_to_softmax():
    rng = make_rng(11)
    for _ in range(20):
        M = int(rng.integers(1, 9))
        em = rng.normal(size=(M, 4))
        y = rng.integers(0, 4, M)
        lat = Lattice(em, np.zeros((5, 4)))
        crf_nll = crf_nll_and_grad(lat, y)[0]
        sm_nll, _, sm_dec = softmax_nll_and_decode(em, y)
        assert crf_nll == pytest.approx(sm_nll, rel=1e-12)
        np.testing.assert_array_equal(crf_viterbi(lat)[0], sm_dec)


@pytest.mark.parametrize("kind,extra", [("crf", (5, 4)), ("softmax", None),
                                        ("softmax_prev", (4, 5))])
def test_decoder_params_register_tensors(kind, extra):
    store = ParamStore()
    dec = DecoderParams(store, kind, 3, make_rng(0))
    assert store["decoder.W_e"].value.shape == (4, 3)
    names = [t.name for t in dec.tensors()]
    if extra is None:
        assert names == ["decoder.W_e"]
    else:
        assert dec.tensors()[1].value.shape == extra
    with pytest.raises(ConfigError):
        DecoderParams(ParamStore(), "hmm", 3)
