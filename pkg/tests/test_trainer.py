import numpy as np
import pytest

from seqqa.config import TrainConfig
from seqqa.data import DataError
from seqqa.model import QAModel
from seqqa.numeric import CheckpointError, ConfigError, finite_diff_check, make_rng
from seqqa.synthetic import generate_corpus
from seqqa.trainer import (TrainingError, batch_objective, batch_objective_value,
                           l2_coefficient, load_checkpoint, save_checkpoint, train)

from conftest import tiny_example, tiny_model


@pytest.mark.parametrize("overrides", [{}, {"n_layers": 1}, {"n_layers": 2},
                                       {"candidate": "tanh"}, {"question_dropout": False}])
def test_model_gradient(overrides):
    model = tiny_model(**overrides)
    ex = tiny_example()
    model.store.zero_grad()
    nll = model.forward_backward(ex)
    assert nll == pytest.approx(model.nll(ex), rel=1e-12)
    rep = finite_diff_check(lambda: model.nll(ex), model.store, extended=True)
    assert rep.passed, rep.format()


def test_batch_objective_includes_l2_gradient():
    model = tiny_model()
    batch = [tiny_example(), tiny_example((2, 2, 0, 3, 3))]
    bl = batch_objective(model, batch, training=False, lam=0.3)
    assert bl.loss == pytest.approx(bl.nll + bl.l2)
    assert bl.l2 == pytest.approx(0.15 * model.l2())
    assert bl.loss == pytest.approx(batch_objective_value(model, batch, 0.3), rel=1e-12)
    rep = finite_diff_check(lambda: batch_objective_value(model, batch, 0.3), model.store,
                            extended=True, max_per_tensor=6)
    assert rep.passed, rep.format()


def test_l2_coefficient_scaling():
    cfg = TrainConfig(lam=0.016)
    assert l2_coefficient(cfg, 800) == pytest.approx(0.016 / 800)
    assert l2_coefficient(cfg.replace(l2_scale="batch"), 800) == 0.016


def test_frozen_tensors_are_excluded():
    model = tiny_model()
    model.embeddings.trainable = False
    model.store.zero_grad()
    model.forward_backward(tiny_example())
    assert not model.embeddings.grad.any()
    assert model.embeddings not in model.store.trainable()


def test_labels_must_match_evidence_length():
    with pytest.raises(ConfigError):
        tiny_model().forward_backward(tiny_example((2, 0, 1)))


def _small_run(tmp_path=None, **cfg_overrides):
    rng = make_rng(0)
    train_c, syn = generate_corpus(30, rng, "train")
    valid_c, _ = generate_corpus(10, rng, "valid")
    cfg = TrainConfig(**{"H": 8, "D": 8, "batch_size": 10, "epochs": 3, "seed": 4,
                         **cfg_overrides})
    kw = {}
    if tmp_path is not None:
        kw = {"log_path": tmp_path / "log.tsv", "checkpoint_path": str(tmp_path / "m.bin")}
    return train(train_c, valid_c, cfg, syn, **kw), valid_c, syn


def test_training_reduces_loss_and_is_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    r1, _, _ = _small_run(tmp_path / "a", epochs=4)
    r2, _, _ = _small_run(tmp_path / "b", epochs=4)
    assert r1.batch_losses == r2.batch_losses
    assert r1.log[-1].nll < r1.log[0].nll
    strip = lambda p: [l.rsplit("\t", 1)[0] for l in p.read_text().splitlines()]
    assert strip(tmp_path / "a" / "log.tsv") == strip(tmp_path / "b" / "log.tsv")
    assert len(strip(tmp_path / "a" / "log.tsv")) == len(r1.log)


def test_checkpoint_roundtrip(tmp_path):
    result, valid_c, _ = _small_run(tmp_path)
    ck = load_checkpoint(tmp_path / "m.bin")
    assert ck.epoch == result.best_epoch
    assert ck.vocab.itos == result.vocab.itos
    for p in result.model.store:
        np.testing.assert_array_equal(ck.model.store[p.name].value, p.value)
    from seqqa.data import make_example
    inst = valid_c[0]
    ex = make_example(ck.vocab, inst.question, inst.evidences[0])
    np.testing.assert_array_equal(ck.model.decode(ex), result.model.decode(ex))


def test_checkpoint_architecture_mismatch(tmp_path):
    model = QAModel.random(TrainConfig(H=4, D=4), 5, make_rng(0))
    from seqqa.data import Vocab
    save_checkpoint(tmp_path / "m.bin", model, Vocab(["a", "b", "c", "d"]))
    with pytest.raises(CheckpointError, match="H: 4 vs 6"):
        load_checkpoint(tmp_path / "m.bin", TrainConfig(H=6, D=4))
    # non-architecture keys may differ
    load_checkpoint(tmp_path / "m.bin", TrainConfig(H=4, D=4, lr=0.5))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.bin")


def test_early_stopping_restores_best(tmp_path):
    result, _, _ = _small_run(epochs=8, patience=0, lr=1e-6)
    assert len(result.log) <= 8
    if len(result.log) < 8:
        assert result.log[-1].f1 <= result.best_f1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    with pytest.raises(TrainingError, match=r"non-finite loss .* at epoch 1 batch \d+"):
        _small_run(lr=1e300, epochs=1)


def test_empty_corpus():
    with pytest.raises(DataError):
        train([], [], TrainConfig())
