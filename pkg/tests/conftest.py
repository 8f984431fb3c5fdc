import numpy as np
import pytest

from seqqa.config import TrainConfig
from seqqa.data import Example
from seqqa.evidence import FeatureIds
from seqqa.model import QAModel
from seqqa.numeric import make_rng


def tiny_example(labels=(2, 0, 1, 3, 3)):
    return Example(np.array([1, 2, 3, 4]), np.array([5, 2, 6, 7, 1]),
                   FeatureIds([0, 1, 0, 0, 1], [1, 0, 0, 1, 0]),
                   None if labels is None else np.array(labels))


def tiny_model(seed=1, jitter=0.1, **overrides):
    cfg = TrainConfig(**{"H": 4, "D": 4, "dropout": 0.0, **overrides})
    rng = make_rng(seed)
    model = QAModel.random(cfg, 8, rng)
    for p in model.store:
        p.value += rng.normal(0.0, jitter, p.value.shape)
    return model


@pytest.fixture
def rng():
    return make_rng(12345)
