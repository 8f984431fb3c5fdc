"""Sequence-labeling factoid QA: LSTM encoders with a CRF / softmax answer decoder."""

from .config import TrainConfig
from .data import Evidence, QAInstance, SynonymDict, Vocab, generate_labels, load_corpus
from .decoders import LABELS, Lattice, crf_viterbi
from .evaluation import Metrics, evaluate, extract_answer
from .model import QAModel
from .trainer import load_checkpoint, save_checkpoint, train

__all__ = ["TrainConfig", "Evidence", "QAInstance", "SynonymDict", "Vocab", "generate_labels",
           "load_corpus", "LABELS", "Lattice", "crf_viterbi", "Metrics", "evaluate",
           "extract_answer", "QAModel", "load_checkpoint", "save_checkpoint", "train"]
__version__ = "0.1.0"
