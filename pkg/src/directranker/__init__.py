"""DirectRanker: pairwise learning to rank with a shared feature net and an antisymmetric head."""

__version__ = "0.1.0"

from .letor import Dataset, binarize, parse_letor, read_letor
from .metrics import average_precision, dcg_at_k, evaluate, ndcg_at_k, precision_at_k
from .model import DirectRanker, OutputHead, load_model, save_model
from .net import AdamState, FeatureNet, Layer, adam_step
from .training import TrainConfig, build_pairs, train

__all__ = [
    "AdamState",
    "Dataset",
    "DirectRanker",
    "FeatureNet",
    "Layer",
    "OutputHead",
    "TrainConfig",
    "adam_step",
    "average_precision",
    "binarize",
    "build_pairs",
    "dcg_at_k",
    "evaluate",
    "load_model",
    "ndcg_at_k",
    "parse_letor",
    "precision_at_k",
    "read_letor",
    "save_model",
    "train",
]
