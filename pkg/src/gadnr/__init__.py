"""Graph anomaly detection by neighborhood reconstruction."""

from .errors import ConfigError, DataError, GadnrError, NumericError
from .graph import AttributedGraph, build_index, load_bundle, load_graph, normalized_adjacency, save_bundle
from .model import ModelConfig, init_params
from .trainer import ScoreConfig, TrainConfig, score_nodes, train

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph",
    "ConfigError",
    "DataError",
    "GadnrError",
    "ModelConfig",
    "NumericError",
    "ScoreConfig",
    "TrainConfig",
    "build_index",
    "init_params",
    "load_bundle",
    "load_graph",
    "normalized_adjacency",
    "save_bundle",
    "score_nodes",
    "train",
]
