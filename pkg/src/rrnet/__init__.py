"""Graph neural network for mapping nodes across two modalities.

Two intra-modality graphs and one bipartite graph of candidate links are
encoded, refined by alternating intra and inter message-passing units, and
decoded into one link probability per inter edge.
"""

from .errors import (
    BoundsError, ConfigError, ContractError, DataError, FormatError, NumericError,
    ResourceError, RRNetError, ShapeError, StateError,
)
from .graph import EdgeList, GraphBundle, NodeTable
from .model import ModelConfig, ModelParams, forward, init_params, loss
from .tensor import Tensor

__all__ = [
    "BoundsError", "ConfigError", "ContractError", "DataError", "FormatError", "NumericError",
    "ResourceError", "RRNetError", "ShapeError", "StateError",
    "EdgeList", "GraphBundle", "NodeTable",
    "ModelConfig", "ModelParams", "forward", "init_params", "loss",
    "Tensor",
]
