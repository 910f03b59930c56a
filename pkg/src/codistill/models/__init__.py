"""Encoder families, projection heads, and the trained model pair."""

from .convnet import ConvEncoder, ResidualBlock
from .heads import MlpHead, TokenHead
from .pair import EncoderModel, ModelPair, make_adapter, momentum_copy
from .representation import Representation
from .vit import VitEncoder, bilinear_grid_matrix

__all__ = [
    "ConvEncoder",
    "ResidualBlock",
    "MlpHead",
    "TokenHead",
    "EncoderModel",
    "ModelPair",
    "make_adapter",
    "momentum_copy",
    "Representation",
    "VitEncoder",
    "bilinear_grid_matrix",
]
