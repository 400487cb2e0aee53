"""Parallel and sequential scheduled sampling for autoregressive models,
with exact enumeration of the resulting conditioning distributions."""

from .core import Batch, Example, RngStream, StreamArray, Vocab, draw_categorical, split_stream
from .schedule import MixingConfig, mixing_prob

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "Example",
    "MixingConfig",
    "RngStream",
    "StreamArray",
    "Vocab",
    "draw_categorical",
    "mixing_prob",
    "split_stream",
]
