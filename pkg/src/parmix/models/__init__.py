from .base import CountingModel, batched_logits, log_softmax, softmax
from .checkpoint import load as load_checkpoint
from .checkpoint import save as save_checkpoint
from .neural import MiniNeuralModel, ModelDims, param_shapes
from .optim import AdamState, NonFiniteGradientError, apply_update
from .tabular import TabularModel, point_mass_chain, tabular_random, uniform_tabular

__all__ = [
    "AdamState",
    "CountingModel",
    "MiniNeuralModel",
    "ModelDims",
    "NonFiniteGradientError",
    "TabularModel",
    "apply_update",
    "batched_logits",
    "load_checkpoint",
    "log_softmax",
    "param_shapes",
    "point_mass_chain",
    "save_checkpoint",
    "softmax",
    "tabular_random",
    "uniform_tabular",
]
