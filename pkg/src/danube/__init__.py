"""CPU inference engine for Danube3-family models."""

from .config import DANUBE3_4B, DANUBE3_500M, ModelConfig, count_parameters
from .quant import QuantPolicy, QuantType, predict_model_size
from .runtime import KvCache, Model, forward
from .tensor import RopeParams, Tensor

__version__ = "0.1.0"

__all__ = [
    "DANUBE3_4B",
    "DANUBE3_500M",
    "ModelConfig",
    "count_parameters",
    "QuantPolicy",
    "QuantType",
    "predict_model_size",
    "KvCache",
    "Model",
    "forward",
    "RopeParams",
    "Tensor",
    "__version__",
]
