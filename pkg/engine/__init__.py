"""Motor de tensores con diferenciación automática en modo reverso"""

from engine.tensor import Tensor, backward, no_grad, parameter, resolve_dtype
from engine.optim import Adam, AdamState, adam_step

__all__ = ["Tensor", "backward", "no_grad", "parameter", "resolve_dtype", "Adam", "AdamState", "adam_step"]
