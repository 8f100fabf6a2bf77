from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from engine.tensor import Tensor
from exceptions.base import ShapeException, ValidationException


@dataclass
class AdamState:
    """Momentos de Adam; solo cambia a través de ``adam_step``"""
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    param_steps: list[int] = field(default_factory=list)
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValidationException(f"beta1/beta2 deben estar en [0,1): {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValidationException(f"epsilon debe ser positivo: {self.epsilon}")

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
        state.param_steps = [0] * len(params)
        return state


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState, lr: float) -> None:
    """Actualización Adam con corrección de sesgo y sin weight decay.

    Un gradiente ``None`` (el parámetro no participó en el grafo) deja intactos
    el parámetro, sus momentos y su contador. ``state.step`` cuenta llamadas;
    la corrección de sesgo usa el contador propio de cada parámetro.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeException(
            f"params ({len(params)}), grads ({len(grads)}) y momentos ({len(state.first_moment)}) no están alineados"
        )
    if len(state.param_steps) != len(params):
        state.param_steps = [state.step] * len(params)
    state.step += 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    for index, (param, grad) in enumerate(zip(params, grads)):
        m = state.first_moment[index]
        v = state.second_moment[index]
        if m.shape != param.data.shape:
            raise ShapeException(f"Momento {m.shape} no coincide con el parámetro {param.data.shape}")
        if grad is None:
            continue
        if grad.shape != param.data.shape:
            raise ShapeException(f"Gradiente {grad.shape} no coincide con el parámetro {param.data.shape}")
        state.param_steps[index] += 1
        correction1 = 1.0 - b1 ** state.param_steps[index]
        correction2 = 1.0 - b2 ** state.param_steps[index]
        dtype = param.data.dtype
        m *= dtype.type(b1)
        m += dtype.type(1.0 - b1) * grad
        v *= dtype.type(b2)
        v += dtype.type(1.0 - b2) * grad * grad
        m_hat = m / dtype.type(correction1)
        v_hat = v / dtype.type(correction2)
        param.data -= dtype.type(lr) * m_hat / (np.sqrt(v_hat) + dtype.type(eps))


class Adam:
    """Optimizador con estado sobre una lista fija de parámetros"""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.for_parameters(self.params, beta1=betas[0], beta2=betas[1], epsilon=eps)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self, lr: Optional[float] = None) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr if lr is None else lr)
