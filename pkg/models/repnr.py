"""
Bloque RepNR: ramas CSA por cámara + convolución 3×3 compartida + rama OMNR opcional.

El desplazamiento de la CSA también se escribe en el anillo de padding, es
decir, la afinidad actúa sobre la entrada ya rellenada con ceros. Gracias a
eso la fusión en una sola convolución es exacta también en los bordes:

    W̃ = W0·scale + W1
    b̃ = b0 + b1 + Σ_{i,u,v} W0[:, i, u, v]·shift[i]
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Literal, Optional, Tuple

import numpy as np

from engine import functional as F
from engine.tensor import Tensor, parameter
from exceptions.base import PhaseException, ShapeException, ValidationException

InitMode = Literal["average", "unit"]


class RepNRPhase(str, Enum):
    PRETRAIN = "pretrain"
    FINETUNE_CSA = "finetune_csa"
    FINETUNE_OMNR = "finetune_omnr"
    DEPLOYED = "deployed"


def he_uniform(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype) -> np.ndarray:
    """U(−√(6/fan_in), √(6/fan_in)) muestreado en float64 y convertido a ``dtype``"""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class CSABranch:
    """Alineación específica de cámara: y = scale·x + shift por canal de entrada"""
    scale: Tensor
    shift: Tensor

    def __post_init__(self):
        if self.scale.shape != self.shift.shape or self.scale.ndim != 1:
            raise ShapeException(f"scale {self.scale.shape} y shift {self.shift.shape} deben ser vectores iguales")

    @classmethod
    def identity(cls, channels: int, dtype) -> "CSABranch":
        return cls(scale=parameter(np.ones(channels), dtype=dtype), shift=parameter(np.zeros(channels), dtype=dtype))

    @property
    def channels(self) -> int:
        return self.scale.shape[0]


@dataclass
class PlainConv:
    """Convolución 3×3 plana resultante de fusionar un bloque"""
    weight: Tensor
    bias: Tensor

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weight.data)) and np.all(np.isfinite(self.bias.data))):
            raise ValidationException("PlainConv con valores no finitos")

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        return F.conv3x3(x, self.weight, self.bias)

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return [("conv.weight", self.weight), ("conv.bias", self.bias)]


class RepNRBlock:
    """
    Bloque reparametrizable.

    - pretrain: m ramas CSA, sin OMNR; cada muestra usa la rama de su cámara virtual
    - finetune_csa: una sola rama CSA^T
    - finetune_omnr: CSA^T + OMNR inicializada a cero
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        m: int,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        if m < 1:
            raise ValidationException(f"Un bloque RepNR necesita al menos una rama, recibido m={m}")
        self.dtype = np.dtype(dtype)
        fan_in = in_channels * 9
        shape = (out_channels, in_channels, 3, 3)
        data = he_uniform(shape, fan_in, rng, self.dtype) if rng is not None else np.zeros(shape, self.dtype)
        self.weight = parameter(data, dtype=self.dtype)
        self.bias = parameter(np.zeros(out_channels), dtype=self.dtype)
        self.branches: List[CSABranch] = [CSABranch.identity(in_channels, self.dtype) for _ in range(m)]
        self.omnr_weight: Optional[Tensor] = None
        self.omnr_bias: Optional[Tensor] = None
        self.phase = RepNRPhase.PRETRAIN
        self.online = False

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def has_omnr(self) -> bool:
        return self.omnr_weight is not None

    # ============================================
    # 🔹 Forward
    # ============================================
    def _branch(self, branch_index: Optional[int]) -> CSABranch:
        if self.phase == RepNRPhase.PRETRAIN:
            if branch_index is None:
                raise ValidationException("En pre-entrenamiento hay que indicar la rama (cámara virtual)")
            if not 0 <= branch_index < len(self.branches):
                raise ValidationException(f"Rama {branch_index} fuera de rango [0, {len(self.branches)})")
            return self.branches[branch_index]
        return self.branches[0]

    def forward(self, x: Tensor, branch_index: Optional[int] = None) -> Tensor:
        if self.phase == RepNRPhase.DEPLOYED:
            raise PhaseException(self.phase.value, "repnr_forward")
        branch = self._branch(branch_index)
        if self.online:
            return self._forward_fused(x, branch)

        aligned = F.channel_affine(x, branch.scale, branch.shift)
        out = F.conv3x3(aligned, self.weight, self.bias, pad_values=branch.shift)
        if self.has_omnr:
            out = F.add(out, F.conv3x3(x, self.omnr_weight, self.omnr_bias))
        return out

    def _forward_fused(self, x: Tensor, branch: CSABranch) -> Tensor:
        # Reparametrización en línea: el kernel fusionado se construye de forma diferenciable
        weight = F.scale_in_channels(self.weight, branch.scale)
        bias = F.add(self.bias, F.kernel_shift_sum(self.weight, branch.shift))
        if self.has_omnr:
            weight = F.add(weight, self.omnr_weight)
            bias = F.add(bias, self.omnr_bias)
        return F.conv3x3(x, weight, bias)

    # ============================================
    # 🔹 Transiciones de fase
    # ============================================
    def init_target_csa(self, mode: InitMode = "average") -> "RepNRBlock":
        """Sustituye las m ramas por una sola CSA^T (media de las ramas o (1, 0))"""
        if self.phase != RepNRPhase.PRETRAIN:
            raise PhaseException(self.phase.value, "init_target_csa")
        if mode == "average":
            scale = np.mean(np.stack([b.scale.data for b in self.branches]), axis=0)
            shift = np.mean(np.stack([b.shift.data for b in self.branches]), axis=0)
        elif mode == "unit":
            scale = np.ones(self.in_channels)
            shift = np.zeros(self.in_channels)
        else:
            raise ValidationException(f"Modo de inicialización desconocido '{mode}' (average|unit)")
        self.branches = [CSABranch(scale=parameter(scale, dtype=self.dtype), shift=parameter(shift, dtype=self.dtype))]
        self.phase = RepNRPhase.FINETUNE_CSA
        return self

    def add_omnr(self) -> "RepNRBlock":
        """Añade la rama OMNR con pesos y bias exactamente cero"""
        if self.phase != RepNRPhase.FINETUNE_CSA:
            raise PhaseException(self.phase.value, "add_omnr")
        self.omnr_weight = parameter(np.zeros_like(self.weight.data), dtype=self.dtype)
        self.omnr_bias = parameter(np.zeros_like(self.bias.data), dtype=self.dtype)
        self.phase = RepNRPhase.FINETUNE_OMNR
        return self

    # ============================================
    # 🔹 Fusión
    # ============================================
    def fuse(self) -> PlainConv:
        if len(self.branches) != 1:
            raise ValidationException(
                f"El bloque tiene {len(self.branches)} ramas: usar fuse_branch(k) para elegir una"
            )
        return self.fuse_branch(0)

    def fuse_branch(self, k: int) -> PlainConv:
        if not 0 <= k < len(self.branches):
            raise ValidationException(f"Rama {k} fuera de rango [0, {len(self.branches)})")
        branch = self.branches[k]
        w0 = self.weight.data
        weight = w0 * branch.scale.data.reshape(1, -1, 1, 1)
        bias = self.bias.data + (w0 * branch.shift.data.reshape(1, -1, 1, 1)).sum(axis=(1, 2, 3))
        if self.has_omnr:
            weight = weight + self.omnr_weight.data
            bias = bias + self.omnr_bias.data
        return PlainConv(weight=Tensor(weight, dtype=self.dtype), bias=Tensor(bias, dtype=self.dtype))

    # ============================================
    # 🔹 Parámetros
    # ============================================
    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        params = [("conv.weight", self.weight), ("conv.bias", self.bias)]
        for k, branch in enumerate(self.branches):
            params.append((f"csa.{k}.scale", branch.scale))
            params.append((f"csa.{k}.shift", branch.shift))
        if self.has_omnr:
            params.append(("omnr.weight", self.omnr_weight))
            params.append(("omnr.bias", self.omnr_bias))
        return params

    def set_trainable(self, conv: bool, csa: bool, omnr: bool) -> None:
        self.weight.requires_grad = conv
        self.bias.requires_grad = conv
        for branch in self.branches:
            branch.scale.requires_grad = csa
            branch.shift.requires_grad = csa
        if self.has_omnr:
            self.omnr_weight.requires_grad = omnr
            self.omnr_bias.requires_grad = omnr
