"""Empaquetado del mosaico Bayer RGGB, normalización ADU ↔ [0,1] y recorte en parches."""
from typing import List, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from engine.tensor import Tensor
from exceptions.base import ShapeException, ValidationException
from schemas.noise_schemas import SensorLevels

# Canales (R, G1, G2, B) en los desplazamientos (0,0), (0,1), (1,0), (1,1) del tile 2×2
BAYER_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))

ArrayOrTensor = Union[np.ndarray, Tensor]


def _array(value: ArrayOrTensor) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


class BayerFrame(BaseModel):
    """Plano único del sensor (normalizado o en ADU) con su patrón y niveles"""
    plane: np.ndarray
    pattern: Literal["RGGB"] = "RGGB"
    levels: SensorLevels = Field(default_factory=SensorLevels)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _check_plane(self):
        if self.plane.ndim != 2:
            raise ValueError(f"El plano Bayer debe ser [H,W], recibido {self.plane.shape}")
        if self.plane.shape[0] % 2 or self.plane.shape[1] % 2:
            raise ValueError(f"H y W deben ser pares, recibido {self.plane.shape}")
        return self

    @property
    def height(self) -> int:
        return self.plane.shape[0]

    @property
    def width(self) -> int:
        return self.plane.shape[1]


def pack_bayer(frame: Union[BayerFrame, ArrayOrTensor]) -> np.ndarray:
    """[H,W] → [4, H/2, W/2] en orden (R, G1, G2, B)"""
    plane = frame.plane if isinstance(frame, BayerFrame) else _array(frame)
    if plane.ndim != 2:
        raise ShapeException(f"pack_bayer espera [H,W], recibido {plane.shape}")
    h, w = plane.shape
    if h % 2 or w % 2:
        raise ShapeException(f"pack_bayer requiere H y W pares, recibido {h}×{w}")
    return np.stack([plane[dy:h:2, dx:w:2] for dy, dx in BAYER_OFFSETS], axis=0)


def unpack_bayer(packed: ArrayOrTensor) -> np.ndarray:
    """Inversa exacta de ``pack_bayer``"""
    data = _array(packed)
    if data.ndim != 3 or data.shape[0] != 4:
        raise ShapeException(f"unpack_bayer espera [4,h,w], recibido {data.shape}")
    _, h, w = data.shape
    plane = np.empty((2 * h, 2 * w), dtype=data.dtype)
    for channel, (dy, dx) in enumerate(BAYER_OFFSETS):
        plane[dy::2, dx::2] = data[channel]
    return plane


def crop_patches(frame: ArrayOrTensor, patch: int, mode: Literal["non_overlap"] = "non_overlap") -> List[np.ndarray]:
    """
    Teselas disjuntas de ``patch``×``patch`` en orden fila-mayor; el sobrante se descarta.

    Opera sobre los dos últimos ejes, así que sirve tanto para planos [H,W] como
    para tensores empaquetados [C,H,W].
    """
    if mode != "non_overlap":
        raise ValidationException(f"Modo de recorte no soportado: {mode}")
    data = _array(frame)
    if data.ndim < 2:
        raise ShapeException(f"crop_patches necesita al menos 2 ejes, recibido {data.shape}")
    h, w = data.shape[-2:]
    if patch < 1 or patch > h or patch > w:
        raise ShapeException(f"Parche {patch} mayor que el frame {h}×{w}")
    return [
        data[..., row:row + patch, col:col + patch]
        for row in range(0, h - patch + 1, patch)
        for col in range(0, w - patch + 1, patch)
    ]


def normalize(adu: ArrayOrTensor, levels: SensorLevels) -> np.ndarray:
    """(adu − black)/(white − black), sin recortar"""
    data = _array(adu)
    dtype = data.dtype if data.dtype in (np.float32, np.float64) else np.dtype(np.float64)
    return ((data - dtype.type(levels.black_level)) / dtype.type(levels.span)).astype(dtype, copy=False)


def denormalize(norm: ArrayOrTensor, levels: SensorLevels) -> np.ndarray:
    """Inversa de ``normalize`` salvo redondeo"""
    data = _array(norm)
    dtype = data.dtype if data.dtype in (np.float32, np.float64) else np.dtype(np.float64)
    return (data * dtype.type(levels.span) + dtype.type(levels.black_level)).astype(dtype, copy=False)
