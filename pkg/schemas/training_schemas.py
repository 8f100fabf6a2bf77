from typing import List, Optional
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from exceptions.base import ShapeException


class LRMilestone(BaseModel):
    """A partir de ``fraction``·iterations la tasa pasa a ``lr``"""
    fraction: float = Field(..., gt=0, le=1)
    lr: float = Field(..., gt=0)

    model_config = ConfigDict(frozen=True)


class TrainConfig(BaseModel):
    """
    Configuración de un bucle de entrenamiento.

    Sin ``lr_schedule`` explícito se usa la mitad de la tasa al 50% de las
    iteraciones y una décima parte al 90%. Una lista vacía deja la tasa constante.
    """
    iterations: int = Field(..., ge=0)
    batch_size: int = Field(1, ge=1)
    patch_size: int = Field(512, ge=1, description="Lado del parche en píxeles empaquetados")
    lr_initial: float = Field(1e-4, gt=0)
    lr_schedule: Optional[List[LRMilestone]] = None
    ratios: List[float] = Field(default_factory=lambda: [100.0, 250.0, 300.0])
    seed: int = 0

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("ratios")
    @classmethod
    def _check_ratios(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("Se necesita al menos un ratio")
        if any(r < 1 for r in v):
            raise ValueError(f"Todos los ratios deben ser >= 1: {v}")
        return v

    @model_validator(mode="after")
    def _check_schedule(self):
        fractions = [m.fraction for m in self.milestones()]
        if any(b <= a for a, b in zip(fractions, fractions[1:])):
            raise ValueError(f"Las fracciones del calendario deben ser estrictamente crecientes: {fractions}")
        return self

    def milestones(self) -> List[LRMilestone]:
        if self.lr_schedule is not None:
            return list(self.lr_schedule)
        return [
            LRMilestone(fraction=0.5, lr=self.lr_initial / 2),
            LRMilestone(fraction=0.9, lr=self.lr_initial / 10),
        ]

    def lr_at(self, iteration: int) -> float:
        lr = self.lr_initial
        for milestone in self.milestones():
            if iteration >= milestone.fraction * self.iterations:
                lr = milestone.lr
        return lr

    def check_patch_size(self, divisor: int) -> None:
        if self.patch_size % divisor != 0:
            raise ShapeException(f"patch_size {self.patch_size} no es múltiplo de {divisor}")

    @classmethod
    def csa_phase(cls, **overrides) -> "TrainConfig":
        """Fase 1 del ajuste: 1000 iteraciones a 1e-4 constante"""
        values = {"iterations": 1000, "lr_initial": 1e-4, "lr_schedule": []}
        values.update(overrides)
        return cls(**values)

    @classmethod
    def omnr_phase(cls, **overrides) -> "TrainConfig":
        """Fase 2 del ajuste: 500 iteraciones a 1e-5 constante"""
        values = {"iterations": 500, "lr_initial": 1e-5, "lr_schedule": []}
        values.update(overrides)
        return cls(**values)


class OutOfModelSpec(BaseModel):
    """Residuo fuera de modelo de la cámara objetivo: patrón fijo + bandas por columna"""
    fixed_pattern_amplitude: float = Field(8.0, ge=0, description="ADU")
    banding_period: int = Field(16, ge=2, description="Columnas")
    banding_amplitude: float = Field(4.0, ge=0, description="ADU")
    seed: int = 0

    model_config = ConfigDict(frozen=True, extra="forbid")


class FewShotPair(BaseModel):
    """Par ruidoso/limpio sobre el plano Bayer normalizado, con su procedencia"""
    noisy: np.ndarray
    clean: np.ndarray
    ratio: float = Field(..., ge=1.0)
    K: Optional[float] = Field(None, gt=0)
    sigma_tl: Optional[float] = None
    sigma_r: Optional[float] = None
    camera_id: Optional[str] = None
    scene_id: Optional[str] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.noisy.shape != self.clean.shape:
            raise ValueError(f"noisy {self.noisy.shape} y clean {self.clean.shape} difieren")
        if self.clean.ndim != 2 or self.clean.shape[0] % 2 or self.clean.shape[1] % 2:
            raise ValueError(f"Se espera un plano Bayer [H,W] con lados pares, recibido {self.clean.shape}")
        return self


class TrainResult(BaseModel):
    """Traza de un bucle de entrenamiento"""
    phase: str
    losses: List[float] = Field(default_factory=list)
    learning_rates: List[float] = Field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.losses)

    def window_mean(self, start: int, size: int) -> float:
        window = self.losses[start:start + size] if start >= 0 else self.losses[start:][:size]
        if not window:
            raise ValueError("Ventana vacía")
        return float(np.mean(window))
