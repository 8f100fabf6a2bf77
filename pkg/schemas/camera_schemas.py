from typing import Literal, Optional
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Orden canónico de las diez coordenadas de una cámara
CAMERA_COORDINATES = (
    "k_min", "k_max", "lam", "mu_c",
    "a_tl", "b_tl", "sigma_hat_tl",
    "a_r", "b_r", "sigma_hat_r",
)

# Nombre externo (config, JSON) de cada coordenada
COORDINATE_KEYS = {name: ("lambda" if name == "lam" else name) for name in CAMERA_COORDINATES}


class CameraParams(BaseModel):
    """Coordenada de diez dimensiones que define una cámara (virtual u objetivo)"""
    k_min: float = Field(..., gt=0, description="Cota inferior de K (ADU/e-)")
    k_max: float = Field(..., gt=0, description="Cota superior de K (ADU/e-)")
    lam: float = Field(..., gt=-0.5, alias="lambda", description="Forma Tukey-lambda")
    mu_c: float = Field(..., description="Media del ruido de lectura (ADU)")
    a_tl: float
    b_tl: float
    sigma_hat_tl: float = Field(..., ge=0)
    a_r: float
    b_r: float
    sigma_hat_r: float = Field(..., ge=0)
    camera_id: Optional[str] = None

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    @model_validator(mode="after")
    def _check_gain_bounds(self):
        if self.k_min > self.k_max:
            raise ValueError(f"k_min ({self.k_min}) no puede superar k_max ({self.k_max})")
        return self


class ParamRange(BaseModel):
    """Rango inclusivo [lo, hi] de una coordenada"""
    lo: float
    hi: float

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def _check_order(self):
        if self.lo > self.hi:
            raise ValueError(f"lo ({self.lo}) > hi ({self.hi})")
        return self


def _range(lo: float, hi: float):
    return Field(default_factory=lambda: ParamRange(lo=lo, hi=hi))


class ParameterSpace(BaseModel):
    """Espacio de parámetros del que se generan las cámaras virtuales.

    Los rangos por defecto son magnitudes plausibles tipo ELD; se pueden
    sobrescribir desde el archivo de configuración (claves space.*).
    """
    k_min: ParamRange = _range(0.05, 0.5)
    k_max: ParamRange = _range(5.0, 30.0)
    lam: ParamRange = Field(default_factory=lambda: ParamRange(lo=0.08, hi=0.2), alias="lambda")
    mu_c: ParamRange = _range(-2.0, 2.0)
    a_tl: ParamRange = _range(0.6, 1.0)
    b_tl: ParamRange = _range(-0.5, 0.5)
    sigma_hat_tl: ParamRange = _range(0.05, 0.2)
    a_r: ParamRange = _range(0.4, 0.8)
    b_r: ParamRange = _range(-2.0, -1.0)
    sigma_hat_r: ParamRange = _range(0.02, 0.1)

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    @model_validator(mode="after")
    def _check_space(self):
        if self.k_min.hi > self.k_max.lo:
            raise ValueError("El rango de k_min debe quedar completamente por debajo del de k_max")
        if self.k_min.lo <= 0:
            raise ValueError("k_min debe ser positivo")
        if self.lam.lo <= -0.5:
            raise ValueError("lambda debe ser mayor que -0.5")
        if self.sigma_hat_tl.lo < 0 or self.sigma_hat_r.lo < 0:
            raise ValueError("Las desviaciones condicionales no pueden ser negativas")
        return self

    def ranges(self) -> dict[str, ParamRange]:
        return {name: getattr(self, name) for name in CAMERA_COORDINATES}


class GainLineFit(BaseModel):
    """Resultado de la regresión log σ = a·log K + b"""
    slope: float
    intercept: float
    residual: float = Field(..., ge=0, description="RMS de los residuos en log σ")
    n_points: int = Field(..., ge=2)
    slope_se: float = Field(0.0, ge=0)
    intercept_se: float = Field(0.0, ge=0)

    model_config = ConfigDict(frozen=True)


SelectionMode = Literal["spread", "similar"]
