from pydantic import BaseModel, ConfigDict, Field, model_validator


class NoiseComponents(BaseModel):
    """Interruptores por componente del modelo de ruido"""
    shot: bool = True
    read: bool = True
    row: bool = True
    quant: bool = True

    model_config = ConfigDict(frozen=True, extra="forbid")

    @classmethod
    def none(cls) -> "NoiseComponents":
        return cls(shot=False, read=False, row=False, quant=False)


class NoiseInstance(BaseModel):
    """Una realización (K, σ_TL, σ_r) asociada a un frame sintetizado"""
    K: float = Field(..., gt=0, description="Ganancia global del sistema (ADU/e-)")
    sigma_tl: float = Field(..., ge=0, description="Desviación del ruido de lectura (ADU)")
    sigma_r: float = Field(..., ge=0, description="Desviación del ruido de fila (ADU)")
    lam: float = Field(..., gt=-0.5, alias="lambda", description="Forma Tukey-lambda")
    mu_c: float = Field(0.0, description="Media del ruido de lectura (ADU)")
    ratio: float = Field(1.0, ge=1.0, description="Ganancia digital")
    enabled: NoiseComponents = Field(default_factory=NoiseComponents)

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")


class SensorLevels(BaseModel):
    """Niveles de negro y blanco del sensor en ADU"""
    black_level: float = Field(512.0, ge=0)
    white_level: float = Field(16383.0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def _check_range(self):
        if self.white_level <= self.black_level:
            raise ValueError(
                f"white_level ({self.white_level}) debe ser mayor que black_level ({self.black_level})"
            )
        return self

    @property
    def span(self) -> float:
        return self.white_level - self.black_level
