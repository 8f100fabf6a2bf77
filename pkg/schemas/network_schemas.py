from typing import List, Literal
from pydantic import BaseModel, ConfigDict, Field

Precision = Literal["single", "double"]


class NetworkConfig(BaseModel):
    """Hiperparámetros de la UNet de cinco etapas"""
    base_width: int = Field(32, ge=1, description="Canales en la etapa 1")
    stages: int = Field(5, ge=2)
    in_channels: int = Field(4, ge=1)
    out_channels: int = Field(4, ge=1)
    leaky_slope: float = Field(0.2, gt=0, lt=1)
    precision: Precision = "single"
    online_reparam: bool = Field(False, description="Ejecuta cada bloque RepNR como una sola convolución fusionada")

    model_config = ConfigDict(frozen=True, extra="forbid")

    def widths(self) -> List[int]:
        return [self.base_width * 2 ** s for s in range(self.stages)]

    @property
    def spatial_divisor(self) -> int:
        """H y W empaquetados deben ser múltiplos de este valor"""
        return 2 ** (self.stages - 1)
