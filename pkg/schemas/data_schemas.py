from typing import Optional
from pydantic import BaseModel, ConfigDict, Field


class ManifestEntry(BaseModel):
    """
    Una línea del manifiesto JSON-lines.

    ``noisy_path`` es opcional para conjuntos solo-limpios; K, sigma_tl y sigma_r
    son la procedencia de los pares sintéticos.
    """
    clean_path: str = Field(..., min_length=1)
    noisy_path: Optional[str] = None
    ratio: float = Field(1.0, ge=1.0)
    camera_id: Optional[str] = None
    K: Optional[float] = Field(None, gt=0)
    scene_id: Optional[str] = None
    sigma_tl: Optional[float] = Field(None, ge=0)
    sigma_r: Optional[float] = Field(None, ge=0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def is_pair(self) -> bool:
        return self.noisy_path is not None
