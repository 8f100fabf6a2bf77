from typing import List, Union
from pydantic import BaseModel, ConfigDict, Field


class InfinitePSNR:
    """Marcador de PSNR infinito (MSE exactamente 0). Hay una sola instancia"""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INFINITE_PSNR"

    def __str__(self) -> str:
        return "inf"

    def __float__(self) -> float:
        return float("inf")

    def __reduce__(self):
        return (InfinitePSNR, ())


INFINITE_PSNR = InfinitePSNR()

PSNRValue = Union[float, InfinitePSNR]


def is_infinite(value: PSNRValue) -> bool:
    return value is INFINITE_PSNR


class RatioReport(BaseModel):
    """Promedios de un grupo de pares que comparten ratio"""
    ratio: float = Field(..., ge=1.0)
    count: int = Field(..., ge=1)
    psnr_db: PSNRValue
    ssim: float = Field(..., ge=-1.0, le=1.0)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class EvalReport(BaseModel):
    """Informe de evaluación por ratio"""
    per_ratio: List[RatioReport] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def total_count(self) -> int:
        return sum(r.count for r in self.per_ratio)

    def for_ratio(self, ratio: float) -> RatioReport:
        for report in self.per_ratio:
            if report.ratio == ratio:
                return report
        raise KeyError(ratio)
