"""Síntesis de ruido físico en el dominio ADU.

D = I + N con N = shot + read + row + quant (+ residuo fuera de modelo opcional).
Todos los muestreadores son funciones puras de (argumentos, estado del rng).
"""
import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy import special, stats

from engine.tensor import Tensor
from exceptions.base import ShapeException, ValidationException
from schemas.noise_schemas import NoiseInstance, SensorLevels

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Tensor, float]

# Por debajo de este |λ| la fórmula cerrada pierde precisión por cancelación
_LAMBDA_SERIES_THRESHOLD = 1e-4
_LOGISTIC_STD = math.pi / math.sqrt(3.0)

# Soportes abiertos (0,1) y (-1/2, 1/2): el extremo bajo se excluye a mano,
# el alto ya es abierto en Generator.uniform
_U_LOW = float(np.nextafter(0.0, 1.0))
_Q_LOW = float(np.nextafter(-0.5, 0.0))


def _as_array(value: ArrayLike) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)


def _check_lambda(lam: float) -> None:
    if not np.isfinite(lam) or lam <= -0.5:
        raise ValidationException(f"lambda debe ser finito y mayor que -0.5, recibido {lam}")


# ============================================
# 🔹 Tukey-lambda
# ============================================
def tukey_lambda_quantile(p: ArrayLike, lam: float) -> np.ndarray:
    """Q(p;λ) = (p^λ − (1−p)^λ)/λ, con el caso logístico ln(p/(1−p)) en λ = 0.

    Se evalúa con ``boxcox``/``boxcox1p`` de scipy, que ya resuelven el límite λ → 0.
    """
    probs = _as_array(p)
    if not np.isfinite(lam):
        raise ValidationException(f"lambda no finito: {lam}")
    if np.any(~np.isfinite(probs)) or np.any(probs <= 0.0) or np.any(probs >= 1.0):
        raise ValidationException("p debe estar estrictamente dentro de (0, 1)")
    return special.boxcox(probs, lam) - special.boxcox1p(-probs, lam)


def tukey_lambda_std(lam: float) -> float:
    """Desviación estándar de la ley TL estándar (solo existe para λ > −1/2)"""
    _check_lambda(lam)
    if lam == 0.0:
        return _LOGISTIC_STD
    if abs(lam) < _LAMBDA_SERIES_THRESHOLD:
        # scipy usa una aproximación de Padé cerca del caso logístico
        variance = float(stats.tukeylambda.var(lam))
    else:
        variance = (2.0 / lam ** 2) * (1.0 / (2.0 * lam + 1.0) - special.beta(lam + 1.0, lam + 1.0))
    return float(math.sqrt(variance))


# ============================================
# 🔹 Componentes individuales
# ============================================
def sample_read_noise(
    shape: Tuple[int, ...],
    lam: float,
    mu_c: float,
    sigma_tl: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Ruido de lectura TL(λ; μ_c, σ_TL) por transformada inversa, en ADU"""
    _check_lambda(lam)
    if sigma_tl < 0:
        raise ValidationException(f"sigma_tl no puede ser negativo: {sigma_tl}")
    u = rng.uniform(_U_LOW, 1.0, size=shape)
    deviates = tukey_lambda_quantile(u, lam) / tukey_lambda_std(lam)
    return mu_c + sigma_tl * deviates


def sample_shot(clean_adu: ArrayLike, K: float, rng: np.random.Generator) -> np.ndarray:
    """Señal más ruido de disparo: Poisson(I/K)·K. Los valores caen en la red K·ℕ"""
    signal = _as_array(clean_adu)
    if K <= 0 or not np.isfinite(K):
        raise ValidationException(f"K debe ser positivo, recibido {K}")
    if np.any(signal < 0):
        raise ValidationException("La señal en ADU no puede tener valores negativos para el ruido de disparo")
    counts = rng.poisson(signal / K)
    return counts.astype(np.float64) * K


def sample_row_noise(height: int, width: int, sigma_r: float, rng: np.random.Generator) -> np.ndarray:
    """Un desvío gaussiano por fila del mosaico, replicado en todas sus columnas"""
    if sigma_r < 0:
        raise ValidationException(f"sigma_r no puede ser negativo: {sigma_r}")
    if height < 1 or width < 1:
        raise ShapeException(f"Dimensiones inválidas para ruido de fila: {height}x{width}")
    rows = rng.standard_normal(height) * sigma_r
    return np.repeat(rows[:, None], width, axis=1)


def sample_quant_noise(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Ruido de cuantización U(−1/2, 1/2) con paso de 1 ADU"""
    return rng.uniform(_Q_LOW, 0.5, size=shape)


# ============================================
# 🔹 Síntesis completa
# ============================================
def synthesize_noisy(
    clean_norm: ArrayLike,
    instance: NoiseInstance,
    levels: SensorLevels,
    rng: np.random.Generator,
    residual_adu: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Genera un frame ruidoso normalizado a partir de un plano Bayer limpio en [0, 1].

    x_adu = clean·(white − black)/ratio; D_adu = shot(x_adu) + read + row + quant
    (+ ``residual_adu``). Devuelve D_adu/(white − black) sin recortar, así que puede
    haber valores negativos. Con el ruido de disparo apagado la señal se escala
    directamente por 1/ratio, lo que hace exacta la linealidad sin ruido.
    """
    clean = _as_array(clean_norm)
    if clean.ndim != 2:
        raise ShapeException(f"synthesize_noisy opera sobre el plano Bayer [H,W], recibido {clean.shape}")
    if not np.all(np.isfinite(clean)) or np.any(clean < 0.0) or np.any(clean > 1.0):
        raise ValidationException("La imagen limpia debe estar dentro de [0, 1]")

    span = levels.span
    enabled = instance.enabled
    height, width = clean.shape

    if enabled.shot:
        x_adu = clean.astype(np.float64) * span / instance.ratio
        signal = sample_shot(x_adu, instance.K, rng) / span
    else:
        signal = clean / instance.ratio

    additive = None
    if enabled.read:
        additive = sample_read_noise(clean.shape, instance.lam, instance.mu_c, instance.sigma_tl, rng)
    if enabled.row:
        row = sample_row_noise(height, width, instance.sigma_r, rng)
        additive = row if additive is None else additive + row
    if enabled.quant:
        quant = sample_quant_noise(clean.shape, rng)
        additive = quant if additive is None else additive + quant
    if residual_adu is not None:
        residual = np.asarray(residual_adu, dtype=np.float64)
        if residual.shape != clean.shape:
            raise ShapeException(f"Residuo {residual.shape} no coincide con el plano {clean.shape}")
        additive = residual if additive is None else additive + residual

    if additive is None:
        return signal
    return signal + additive / span
