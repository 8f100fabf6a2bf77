"""Cámaras virtuales, ley conjunta log-lineal de (K, σ) y análisis de la recta de ganancia."""
import itertools
import logging
import math
from collections import OrderedDict
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from exceptions.base import (
    DegenerateException,
    InsufficientDataException,
    UnderdeterminedException,
    ValidationException,
)
from schemas.camera_schemas import CAMERA_COORDINATES, CameraParams, GainLineFit, ParameterSpace, SelectionMode
from schemas.data_schemas import ManifestEntry
from schemas.noise_schemas import NoiseComponents, NoiseInstance

logger = logging.getLogger(__name__)


# ============================================
# 🔹 Generación de cámaras virtuales
# ============================================
def generate_virtual_cameras(m: int, space: Optional[ParameterSpace] = None) -> List[CameraParams]:
    """
    Cámara k (1..m) toma lo + k·(hi − lo)/(m + 1) en cada coordenada.

    Los puntos son interiores y equiespaciados: ninguna cámara cae en un
    extremo del rango.
    """
    if m < 1:
        raise ValidationException(f"Se necesita al menos una cámara virtual, recibido m={m}")
    space = space or ParameterSpace()
    ranges = space.ranges()

    cameras = []
    for k in range(1, m + 1):
        coords = {
            name: ranges[name].lo + k * (ranges[name].hi - ranges[name].lo) / (m + 1)
            for name in CAMERA_COORDINATES
        }
        cameras.append(CameraParams(camera_id=f"virtual-{k}", **coords))

    logger.info(f"✅ Generadas {m} cámaras virtuales")
    return cameras


# ============================================
# 🔹 Muestreo de instancias de ruido
# ============================================
def sample_noise_instance(
    camera: CameraParams,
    ratio: float,
    rng: np.random.Generator,
    enabled: Optional[NoiseComponents] = None,
) -> NoiseInstance:
    """
    Muestrea (K, σ_TL, σ_r) según la ley conjunta:

    - log K ~ U(log k_min, log k_max)
    - log σ_TL ~ N(a_tl·log K + b_tl, σ̂_TL)
    - log σ_r ~ N(a_r·log K + b_r, σ̂_r)
    """
    if ratio < 1:
        raise ValidationException(f"ratio debe ser >= 1, recibido {ratio}")

    log_k = rng.uniform(math.log(camera.k_min), math.log(camera.k_max))
    # exp(log k) puede salir un ulp fuera del rango
    K = min(max(math.exp(log_k), camera.k_min), camera.k_max)
    log_sigma_tl = rng.normal(camera.a_tl * log_k + camera.b_tl, camera.sigma_hat_tl)
    log_sigma_r = rng.normal(camera.a_r * log_k + camera.b_r, camera.sigma_hat_r)

    return NoiseInstance(
        K=K,
        sigma_tl=math.exp(log_sigma_tl),
        sigma_r=math.exp(log_sigma_r),
        lam=camera.lam,
        mu_c=camera.mu_c,
        ratio=ratio,
        enabled=enabled or NoiseComponents(),
    )


# ============================================
# 🔹 Recta de ganancia (identificabilidad con pocos pares)
# ============================================
def fit_gain_line(points: Sequence[Tuple[float, float]]) -> GainLineFit:
    """
    Mínimos cuadrados de log σ sobre log K.

    Con menos de dos puntos la recta está indeterminada; si todos los puntos
    comparten K es degenerada (ganancias demasiado parecidas).
    """
    if len(points) < 2:
        raise UnderdeterminedException(len(points))

    values = np.asarray(points, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != 2:
        raise ValidationException("Cada punto debe ser un par (K, sigma)")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValidationException("K y sigma deben ser positivos y finitos")

    log_k = np.log(values[:, 0])
    log_sigma = np.log(values[:, 1])
    if np.all(log_k == log_k[0]):
        raise DegenerateException(float(values[0, 0]))

    result = stats.linregress(log_k, log_sigma)
    fitted = result.slope * log_k + result.intercept
    residual = float(np.sqrt(np.mean((log_sigma - fitted) ** 2)))

    return GainLineFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        residual=residual,
        n_points=len(points),
        slope_se=float(result.stderr),
        intercept_se=float(result.intercept_stderr),
    )


# ============================================
# 🔹 Selección de pares few-shot
# ============================================
def _spread_key(log_ks: Tuple[float, ...]) -> Tuple[float, float]:
    ordered = sorted(log_ks)
    gaps = [b - a for a, b in zip(ordered, ordered[1:])]
    return ordered[-1] - ordered[0], min(gaps) if gaps else 0.0


def select_fewshot_pairs(
    entries: Iterable[ManifestEntry],
    pairs_per_ratio: int,
    mode: SelectionMode = "spread",
) -> List[ManifestEntry]:
    """
    Elige ``pairs_per_ratio`` entradas por cada ratio según la dispersión de log K.

    - spread: maximiza el rango de log K (desempata por la mayor separación mínima)
    - similar: minimiza el rango de log K

    Ante empates gana la primera combinación en el orden del manifiesto.
    """
    if pairs_per_ratio < 1:
        raise ValidationException(f"pairs_per_ratio debe ser >= 1, recibido {pairs_per_ratio}")
    if mode not in ("spread", "similar"):
        raise ValidationException(f"Modo de selección desconocido '{mode}' (spread|similar)")

    groups: "OrderedDict[float, List[ManifestEntry]]" = OrderedDict()
    for entry in entries:
        if entry.K is None:
            raise ValidationException(f"La entrada '{entry.clean_path}' no tiene K registrado")
        groups.setdefault(entry.ratio, []).append(entry)
    if not groups:
        raise InsufficientDataException("No hay entradas para seleccionar pares")

    selected: List[ManifestEntry] = []
    for ratio in sorted(groups):
        candidates = groups[ratio]
        if len(candidates) < pairs_per_ratio:
            raise InsufficientDataException(
                f"ratio {ratio}: se piden {pairs_per_ratio} pares pero solo hay {len(candidates)}"
            )

        best: Optional[Tuple[int, ...]] = None
        best_key = None
        for combo in itertools.combinations(range(len(candidates)), pairs_per_ratio):
            span, min_gap = _spread_key(tuple(math.log(candidates[i].K) for i in combo))
            key = (span, min_gap) if mode == "spread" else (-span,)
            if best_key is None or key > best_key:
                best, best_key = combo, key

        chosen = [candidates[i] for i in best]
        logger.debug(f"ratio {ratio}: elegidos K={[round(e.K, 4) for e in chosen]} ({mode})")
        selected.extend(chosen)

    logger.info(f"✅ Seleccionados {len(selected)} pares few-shot (modo {mode})")
    return selected
