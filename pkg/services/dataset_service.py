"""
Datos sintéticos: escenas limpias procedurales, pares ruidosos por cámara y el
residuo fuera de modelo (patrón fijo + bandas) de la cámara objetivo.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from exceptions.base import InsufficientDataException, ShapeException, ValidationException
from schemas.camera_schemas import CameraParams
from schemas.noise_schemas import NoiseComponents, SensorLevels
from schemas.training_schemas import FewShotPair, OutOfModelSpec
from services.camera_service import sample_noise_instance
from services.noise_service import synthesize_noisy
from utils.bayer import BAYER_OFFSETS, pack_bayer
from utils.rng import Stream, get_rng

logger = logging.getLogger(__name__)

# Rango de ganancia por canal CFA (R, G1, G2, B) de las escenas procedurales
_CFA_GAIN_RANGES = ((0.55, 1.0), (0.9, 1.0), (0.9, 1.0), (0.45, 0.95))
_CLEAN_PEAK = 0.9


# ============================================
# 🔹 Escenas limpias procedurales
# ============================================
def _scene(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    # Campo suave: rejilla gruesa interpolada
    coarse = rng.uniform(0.0, 1.0, size=(5, 5))
    field = ndimage.zoom(coarse, (height / 5, width / 5), order=3, mode="nearest")[:height, :width]

    # Rectángulos con bordes nítidos
    rects = np.zeros((height, width))
    for _ in range(int(rng.integers(3, 8))):
        top, left = rng.integers(0, height), rng.integers(0, width)
        h, w = rng.integers(height // 8 + 1, height // 2 + 2), rng.integers(width // 8 + 1, width // 2 + 2)
        rects[top:top + h, left:left + w] = rng.uniform(-0.5, 0.5)

    # Textura periódica
    rows, cols = np.mgrid[0:height, 0:width]
    angle = rng.uniform(0, np.pi)
    frequency = rng.uniform(0.05, 0.3)
    texture = 0.15 * np.sin(frequency * (np.cos(angle) * cols + np.sin(angle) * rows))

    scene = field + rects + texture
    scene -= scene.min()
    peak = scene.max()
    return scene / peak if peak > 0 else scene


def generate_clean_frames(count: int, height: int, width: int, seed: int) -> List[np.ndarray]:
    """Planos Bayer limpios en [0, 0.9] (float32) con ganancia propia por canal CFA"""
    if count < 1:
        raise ValidationException(f"count debe ser >= 1, recibido {count}")
    if height < 2 or width < 2 or height % 2 or width % 2:
        raise ShapeException(f"Las escenas necesitan lados pares >= 2, recibido {height}×{width}")

    frames = []
    for index in range(count):
        rng = get_rng(seed, Stream.CLEAN, 0, index)
        plane = _scene(height, width, rng) * _CLEAN_PEAK
        for (dy, dx), (lo, hi) in zip(BAYER_OFFSETS, _CFA_GAIN_RANGES):
            plane[dy::2, dx::2] *= rng.uniform(lo, hi)
        frames.append(np.clip(plane, 0.0, 1.0).astype(np.float32))
    logger.info(f"✅ Generadas {count} escenas limpias de {height}×{width}")
    return frames


# ============================================
# 🔹 Residuo fuera de modelo
# ============================================
def out_of_model_residual(shape: Tuple[int, int], oom: OutOfModelSpec) -> np.ndarray:
    """
    Patrón fijo U(−A, A) por píxel + bandas A_b·sin(2π·col/period) en ADU.

    Depende solo de (oom.seed, forma): es una propiedad del sensor, idéntica en
    todos los frames.
    """
    height, width = shape
    rng = get_rng(oom.seed, Stream.FIXED_PATTERN, height, width)
    amplitude = oom.fixed_pattern_amplitude
    fixed = rng.uniform(-amplitude, amplitude, size=shape) if amplitude > 0 else np.zeros(shape)
    columns = np.arange(width)
    banding = oom.banding_amplitude * np.sin(2.0 * np.pi * columns / oom.banding_period)
    return fixed + banding[None, :]


# ============================================
# 🔹 Pares sintéticos
# ============================================
def synthesize_pairs(
    frames: Sequence[np.ndarray],
    cameras: Sequence[CameraParams],
    ratios: Sequence[float],
    pairs_per_ratio: int,
    seed: int,
    levels: Optional[SensorLevels] = None,
    oom: Optional[OutOfModelSpec] = None,
    components: Optional[NoiseComponents] = None,
) -> List[FewShotPair]:
    """
    ``pairs_per_ratio`` pares por ratio, cada uno sobre un frame limpio distinto.

    El par j usa el frame j y la cámara j mod len(cameras); su rng deriva de (seed, j).
    """
    if not cameras:
        raise ValidationException("Se necesita al menos una cámara")
    if pairs_per_ratio < 1:
        raise ValidationException(f"pairs_per_ratio debe ser >= 1, recibido {pairs_per_ratio}")
    needed = len(ratios) * pairs_per_ratio
    if len(frames) < needed:
        raise InsufficientDataException(f"Se necesitan {needed} frames limpios, hay {len(frames)}")
    levels = levels or SensorLevels()

    pairs = []
    residuals = {}
    for j in range(needed):
        ratio = float(ratios[j // pairs_per_ratio])
        clean = np.asarray(frames[j])
        camera = cameras[j % len(cameras)]
        rng = get_rng(seed, Stream.SYNTH, 0, j)
        instance = sample_noise_instance(camera, ratio, rng, enabled=components)

        residual = None
        if oom is not None:
            if clean.shape not in residuals:
                residuals[clean.shape] = out_of_model_residual(clean.shape, oom)
            residual = residuals[clean.shape]

        noisy = synthesize_noisy(clean, instance, levels, rng, residual_adu=residual)
        pairs.append(
            FewShotPair(
                noisy=noisy.astype(np.float32),
                clean=clean.astype(np.float32),
                ratio=ratio,
                K=instance.K,
                sigma_tl=instance.sigma_tl,
                sigma_r=instance.sigma_r,
                camera_id=camera.camera_id,
                scene_id=f"scene-{j}",
            )
        )
    logger.info(f"✅ Sintetizados {len(pairs)} pares ({len(ratios)} ratios × {pairs_per_ratio})")
    return pairs


def make_target_dataset(
    base_clean: Sequence[np.ndarray],
    target_camera: CameraParams,
    oom: OutOfModelSpec,
    ratios: Sequence[float],
    pairs_per_ratio: int,
    seed: int,
    levels: Optional[SensorLevels] = None,
) -> List[FewShotPair]:
    """Pares few-shot de la cámara objetivo: ruido del modelo + residuo fuera de modelo"""
    return synthesize_pairs(base_clean, [target_camera], ratios, pairs_per_ratio, seed, levels=levels, oom=oom)


def crop_pair(pair: FewShotPair, patch_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Recorte aleatorio de ``patch_size`` píxeles empaquetados (2·patch_size en el plano, offsets pares)"""
    raw = 2 * patch_size
    height, width = pair.clean.shape
    if raw > height or raw > width:
        raise ShapeException(f"Parche {patch_size} (empaquetado) no cabe en un frame {height}×{width}")
    top = 2 * int(rng.integers(0, (height - raw) // 2 + 1))
    left = 2 * int(rng.integers(0, (width - raw) // 2 + 1))
    window = (slice(top, top + raw), slice(left, left + raw))
    return pack_bayer(pair.noisy[window]), pack_bayer(pair.clean[window])
