"""
Bucles de entrenamiento: pre-entrenamiento sobre cámaras virtuales, ajuste
few-shot en dos fases (CSA^T y luego OMNR) e inferencia.

Cada iteración deriva sus números aleatorios de (seed, iteración, ítem), de modo
que el resultado es idéntico con cualquier número de hilos.
"""
import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from core.config import settings
from core.logging_config import progress_enabled
from engine import functional as F
from engine.optim import Adam
from engine.tensor import Tensor, no_grad
from exceptions.base import (
    InsufficientDataException,
    NumericException,
    PhaseException,
    ShapeException,
    ValidationException,
)
from models.network import LEDNetwork, PhaseTransition, set_phase
from models.repnr import InitMode, RepNRPhase
from schemas.camera_schemas import CameraParams
from schemas.noise_schemas import NoiseComponents, SensorLevels
from schemas.training_schemas import FewShotPair, TrainConfig, TrainResult
from services.camera_service import sample_noise_instance
from services.dataset_service import crop_pair
from services.noise_service import synthesize_noisy
from utils.atomic import write_text_atomic
from utils.bayer import pack_bayer
from utils.parallel import parallel_map, single_threaded_blas
from utils.rng import Stream, get_rng

logger = logging.getLogger(__name__)

# (entradas, objetivos, rama) de una iteración
Batch = Tuple[np.ndarray, np.ndarray, Optional[int]]

TRACE_COLUMNS = ["phase", "iteration", "lr", "loss"]


class TraceWriter:
    """CSV de solo-anexado con (fase, iteración, lr, pérdida)"""

    def __init__(self, path: Optional[Union[str, Path]], flush_every: Optional[int] = None):
        self.path = Path(path) if path else None
        self.flush_every = flush_every or settings.TRACE_FLUSH_EVERY
        self._rows: List[dict] = []
        if self.path is not None:
            write_text_atomic(self.path, ",".join(TRACE_COLUMNS) + "\n")

    def record(self, phase: str, iteration: int, lr: float, loss: float) -> None:
        if self.path is None:
            return
        self._rows.append({"phase": phase, "iteration": iteration, "lr": lr, "loss": loss})
        if len(self._rows) >= self.flush_every:
            self.flush()

    def flush(self) -> None:
        if self.path is None or not self._rows:
            return
        frame = pd.DataFrame(self._rows, columns=TRACE_COLUMNS)
        frame.to_csv(self.path, mode="a", header=False, index=False)
        self._rows = []


def amplify_input(noisy_packed: np.ndarray, ratio: Union[float, np.ndarray]) -> np.ndarray:
    """clamp(noisy·ratio, 0, 1): la ganancia digital solo se aplica a la entrada de la red"""
    return np.clip(noisy_packed * ratio, 0.0, 1.0)


# ============================================
# 🔹 Bucle genérico
# ============================================
def _train_loop(
    net: LEDNetwork,
    cfg: TrainConfig,
    make_batch: Callable[[int], Batch],
    phase_label: str,
    trace: TraceWriter,
) -> TrainResult:
    result = TrainResult(phase=phase_label)
    params = [tensor for _, tensor in net.trainable_parameters()]
    if cfg.iterations == 0:
        return result
    if not params:
        raise PhaseException(net.phase.value, f"{phase_label} sin parámetros entrenables")
    optimizer = Adam(params, lr=cfg.lr_initial)

    bar = tqdm(range(cfg.iterations), desc=phase_label, disable=not progress_enabled(), leave=False)
    for iteration in bar:
        inputs, targets, branch = make_batch(iteration)
        x = Tensor(inputs, dtype=net.dtype)
        y = Tensor(targets, dtype=net.dtype)
        loss = F.l1_loss(net.forward(x, branch), y)
        value = loss.item()
        if not np.isfinite(value):
            trace.flush()
            raise NumericException(f"Pérdida no finita ({value}) en {phase_label}, iteración {iteration}")

        optimizer.zero_grad()
        loss.backward()
        lr = cfg.lr_at(iteration)
        optimizer.step(lr)

        result.losses.append(value)
        result.learning_rates.append(lr)
        trace.record(phase_label, iteration, lr, value)
        if iteration % 50 == 0:
            bar.set_postfix(loss=f"{value:.4f}", lr=f"{lr:.1e}")

    trace.flush()
    logger.info(
        f"✅ {phase_label}: {cfg.iterations} iteraciones, pérdida final {result.losses[-1]:.5f}"
    )
    return result


# ============================================
# 🔹 Pre-entrenamiento
# ============================================
def _synthesize_crop(
    clean_plane: np.ndarray,
    camera: CameraParams,
    ratio: float,
    top: int,
    left: int,
    patch_size: int,
    levels: SensorLevels,
    components: Optional[NoiseComponents],
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    raw = 2 * patch_size
    clean = clean_plane[top:top + raw, left:left + raw]
    instance = sample_noise_instance(camera, ratio, rng, enabled=components)
    noisy = synthesize_noisy(clean, instance, levels, rng)
    return amplify_input(pack_bayer(noisy), ratio), pack_bayer(clean)


def pretrain(
    net: LEDNetwork,
    cameras: Sequence[CameraParams],
    clean_frames: Sequence[np.ndarray],
    cfg: TrainConfig,
    levels: Optional[SensorLevels] = None,
    components: Optional[NoiseComponents] = None,
    threads: Optional[int] = None,
    trace_path: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """
    Pre-entrenamiento sobre cámaras virtuales.

    Por iteración: cámara k ~ U{1..m} (una por iteración), ratio uniforme de
    ``cfg.ratios`` por ítem, recorte aleatorio, síntesis de ruido con la ley
    conjunta de la cámara k y pérdida L1 contra el limpio por la rama k.
    """
    if net.phase != RepNRPhase.PRETRAIN:
        raise PhaseException(net.phase.value, "pretrain")
    if len(cameras) != net.m:
        raise ValidationException(f"La red tiene m={net.m} ramas pero se pasaron {len(cameras)} cámaras")
    if not clean_frames:
        raise InsufficientDataException("El conjunto de imágenes limpias está vacío")
    cfg.check_patch_size(net.config.spatial_divisor)
    raw = 2 * cfg.patch_size
    for frame in clean_frames:
        if frame.ndim != 2 or frame.shape[0] < raw or frame.shape[1] < raw:
            raise ShapeException(f"Frame {frame.shape} menor que el parche de {raw}×{raw} píxeles")
    levels = levels or SensorLevels()

    def make_batch(iteration: int) -> Batch:
        rng = get_rng(cfg.seed, Stream.BATCH, iteration, 0)
        k = int(rng.integers(net.m))
        jobs = []
        for item in range(cfg.batch_size):
            frame = clean_frames[int(rng.integers(len(clean_frames)))]
            ratio = float(cfg.ratios[int(rng.integers(len(cfg.ratios)))])
            top = 2 * int(rng.integers(0, (frame.shape[0] - raw) // 2 + 1))
            left = 2 * int(rng.integers(0, (frame.shape[1] - raw) // 2 + 1))
            jobs.append((item, frame, ratio, top, left))

        def synth(job):
            item, frame, ratio, top, left = job
            item_rng = get_rng(cfg.seed, Stream.SYNTH, iteration, item)
            return _synthesize_crop(frame, cameras[k], ratio, top, left, cfg.patch_size, levels, components, item_rng)

        crops = parallel_map(synth, jobs, threads)
        inputs = np.stack([c[0] for c in crops])
        targets = np.stack([c[1] for c in crops])
        return inputs, targets, k

    logger.info(
        f"🚀 Pre-entrenamiento: {cfg.iterations} iteraciones, lote {cfg.batch_size}, "
        f"parche {cfg.patch_size}, m={net.m}, ratios {cfg.ratios}"
    )
    trace = TraceWriter(trace_path)
    with single_threaded_blas():
        return _train_loop(net, cfg, make_batch, "pretrain", trace)


# ============================================
# 🔹 Ajuste few-shot
# ============================================
def _fewshot_batches(net: LEDNetwork, pairs: Sequence[FewShotPair], cfg: TrainConfig, stream_item: int):
    divisor = net.config.spatial_divisor
    cfg.check_patch_size(divisor)

    def make_batch(iteration: int) -> Batch:
        rng = get_rng(cfg.seed, Stream.FEWSHOT, iteration, stream_item)
        inputs, targets = [], []
        for _ in range(cfg.batch_size):
            pair = pairs[int(rng.integers(len(pairs)))]
            noisy, clean = crop_pair(pair, cfg.patch_size, rng)
            inputs.append(amplify_input(noisy, pair.ratio))
            targets.append(clean)
        return np.stack(inputs), np.stack(targets), None

    return make_batch


def finetune(
    net: LEDNetwork,
    pairs: Sequence[FewShotPair],
    phase1: Optional[TrainConfig] = None,
    phase2: Optional[TrainConfig] = None,
    init_mode: InitMode = "average",
    skip_csa: bool = False,
    skip_omnr: bool = False,
    trace_path: Optional[Union[str, Path]] = None,
) -> Tuple[LEDNetwork, List[TrainResult]]:
    """
    Ajuste en dos fases sobre pares de la cámara objetivo.

    1. Congela las convoluciones, crea CSA^T (media de las ramas) y entrena solo CSA^T.
    2. Congela CSA^T, añade OMNR a cero y entrena solo OMNR.

    ``skip_csa``/``skip_omnr`` mantienen las transiciones pero omiten el entrenamiento
    de esa fase.
    """
    if net.phase != RepNRPhase.PRETRAIN:
        raise PhaseException(net.phase.value, "finetune")
    if not pairs:
        raise InsufficientDataException("No hay pares few-shot para el ajuste")
    phase1 = phase1 or TrainConfig.csa_phase()
    phase2 = phase2 or TrainConfig.omnr_phase()
    trace = TraceWriter(trace_path)
    results = []

    with single_threaded_blas():
        set_phase(net, PhaseTransition.TO_FINETUNE_CSA, init_mode)
        if skip_csa:
            logger.info("⏭️ Fase CSA^T omitida")
        else:
            results.append(_train_loop(net, phase1, _fewshot_batches(net, pairs, phase1, 1), "finetune_csa", trace))

        set_phase(net, PhaseTransition.TO_FINETUNE_OMNR)
        if skip_omnr:
            logger.info("⏭️ Fase OMNR omitida")
        else:
            results.append(_train_loop(net, phase2, _fewshot_batches(net, pairs, phase2, 2), "finetune_omnr", trace))

    return net, results


# ============================================
# 🔹 Inferencia
# ============================================
def denoise(
    net: LEDNetwork,
    noisy_packed: np.ndarray,
    ratio: float,
    branch_index: Optional[int] = None,
) -> np.ndarray:
    """clamp(red(clamp(noisy·ratio, 0, 1)), 0, 1) sobre [4,h,w] o [N,4,h,w]"""
    if ratio < 1:
        raise ValidationException(f"ratio debe ser >= 1, recibido {ratio}")
    data = np.asarray(noisy_packed)
    single = data.ndim == 3
    batch = data[None] if single else data
    x = Tensor(amplify_input(batch, ratio).astype(net.dtype), dtype=net.dtype)
    with no_grad():
        out = net.forward(x, branch_index)
    clean = np.clip(out.data, 0.0, 1.0)
    return clean[0] if single else clean


def crop_plane_to_multiple(plane: np.ndarray, divisor: int) -> np.ndarray:
    """Mayor recorte superior-izquierdo cuyo tamaño empaquetado es múltiplo de ``divisor``"""
    step = 2 * divisor
    height = (plane.shape[0] // step) * step
    width = (plane.shape[1] // step) * step
    if height == 0 or width == 0:
        raise ShapeException(f"Imagen {plane.shape} menor que el bloque mínimo de {step}×{step}")
    return plane[:height, :width]
