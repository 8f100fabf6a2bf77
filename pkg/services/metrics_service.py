"""PSNR y SSIM sobre imágenes empaquetadas de 4 canales en [0, 1], e informes por ratio."""
import logging
import math
from collections import OrderedDict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import signal

from exceptions.base import InsufficientDataException, ShapeException
from models.network import LEDNetwork
from schemas.data_schemas import ManifestEntry
from schemas.metrics_schemas import INFINITE_PSNR, EvalReport, PSNRValue, RatioReport, is_infinite
from schemas.training_schemas import FewShotPair
from services.training_service import crop_plane_to_multiple, denoise
from utils.atomic import atomic_writer
from utils.bayer import pack_bayer
from utils.parallel import parallel_map, single_threaded_blas

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

REPORT_COLUMNS = ["ratio", "count", "psnr_db", "ssim"]


def _pair_arrays(a, b) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(getattr(a, "data", a), dtype=np.float64)
    y = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeException(f"Las imágenes difieren en forma: {x.shape} vs {y.shape}")
    return x, y


def psnr(a, b) -> PSNRValue:
    """−10·log10(MSE) con pico 1; MSE = 0 devuelve INFINITE_PSNR"""
    x, y = _pair_arrays(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return INFINITE_PSNR
    return -10.0 * math.log10(mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    def filt(z):
        return signal.correlate2d(z, window, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sigma_x = filt(x * x) - mu_x * mu_x
    sigma_y = filt(y * y) - mu_y * mu_y
    sigma_xy = filt(x * y) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + SSIM_C1) * (2 * sigma_xy + SSIM_C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return float(np.mean(numerator / denominator))


def ssim(a, b) -> float:
    """
    SSIM de escala única: ventana gaussiana 11×11 (σ = 1.5), C1 = 0.01², C2 = 0.03²,
    solo ventanas completas y media sobre canales. Acepta [H,W], [C,H,W] o [N,C,H,W].
    """
    x, y = _pair_arrays(a, b)
    if x.ndim < 2 or x.shape[-1] < SSIM_WINDOW or x.shape[-2] < SSIM_WINDOW:
        raise ShapeException(f"SSIM necesita al menos {SSIM_WINDOW}×{SSIM_WINDOW} píxeles, recibido {x.shape}")
    window = gaussian_window()
    planes_x = x.reshape(-1, x.shape[-2], x.shape[-1])
    planes_y = y.reshape(-1, y.shape[-2], y.shape[-1])
    return float(np.mean([_ssim_channel(px, py, window) for px, py in zip(planes_x, planes_y)]))


def _mean_psnr(values: Sequence[PSNRValue]) -> PSNRValue:
    if any(is_infinite(v) for v in values):
        return INFINITE_PSNR
    return float(np.mean(values))


# ============================================
# 🔹 Evaluación
# ============================================
def evaluate(
    net: LEDNetwork,
    pairs: Sequence[Tuple[ManifestEntry, FewShotPair]],
    ratios: Optional[Sequence[float]] = None,
    branch_index: Optional[int] = None,
    threads: Optional[int] = None,
) -> EvalReport:
    """
    Elimina el ruido de cada par a su ratio y promedia PSNR/SSIM por ratio.

    Cada par se recorta al mayor bloque superior-izquierdo compatible con la red.
    """
    selected = [pair for _, pair in pairs if ratios is None or pair.ratio in ratios]
    if not selected:
        raise InsufficientDataException("No hay pares que evaluar")
    divisor = net.config.spatial_divisor

    def score(pair: FewShotPair) -> Tuple[float, PSNRValue, float]:
        noisy = pack_bayer(crop_plane_to_multiple(pair.noisy, divisor))
        clean = pack_bayer(crop_plane_to_multiple(pair.clean, divisor))
        estimate = denoise(net, noisy, pair.ratio, branch_index)
        return pair.ratio, psnr(estimate, clean), ssim(estimate, clean)

    with single_threaded_blas():
        scores = parallel_map(score, selected, threads)

    groups: "OrderedDict[float, List[Tuple[PSNRValue, float]]]" = OrderedDict()
    for ratio, p, s in scores:
        groups.setdefault(ratio, []).append((p, s))

    per_ratio = []
    for ratio in sorted(groups):
        values = groups[ratio]
        per_ratio.append(
            RatioReport(
                ratio=ratio,
                count=len(values),
                psnr_db=_mean_psnr([p for p, _ in values]),
                ssim=float(np.mean([s for _, s in values])),
            )
        )
        logger.info(f"📊 ratio ×{ratio:g}: PSNR {per_ratio[-1].psnr_db} dB, SSIM {per_ratio[-1].ssim:.4f}")
    return EvalReport(per_ratio=per_ratio)


def report_frame(report: EvalReport) -> pd.DataFrame:
    rows = [
        {
            "ratio": r.ratio,
            "count": r.count,
            "psnr_db": "inf" if is_infinite(r.psnr_db) else repr(float(r.psnr_db)),
            "ssim": r.ssim,
        }
        for r in report.per_ratio
    ]
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_report_csv(report: EvalReport, path: Union[str, Path]) -> None:
    """CSV con cabecera ratio,count,psnr_db,ssim; un PSNR infinito se escribe como "inf" """
    with atomic_writer(path, "w") as handle:
        report_frame(report).to_csv(handle, index=False)
    logger.info(f"✅ Informe escrito en {path}")
