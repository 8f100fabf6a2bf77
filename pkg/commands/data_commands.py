"""Subcomandos de datos: cámaras virtuales, escenas limpias, síntesis de pares y recta de ganancia."""
import logging
from collections import OrderedDict
from pathlib import Path
from typing import List, Optional

import pandas as pd
import typer

from commands.context import IMAGE_SUFFIX, get_state, parse_ratios
from core.run_config import load_run_config
from exceptions.base import DegenerateException, UnderdeterminedException
from repositories.camera_repo import CameraRepository
from repositories.container_repo import write_image
from repositories.manifest_repo import ManifestRepository
from schemas.data_schemas import ManifestEntry
from services.camera_service import fit_gain_line, generate_virtual_cameras
from services.dataset_service import generate_clean_frames, synthesize_pairs
from utils.atomic import atomic_writer

logger = logging.getLogger(__name__)

GAIN_LINE_COLUMNS = [
    "camera_id", "line", "n_points", "status",
    "slope", "intercept", "residual", "slope_se", "intercept_se",
]


def gen_cameras(
    ctx: typer.Context,
    out: Path = typer.Option(..., "--out", help="Lista de cámaras (JSON lines)"),
    m: Optional[int] = typer.Option(None, "--m", min=1, help="Número de cámaras virtuales (por defecto net.m)"),
    space: Optional[Path] = typer.Option(None, "--space", help="Archivo de configuración con claves space.*"),
    overrides: List[str] = typer.Option([], "--set", help="Sobrescritura clave=valor"),
):
    """
    Genera m cámaras virtuales equiespaciadas en el espacio de parámetros:
    - **--space**: rangos space.<coordenada>_lo / _hi
    - **--m**: cámaras a generar
    """
    config = load_run_config(space, overrides)
    cameras = generate_virtual_cameras(m or config.net.m, config.parameter_space())
    CameraRepository(out).write_cameras(cameras)


def gen_clean(
    ctx: typer.Context,
    out: Path = typer.Option(..., "--out", help="Manifiesto de escenas limpias"),
    count: int = typer.Option(8, "--count", min=1),
    height: int = typer.Option(256, "--height", min=2),
    width: int = typer.Option(256, "--width", min=2),
):
    """Escenas Bayer limpias procedurales, una imagen por escena junto al manifiesto"""
    state = get_state(ctx)
    frames = generate_clean_frames(count, height, width, state.seed)
    repo = ManifestRepository(out)
    target_dir = repo.base_dir / "clean"

    entries = []
    for index, frame in enumerate(frames):
        path = target_dir / f"scene-{index:04d}{IMAGE_SUFFIX}"
        write_image(path, frame, {"kind": "clean", "seed": str(state.seed)})
        entries.append(ManifestEntry(clean_path=repo.relative(path), scene_id=f"scene-{index}"))
    repo.write_manifest(entries)


def synth(
    ctx: typer.Context,
    cameras: Path = typer.Option(..., "--cameras", help="Lista de cámaras (JSON lines)"),
    clean: Path = typer.Option(..., "--clean", help="Manifiesto de escenas limpias"),
    out: Path = typer.Option(..., "--out", help="Manifiesto de pares a escribir"),
    ratios: str = typer.Option("100,250,300", "--ratios"),
    pairs_per_ratio: Optional[int] = typer.Option(None, "--pairs-per-ratio", min=1),
    out_of_model: bool = typer.Option(False, "--out-of-model", help="Añade el residuo oom.* (cámara objetivo)"),
    config_path: Optional[Path] = typer.Option(None, "--config"),
    overrides: List[str] = typer.Option([], "--set"),
):
    """
    Sintetiza pares ruidoso/limpio:
    - el par j usa la escena j y la cámara j mod n
    - cada entrada guarda K, sigma_tl y sigma_r como procedencia
    """
    state = get_state(ctx)
    config = load_run_config(config_path, overrides)
    ratio_list = parse_ratios(ratios)
    camera_list = CameraRepository(cameras).read_cameras()

    clean_repo = ManifestRepository(clean)
    clean_entries = clean_repo.read_manifest()
    frames = clean_repo.load_clean_frames(clean_entries)
    per_ratio = pairs_per_ratio or max(1, len(frames) // len(ratio_list))

    pairs = synthesize_pairs(
        frames,
        camera_list,
        ratio_list,
        per_ratio,
        state.seed,
        levels=config.sensor_levels(),
        oom=config.out_of_model() if out_of_model else None,
        components=config.noise_components(),
    )

    out_repo = ManifestRepository(out)
    entries = []
    for j, pair in enumerate(pairs):
        source = clean_entries[j]
        noisy_path = out_repo.base_dir / "noisy" / f"pair-{j:04d}{IMAGE_SUFFIX}"
        write_image(noisy_path, pair.noisy, {"kind": "noisy", "ratio": repr(pair.ratio)})
        entries.append(
            ManifestEntry(
                clean_path=out_repo.relative(clean_repo.resolve(source.clean_path)),
                noisy_path=out_repo.relative(noisy_path),
                ratio=pair.ratio,
                camera_id=pair.camera_id,
                K=pair.K,
                scene_id=source.scene_id or pair.scene_id,
                sigma_tl=pair.sigma_tl,
                sigma_r=pair.sigma_r,
            )
        )
    out_repo.write_manifest(entries)


def _fit_row(camera_id: str, line: str, points) -> dict:
    row = {"camera_id": camera_id, "line": line, "n_points": len(points)}
    try:
        fit = fit_gain_line(points)
    except UnderdeterminedException:
        row["status"] = "underdetermined"
        return row
    except DegenerateException:
        row["status"] = "degenerate"
        return row
    row.update(status="ok", **fit.model_dump(exclude={"n_points"}))
    return row


def gain_line(
    ctx: typer.Context,
    pairs: Path = typer.Option(..., "--pairs", help="Manifiesto con procedencia K / sigma"),
    out: Path = typer.Option(..., "--out", help="CSV de resultados"),
):
    """
    Ajusta log σ_TL y log σ_r sobre log K por cámara e informa si cada recta es
    identificable (ok / underdetermined / degenerate).
    """
    entries = ManifestRepository(pairs).read_manifest()
    groups: "OrderedDict[str, List[ManifestEntry]]" = OrderedDict()
    for entry in entries:
        if entry.K is not None:
            groups.setdefault(entry.camera_id or "unknown", []).append(entry)
    if not groups:
        logger.warning("⚠️ Ninguna entrada tiene K registrado: el informe queda vacío")

    rows = []
    for camera_id, group in groups.items():
        for line, attribute in (("tl", "sigma_tl"), ("r", "sigma_r")):
            points = [
                (e.K, getattr(e, attribute))
                for e in group
                if getattr(e, attribute) is not None and getattr(e, attribute) > 0
            ]
            rows.append(_fit_row(camera_id, line, points))
            if rows[-1]["status"] == "ok":
                logger.info(
                    f"📈 {camera_id}/{line}: pendiente {rows[-1]['slope']:.4f}, "
                    f"ordenada {rows[-1]['intercept']:.4f} ({len(points)} puntos)"
                )
            else:
                logger.warning(f"⚠️ {camera_id}/{line}: recta {rows[-1]['status']} con {len(points)} puntos")

    frame = pd.DataFrame(rows, columns=GAIN_LINE_COLUMNS)
    with atomic_writer(out, "w") as handle:
        frame.to_csv(handle, index=False)
    logger.info(f"✅ Rectas de ganancia escritas en {out}")


def register(app: typer.Typer) -> None:
    app.command("gen-cameras")(gen_cameras)
    app.command("gen-clean")(gen_clean)
    app.command("synth")(synth)
    app.command("gain-line")(gain_line)
