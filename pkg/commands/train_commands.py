"""Subcomandos de entrenamiento: pre-entrenamiento multi-cámara y ajuste few-shot."""
import logging
from pathlib import Path
from typing import List, Optional

import typer

from commands.context import InitChoice, SelectChoice, get_state
from core.run_config import load_run_config
from exceptions.base import PhaseException
from models.network import build_network
from models.repnr import RepNRPhase
from repositories.camera_repo import CameraRepository
from repositories.checkpoint_repo import load_network, save_network
from repositories.manifest_repo import ManifestRepository
from services.camera_service import select_fewshot_pairs
from services.training_service import finetune as finetune_network
from services.training_service import pretrain as pretrain_network
from utils.rng import Stream, get_rng

logger = logging.getLogger(__name__)


def pretrain(
    ctx: typer.Context,
    clean: Path = typer.Option(..., "--clean", help="Manifiesto de escenas limpias"),
    cameras: Path = typer.Option(..., "--cameras", help="Lista de cámaras virtuales"),
    out: Path = typer.Option(..., "--out", help="Checkpoint a escribir"),
    config_path: Optional[Path] = typer.Option(None, "--config"),
    trace: Optional[Path] = typer.Option(None, "--trace", help="CSV (phase, iteration, lr, loss)"),
    overrides: List[str] = typer.Option([], "--set"),
):
    """Pre-entrena la red con una rama CSA por cámara virtual"""
    state = get_state(ctx)
    config = load_run_config(config_path, overrides)
    camera_list = CameraRepository(cameras).read_cameras()
    if len(camera_list) != config.net.m:
        logger.warning(f"⚠️ net.m={config.net.m} pero hay {len(camera_list)} cámaras: se usan las cámaras")
    frames = ManifestRepository(clean).load_clean_frames()

    net = build_network(config.network_config(), len(camera_list), get_rng(state.seed, Stream.INIT))
    result = pretrain_network(
        net,
        camera_list,
        frames,
        config.train_config(state.seed),
        levels=config.sensor_levels(),
        components=config.noise_components(),
        threads=state.threads,
        trace_path=trace,
    )
    save_network(out, net, {"seed": state.seed, "iterations": result.iterations})


def finetune(
    ctx: typer.Context,
    ckpt: Path = typer.Option(..., "--ckpt", help="Checkpoint pre-entrenado"),
    pairs: Path = typer.Option(..., "--pairs", help="Manifiesto de pares de la cámara objetivo"),
    out: Path = typer.Option(..., "--out"),
    config_path: Optional[Path] = typer.Option(None, "--config"),
    init: Optional[InitChoice] = typer.Option(None, "--init", help="Inicialización de CSA^T (finetune.init)"),
    select: Optional[SelectChoice] = typer.Option(None, "--select", help="Selección de pares (finetune.select)"),
    trace: Optional[Path] = typer.Option(None, "--trace"),
    overrides: List[str] = typer.Option([], "--set"),
):
    """
    Ajuste en dos fases sobre pocos pares de la cámara objetivo:
    - **--init**: average (media de las ramas) o unit (1, 0)
    - **--select**: spread o similar según la dispersión de log K
    """
    state = get_state(ctx)
    config = load_run_config(config_path, overrides)
    ft = config.finetune

    net = load_network(ckpt)
    if net.phase != RepNRPhase.PRETRAIN:
        raise PhaseException(net.phase.value, "finetune")

    repo = ManifestRepository(pairs)
    mode = select.value if select is not None else ft.select
    selected = select_fewshot_pairs(repo.read_manifest(), ft.pairs_per_ratio, mode)
    loaded = repo.load_pairs(selected)

    phase1, phase2 = config.finetune_configs(state.seed)
    finetune_network(
        net,
        [pair for _, pair in loaded],
        phase1,
        phase2,
        init_mode=init.value if init is not None else ft.init,
        skip_csa=ft.skip_csa,
        skip_omnr=ft.skip_omnr,
        trace_path=trace,
    )
    scenes = ",".join(entry.scene_id or entry.clean_path for entry, _ in loaded)
    save_network(out, net, {"seed": state.seed, "fewshot_scenes": scenes})


def register(app: typer.Typer) -> None:
    app.command("pretrain")(pretrain)
    app.command("finetune")(finetune)
