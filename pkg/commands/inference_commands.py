"""Subcomandos de inferencia: despliegue, denoising de una imagen y evaluación."""
import logging
from pathlib import Path
from typing import Optional

import typer

from commands.context import get_state, parse_ratios
from exceptions.base import ShapeException
from models.network import deploy_network
from repositories.checkpoint_repo import load_network, save_network
from repositories.container_repo import read_image, write_image
from repositories.manifest_repo import ManifestRepository
from services.metrics_service import evaluate, write_report_csv
from services.training_service import crop_plane_to_multiple, denoise as denoise_packed
from utils.bayer import pack_bayer, unpack_bayer

logger = logging.getLogger(__name__)

BRANCH_HELP = "Rama CSA (0-based) para checkpoints en fase pretrain"


def deploy(
    ckpt: Path = typer.Option(..., "--ckpt"),
    out: Path = typer.Option(..., "--out"),
    branch: Optional[int] = typer.Option(None, "--branch", min=0, help=BRANCH_HELP),
):
    """Fusiona cada bloque RepNR en una convolución 3×3 plana"""
    net = load_network(ckpt)
    save_network(out, deploy_network(net, branch))


def denoise(
    ckpt: Path = typer.Option(..., "--ckpt"),
    source: Path = typer.Option(..., "--in", help="Imagen ruidosa: plano Bayer [H,W] o empaquetado [4,h,w]"),
    ratio: float = typer.Option(..., "--ratio", min=1.0),
    out: Path = typer.Option(..., "--out"),
    branch: Optional[int] = typer.Option(None, "--branch", min=0, help=BRANCH_HELP),
):
    """
    clamp(red(clamp(ruidosa·ratio, 0, 1)), 0, 1). Un plano Bayer se recorta
    arriba a la izquierda al tamaño que admite la red y se devuelve como plano.
    """
    net = load_network(ckpt)
    image, metadata = read_image(source)
    divisor = net.config.spatial_divisor

    if image.ndim == 2:
        plane = crop_plane_to_multiple(image, divisor)
        if plane.shape != image.shape:
            logger.warning(f"⚠️ Imagen {image.shape} recortada a {plane.shape}")
        result = unpack_bayer(denoise_packed(net, pack_bayer(plane), ratio, branch))
    elif image.ndim == 3:
        if image.shape[1] % divisor or image.shape[2] % divisor:
            raise ShapeException(f"Imagen empaquetada {image.shape} no divisible por {divisor}")
        result = denoise_packed(net, image, ratio, branch)
    else:
        raise ShapeException(f"Imagen con forma no soportada: {image.shape}")

    metadata = {**metadata, "kind": "denoised", "ratio": repr(ratio)}
    write_image(out, result.astype(image.dtype), metadata)
    logger.info(f"✅ Imagen sin ruido escrita en {out}")


def eval_command(
    ctx: typer.Context,
    ckpt: Path = typer.Option(..., "--ckpt"),
    pairs: Path = typer.Option(..., "--pairs", help="Manifiesto de pares de evaluación"),
    out: Path = typer.Option(..., "--out", help="CSV ratio,count,psnr_db,ssim"),
    ratios: Optional[str] = typer.Option(None, "--ratios", help="Filtrar ratios, p.ej. 100,250"),
    branch: Optional[int] = typer.Option(None, "--branch", min=0, help=BRANCH_HELP),
):
    """PSNR/SSIM medios por ratio sobre todos los pares del manifiesto"""
    state = get_state(ctx)
    net = load_network(ckpt)
    loaded = ManifestRepository(pairs).load_pairs()
    ratio_filter = parse_ratios(ratios) if ratios else None
    report = evaluate(net, loaded, ratio_filter, branch, threads=state.threads)
    write_report_csv(report, out)


def register(app: typer.Typer) -> None:
    app.command("deploy")(deploy)
    app.command("denoise")(denoise)
    app.command("eval")(eval_command)
