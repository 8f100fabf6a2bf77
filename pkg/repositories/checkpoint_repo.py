import logging
from pathlib import Path
from typing import Dict, Optional, Union

from pydantic import ValidationError

from exceptions.base import DataFormatException
from models.network import LEDNetwork, skeleton_network
from models.repnr import RepNRPhase
from repositories.container_repo import read_container, write_container
from schemas.network_schemas import NetworkConfig

logger = logging.getLogger(__name__)

# Campos de NetworkConfig que viajan en los metadatos del checkpoint
_CONFIG_KEYS = ("base_width", "stages", "in_channels", "out_channels", "leaky_slope", "precision", "online_reparam")


def network_metadata(net: LEDNetwork, extra: Optional[Dict[str, str]] = None) -> Dict[str, str]:
    metadata = {"phase": net.phase.value, "m": str(net.m)}
    for key in _CONFIG_KEYS:
        metadata[key] = str(getattr(net.config, key))
    if extra:
        metadata.update({key: str(value) for key, value in extra.items()})
    return metadata


def save_network(path: Union[str, Path], net: LEDNetwork, extra: Optional[Dict[str, str]] = None) -> None:
    write_container(path, net.state_dict(), network_metadata(net, extra))
    logger.info(f"✅ Checkpoint guardado en {path} (fase {net.phase.value})")


def load_network(path: Union[str, Path]) -> LEDNetwork:
    """Reconstruye la red con la estructura de su fase y carga los parámetros de forma estricta"""
    contents = read_container(path)
    meta = contents.metadata
    missing = [key for key in ("phase", "m") + _CONFIG_KEYS if key not in meta]
    if missing:
        raise DataFormatException(f"'{path}' no es un checkpoint de red: faltan metadatos {missing}")
    try:
        config = NetworkConfig(
            base_width=int(meta["base_width"]),
            stages=int(meta["stages"]),
            in_channels=int(meta["in_channels"]),
            out_channels=int(meta["out_channels"]),
            leaky_slope=float(meta["leaky_slope"]),
            precision=meta["precision"],
            online_reparam=meta["online_reparam"] == "True",
        )
        phase = RepNRPhase(meta["phase"])
        m = int(meta["m"])
    except (ValueError, ValidationError) as e:
        raise DataFormatException(f"Metadatos de checkpoint inválidos en '{path}': {e}")

    net = skeleton_network(config, m, phase)
    net.load_parameters(contents.tensors)
    logger.info(f"📂 Checkpoint {path} cargado (fase {phase.value}, m={m})")
    return net
