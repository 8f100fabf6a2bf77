"""Estado compartido por los subcomandos (opciones globales) y utilidades de parseo."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List

import typer

from exceptions.base import UsageException

logger = logging.getLogger(__name__)

IMAGE_SUFFIX = ".ledc"


@dataclass(frozen=True)
class CLIState:
    seed: int
    threads: int


class InitChoice(str, Enum):
    AVERAGE = "average"
    UNIT = "unit"


class SelectChoice(str, Enum):
    SPREAD = "spread"
    SIMILAR = "similar"


class LogLevel(str, Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


def get_state(ctx: typer.Context) -> CLIState:
    state = ctx.find_object(CLIState)
    if state is None:
        raise UsageException("Opciones globales no inicializadas")
    return state


def parse_ratios(text: str) -> List[float]:
    """'100,250,300' → [100.0, 250.0, 300.0]"""
    try:
        ratios = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise UsageException(f"--ratios inválido: '{text}'")
    if not ratios or any(r < 1 for r in ratios):
        raise UsageException(f"--ratios necesita valores >= 1: '{text}'")
    return ratios
