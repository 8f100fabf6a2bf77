import logging
import coloredlogs
from core.config import settings

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def setup_logging(level: str | None = None) -> None:
    """Instala el formato de logs coloreado para todo el proceso"""
    resolved = (level or settings.LOG_LEVEL).upper()
    if settings.DEBUG:
        resolved = "DEBUG"
    coloredlogs.install(level=resolved, fmt=LOG_FORMAT)
    # filelock registra cada bloqueo en DEBUG
    logging.getLogger("filelock").setLevel(logging.WARNING)


def progress_enabled() -> bool:
    """Las barras tqdm solo se muestran con nivel INFO o más detallado"""
    return logging.getLogger().getEffectiveLevel() <= logging.INFO
