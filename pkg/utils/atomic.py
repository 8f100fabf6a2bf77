"""Escrituras atómicas: archivo temporal en el mismo directorio + os.replace, bajo FileLock"""
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator, Union

from filelock import FileLock, Timeout

from core.config import settings
from exceptions.base import DataFormatException

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@contextmanager
def atomic_writer(path: PathLike, mode: str = "wb") -> Iterator[IO]:
    """
    Abre un temporal junto a ``path`` y lo renombra al cerrar sin errores.

    Un único escritor por ruta, serializado con ``<path>.lock``.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(target) + ".lock", timeout=settings.LOCK_TIMEOUT_SECONDS)
    try:
        with lock:
            fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
            try:
                encoding = None if "b" in mode else "utf-8"
                with os.fdopen(fd, mode, encoding=encoding, newline="" if encoding else None) as handle:
                    yield handle
                    handle.flush()
                    os.fsync(handle.fileno())
                os.replace(tmp_name, target)
            except BaseException:
                if os.path.exists(tmp_name):
                    os.remove(tmp_name)
                raise
    except Timeout:
        raise DataFormatException(f"No se pudo bloquear '{target}' para escritura")
    logger.debug(f"💾 Escrito {target}")


def write_bytes_atomic(path: PathLike, payload: bytes) -> None:
    with atomic_writer(path, "wb") as handle:
        handle.write(payload)


def write_text_atomic(path: PathLike, text: str) -> None:
    with atomic_writer(path, "w") as handle:
        handle.write(text)
