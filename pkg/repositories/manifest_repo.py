import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from exceptions.base import DataFormatException, InsufficientDataException, ShapeException
from repositories.container_repo import read_image
from schemas.data_schemas import ManifestEntry
from schemas.training_schemas import FewShotPair
from utils.json_utils import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)


class ManifestRepository:
    """
    Manifiesto JSON-lines de pares ruidoso/limpio.

    Las rutas relativas de cada entrada se resuelven contra el directorio del manifiesto.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.base_dir = self.path.parent

    def resolve(self, relative: str) -> Path:
        candidate = Path(relative)
        return candidate if candidate.is_absolute() else self.base_dir / candidate

    def relative(self, target: Union[str, Path]) -> str:
        """Ruta a guardar en el manifiesto (relativa si cae bajo su directorio)"""
        target = Path(target).resolve()
        try:
            return target.relative_to(self.base_dir.resolve()).as_posix()
        except ValueError:
            return str(target)

    # ============================================
    # 🔹 Lectura / escritura
    # ============================================
    def read_manifest(self) -> List[ManifestEntry]:
        entries = []
        for number, record in enumerate(read_jsonl(self.path), start=1):
            try:
                entries.append(ManifestEntry(**record))
            except ValidationError as e:
                raise DataFormatException(f"{self.path}:{number}: entrada inválida: {e.errors()[0]['msg']}")
        if not entries:
            raise InsufficientDataException(f"El manifiesto '{self.path}' está vacío")
        logger.debug(f"📂 {len(entries)} entradas en {self.path}")
        return entries

    def write_manifest(self, entries: Sequence[ManifestEntry]) -> None:
        count = write_jsonl(self.path, entries)
        logger.info(f"✅ Manifiesto {self.path} con {count} entradas")

    # ============================================
    # 🔹 Carga de imágenes
    # ============================================
    def _load_plane(self, relative: str) -> np.ndarray:
        target = self.resolve(relative)
        if not target.is_file():
            raise DataFormatException(f"La entrada referencia '{target}', que no existe")
        plane, _ = read_image(target)
        if plane.ndim != 2:
            raise ShapeException(f"'{target}' no es un plano Bayer [H,W]: {plane.shape}")
        return plane

    def load_clean_frames(self, entries: Sequence[ManifestEntry] = None) -> List[np.ndarray]:
        entries = entries if entries is not None else self.read_manifest()
        return [self._load_plane(entry.clean_path) for entry in entries]

    def load_pairs(self, entries: Sequence[ManifestEntry] = None) -> List[Tuple[ManifestEntry, FewShotPair]]:
        """Carga cada par y rechaza los que no comparten dimensiones"""
        entries = entries if entries is not None else self.read_manifest()
        pairs = []
        for entry in entries:
            if entry.noisy_path is None:
                raise DataFormatException(f"La entrada '{entry.clean_path}' no tiene noisy_path")
            clean = self._load_plane(entry.clean_path)
            noisy = self._load_plane(entry.noisy_path)
            if clean.shape != noisy.shape:
                raise ShapeException(
                    f"Par con dimensiones distintas: {entry.noisy_path} {noisy.shape} vs {entry.clean_path} {clean.shape}"
                )
            try:
                pair = FewShotPair(
                    noisy=noisy,
                    clean=clean,
                    ratio=entry.ratio,
                    K=entry.K,
                    sigma_tl=entry.sigma_tl,
                    sigma_r=entry.sigma_r,
                    camera_id=entry.camera_id,
                    scene_id=entry.scene_id,
                )
            except ValidationError as e:
                raise ShapeException(f"Par inválido '{entry.clean_path}': {e.errors()[0]['msg']}")
            pairs.append((entry, pair))
        return pairs
