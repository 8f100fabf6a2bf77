import logging
from pathlib import Path
from typing import List, Sequence, Union

from pydantic import ValidationError

from exceptions.base import DataFormatException, InsufficientDataException
from schemas.camera_schemas import CameraParams
from utils.json_utils import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)


class CameraRepository:
    """Lista de cámaras (virtuales u objetivo) en JSON-lines, una por línea"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def write_cameras(self, cameras: Sequence[CameraParams]) -> None:
        count = write_jsonl(self.path, cameras)
        logger.info(f"✅ {count} cámaras escritas en {self.path}")

    def read_cameras(self) -> List[CameraParams]:
        cameras = []
        for number, record in enumerate(read_jsonl(self.path), start=1):
            try:
                cameras.append(CameraParams(**record))
            except ValidationError as e:
                raise DataFormatException(f"{self.path}: cámara {number} inválida: {e.errors()[0]['msg']}")
        if not cameras:
            raise InsufficientDataException(f"'{self.path}' no contiene cámaras")
        logger.debug(f"📂 {len(cameras)} cámaras en {self.path}")
        return cameras
