"""
Contenedor binario de tensores con nombre (checkpoints e imágenes).

Formato, todo little-endian:

    "LEDC" | u8 versión=1 | u32 n_entradas
    por entrada (orden lexicográfico de nombre):
        u16 len(nombre) | nombre UTF-8 | u8 dtype (0=f32, 1=f64) | u8 ndim | ndim×u32 dims | payload fila-mayor
    u32 n_metadatos
    por par (orden lexicográfico de clave): u16 len | clave | u16 len | valor
    u64 FNV-1a de todos los bytes anteriores
"""
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from exceptions.base import CorruptContainerException, DataFormatException, ShapeException
from utils.atomic import write_bytes_atomic

logger = logging.getLogger(__name__)

MAGIC = b"LEDC"
VERSION = 1
IMAGE_KEY = "image"

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_FNV_BLOCK = 4


def fnv1a_64(payload: bytes) -> int:
    """
    FNV-1a de 64 bits. La recurrencia es serial byte a byte; se enmascara una vez
    por bloque porque los 64 bits bajos de (h ^ b)·P solo dependen de los 64 bits
    bajos de h.
    """
    h = _FNV_OFFSET
    view = memoryview(payload).cast("B")
    prime = _FNV_PRIME
    for start in range(0, len(view), _FNV_BLOCK):
        for byte in view[start:start + _FNV_BLOCK]:
            h = (h ^ byte) * prime
        h &= _MASK64
    return h


@dataclass
class ContainerContents:
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: Dict[str, str] = field(default_factory=dict)


def _encode_str(value: str, label: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise DataFormatException(f"{label} demasiado largo ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


# ============================================
# 🔹 Codificación
# ============================================
def encode_container(tensors: Mapping[str, np.ndarray], metadata: Optional[Mapping[str, str]] = None) -> bytes:
    metadata = metadata or {}
    parts = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    for name in sorted(tensors):
        array = np.asarray(tensors[name])
        dtype = array.dtype.newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            raise DataFormatException(f"'{name}': dtype {array.dtype} no soportado (float32|float64)")
        if array.ndim == 0 or array.ndim > 255 or any(d < 1 for d in array.shape):
            raise ShapeException(f"'{name}': forma {array.shape} no representable")
        parts.append(_encode_str(name, "Nombre"))
        parts.append(struct.pack("<BB", _DTYPE_CODES[dtype], array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes(order="C"))
    parts.append(struct.pack("<I", len(metadata)))
    for key in sorted(metadata):
        parts.append(_encode_str(key, "Clave"))
        parts.append(_encode_str(str(metadata[key]), "Valor"))
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a_64(body))


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CorruptContainerException(self.source, "datos truncados")
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (length,) = self.unpack("<H")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptContainerException(self.source, "cadena no UTF-8")


def decode_container(payload: bytes, source: str = "<memoria>") -> ContainerContents:
    if len(payload) < len(MAGIC) + 5 + 4 + 8:
        raise CorruptContainerException(source, "archivo demasiado corto")
    body, trailer = payload[:-8], payload[-8:]
    if body[:4] != MAGIC:
        raise CorruptContainerException(source, "magic incorrecto")
    if body[4] != VERSION:
        raise CorruptContainerException(source, f"versión {body[4]} no soportada")
    (stored,) = struct.unpack("<Q", trailer)
    if stored != fnv1a_64(body):
        raise CorruptContainerException(source, "checksum FNV-1a no coincide")

    reader = _Reader(body, source)
    reader.take(5)
    (count,) = reader.unpack("<I")
    contents = ContainerContents()
    for _ in range(count):
        name = reader.string()
        code, ndim = reader.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise CorruptContainerException(source, f"código de dtype {code} desconocido")
        dims = reader.unpack(f"<{ndim}I") if ndim else ()
        if ndim == 0 or any(d < 1 for d in dims):
            raise CorruptContainerException(source, f"'{name}': dimensiones inválidas {dims}")
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(dims)) * dtype.itemsize
        array = np.frombuffer(reader.take(nbytes), dtype=dtype).reshape(dims)
        if name in contents.tensors:
            raise CorruptContainerException(source, f"nombre duplicado '{name}'")
        # Copia nativa y escribible
        contents.tensors[name] = array.astype(dtype.newbyteorder("="), copy=True)
    (meta_count,) = reader.unpack("<I")
    for _ in range(meta_count):
        key = reader.string()
        contents.metadata[key] = reader.string()
    if reader.offset != len(body):
        raise CorruptContainerException(source, "bytes sobrantes tras los metadatos")
    return contents


# ============================================
# 🔹 Archivos
# ============================================
def write_container(
    path: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    metadata: Optional[Mapping[str, str]] = None,
) -> None:
    payload = encode_container(tensors, metadata)
    write_bytes_atomic(path, payload)
    logger.debug(f"💾 Contenedor {path}: {len(tensors)} tensores, {len(payload)} bytes")


def read_container(path: Union[str, Path]) -> ContainerContents:
    source = Path(path)
    if not source.is_file():
        raise DataFormatException(f"No existe el contenedor '{source}'")
    return decode_container(source.read_bytes(), str(source))


def write_image(path: Union[str, Path], image: np.ndarray, metadata: Optional[Mapping[str, str]] = None) -> None:
    write_container(path, {IMAGE_KEY: image}, metadata)


def read_image(path: Union[str, Path]) -> Tuple[np.ndarray, Dict[str, str]]:
    contents = read_container(path)
    if set(contents.tensors) != {IMAGE_KEY}:
        raise DataFormatException(f"'{path}' no es una imagen: tensores {sorted(contents.tensors)}")
    return contents.tensors[IMAGE_KEY], contents.metadata
