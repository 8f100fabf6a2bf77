# utils/json_utils.py
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import orjson
from pydantic import BaseModel

from exceptions.base import DataFormatException
from utils.atomic import atomic_writer

logger = logging.getLogger(__name__)


def _to_dict(record: Union[BaseModel, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(record, BaseModel):
        return record.model_dump(by_alias=True, exclude_none=True)
    return dict(record)


def safe_json_dumps(obj: Any) -> bytes:
    """Serializa con claves ordenadas; numpy y pydantic se convierten solos"""
    if isinstance(obj, BaseModel):
        obj = _to_dict(obj)
    return orjson.dumps(obj, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)


def write_jsonl(path: Union[str, Path], records: Iterable[Union[BaseModel, Dict[str, Any]]]) -> int:
    """Escribe un registro por línea (UTF-8) de forma atómica y devuelve cuántos escribió"""
    count = 0
    with atomic_writer(path, "wb") as handle:
        for record in records:
            handle.write(safe_json_dumps(_to_dict(record)))
            handle.write(b"\n")
            count += 1
    return count


def read_jsonl(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Lee un JSON-lines; ignora líneas vacías y reporta la línea que falle"""
    source = Path(path)
    if not source.is_file():
        raise DataFormatException(f"No existe el archivo '{source}'")
    records = []
    with source.open("rb") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                value = orjson.loads(line)
            except orjson.JSONDecodeError as e:
                raise DataFormatException(f"{source}:{number}: JSON inválido ({e})")
            if not isinstance(value, dict):
                raise DataFormatException(f"{source}:{number}: se esperaba un objeto JSON")
            records.append(value)
    return records
