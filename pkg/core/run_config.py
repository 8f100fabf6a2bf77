"""
Configuración de una ejecución: archivo plano ``clave=valor`` (UTF-8, comentarios
con ``#``) con claves ``space.*``, ``net.*``, ``train.*``, ``finetune.*``,
``noise.*`` y ``oom.*``, más sobrescrituras ``--set clave=valor``.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, create_model, field_validator, model_validator

from core.config import settings
from exceptions.base import DataFormatException, UsageException
from schemas.camera_schemas import CAMERA_COORDINATES, COORDINATE_KEYS, ParameterSpace, ParamRange, SelectionMode
from schemas.network_schemas import NetworkConfig, Precision
from schemas.noise_schemas import NoiseComponents, SensorLevels
from schemas.training_schemas import LRMilestone, OutOfModelSpec, TrainConfig

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


# space.<coordenada>_lo / _hi; lo que no se indique conserva el rango por defecto
SpaceSection = create_model(
    "SpaceSection",
    __base__=_Section,
    **{
        f"{COORDINATE_KEYS[name]}_{bound}": (Optional[float], None)
        for name in CAMERA_COORDINATES
        for bound in ("lo", "hi")
    },
)


class NetSection(_Section):
    base_width: int = 32
    stages: int = 5
    leaky_slope: float = 0.2
    precision: Precision = "single"
    m: int = Field(default_factory=lambda: settings.VIRTUAL_CAMERAS, ge=1)
    online_reparam: bool = False


class TrainSection(_Section):
    iterations: int = 2000
    batch_size: int = 1
    patch_size: int = 512
    lr_initial: float = 1e-4
    lr_schedule: Optional[List[LRMilestone]] = None
    ratios: List[float] = Field(default_factory=lambda: [100.0, 250.0, 300.0])
    seed: Optional[int] = None

    @field_validator("ratios", mode="before")
    @classmethod
    def _parse_ratios(cls, value):
        return _split_list(value)

    @field_validator("lr_schedule", mode="before")
    @classmethod
    def _parse_schedule(cls, value):
        # "0.5:5e-5,0.9:1e-5"; cadena vacía = tasa constante
        if not isinstance(value, str):
            return value
        if value.strip().lower() == "default":
            return None
        milestones = []
        for item in _split_list(value):
            fraction, sep, lr = item.partition(":")
            if not sep:
                raise ValueError(f"Hito '{item}' inválido, se esperaba fraccion:lr")
            milestones.append({"fraction": fraction, "lr": lr})
        return milestones


class FinetuneSection(_Section):
    csa_iterations: int = 1000
    csa_lr: float = 1e-4
    omnr_iterations: int = 500
    omnr_lr: float = 1e-5
    batch_size: int = 1
    patch_size: int = 512
    pairs_per_ratio: int = Field(2, ge=1)
    init: Literal["average", "unit"] = "average"
    select: SelectionMode = "spread"
    seed: Optional[int] = None
    skip_csa: bool = False
    skip_omnr: bool = False


class NoiseSection(_Section):
    black_level: float = Field(default_factory=lambda: settings.BLACK_LEVEL)
    white_level: float = Field(default_factory=lambda: settings.WHITE_LEVEL)
    shot: bool = True
    read: bool = True
    row: bool = True
    quant: bool = True


class OOMSection(_Section):
    fixed_pattern_amplitude: float = 8.0
    banding_period: int = 16
    banding_amplitude: float = 4.0
    seed: int = 0


class RunConfig(BaseModel):
    """Configuración completa de una ejecución; las claves desconocidas se rechazan"""
    space: SpaceSection = Field(default_factory=SpaceSection)
    net: NetSection = Field(default_factory=NetSection)
    train: TrainSection = Field(default_factory=TrainSection)
    finetune: FinetuneSection = Field(default_factory=FinetuneSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    oom: OOMSection = Field(default_factory=OOMSection)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_derived(self):
        # Los objetos de dominio validan sus propios invariantes (lo <= hi, stages >= 2, ...)
        try:
            self.parameter_space()
            self.network_config()
            self.train_config(0)
            self.finetune_configs(0)
            self.sensor_levels()
            self.out_of_model()
        except ValidationError as e:
            raise ValueError(_first_error(e))
        return self

    # ============================================
    # 🔹 Objetos de dominio
    # ============================================
    def parameter_space(self) -> ParameterSpace:
        defaults = ParameterSpace().ranges()
        ranges = {}
        for name in CAMERA_COORDINATES:
            key = COORDINATE_KEYS[name]
            lo = getattr(self.space, f"{key}_lo")
            hi = getattr(self.space, f"{key}_hi")
            ranges[key] = ParamRange(
                lo=defaults[name].lo if lo is None else lo,
                hi=defaults[name].hi if hi is None else hi,
            )
        return ParameterSpace(**ranges)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(**self.net.model_dump(exclude={"m"}))

    def train_config(self, seed: int) -> TrainConfig:
        values = self.train.model_dump(exclude={"seed"})
        values["seed"] = seed if self.train.seed is None else self.train.seed
        return TrainConfig(**values)

    def finetune_configs(self, seed: int) -> Tuple[TrainConfig, TrainConfig]:
        ft = self.finetune
        resolved = seed if ft.seed is None else ft.seed
        common = {"batch_size": ft.batch_size, "patch_size": ft.patch_size, "seed": resolved}
        return (
            TrainConfig.csa_phase(iterations=ft.csa_iterations, lr_initial=ft.csa_lr, **common),
            TrainConfig.omnr_phase(iterations=ft.omnr_iterations, lr_initial=ft.omnr_lr, **common),
        )

    def sensor_levels(self) -> SensorLevels:
        return SensorLevels(black_level=self.noise.black_level, white_level=self.noise.white_level)

    def noise_components(self) -> NoiseComponents:
        return NoiseComponents(**self.noise.model_dump(include={"shot", "read", "row", "quant"}))

    def out_of_model(self) -> OutOfModelSpec:
        return OutOfModelSpec(**self.oom.model_dump())

    def flat(self) -> Dict[str, Any]:
        """Vista plana ``sección.clave`` de todos los valores resueltos"""
        flat = {}
        for section, values in self.model_dump().items():
            for key, value in values.items():
                flat[f"{section}.{key}"] = value
        return flat


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return f"{location}: {first['msg']}" if location else first["msg"]


# ============================================
# 🔹 Lectura del archivo plano
# ============================================
def parse_assignment(text: str, origin: str) -> Tuple[str, str, str]:
    """'seccion.clave = valor' → (seccion, clave, valor)"""
    key, sep, value = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise UsageException(f"{origin}: se esperaba 'clave=valor', recibido '{text.strip()}'")
    section, dot, name = key.partition(".")
    if not dot or section not in RunConfig.model_fields:
        raise UsageException(f"{origin}: clave desconocida '{key}'")
    return section, name, value.strip()


def read_config_file(path: Union[str, Path]) -> List[Tuple[str, str, str]]:
    source = Path(path)
    if not source.is_file():
        raise DataFormatException(f"No existe el archivo de configuración '{source}'")
    assignments = []
    for number, line in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if content:
            assignments.append(parse_assignment(content, f"{source}:{number}"))
    return assignments


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
) -> RunConfig:
    """Archivo (opcional) + sobrescrituras, validado y registrado en el log"""
    assignments = read_config_file(path) if path else []
    assignments += [parse_assignment(item, "--set") for item in overrides]

    nested: Dict[str, Dict[str, str]] = {}
    for section, name, value in assignments:
        nested.setdefault(section, {})[name] = value

    try:
        config = RunConfig.model_validate(nested)
    except ValidationError as e:
        raise UsageException(f"Configuración inválida: {_first_error(e)}")

    logger.info(f"⚙️ Configuración resuelta: {config.flat()}")
    return config
