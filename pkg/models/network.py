"""
UNet de cinco etapas construida con bloques RepNR.

Nombres canónicos de parámetros (los usa el contenedor de checkpoints):

    enc.s{s}.b{b}.conv.weight / .conv.bias / .csa.{k}.scale / .csa.{k}.shift / .omnr.weight / .omnr.bias
    dec.s{s}.up.weight / dec.s{s}.up.bias
    dec.s{s}.b{b}....
    head.weight / head.bias
"""
import copy
import logging
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from engine import functional as F
from engine.tensor import Tensor, parameter, resolve_dtype
from exceptions.base import DataFormatException, PhaseException, ShapeException, ValidationException
from models.repnr import InitMode, PlainConv, RepNRBlock, RepNRPhase, he_uniform
from schemas.network_schemas import NetworkConfig

logger = logging.getLogger(__name__)

Block = Union[RepNRBlock, PlainConv]


class PhaseTransition(str, Enum):
    TO_FINETUNE_CSA = "to_finetune_csa"
    TO_FINETUNE_OMNR = "to_finetune_omnr"
    FREEZE_ALL = "freeze_all"


# Qué grupos de parámetros entrena cada fase (conv, csa, omnr)
_TRAINABLE_BY_PHASE = {
    RepNRPhase.PRETRAIN: (True, True, False),
    RepNRPhase.FINETUNE_CSA: (False, True, False),
    RepNRPhase.FINETUNE_OMNR: (False, False, True),
    RepNRPhase.DEPLOYED: (False, False, False),
}


class LEDNetwork:
    """Codificador/decodificador con conexiones de salto y cabeza 1×1"""

    def __init__(self, config: NetworkConfig, m: int, rng: Optional[np.random.Generator] = None):
        if m < 1:
            raise ValidationException(f"m debe ser >= 1, recibido {m}")
        self.config = config
        self.m = m
        self.dtype = resolve_dtype(config.precision)
        self.phase = RepNRPhase.PRETRAIN
        widths = config.widths()

        # El orden de creación fija el orden de consumo del rng
        self.encoder: List[List[Block]] = []
        for s in range(config.stages):
            c_in = config.in_channels if s == 0 else widths[s - 1]
            self.encoder.append(self._stage(c_in, widths[s], rng))

        self.up_weights: List[Tensor] = []
        self.up_biases: List[Tensor] = []
        self.decoder: List[List[Block]] = []
        for s in range(config.stages - 1):
            c_low, c_high = widths[s], widths[s + 1]
            self.up_weights.append(self._init((c_high, c_low, 2, 2), c_high, rng))
            self.up_biases.append(parameter(np.zeros(c_low), dtype=self.dtype))
            self.decoder.append(self._stage(2 * c_low, c_low, rng))

        self.head_weight = self._init((config.out_channels, widths[0], 1, 1), widths[0], rng)
        self.head_bias = parameter(np.zeros(config.out_channels), dtype=self.dtype)
        self._apply_trainable()

    def _init(self, shape, fan_in: int, rng: Optional[np.random.Generator]) -> Tensor:
        data = he_uniform(shape, fan_in, rng, self.dtype) if rng is not None else np.zeros(shape, self.dtype)
        return parameter(data, dtype=self.dtype)

    def _stage(self, c_in: int, c_out: int, rng) -> List[Block]:
        blocks = [RepNRBlock(c_in, c_out, self.m, rng, self.dtype), RepNRBlock(c_out, c_out, self.m, rng, self.dtype)]
        for block in blocks:
            block.online = self.config.online_reparam
        return blocks

    # ============================================
    # 🔹 Recorridos
    # ============================================
    def blocks(self) -> Iterator[Tuple[str, Block]]:
        for s, stage in enumerate(self.encoder, start=1):
            for b, block in enumerate(stage, start=1):
                yield f"enc.s{s}.b{b}", block
        for s, stage in enumerate(self.decoder, start=1):
            for b, block in enumerate(stage, start=1):
                yield f"dec.s{s}.b{b}", block

    def repnr_blocks(self) -> List[RepNRBlock]:
        return [block for _, block in self.blocks() if isinstance(block, RepNRBlock)]

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        params: List[Tuple[str, Tensor]] = []
        for prefix, block in self.blocks():
            params.extend((f"{prefix}.{name}", tensor) for name, tensor in block.named_parameters())
        for s, (weight, bias) in enumerate(zip(self.up_weights, self.up_biases), start=1):
            params.append((f"dec.s{s}.up.weight", weight))
            params.append((f"dec.s{s}.up.bias", bias))
        params.append(("head.weight", self.head_weight))
        params.append(("head.bias", self.head_bias))
        return params

    def trainable_parameters(self) -> List[Tuple[str, Tensor]]:
        return [(name, tensor) for name, tensor in self.named_parameters() if tensor.requires_grad]

    def parameter_count(self) -> int:
        return sum(tensor.size for _, tensor in self.named_parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.named_parameters()}

    def load_parameters(self, mapping: Mapping[str, np.ndarray]) -> None:
        """Carga estricta: mismos nombres, formas y precisión que la red actual"""
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(mapping))
        unexpected = sorted(set(mapping) - set(params))
        if missing or unexpected:
            raise DataFormatException(f"Parámetros no coinciden. Faltan: {missing[:5]} Sobran: {unexpected[:5]}")
        for name, tensor in params.items():
            value = np.asarray(mapping[name])
            if value.shape != tensor.shape:
                raise DataFormatException(f"'{name}': forma {value.shape}, se esperaba {tensor.shape}")
            if value.dtype != tensor.dtype:
                raise DataFormatException(f"'{name}': dtype {value.dtype}, se esperaba {tensor.dtype}")
            tensor.data = np.array(value, dtype=tensor.dtype, copy=True)

    # ============================================
    # 🔹 Forward
    # ============================================
    def _block_forward(self, block: Block, x: Tensor, branch_index: Optional[int]) -> Tensor:
        if isinstance(block, PlainConv):
            out = block.forward(x)
        else:
            out = block.forward(x, branch_index)
        return F.leaky_relu(out, self.config.leaky_slope)

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeException(f"Se espera [N,{self.config.in_channels},H,W], recibido {x.shape}")
        divisor = self.config.spatial_divisor
        if x.shape[2] % divisor or x.shape[3] % divisor:
            raise ShapeException(f"H y W deben ser múltiplos de {divisor}, recibido {x.shape[2]}×{x.shape[3]}")
        if x.dtype != self.dtype:
            raise ValidationException(f"La red trabaja en {self.dtype}, la entrada es {x.dtype}")

    def forward(self, x: Tensor, branch_index: Optional[int] = None) -> Tensor:
        self.check_input(x)
        if self.phase == RepNRPhase.PRETRAIN and branch_index is None:
            raise ValidationException("En pre-entrenamiento hay que indicar la rama (cámara virtual)")

        h = x
        skips: List[Tensor] = []
        last = len(self.encoder) - 1
        for s, stage in enumerate(self.encoder):
            for block in stage:
                h = self._block_forward(block, h, branch_index)
            if s < last:
                skips.append(h)
                h = F.maxpool2(h)

        for s in reversed(range(len(self.decoder))):
            h = F.transposed_conv2(h, self.up_weights[s], self.up_biases[s])
            h = F.concat_channels(h, skips[s])
            for block in self.decoder[s]:
                h = self._block_forward(block, h, branch_index)

        return F.conv1x1(h, self.head_weight, self.head_bias)

    __call__ = forward

    # ============================================
    # 🔹 Fases y congelamiento
    # ============================================
    def _apply_trainable(self) -> None:
        conv, csa, omnr = _TRAINABLE_BY_PHASE[self.phase]
        for block in self.repnr_blocks():
            block.set_trainable(conv=conv, csa=csa, omnr=omnr)
        for _, block in self.blocks():
            if isinstance(block, PlainConv):
                block.weight.requires_grad = False
                block.bias.requires_grad = False
        for tensor in self.up_weights + self.up_biases + [self.head_weight, self.head_bias]:
            tensor.requires_grad = conv

    def freeze_all(self) -> None:
        for _, tensor in self.named_parameters():
            tensor.requires_grad = False


def build_network(config: NetworkConfig, m: int, rng: np.random.Generator) -> LEDNetwork:
    """Red nueva en fase pretrain: convs He-uniform, todas las CSA en (1, 0) y biases a cero"""
    net = LEDNetwork(config, m, rng)
    logger.info(
        f"✅ Red LED construida: {config.stages} etapas, ancho base {config.base_width}, "
        f"m={m}, {net.parameter_count()} parámetros ({config.precision})"
    )
    return net


def network_forward(net: LEDNetwork, x: Tensor, branch_index: Optional[int] = None) -> Tensor:
    return net.forward(x, branch_index)


def set_phase(net: LEDNetwork, transition: PhaseTransition, init_mode: InitMode = "average") -> LEDNetwork:
    """
    Aplica una transición de fase a toda la red.

    - to_finetune_csa: congela todas las convoluciones y crea CSA^T en cada bloque
    - to_finetune_omnr: congela también CSA^T y añade OMNR a cero
    - freeze_all: nada queda entrenable
    """
    transition = PhaseTransition(transition)
    if transition == PhaseTransition.FREEZE_ALL:
        net.freeze_all()
        return net

    if transition == PhaseTransition.TO_FINETUNE_CSA:
        if net.phase != RepNRPhase.PRETRAIN:
            raise PhaseException(net.phase.value, transition.value)
        for block in net.repnr_blocks():
            block.init_target_csa(init_mode)
        net.phase = RepNRPhase.FINETUNE_CSA
    elif transition == PhaseTransition.TO_FINETUNE_OMNR:
        if net.phase != RepNRPhase.FINETUNE_CSA:
            raise PhaseException(net.phase.value, transition.value)
        for block in net.repnr_blocks():
            block.add_omnr()
        net.phase = RepNRPhase.FINETUNE_OMNR

    net._apply_trainable()
    logger.info(f"🔄 Fase de la red: {net.phase.value} ({len(net.trainable_parameters())} tensores entrenables)")
    return net


def deploy_network(net: LEDNetwork, branch_index: Optional[int] = None) -> LEDNetwork:
    """
    Devuelve una copia con cada bloque RepNR fusionado en una convolución plana.

    Una red en pretrain solo se puede desplegar eligiendo la rama de una cámara virtual.
    """
    if net.phase == RepNRPhase.DEPLOYED:
        raise PhaseException(net.phase.value, "deploy")
    if net.phase == RepNRPhase.PRETRAIN and branch_index is None:
        raise PhaseException(net.phase.value, "deploy sin --branch")

    deployed = copy.deepcopy(net)
    for stage in deployed.encoder + deployed.decoder:
        for i, block in enumerate(stage):
            stage[i] = block.fuse_branch(branch_index) if net.phase == RepNRPhase.PRETRAIN else block.fuse()
    deployed.phase = RepNRPhase.DEPLOYED
    deployed._apply_trainable()
    logger.info(
        f"✅ Red desplegada: {net.parameter_count()} → {deployed.parameter_count()} parámetros"
    )
    return deployed


def skeleton_network(config: NetworkConfig, m: int, phase: RepNRPhase) -> LEDNetwork:
    """Red a cero con la estructura de ``phase``, lista para ``load_parameters``"""
    net = LEDNetwork(config, m, rng=None)
    phase = RepNRPhase(phase)
    if phase == RepNRPhase.DEPLOYED:
        for stage in net.encoder + net.decoder:
            for i, block in enumerate(stage):
                stage[i] = PlainConv(
                    weight=Tensor(np.zeros_like(block.weight.data)),
                    bias=Tensor(np.zeros_like(block.bias.data)),
                )
        net.phase = RepNRPhase.DEPLOYED
        net._apply_trainable()
        return net
    if phase in (RepNRPhase.FINETUNE_CSA, RepNRPhase.FINETUNE_OMNR):
        set_phase(net, PhaseTransition.TO_FINETUNE_CSA, "unit")
    if phase == RepNRPhase.FINETUNE_OMNR:
        set_phase(net, PhaseTransition.TO_FINETUNE_OMNR)
    return net
