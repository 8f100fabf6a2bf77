# scripts/test_repnr.py
"""
Pruebas del bloque RepNR: equivalencia de la fusión, fases y aislamiento de ramas.

Ejecutar:
    python scripts/test_repnr.py
"""
import sys
from pathlib import Path

# Agregar directorio raíz al path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from engine import functional as F
from engine.tensor import Tensor
from exceptions.base import PhaseException, ValidationException
from models.repnr import RepNRBlock, RepNRPhase

FUSION_TOLERANCE = 1e-10


def _block(c_in, c_out, m=1, seed=0, dtype=np.float64) -> RepNRBlock:
    return RepNRBlock(c_in, c_out, m, np.random.default_rng(seed), dtype)


def _randomize(block: RepNRBlock, rng: np.random.Generator) -> None:
    block.bias.data = rng.normal(size=block.bias.shape)
    for branch in block.branches:
        branch.scale.data = rng.uniform(0.2, 3.0, size=branch.scale.shape)
        branch.shift.data = rng.normal(size=branch.shift.shape)
    if block.has_omnr:
        block.omnr_weight.data = rng.normal(scale=0.3, size=block.omnr_weight.shape)
        block.omnr_bias.data = rng.normal(size=block.omnr_bias.shape)


# ============================================
# 🔹 Estado inicial
# ============================================
def test_initial_block_is_plain_conv():
    block = _block(3, 5, m=2)
    x = Tensor(np.random.default_rng(1).normal(size=(2, 3, 6, 7)), dtype=np.float64)
    expected = F.conv3x3(x, block.weight, block.bias)
    for k in range(2):
        assert np.array_equal(block.forward(x, k).data, expected.data)
    assert block.phase == RepNRPhase.PRETRAIN
    assert [name for name, _ in block.named_parameters()] == [
        "conv.weight", "conv.bias", "csa.0.scale", "csa.0.shift", "csa.1.scale", "csa.1.shift",
    ]


# ============================================
# 🔹 Fusión
# ============================================
def test_fusion_matches_unfused_on_random_configurations():
    rng = np.random.default_rng(2)
    for trial in range(100):
        c_in, c_out = rng.integers(1, 5, size=2)
        n = int(rng.integers(1, 3))
        h, w = (1, 1) if trial % 10 == 0 else rng.integers(1, 7, size=2)
        block = _block(int(c_in), int(c_out), seed=trial)
        block.init_target_csa("unit")
        if trial % 2:
            block.add_omnr()
        _randomize(block, rng)

        x = Tensor(rng.normal(size=(n, int(c_in), int(h), int(w))), dtype=np.float64)
        unfused = block.forward(x).data
        fused = block.fuse().forward(x).data
        assert np.max(np.abs(unfused - fused)) <= FUSION_TOLERANCE, trial


def test_pretrain_branch_fusion():
    rng = np.random.default_rng(3)
    block = _block(2, 3, m=3)
    _randomize(block, rng)
    x = Tensor(rng.normal(size=(1, 2, 5, 5)), dtype=np.float64)
    for k in range(3):
        fused = block.fuse_branch(k).forward(x).data
        assert np.max(np.abs(block.forward(x, k).data - fused)) <= FUSION_TOLERANCE
    with pytest.raises(ValidationException):
        block.fuse()
    with pytest.raises(ValidationException):
        block.fuse_branch(3)


def test_scale_two_doubles_kernel():
    block = _block(2, 2)
    block.init_target_csa("unit")
    block.branches[0].scale.data = np.full(2, 2.0)
    plain = block.fuse()
    assert np.array_equal(plain.weight.data, 2.0 * block.weight.data)
    assert np.array_equal(plain.bias.data, block.bias.data)


def test_zero_omnr_is_neutral():
    rng = np.random.default_rng(4)
    block = _block(3, 4)
    block.init_target_csa("unit")
    _randomize(block, rng)
    x = Tensor(rng.normal(size=(2, 3, 4, 4)), dtype=np.float64)
    before = block.forward(x).data
    block.add_omnr()
    assert np.all(block.omnr_weight.data == 0) and np.all(block.omnr_bias.data == 0)
    assert np.array_equal(block.forward(x).data, before)


def test_online_reparam_matches_offline():
    rng = np.random.default_rng(5)
    block = _block(3, 2)
    block.init_target_csa("unit")
    block.add_omnr()
    _randomize(block, rng)
    block.set_trainable(conv=True, csa=True, omnr=True)
    x = Tensor(rng.normal(size=(1, 3, 5, 4)), dtype=np.float64)

    grads = {}
    for online in (False, True):
        block.online = online
        for _, tensor in block.named_parameters():
            tensor.zero_grad()
        out = block.forward(x)
        F.sum_all(out).backward()
        grads[online] = {name: t.grad.copy() for name, t in block.named_parameters()}
        grads[online]["out"] = out.data

    for name in grads[False]:
        np.testing.assert_allclose(grads[True][name], grads[False][name], rtol=0, atol=1e-9, err_msg=name)


# ============================================
# 🔹 Inicialización de CSA^T y fases
# ============================================
def test_average_init():
    block = _block(2, 2, m=2)
    block.branches[0].scale.data = np.array([1.0, 1.0])
    block.branches[0].shift.data = np.array([0.0, 0.0])
    block.branches[1].scale.data = np.array([3.0, 3.0])
    block.branches[1].shift.data = np.array([2.0, 2.0])
    block.init_target_csa("average")
    assert len(block.branches) == 1
    assert np.array_equal(block.branches[0].scale.data, [2.0, 2.0])
    assert np.array_equal(block.branches[0].shift.data, [1.0, 1.0])
    assert block.phase == RepNRPhase.FINETUNE_CSA


def test_unit_init():
    block = _block(2, 2, m=2)
    block.branches[1].scale.data = np.array([3.0, 3.0])
    block.init_target_csa("unit")
    assert np.array_equal(block.branches[0].scale.data, [1.0, 1.0])
    assert np.array_equal(block.branches[0].shift.data, [0.0, 0.0])


def test_phase_errors():
    block = _block(2, 2, m=2)
    x = Tensor(np.zeros((1, 2, 3, 3)), dtype=np.float64)
    with pytest.raises(ValidationException):
        block.forward(x)
    with pytest.raises(ValidationException):
        block.forward(x, 2)
    with pytest.raises(PhaseException):
        block.add_omnr()
    with pytest.raises(ValidationException):
        block.init_target_csa("median")

    block.init_target_csa()
    with pytest.raises(PhaseException):
        block.init_target_csa()
    block.add_omnr()
    with pytest.raises(PhaseException):
        block.add_omnr()


# ============================================
# 🔹 Aislamiento de ramas
# ============================================
def test_only_selected_branch_receives_gradient():
    rng = np.random.default_rng(6)
    block = _block(2, 3, m=3)
    x = Tensor(rng.normal(size=(1, 2, 4, 4)), dtype=np.float64)
    F.sum_all(block.forward(x, 1)).backward()

    assert block.branches[0].scale.grad is None and block.branches[0].shift.grad is None
    assert block.branches[2].scale.grad is None and block.branches[2].shift.grad is None
    assert np.any(block.branches[1].scale.grad != 0)
    assert np.any(block.branches[1].shift.grad != 0)
    assert block.weight.grad is not None


if __name__ == "__main__":
    print("\n" + "=" * 60)
    print("🧪 PRUEBAS DEL BLOQUE RepNR")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
