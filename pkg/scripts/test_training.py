# scripts/test_training.py
"""
Pruebas de los bucles de entrenamiento: calendario de lr, pre-entrenamiento,
ajuste few-shot en dos fases, determinismo e inferencia.

Las pruebas largas (pre-entrenamiento de juguete completo, tendencia del ajuste
y de la selección de pares) solo corren con LED_RUN_SLOW=1; sus versiones
reducidas corren siempre.

Ejecutar:
    python scripts/test_training.py
    LED_RUN_SLOW=1 python scripts/test_training.py
"""
import copy
import hashlib
import os
import sys
from pathlib import Path

# Agregar directorio raíz al path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from exceptions.base import NumericException, PhaseException, ShapeException, ValidationException
from models.network import build_network
from models.repnr import RepNRPhase
from schemas.camera_schemas import ParameterSpace, ParamRange
from schemas.data_schemas import ManifestEntry
from schemas.network_schemas import NetworkConfig
from schemas.training_schemas import FewShotPair, LRMilestone, OutOfModelSpec, TrainConfig
from services.camera_service import generate_virtual_cameras, select_fewshot_pairs
from services.dataset_service import generate_clean_frames, make_target_dataset, synthesize_pairs
from services.metrics_service import evaluate, psnr
from services.training_service import TRACE_COLUMNS, amplify_input, denoise, finetune, pretrain
from utils.bayer import pack_bayer
from utils.rng import Stream, get_rng

RUN_SLOW = os.getenv("LED_RUN_SLOW") == "1"
slow = pytest.mark.skipif(not RUN_SLOW, reason="prueba larga: exportar LED_RUN_SLOW=1")

TINY = NetworkConfig(base_width=4, stages=2, precision="double")


def _digest(tensors) -> str:
    sha = hashlib.sha256()
    for tensor in tensors:
        sha.update(tensor.data.tobytes())
    return sha.hexdigest()


def _state_bytes(net) -> dict:
    return {name: value.tobytes() for name, value in net.state_dict().items()}


def _tiny_setup(m=2, seed=0):
    net = build_network(TINY, m, get_rng(seed, Stream.INIT))
    cameras = generate_virtual_cameras(m)
    frames = generate_clean_frames(4, 32, 32, seed)
    return net, cameras, frames


def _tiny_config(**overrides):
    values = dict(iterations=6, batch_size=2, patch_size=8, lr_initial=1e-3, ratios=[10.0, 20.0], seed=3)
    values.update(overrides)
    return TrainConfig(**values)


# ============================================
# 🔹 Calendario de la tasa de aprendizaje
# ============================================
def test_default_lr_schedule():
    cfg = TrainConfig(iterations=100, lr_initial=1e-4)
    assert cfg.lr_at(0) == 1e-4
    assert cfg.lr_at(49) == 1e-4
    assert cfg.lr_at(50) == 5e-5
    assert cfg.lr_at(89) == 5e-5
    assert cfg.lr_at(90) == pytest.approx(1e-5)


def test_custom_and_constant_schedules():
    cfg = TrainConfig(iterations=10, lr_initial=1.0, lr_schedule=[LRMilestone(fraction=0.2, lr=0.5)])
    assert [cfg.lr_at(i) for i in (0, 1, 2, 9)] == [1.0, 1.0, 0.5, 0.5]
    constant = TrainConfig(iterations=10, lr_initial=1.0, lr_schedule=[])
    assert {constant.lr_at(i) for i in range(10)} == {1.0}
    assert TrainConfig.csa_phase().lr_at(999) == 1e-4
    assert TrainConfig.omnr_phase().iterations == 500
    with pytest.raises(ValidationError):
        TrainConfig(
            iterations=10,
            lr_schedule=[LRMilestone(fraction=0.5, lr=0.1), LRMilestone(fraction=0.4, lr=0.01)],
        )
    with pytest.raises(ValidationError):
        TrainConfig(iterations=10, ratios=[])


# ============================================
# 🔹 Pre-entrenamiento
# ============================================
def test_zero_iterations_leaves_network_unchanged():
    net, cameras, frames = _tiny_setup()
    before = _state_bytes(net)
    result = pretrain(net, cameras, frames, _tiny_config(iterations=0))
    assert result.iterations == 0
    assert _state_bytes(net) == before


def test_pretrain_validation():
    net, cameras, frames = _tiny_setup()
    with pytest.raises(ValidationException):
        pretrain(net, cameras[:1], frames, _tiny_config())
    with pytest.raises(ShapeException):
        pretrain(net, cameras, frames, _tiny_config(patch_size=7))
    with pytest.raises(ShapeException):
        pretrain(net, cameras, frames, _tiny_config(patch_size=32))


def test_pretrain_reduces_loss():
    net, cameras, frames = _tiny_setup()
    result = pretrain(net, cameras, frames, _tiny_config(iterations=80, lr_schedule=[]))
    assert result.iterations == 80
    assert result.window_mean(-15, 15) < result.window_mean(0, 15)


def test_pretrain_is_thread_independent(tmp_path):
    digests = []
    for threads in (1, 4):
        net, cameras, frames = _tiny_setup(seed=5)
        cfg = _tiny_config(batch_size=3, seed=11)
        result = pretrain(net, cameras, frames, cfg, threads=threads, trace_path=tmp_path / f"t{threads}.csv")
        digests.append((_digest(t for _, t in net.named_parameters()), tuple(result.losses)))
    assert digests[0] == digests[1]
    assert (tmp_path / "t1.csv").read_bytes() == (tmp_path / "t4.csv").read_bytes()


def test_trace_csv(tmp_path):
    net, cameras, frames = _tiny_setup()
    path = tmp_path / "trace.csv"
    result = pretrain(net, cameras, frames, _tiny_config(), trace_path=path)
    trace = pd.read_csv(path)
    assert list(trace.columns) == TRACE_COLUMNS
    assert trace["iteration"].tolist() == list(range(6))
    assert set(trace["phase"]) == {"pretrain"}
    np.testing.assert_allclose(trace["loss"].to_numpy(), result.losses, rtol=1e-12)


# ============================================
# 🔹 Ajuste few-shot
# ============================================
def _pretrained_with_pairs():
    net, cameras, frames = _tiny_setup()
    pretrain(net, cameras, frames, _tiny_config(iterations=4))
    pairs = synthesize_pairs(generate_clean_frames(2, 32, 32, 9), cameras, [10.0], 2, seed=4)
    return net, pairs


def _group_digests(net):
    groups = {"conv": [], "csa": [], "omnr": []}
    for name, tensor in net.named_parameters():
        key = "csa" if ".csa." in name else "omnr" if ".omnr." in name else "conv"
        groups[key].append(tensor)
    return {key: _digest(tensors) for key, tensors in groups.items()}


def test_finetune_trains_csa_then_omnr():
    net, pairs = _pretrained_with_pairs()
    conv_before = _group_digests(net)["conv"]
    phase1 = TrainConfig.csa_phase(iterations=3, patch_size=8, lr_initial=1e-3)
    phase2 = TrainConfig.omnr_phase(iterations=3, patch_size=8, lr_initial=1e-3)

    untrained, _ = finetune(copy.deepcopy(net), pairs, phase1, phase2, skip_csa=True, skip_omnr=True)
    only_csa, results = finetune(copy.deepcopy(net), pairs, phase1, phase2, skip_omnr=True)
    both, results_both = finetune(copy.deepcopy(net), pairs, phase1, phase2)

    reference, after_csa, after_omnr = (_group_digests(n) for n in (untrained, only_csa, both))
    assert reference["conv"] == after_csa["conv"] == after_omnr["conv"] == conv_before
    assert after_csa["csa"] != reference["csa"]
    assert after_csa["omnr"] == reference["omnr"]
    assert after_omnr["csa"] == after_csa["csa"]
    assert after_omnr["omnr"] != reference["omnr"]

    assert [r.phase for r in results] == ["finetune_csa"]
    assert [r.phase for r in results_both] == ["finetune_csa", "finetune_omnr"]
    assert both.phase == RepNRPhase.FINETUNE_OMNR


def test_finetune_loss_decreases_in_both_phases():
    net, _ = _pretrained_with_pairs()
    # Un solo par y parches del frame completo: el objetivo es fijo en cada fase
    target = make_target_dataset(generate_clean_frames(1, 32, 32, 21), _target_camera(), OutOfModelSpec(), [10.0], 1, 21)
    phase1 = TrainConfig.csa_phase(iterations=20, patch_size=16, lr_initial=1e-3)
    phase2 = TrainConfig.omnr_phase(iterations=20, patch_size=16, lr_initial=1e-4)

    _, (csa, omnr) = finetune(net, target, phase1, phase2)
    assert csa.losses[-1] < csa.losses[0]
    assert omnr.losses[0] < csa.losses[0]
    assert omnr.losses[-1] < omnr.losses[0]


def test_spread_selection_not_worse_than_similar_reduced():
    camera, oom = _target_camera(), OutOfModelSpec()
    candidates = make_target_dataset(generate_clean_frames(8, 32, 32, 500), camera, oom, [10.0, 20.0], 4, 500)
    entries = [
        ManifestEntry(clean_path=str(i), noisy_path=str(i), ratio=p.ratio, K=p.K, scene_id=str(i))
        for i, p in enumerate(candidates)
    ]
    held_out = [
        (ManifestEntry(clean_path="c", noisy_path="n", ratio=p.ratio, K=p.K), p)
        for p in make_target_dataset(generate_clean_frames(4, 32, 32, 900), camera, oom, [10.0, 20.0], 2, 900)
    ]
    net, _ = _pretrained_with_pairs()

    scores = {}
    for mode in ("spread", "similar"):
        fewshot = [candidates[int(e.clean_path)] for e in select_fewshot_pairs(entries, 2, mode)]
        tuned, _ = finetune(
            copy.deepcopy(net), fewshot,
            TrainConfig.csa_phase(iterations=10, patch_size=8, lr_initial=1e-3),
            TrainConfig.omnr_phase(iterations=5, patch_size=8, lr_initial=1e-4),
        )
        scores[mode] = _mean_psnr(evaluate(tuned, held_out))
    assert scores["spread"] >= scores["similar"] - 1.0


def test_finetune_requires_pretrained_network():
    net, pairs = _pretrained_with_pairs()
    cfg = TrainConfig.csa_phase(iterations=1, patch_size=8)
    finetune(net, pairs, cfg, cfg, skip_csa=True, skip_omnr=True)
    with pytest.raises(PhaseException):
        finetune(net, pairs, cfg, cfg)


def test_non_finite_loss_is_numeric_error():
    net, pairs = _pretrained_with_pairs()
    broken = [FewShotPair(noisy=np.full_like(p.noisy, np.nan), clean=p.clean, ratio=p.ratio) for p in pairs]
    cfg = TrainConfig.csa_phase(iterations=2, patch_size=8)
    with pytest.raises(NumericException) as info:
        finetune(net, broken, cfg, cfg)
    assert info.value.exit_code == 4


# ============================================
# 🔹 Inferencia
# ============================================
def test_denoise_output_is_clamped():
    net, _, frames = _tiny_setup(m=1)
    net.head_bias.data[...] = np.array([-50.0, 50.0, 0.0, 0.0])
    packed = pack_bayer(frames[0])
    out = denoise(net, packed, 4.0, branch_index=0)
    assert out.shape == packed.shape
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.all(out[0] == 0.0) and np.all(out[1] == 1.0)

    batch = denoise(net, np.stack([packed, packed]), 4.0, branch_index=0)
    assert batch.shape == (2,) + packed.shape
    assert np.array_equal(batch[0], out)
    with pytest.raises(ValidationException):
        denoise(net, packed, 0.5, branch_index=0)


def test_amplify_input():
    noisy = np.array([-0.1, 1 / 256, 0.5])
    assert amplify_input(noisy, 128.0).tolist() == [0.0, 0.5, 1.0]


# ============================================
# 🔹 Pruebas largas
# ============================================
RATIOS = [100.0, 250.0, 300.0]


def _toy_pretrained(seed: int = 0):
    config = NetworkConfig(base_width=8, precision="single")
    cameras = generate_virtual_cameras(5)
    net = build_network(config, 5, get_rng(seed, Stream.INIT))
    frames = generate_clean_frames(16, 256, 256, seed)
    cfg = TrainConfig(iterations=2000, batch_size=1, patch_size=64, lr_initial=1e-3, ratios=RATIOS, seed=seed)
    result = pretrain(net, cameras, frames, cfg)
    return net, cameras, result


def _held_out_pairs(camera, oom, seed):
    frames = generate_clean_frames(6, 128, 128, seed + 1000)
    pairs = make_target_dataset(frames, camera, oom, RATIOS, 2, seed + 1000)
    return [(ManifestEntry(clean_path="c", noisy_path="n", ratio=p.ratio, K=p.K), p) for p in pairs]


def _mean_psnr(report) -> float:
    return float(np.mean([float(r.psnr_db) for r in report.per_ratio]))


def _target_camera():
    space = ParameterSpace(k_min=ParamRange(lo=0.3, hi=0.3), k_max=ParamRange(lo=12.0, hi=12.0))
    return generate_virtual_cameras(1, space)[0]


def _fewshot(camera, oom, mode, seed):
    candidates = make_target_dataset(generate_clean_frames(12, 192, 192, seed + 500), camera, oom, RATIOS, 4, seed + 500)
    entries = [
        ManifestEntry(clean_path=str(i), noisy_path=str(i), ratio=p.ratio, K=p.K, scene_id=str(i))
        for i, p in enumerate(candidates)
    ]
    return [candidates[int(e.clean_path)] for e in select_fewshot_pairs(entries, 2, mode)]


@slow
def test_toy_pretraining_converges_and_denoises():
    net, cameras, result = _toy_pretrained()
    assert result.window_mean(-100, 100) <= 0.5 * result.window_mean(0, 100)

    frames = generate_clean_frames(4, 128, 128, 77)
    pairs = synthesize_pairs(frames, cameras, [100.0], 4, seed=78)
    gains = []
    for k, pair in enumerate(pairs):
        noisy, clean = pack_bayer(pair.noisy), pack_bayer(pair.clean)
        baseline = psnr(amplify_input(noisy, pair.ratio), clean)
        estimate = denoise(net, noisy, pair.ratio, branch_index=k % len(cameras))
        gains.append(float(psnr(estimate, clean)) - float(baseline))
    assert np.mean(gains) >= 3.0


@slow
def test_finetuning_improves_target_camera():
    oom = OutOfModelSpec()
    camera = _target_camera()
    net, _, _ = _toy_pretrained()
    fewshot = _fewshot(camera, oom, "spread", 0)
    held_out = _held_out_pairs(camera, oom, 0)
    phase1 = TrainConfig.csa_phase(patch_size=64, seed=0)
    phase2 = TrainConfig.omnr_phase(patch_size=64, seed=0)

    pretrained, _ = finetune(copy.deepcopy(net), fewshot, phase1, phase2, skip_csa=True, skip_omnr=True)
    after_csa, _ = finetune(copy.deepcopy(net), fewshot, phase1, phase2, skip_omnr=True)
    after_both, _ = finetune(copy.deepcopy(net), fewshot, phase1, phase2)

    base = _mean_psnr(evaluate(pretrained, held_out))
    first = _mean_psnr(evaluate(after_csa, held_out))
    final = _mean_psnr(evaluate(after_both, held_out))
    assert final >= base + 0.2
    assert final >= first


@slow
def test_spread_selection_beats_similar():
    oom = OutOfModelSpec()
    camera = _target_camera()
    scores = {"spread": [], "similar": []}
    for seed in range(3):
        net, _, _ = _toy_pretrained(seed)
        held_out = _held_out_pairs(camera, oom, seed)
        for mode in scores:
            fewshot = _fewshot(camera, oom, mode, seed)
            tuned, _ = finetune(
                copy.deepcopy(net), fewshot,
                TrainConfig.csa_phase(patch_size=64, seed=seed),
                TrainConfig.omnr_phase(patch_size=64, seed=seed),
            )
            scores[mode].append(_mean_psnr(evaluate(tuned, held_out)))
    assert np.mean(scores["spread"]) >= np.mean(scores["similar"])


if __name__ == "__main__":
    print("\n" + "=" * 60)
    print("🧪 PRUEBAS DE ENTRENAMIENTO")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
