# scripts/test_cli.py
"""
Pruebas de extremo a extremo de la CLI `led` a través de main.run(argv):
códigos de salida, pipeline completo de juguete y determinismo.

Ejecutar:
    python scripts/test_cli.py
"""
import sys
from pathlib import Path

# Agregar directorio raíz al path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pandas as pd
import pytest

from main import run
from repositories.camera_repo import CameraRepository
from repositories.checkpoint_repo import load_network
from repositories.container_repo import read_image
from repositories.manifest_repo import ManifestRepository
from models.repnr import RepNRPhase

TINY_NET = ["net.base_width=4", "net.stages=2", "net.precision=double", "net.m=2"]
TINY_TRAIN = ["train.iterations=3", "train.patch_size=8", "train.ratios=10,20"]
TINY_FINETUNE = [
    "finetune.csa_iterations=2", "finetune.omnr_iterations=2",
    "finetune.patch_size=8", "finetune.pairs_per_ratio=2",
]


def _sets(values):
    args = []
    for value in values:
        args += ["--set", value]
    return args


def _prepare_data(root: Path) -> None:
    assert run(["--seed", "1", "gen-clean", "--out", str(root / "clean.jsonl"), "--count", "4",
                "--height", "32", "--width", "32"]) == 0
    assert run(["gen-cameras", "--out", str(root / "cams.jsonl"), "--m", "2"]) == 0
    assert run(["--seed", "2", "synth", "--cameras", str(root / "cams.jsonl"), "--clean", str(root / "clean.jsonl"),
                "--out", str(root / "pairs.jsonl"), "--ratios", "10,20", "--pairs-per-ratio", "2"]) == 0


def _pretrain(root: Path, out: str, threads: int = 1) -> int:
    return run(["--seed", "3", "--threads", str(threads), "pretrain",
                "--clean", str(root / "clean.jsonl"), "--cameras", str(root / "cams.jsonl"),
                "--out", str(root / out)] + _sets(TINY_NET + TINY_TRAIN))


# ============================================
# 🔹 Códigos de salida
# ============================================
def test_point_space_reproduces_camera(tmp_path):
    values = {
        "k_min": 0.5, "k_max": 8.0, "lambda": 0.1, "mu_c": 0.25,
        "a_tl": 0.8, "b_tl": -1.2, "sigma_hat_tl": 0.05,
        "a_r": 0.6, "b_r": -1.5, "sigma_hat_r": 0.02,
    }
    space = tmp_path / "space.cfg"
    lines = ["# espacio degenerado en un punto"]
    for key, value in values.items():
        lines += [f"space.{key}_lo = {value}", f"space.{key}_hi = {value}"]
    space.write_text("\n".join(lines) + "\n", encoding="utf-8")

    assert run(["gen-cameras", "--out", str(tmp_path / "cams.jsonl"), "--m", "1", "--space", str(space)]) == 0
    (camera,) = CameraRepository(tmp_path / "cams.jsonl").read_cameras()
    dumped = camera.model_dump(by_alias=True, exclude={"camera_id"})
    assert dumped == values


def test_unknown_config_key_is_usage_error(tmp_path):
    out = str(tmp_path / "cams.jsonl")
    assert run(["gen-cameras", "--out", out, "--set", "net.bogus=1"]) == 2
    assert run(["gen-cameras", "--out", out, "--set", "bogus.key=1"]) == 2
    assert run(["gen-cameras", "--out", out, "--set", "sin-igual"]) == 2
    assert run(["gen-cameras", "--out", out, "--set", "space.k_min_lo=2", "--set", "space.k_min_hi=1"]) == 2
    assert not Path(out).exists()


def test_usage_and_data_errors(tmp_path):
    assert run(["gen-cameras"]) == 2
    assert run(["no-such-command"]) == 2
    assert run(["--seed", "-1", "gen-clean", "--out", str(tmp_path / "c.jsonl")]) == 2
    assert run(["gen-cameras", "--out", str(tmp_path / "c.jsonl"), "--space", str(tmp_path / "missing.cfg")]) == 3
    assert run(["synth", "--cameras", str(tmp_path / "none.jsonl"), "--clean", str(tmp_path / "none.jsonl"),
                "--out", str(tmp_path / "p.jsonl")]) == 3
    assert run(["synth", "--cameras", "a", "--clean", "b", "--out", "c", "--ratios", "0.5"]) == 2

    bad = tmp_path / "bad.ledc"
    bad.write_bytes(b"LEDC" + b"\x00" * 30)
    assert run(["deploy", "--ckpt", str(bad), "--out", str(tmp_path / "x.ledc")]) == 3


# ============================================
# 🔹 Pipeline de juguete
# ============================================
def test_tiny_pipeline_end_to_end(tmp_path):
    _prepare_data(tmp_path)
    entries = ManifestRepository(tmp_path / "pairs.jsonl").read_manifest()
    assert len(entries) == 4
    assert [e.ratio for e in entries] == [10.0, 10.0, 20.0, 20.0]
    assert {e.camera_id for e in entries} == {"virtual-1", "virtual-2"}
    assert all(e.K is not None and e.sigma_tl is not None for e in entries)

    assert _pretrain(tmp_path, "pre.ledc") == 0
    assert load_network(tmp_path / "pre.ledc").phase == RepNRPhase.PRETRAIN

    assert run(["--seed", "4", "finetune", "--ckpt", str(tmp_path / "pre.ledc"), "--pairs", str(tmp_path / "pairs.jsonl"),
                "--out", str(tmp_path / "ft.ledc"), "--select", "spread", "--init", "average",
                "--trace", str(tmp_path / "ft.csv")] + _sets(TINY_FINETUNE)) == 0
    assert load_network(tmp_path / "ft.ledc").phase == RepNRPhase.FINETUNE_OMNR
    trace = pd.read_csv(tmp_path / "ft.csv")
    assert trace["phase"].tolist() == ["finetune_csa"] * 2 + ["finetune_omnr"] * 2

    assert run(["deploy", "--ckpt", str(tmp_path / "ft.ledc"), "--out", str(tmp_path / "dep.ledc")]) == 0
    assert load_network(tmp_path / "dep.ledc").phase == RepNRPhase.DEPLOYED

    assert run(["eval", "--ckpt", str(tmp_path / "dep.ledc"), "--pairs", str(tmp_path / "pairs.jsonl"),
                "--out", str(tmp_path / "dep.csv")]) == 0
    assert run(["eval", "--ckpt", str(tmp_path / "ft.ledc"), "--pairs", str(tmp_path / "pairs.jsonl"),
                "--out", str(tmp_path / "ft_eval.csv")]) == 0
    fused, unfused = pd.read_csv(tmp_path / "dep.csv"), pd.read_csv(tmp_path / "ft_eval.csv")
    assert list(fused.columns) == ["ratio", "count", "psnr_db", "ssim"]
    assert fused["ratio"].tolist() == [10.0, 20.0]
    assert fused["count"].tolist() == [2, 2]
    np.testing.assert_allclose(fused["psnr_db"], unfused["psnr_db"], rtol=0, atol=1e-8)
    np.testing.assert_allclose(fused["ssim"], unfused["ssim"], rtol=0, atol=1e-8)

    assert run(["eval", "--ckpt", str(tmp_path / "dep.ledc"), "--pairs", str(tmp_path / "pairs.jsonl"),
                "--out", str(tmp_path / "only20.csv"), "--ratios", "20"]) == 0
    assert pd.read_csv(tmp_path / "only20.csv")["ratio"].tolist() == [20.0]

    noisy = tmp_path / entries[0].noisy_path
    assert run(["denoise", "--ckpt", str(tmp_path / "dep.ledc"), "--in", str(noisy), "--ratio", "10",
                "--out", str(tmp_path / "out.ledc")]) == 0
    image, metadata = read_image(tmp_path / "out.ledc")
    assert image.shape == (32, 32)
    assert image.min() >= 0.0 and image.max() <= 1.0
    assert metadata["kind"] == "denoised"

    assert run(["gain-line", "--pairs", str(tmp_path / "pairs.jsonl"), "--out", str(tmp_path / "gain.csv")]) == 0
    gain = pd.read_csv(tmp_path / "gain.csv")
    assert set(gain["camera_id"]) == {"virtual-1", "virtual-2"}
    assert set(gain["line"]) == {"tl", "r"}
    assert set(gain["status"]) == {"ok"}
    assert gain["n_points"].tolist() == [2, 2, 2, 2]

    # Una red desplegada no admite más ajuste
    assert run(["finetune", "--ckpt", str(tmp_path / "dep.ledc"), "--pairs", str(tmp_path / "pairs.jsonl"),
                "--out", str(tmp_path / "again.ledc")] + _sets(TINY_FINETUNE)) == 3


def test_deploy_pretrain_checkpoint_needs_branch(tmp_path):
    _prepare_data(tmp_path)
    assert _pretrain(tmp_path, "pre.ledc") == 0
    assert run(["deploy", "--ckpt", str(tmp_path / "pre.ledc"), "--out", str(tmp_path / "d.ledc")]) == 3
    assert run(["deploy", "--ckpt", str(tmp_path / "pre.ledc"), "--out", str(tmp_path / "d.ledc"), "--branch", "1"]) == 0

    assert run(["eval", "--ckpt", str(tmp_path / "pre.ledc"), "--pairs", str(tmp_path / "pairs.jsonl"),
                "--out", str(tmp_path / "pre.csv"), "--branch", "1"]) == 0
    assert run(["eval", "--ckpt", str(tmp_path / "d.ledc"), "--pairs", str(tmp_path / "pairs.jsonl"),
                "--out", str(tmp_path / "d.csv")]) == 0
    np.testing.assert_allclose(
        pd.read_csv(tmp_path / "pre.csv")["psnr_db"], pd.read_csv(tmp_path / "d.csv")["psnr_db"], rtol=0, atol=1e-8
    )


def test_checkpoints_identical_across_threads(tmp_path):
    _prepare_data(tmp_path)
    assert _pretrain(tmp_path, "one.ledc", threads=1) == 0
    assert _pretrain(tmp_path, "four.ledc", threads=4) == 0
    assert (tmp_path / "one.ledc").read_bytes() == (tmp_path / "four.ledc").read_bytes()


def test_synthesis_is_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    _prepare_data(first)
    _prepare_data(second)
    for j in range(4):
        name = f"noisy/pair-{j:04d}.ledc"
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (first / "pairs.jsonl").read_bytes() == (second / "pairs.jsonl").read_bytes()


if __name__ == "__main__":
    print("\n" + "=" * 60)
    print("🧪 PRUEBAS DE LA CLI")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
