# scripts/test_raw_data.py
"""
Pruebas de datos RAW: empaquetado Bayer, normalización, contenedor binario, manifiestos
y residuo fuera de modelo de la cámara objetivo.

Ejecutar:
    python scripts/test_raw_data.py
"""
import sys
from pathlib import Path

# Agregar directorio raíz al path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from exceptions.base import (
    CorruptContainerException,
    DataFormatException,
    InsufficientDataException,
    ShapeException,
)
from repositories.container_repo import (
    decode_container,
    encode_container,
    fnv1a_64,
    read_container,
    read_image,
    write_container,
    write_image,
)
from repositories.camera_repo import CameraRepository
from repositories.manifest_repo import ManifestRepository
from schemas.camera_schemas import CameraParams
from schemas.data_schemas import ManifestEntry
from schemas.noise_schemas import SensorLevels
from schemas.training_schemas import OutOfModelSpec
from services.dataset_service import make_target_dataset, out_of_model_residual, synthesize_pairs
from utils.bayer import BayerFrame, crop_patches, denormalize, normalize, pack_bayer, unpack_bayer


# ============================================
# 🔹 Bayer
# ============================================
def test_pack_single_tile():
    packed = pack_bayer(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert packed.shape == (4, 1, 1)
    assert packed[:, 0, 0].tolist() == [1.0, 2.0, 3.0, 4.0]


def test_pack_checkerboard():
    plane = np.indices((6, 8)).sum(axis=0) % 2
    packed = pack_bayer(plane.astype(np.float64))
    assert np.all(packed[0] == 0) and np.all(packed[3] == 0)
    assert np.all(packed[1] == 1) and np.all(packed[2] == 1)


def test_pack_unpack_roundtrip():
    plane = np.random.default_rng(0).uniform(size=(10, 12)).astype(np.float32)
    packed = pack_bayer(plane)
    assert packed.shape == (4, 5, 6) and packed.dtype == np.float32
    assert np.array_equal(unpack_bayer(packed), plane)
    frame = BayerFrame(plane=plane)
    assert np.array_equal(pack_bayer(frame), packed)


def test_pack_errors():
    with pytest.raises(ShapeException):
        pack_bayer(np.zeros((3, 4)))
    with pytest.raises(ShapeException):
        pack_bayer(np.zeros((2, 4, 4)))
    with pytest.raises(ShapeException):
        unpack_bayer(np.zeros((3, 2, 2)))
    with pytest.raises(Exception):
        BayerFrame(plane=np.zeros((5, 4)))


def test_crop_patches():
    data = np.arange(5 * 7, dtype=np.float64).reshape(5, 7)
    patches = crop_patches(data, 2)
    assert len(patches) == 2 * 3
    assert np.array_equal(patches[0], [[0, 1], [7, 8]])
    assert np.array_equal(patches[1], data[0:2, 2:4])
    assert np.array_equal(patches[3], data[2:4, 0:2])

    packed = np.zeros((4, 8, 8))
    assert all(p.shape == (4, 4, 4) for p in crop_patches(packed, 4))
    with pytest.raises(ShapeException):
        crop_patches(data, 6)


def test_normalize_levels():
    levels = SensorLevels(black_level=512.0, white_level=16383.0)
    adu = np.array([512.0, 16383.0, 8447.5, 0.0])
    norm = normalize(adu, levels)
    assert norm[0] == 0.0 and norm[1] == 1.0
    assert norm[2] == pytest.approx(0.5, abs=1e-12)
    assert norm[3] < 0.0
    np.testing.assert_allclose(denormalize(norm, levels), adu, rtol=0, atol=1e-9)


# ============================================
# 🔹 Contenedor binario
# ============================================
def test_empty_container_is_21_bytes():
    payload = encode_container({})
    assert len(payload) == 21
    assert payload[:4] == b"LEDC"
    contents = decode_container(payload)
    assert contents.tensors == {} and contents.metadata == {}


def test_container_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {
        "b.weight": rng.normal(size=(3, 2, 3, 3)).astype(np.float32),
        "a.bias": rng.normal(size=(5,)),
        "c": np.array([np.nan, -0.0, np.inf]),
    }
    metadata = {"phase": "pretrain", "nota": "ñandú ✅"}
    path = tmp_path / "x.ledc"
    write_container(path, tensors, metadata)

    contents = read_container(path)
    assert sorted(contents.tensors) == sorted(tensors)
    for name, value in tensors.items():
        assert contents.tensors[name].dtype == value.dtype
        assert contents.tensors[name].shape == value.shape
        assert contents.tensors[name].tobytes() == value.tobytes()
    assert contents.metadata == metadata

    assert path.read_bytes() == encode_container(dict(reversed(list(tensors.items()))), metadata)


def test_container_rejects_unsupported_arrays():
    with pytest.raises(DataFormatException):
        encode_container({"x": np.zeros(3, dtype=np.int32)})
    with pytest.raises(ShapeException):
        encode_container({"x": np.zeros((0, 3))})


def test_corruption_is_detected():
    payload = encode_container({"w": np.ones((2, 2))}, {"k": "v"})

    flipped = bytearray(payload)
    flipped[30] ^= 0x01
    with pytest.raises(CorruptContainerException):
        decode_container(bytes(flipped))

    with pytest.raises(CorruptContainerException):
        decode_container(payload[:-3])

    with pytest.raises(CorruptContainerException):
        decode_container(b"XXXX" + payload[4:])

    with pytest.raises(CorruptContainerException):
        decode_container(b"LED")


def test_fnv1a_checksum():
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8

    def per_byte(payload):
        h = 0xCBF29CE484222325
        for byte in payload:
            h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        return h

    rng = np.random.default_rng(3)
    for size in (1, 3, 4, 5, 8, 257):
        payload = rng.integers(0, 256, size=size, dtype=np.uint8).tobytes()
        assert fnv1a_64(payload) == per_byte(payload)
        assert fnv1a_64(bytearray(payload)) == per_byte(payload)


def test_corrupt_file_maps_to_data_error(tmp_path):
    path = tmp_path / "bad.ledc"
    path.write_bytes(b"not a container at all")
    with pytest.raises(DataFormatException) as info:
        read_container(path)
    assert info.value.exit_code == 3
    with pytest.raises(DataFormatException):
        read_container(tmp_path / "missing.ledc")


def test_image_helpers(tmp_path):
    plane = np.random.default_rng(2).uniform(size=(4, 6))
    write_image(tmp_path / "img.ledc", plane, {"kind": "clean"})
    image, metadata = read_image(tmp_path / "img.ledc")
    assert np.array_equal(image, plane)
    assert metadata == {"kind": "clean"}

    write_container(tmp_path / "two.ledc", {"a": np.ones(1), "b": np.ones(1)})
    with pytest.raises(DataFormatException):
        read_image(tmp_path / "two.ledc")


# ============================================
# 🔹 Manifiestos
# ============================================
def _write_pair(root: Path, name: str, shape=(4, 4), noisy_shape=None):
    rng = np.random.default_rng(len(name))
    write_image(root / f"clean-{name}.ledc", rng.uniform(size=shape))
    write_image(root / f"noisy-{name}.ledc", rng.uniform(size=noisy_shape or shape))
    return ManifestEntry(
        clean_path=f"clean-{name}.ledc", noisy_path=f"noisy-{name}.ledc", ratio=100.0, K=1.5, scene_id=name,
    )


def test_manifest_roundtrip_and_pairs(tmp_path):
    entries = [_write_pair(tmp_path, "a"), _write_pair(tmp_path, "bb")]
    repo = ManifestRepository(tmp_path / "pairs.jsonl")
    repo.write_manifest(entries)

    assert repo.read_manifest() == entries
    pairs = repo.load_pairs()
    assert [entry for entry, _ in pairs] == entries
    assert pairs[0][1].noisy.shape == (4, 4)
    assert pairs[0][1].ratio == 100.0 and pairs[0][1].K == 1.5
    assert repo.relative(tmp_path / "sub" / "x.ledc") == "sub/x.ledc"


def test_manifest_rejects_mismatched_pair(tmp_path):
    entry = _write_pair(tmp_path, "a", shape=(4, 4), noisy_shape=(4, 6))
    repo = ManifestRepository(tmp_path / "pairs.jsonl")
    repo.write_manifest([entry])
    with pytest.raises(ShapeException):
        repo.load_pairs()


def test_manifest_errors(tmp_path):
    path = tmp_path / "pairs.jsonl"
    repo = ManifestRepository(path)
    with pytest.raises(DataFormatException):
        repo.read_manifest()

    path.write_text("\n\n")
    with pytest.raises(InsufficientDataException):
        repo.read_manifest()

    path.write_text('{"clean_path": "a.ledc"}\n{not json}\n')
    with pytest.raises(DataFormatException):
        repo.read_manifest()

    path.write_text('{"clean_path": "a.ledc", "ratio": 0.5}\n')
    with pytest.raises(DataFormatException):
        repo.read_manifest()

    path.write_text('{"clean_path": "a.ledc", "noisy_path": "missing.ledc"}\n')
    with pytest.raises(DataFormatException):
        repo.load_pairs()


def test_camera_repository(tmp_path):
    repo = CameraRepository(tmp_path / "cams.jsonl")
    cameras = [TARGET_CAMERA, TARGET_CAMERA.model_copy(update={"camera_id": "otra", "k_max": 16.0})]
    repo.write_cameras(cameras)
    assert repo.read_cameras() == cameras

    repo.path.write_text("\n")
    with pytest.raises(InsufficientDataException):
        repo.read_cameras()

    repo.path.write_text('{"k_min": 2.0}\n')
    with pytest.raises(DataFormatException):
        repo.read_cameras()


# ============================================
# 🔹 Residuo fuera de modelo
# ============================================
TARGET_CAMERA = CameraParams(
    camera_id="objetivo", k_min=0.5, k_max=8.0, lam=0.1, mu_c=0.0,
    a_tl=0.8, b_tl=-1.2, sigma_hat_tl=0.05, a_r=0.6, b_r=-1.5, sigma_hat_r=0.02,
)


def _column_autocorrelation(plane: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelación de la media por columna (sin la media global), lags 1..max_lag"""
    columns = plane.mean(axis=0)
    centered = columns - columns.mean()
    return np.array([np.mean(centered[:-lag] * centered[lag:]) for lag in range(1, max_lag + 1)])


def test_fixed_pattern_depends_only_on_seed_and_shape():
    oom = OutOfModelSpec(fixed_pattern_amplitude=8.0, banding_period=16, banding_amplitude=4.0, seed=3)
    first = out_of_model_residual((32, 64), oom)
    assert first.tobytes() == out_of_model_residual((32, 64), oom).tobytes()
    assert first.tobytes() != out_of_model_residual((32, 64), oom.model_copy(update={"seed": 4})).tobytes()
    assert np.max(np.abs(first)) <= 8.0 + 4.0


def test_out_of_model_banding_period_in_target_dataset():
    period, levels = 16, SensorLevels()
    oom = OutOfModelSpec(fixed_pattern_amplitude=8.0, banding_period=period, banding_amplitude=40.0, seed=3)
    frames = [np.full((512, 128), 0.3, dtype=np.float32) for _ in range(2)]

    target = make_target_dataset(frames, TARGET_CAMERA, oom, [100.0], 2, seed=5, levels=levels)
    plain = synthesize_pairs(frames, [TARGET_CAMERA], [100.0], 2, seed=5, levels=levels)

    # El residuo de ruido del par completo repite la banda con el periodo configurado
    for pair in target:
        residual = (pair.noisy.astype(np.float64) - pair.clean / pair.ratio) * levels.span
        acf = _column_autocorrelation(residual, 24)
        assert int(np.argmax(acf)) + 1 == period

    # La parte fuera de modelo es la misma en todos los pares
    expected = out_of_model_residual((512, 128), oom)
    for with_oom, without in zip(target, plain):
        assert with_oom.K == without.K
        recovered = (with_oom.noisy.astype(np.float64) - without.noisy.astype(np.float64)) * levels.span
        np.testing.assert_allclose(recovered, expected, rtol=0, atol=1e-2)


if __name__ == "__main__":
    print("\n" + "=" * 60)
    print("🧪 PRUEBAS DE DATOS RAW")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
