import json

import numpy as np
import pytest

from pdettc.euler import GridSpec, generate_dataset
from pdettc.rng import RngStream
from pdettc.storage import (StorageError, load_checkpoint, load_dataset,
                            read_container, save_checkpoint, save_dataset,
                            write_container)
from pdettc.vit import ModelConfig, VisionTransformer


@pytest.fixture(scope="module")
def small_dataset():
    return generate_dataset(["rp", "gauss"], 2, GridSpec(8, 8), seed=5,
                            split_fractions=(0.5, 0.25, 0.25))


def test_dataset_roundtrip(tmp_path, small_dataset):
    path = tmp_path / "ds.pdt"
    save_dataset(path, small_dataset, config_digest="abc123")
    back = load_dataset(path)
    assert back.grid == small_dataset.grid
    assert back.split == small_dataset.split
    assert back.families == small_dataset.families
    assert np.array_equal(back.normalization.mean, small_dataset.normalization.mean)
    for a, b in zip(small_dataset.trajectories, back.trajectories):
        assert a.ic.family == b.ic.family and a.ic.params == b.ic.params
        for sa, sb in zip(a.snapshots, b.snapshots):
            # payload is float32; loaded values are the float32 cast exactly
            assert np.array_equal(sa.fields().astype(np.float32),
                                  sb.fields().astype(np.float32))
            assert sa.t == sb.t


def test_dataset_sidecar_header(tmp_path, small_dataset):
    path = tmp_path / "ds.pdt"
    save_dataset(path, small_dataset, config_digest="abc123")
    sidecar = json.loads((tmp_path / "ds.pdt.json").read_text())
    assert sidecar["record_type"] == "DATASET"
    assert sidecar["channel_order"] == ["rho", "vx", "vy", "p"]
    assert sidecar["config_digest"] == "abc123"
    assert sidecar["payload_shape"] == [4, 21, 4, 8, 8]


def test_dataset_write_is_bit_deterministic(tmp_path, small_dataset):
    p1, p2 = tmp_path / "a.pdt", tmp_path / "b.pdt"
    save_dataset(p1, small_dataset)
    save_dataset(p2, small_dataset)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_dataset_roundtrip(tmp_path):
    ds = generate_dataset(["rp"], 0, GridSpec(8, 8), seed=0)
    path = tmp_path / "empty.pdt"
    save_dataset(path, ds)
    back = load_dataset(path)
    assert back.trajectories == [] and back.normalization is None


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.pdt"
    path.write_bytes(b"NOTAMAGICNOTAMAG" + b"\x00" * 64)
    with pytest.raises(StorageError, match="bad magic"):
        read_container(path)


def test_truncated_payload_rejected(tmp_path, small_dataset):
    path = tmp_path / "ds.pdt"
    save_dataset(path, small_dataset)
    blob = path.read_bytes()
    path.write_bytes(blob[:-100])
    with pytest.raises(StorageError, match="truncated"):
        read_container(path)


def test_record_type_mismatch(tmp_path):
    path = tmp_path / "x.pdt"
    write_container(path, {"record_type": "TRIPLET"}, np.zeros((1, 2)))
    with pytest.raises(StorageError, match="record_type"):
        read_container(path, expect_type="DATASET")


def test_checkpoint_roundtrip_exact(tmp_path, small_dataset):
    cfg = ModelConfig(height=8, width=8, patch_size=3, in_channels=5,
                      out_channels=4, embed_dim=8, depth=1, n_heads=2,
                      mlp_ratio=2.0, dropout_p=0.1)
    model = VisionTransformer(cfg, RngStream(3, 1))
    store = model.param_store()
    store.step_count = 17
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, "surrogate", cfg, store,
                    normalization=small_dataset.normalization,
                    extra={"dt_out": 0.05})
    ckpt = load_checkpoint(path)
    assert ckpt.model_kind == "surrogate"
    assert ckpt.config == cfg
    assert ckpt.step_count == 17
    assert ckpt.extra["dt_out"] == 0.05
    assert np.array_equal(ckpt.normalization.std, small_dataset.normalization.std)
    for name, p in store.params.items():
        assert np.array_equal(ckpt.values[name], p.value)   # float64 exact


def test_checkpoint_magic_guard(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"WRONGMAG" + b"\x00" * 32)
    with pytest.raises(StorageError, match="bad magic"):
        load_checkpoint(path)
