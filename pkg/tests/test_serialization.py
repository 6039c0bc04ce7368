import numpy as np
import pytest

from adlens.nn.serial import CheckpointError, load_arrays, save_arrays


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "param:head.w": rng.standard_normal((7, 3)).astype(np.float32),
        "param:head.b": rng.standard_normal(3).astype(np.float32),
        "buffer:bn.mean": rng.standard_normal(3).astype(np.float64),
    }
    path = tmp_path / "model.ckpt"
    save_arrays(path, "digest123", arrays)
    digest, loaded = load_arrays(path)
    assert digest == "digest123"
    assert set(loaded) == set(arrays)
    for name, arr in arrays.items():
        assert loaded[name].dtype == arr.dtype
        assert loaded[name].tobytes() == arr.tobytes()


def test_serialization_is_order_independent(tmp_path):
    a = np.arange(4, dtype=np.float32)
    b = np.ones((2, 2), dtype=np.float32)
    save_arrays(tmp_path / "x.ckpt", "d", {"x": a, "y": b})
    save_arrays(tmp_path / "y.ckpt", "d", {"y": b, "x": a})
    assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()


def test_digest_mismatch_rejected(tmp_path):
    save_arrays(tmp_path / "m.ckpt", "aaa", {"w": np.zeros(2, dtype=np.float32)})
    with pytest.raises(CheckpointError):
        load_arrays(tmp_path / "m.ckpt", expect_digest="bbb")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_arrays(path)
