import numpy as np
import pytest

from cgnet import checkpoint
from cgnet.network import NetworkConfig, build

TINY = NetworkConfig(width=4, enc_blocks=(1, 1, 1, 1), middle_blocks=1, dec_blocks=(1, 1, 1, 1))


@pytest.fixture
def saved(tmp_path):
    model = build(TINY, seed=5)
    path = tmp_path / "m.cgnz"
    checkpoint.save(model, path)
    return model, path


def test_round_trip(saved):
    model, path = saved
    loaded = checkpoint.load(path, TINY, seed=99)
    for (n1, a), (n2, b) in zip(model.named_parameters(), loaded.named_parameters()):
        assert n1 == n2 and np.array_equal(a.data, b.data)


def test_inventory_size_matches_params(saved):
    model, path = saved
    assert sum(a.size for a in checkpoint.read(path).values()) == model.num_parameters()


def test_truncated_file(saved):
    _, path = saved
    blob = path.read_bytes()
    path.write_bytes(blob[:-100])
    with pytest.raises(checkpoint.CheckpointChecksumError):
        checkpoint.read(path)


def test_corrupt_byte(saved):
    _, path = saved
    blob = bytearray(path.read_bytes())
    blob[40] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(checkpoint.CheckpointChecksumError):
        checkpoint.read(path)


def test_bad_magic(tmp_path):
    p = tmp_path / "x.cgnz"
    p.write_bytes(b"NOPE" + bytes(30))
    with pytest.raises(checkpoint.CheckpointFormatError):
        checkpoint.read(p)


def test_version_mismatch():
    with pytest.raises(checkpoint.CheckpointVersionError):
        checkpoint.decode(checkpoint.encode({"a": np.ones(2)}, version=2))


def test_inventory_mismatch_names_first_missing(saved):
    _, path = saved
    other = TINY.replace(heads=2)
    with pytest.raises(checkpoint.CheckpointInventoryError, match="heads.1.weight"):
        checkpoint.load(path, other)


def test_shape_mismatch(saved):
    _, path = saved
    with pytest.raises(checkpoint.CheckpointInventoryError, match="shape"):
        checkpoint.load(path, TINY.replace(width=6))


def test_encode_decode_exact():
    rng = np.random.default_rng(0)
    tensors = {"a": rng.standard_normal((2, 3)).astype(np.float32), "b.c": np.float32(rng.standard_normal(4))}
    out = checkpoint.decode(checkpoint.encode(tensors))
    assert list(out) == ["a", "b.c"] and all(np.array_equal(out[k], tensors[k]) for k in tensors)
