import numpy as np
import pytest
from hypothesis import given, strategies as st

from cdar.tnnar import checkpoint
from cdar.tnnar.network import ArchConfig, ConfigError, ConvSpec, init_network


def arch(depth=3, hidden=5):
    return ArchConfig(channels=2, window=24, conv=[ConvSpec(4, depth, 2, 2), ConvSpec(3, depth, 2, 2)],
                      lstm_hidden=hidden, fc1_width=6, n_classes=3)


@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_round_trip_bit_exact(depth, hidden, seed):
    a = arch(depth, hidden)
    p = init_network(a, seed)
    p["fc1.b"][0] = -0.0
    p["fc1.b"][1] = 5e-324
    q, a2 = checkpoint.decode(checkpoint.encode(p, a))
    assert a2 == a
    assert list(q) == list(p)
    for k in p:
        assert q[k].dtype == np.float64 and q[k].shape == p[k].shape
        assert p[k].tobytes() == q[k].tobytes()


def test_save_load_file(tmp_path):
    a = arch()
    p = init_network(a, 1)
    checkpoint.save(tmp_path / "m.ckpt", p, a)
    blob = (tmp_path / "m.ckpt").read_bytes()
    assert blob[:8] == checkpoint.MAGIC
    q, _ = checkpoint.load(tmp_path / "m.ckpt")
    assert all(np.array_equal(p[k], q[k]) for k in p)
    checkpoint.save(tmp_path / "n.ckpt", q, a)
    assert (tmp_path / "n.ckpt").read_bytes() == blob


def test_corrupt_files_rejected():
    a = arch()
    blob = checkpoint.encode(init_network(a, 0), a)
    with pytest.raises(checkpoint.CheckpointError, match="magic"):
        checkpoint.decode(b"XXXXXXXX" + blob[8:])
    with pytest.raises(checkpoint.CheckpointError, match="version"):
        checkpoint.decode(blob[:8] + (99).to_bytes(4, "little") + blob[12:])
    with pytest.raises(checkpoint.CheckpointError, match="trailing"):
        checkpoint.decode(blob + b"\0")


def test_params_must_match_arch():
    a = arch()
    p = init_network(a, 0)
    del p["fc2.b"]
    with pytest.raises(ConfigError):
        checkpoint.decode(checkpoint.encode(p, a))
