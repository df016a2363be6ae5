import io
import struct

import numpy as np
import pytest

from latentkit.config import ModelConfig
from latentkit.errors import ModelFormatError
from latentkit.trainer import load_model, save_model
from latentkit.trainer.export import MAGIC, read_model, write_model
from latentkit.trainer.models import forward, init_model

from conftest import make_sample


@pytest.fixture
def model():
    return init_model(ModelConfig(input_dim=5, model_dim=8, heads=2, attention_blocks=2,
                                  head_hidden=6, pooling="first", pooling_k=2, seed=4))


def _encode(model):
    buf = io.BytesIO()
    write_model(model, buf)
    return buf.getvalue()


def test_round_trip_is_exact(model, rng, tmp_path):
    path = tmp_path / "models" / "rm.lrm"
    save_model(model, str(path))
    loaded = load_model(str(path))
    assert loaded.config == model.config
    assert list(loaded.params) == list(model.params)
    for name in model.params:
        np.testing.assert_array_equal(loaded.params[name], model.params[name])
    traj = make_sample(rng, steps=3, tokens=4, dim=5).trajectory
    assert forward(loaded, traj) == forward(model, traj)


def test_header_holds_config(model):
    data = _encode(model)
    assert data[:4] == MAGIC
    (length,) = struct.unpack("<I", data[4:8])
    header = data[8:8 + length].decode("utf-8")
    assert "model_dim=8" in header.splitlines()
    assert "pooling=first" in header.splitlines()


def test_default_head_hidden_survives():
    model = init_model(ModelConfig(input_dim=3, model_dim=4, heads=1))
    loaded = read_model(io.BytesIO(_encode(model)))
    assert loaded.config.head_hidden is None


def test_bad_magic(model):
    data = b"XXXX" + _encode(model)[4:]
    with pytest.raises(ModelFormatError):
        read_model(io.BytesIO(data))


@pytest.mark.parametrize("cut", [2, 10, -3])
def test_truncated(model, cut):
    with pytest.raises(ModelFormatError):
        read_model(io.BytesIO(_encode(model)[:cut]))


def test_trailing_bytes(model):
    with pytest.raises(ModelFormatError):
        read_model(io.BytesIO(_encode(model) + b"\x00"))


def test_invalid_header(model):
    header = b"model_dim=10\nheads=3\n"
    data = MAGIC + struct.pack("<I", len(header)) + header
    with pytest.raises(ModelFormatError):
        read_model(io.BytesIO(data))
