"""
Model Export: ".lrm" files for trained reward models.

Layout (little-endian):
    magic "LRM1" | header_len u32 | header: UTF-8 "key=value" lines, one per ModelConfig field
    per parameter, in canonical order:
        name_len u16 | name bytes | count u64 | count f64 values
"""
import logging
import os
import struct
from collections import OrderedDict
from typing import BinaryIO

import numpy as np
from pydantic import ValidationError

from latentkit.config import ModelConfig
from latentkit.errors import ModelConfigError, ModelFormatError
from latentkit.trainer.models.reward_model import RewardModel

logger = logging.getLogger(__name__)

MAGIC = b"LRM1"
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_VALUE = np.dtype("<f8")


def _header_text(config: ModelConfig) -> bytes:
    lines = []
    for key, value in config.model_dump().items():
        lines.append(f"{key}={'' if value is None else value}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_header(raw: bytes) -> ModelConfig:
    values = {}
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ModelFormatError(f"model header is not UTF-8: {e}") from e
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ModelFormatError(f"malformed header line {line!r}")
        values[key.strip()] = value.strip() or None
    try:
        return ModelConfig(**values)
    except ValidationError as e:
        raise ModelFormatError(f"model header does not describe a valid config: {e}") from e


def write_model(model: RewardModel, sink: BinaryIO) -> int:
    header = _header_text(model.config)
    written = sink.write(MAGIC) + sink.write(_U32.pack(len(header))) + sink.write(header)
    for name, values in model.params.items():
        encoded = name.encode("utf-8")
        written += sink.write(_U16.pack(len(encoded)))
        written += sink.write(encoded)
        written += sink.write(_U64.pack(values.size))
        written += sink.write(values.astype(_VALUE).tobytes(order="C"))
    return written


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise ModelFormatError(f"model file ended inside {what}")
    return data


def read_model(source: BinaryIO) -> RewardModel:
    magic = source.read(4)
    if magic != MAGIC:
        raise ModelFormatError(f"bad model magic {magic!r}, expected {MAGIC!r}")
    (header_len,) = _U32.unpack(_read_exact(source, _U32.size, "header length"))
    config = _parse_header(_read_exact(source, header_len, "header"))

    try:
        skeleton = RewardModel(config)
    except ModelConfigError as e:
        raise ModelFormatError(str(e)) from e

    params = OrderedDict()
    for expected_name, shape in skeleton.parameter_shapes():
        (name_len,) = _U16.unpack(_read_exact(source, _U16.size, "parameter name length"))
        name = _read_exact(source, name_len, "parameter name").decode("utf-8", errors="replace")
        if name != expected_name:
            raise ModelFormatError(f"expected parameter {expected_name!r}, found {name!r}")
        (count,) = _U64.unpack(_read_exact(source, _U64.size, f"{name} count"))
        if count != int(np.prod(shape)):
            raise ModelFormatError(f"{name}: {count} values, config implies shape {shape}")
        payload = _read_exact(source, count * _VALUE.itemsize, f"{name} values")
        params[name] = np.frombuffer(payload, dtype=_VALUE).astype(np.float64).reshape(shape)

    if source.read(1):
        raise ModelFormatError("trailing bytes after the last parameter block")
    try:
        return RewardModel(config, params)
    except ModelConfigError as e:
        raise ModelFormatError(str(e)) from e


def save_model(model: RewardModel, path: str) -> int:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        n = write_model(model, f)
    logger.info(f"Saved reward model to {path} ({n} bytes)")
    return n


def load_model(path: str) -> RewardModel:
    with open(path, "rb") as f:
        model = read_model(f)
    logger.info(f"Loaded reward model from {path} ({model.num_parameters:,} parameters)")
    return model
