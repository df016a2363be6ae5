"""
Container Format: Reader and writer for ".lttk" trajectory containers.

Layout (little-endian throughout):
    magic "LTTK" | version u16 = 1 | reserved u16 = 0 | record_count u32
    per record: problem_id u64 | sample_id u32 | answer_id u32 (0xFFFFFFFF = none)
                label u8 (0, 1, 255) | T u32 | L u32 | d u32 | T*L*d f32 values (h[t][l][k])
"""
import io
import logging
import os
import struct
from typing import BinaryIO, Optional

import numpy as np

from latentkit.core.trajectory import (
    Label, LabeledSample, LatentThought, Trajectory, TrajectorySet, ensure_valid,
)
from latentkit.errors import (
    BadMagicError, ContainerFormatError, DimensionMismatchError, InvalidTrajectoryError,
    TruncatedPayloadError, UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

MAGIC = b"LTTK"
VERSION = 1
NO_ANSWER = 0xFFFFFFFF

_HEADER = struct.Struct("<4sHHI")
_RECORD = struct.Struct("<QIIBIII")
_VALUE = np.dtype("<f4")
_CHUNK = 1 << 20


# ===============================================================
#  Writing
# ===============================================================

def _encode_values(traj: Trajectory) -> bytes:
    """f32 payload of one trajectory; values outside the f32 range are rejected."""
    with np.errstate(over="ignore", invalid="ignore"):
        values = traj.stacked().astype(_VALUE)
    if not np.isfinite(values).all():
        raise InvalidTrajectoryError(
            f"problem {traj.problem_id} sample {traj.sample_id}: "
            f"values exceed the float32 range of the container"
        )
    return values.tobytes(order="C")


def write_container(tset: TrajectorySet, sink: BinaryIO) -> int:
    """Serialize a valid set; returns the number of bytes written."""
    ensure_valid(tset)
    payloads = [_encode_values(sample.trajectory) for sample in tset.samples]
    written = sink.write(_HEADER.pack(MAGIC, VERSION, 0, len(tset)))
    for sample, payload in zip(tset.samples, payloads):
        traj = sample.trajectory
        T = len(traj.thoughts)
        L, d = traj.token_shape
        answer = NO_ANSWER if traj.answer_id is None else traj.answer_id
        written += sink.write(_RECORD.pack(
            traj.problem_id, traj.sample_id, answer, int(sample.label), T, L, d
        ))
        written += sink.write(payload)
    logger.debug(f"Wrote {len(tset)} records ({written} bytes)")
    return written


def save_container(tset: TrajectorySet, path: str) -> int:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        n = write_container(tset, f)
    logger.info(f"Saved {len(tset)} trajectories to {path} ({n} bytes)")
    return n


# ===============================================================
#  Reading
# ===============================================================

def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise TruncatedPayloadError(f"stream ended inside {what}: expected {n} bytes, got {len(data)}")
    return data


def _remaining(source: BinaryIO) -> Optional[int]:
    """Bytes left in a seekable stream, None when unknown."""
    try:
        if not source.seekable():
            return None
        here = source.tell()
        end = source.seek(0, io.SEEK_END)
        source.seek(here)
        return end - here
    except (AttributeError, OSError):
        return None


def _read_payload(source: BinaryIO, n: int, what: str) -> bytes:
    """Read n declared bytes without trusting n for the allocation."""
    left = _remaining(source)
    if left is not None and n > left:
        raise TruncatedPayloadError(f"stream ended inside {what}: declares {n} bytes, {left} remain")
    buf = bytearray()
    while len(buf) < n:
        chunk = source.read(min(_CHUNK, n - len(buf)))
        if not chunk:
            raise TruncatedPayloadError(f"stream ended inside {what}: expected {n} bytes, got {len(buf)}")
        buf += chunk
    return bytes(buf)


def read_container(source: BinaryIO) -> TrajectorySet:
    """Parse a container stream; record order is preserved."""
    head = source.read(_HEADER.size)
    if len(head) >= 4 and head[:4] != MAGIC:
        raise BadMagicError(f"bad magic {head[:4]!r}, expected {MAGIC!r}")
    if len(head) != _HEADER.size:
        raise TruncatedPayloadError("stream ended inside the file header")
    _, version, _, count = _HEADER.unpack(head)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")

    samples = []
    for index in range(count):
        problem_id, sample_id, answer, label, T, L, d = _RECORD.unpack(
            _read_exact(source, _RECORD.size, f"record {index} header")
        )
        if T == 0 or L == 0 or d == 0:
            raise DimensionMismatchError(f"record {index} declares empty dims T={T} L={L} d={d}")
        if label not in (0, 1, 255):
            raise ContainerFormatError(f"record {index} has invalid label byte {label}")
        n_values = T * L * d
        payload = _read_payload(source, n_values * _VALUE.itemsize, f"record {index} values")
        values = np.frombuffer(payload, dtype=_VALUE).astype(np.float64).reshape(T, L, d)
        traj = Trajectory(
            problem_id=problem_id,
            sample_id=sample_id,
            thoughts=tuple(LatentThought(h) for h in values),
            answer_id=None if answer == NO_ANSWER else answer,
        )
        samples.append(LabeledSample(traj, Label(label)))

    leftover = _remaining(source)
    if leftover:
        raise DimensionMismatchError(
            f"{leftover} trailing bytes after {count} declared records; dims disagree with stream length"
        )
    logger.debug(f"Read {count} records")
    return TrajectorySet(tuple(samples))


def load_container(path: str) -> TrajectorySet:
    with open(path, "rb") as f:
        tset = read_container(f)
    logger.info(f"Loaded {len(tset)} trajectories from {path}")
    return tset
