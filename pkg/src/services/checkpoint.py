"""Binary checkpoint format.

Layout: ``PXCN`` magic, u16 format version, u32 header length, a JSON header
(model config, step, rng state, array names and shapes), then every array as
little-endian float32 in header order: parameters, first moments, second
moments, each sorted by name.
"""
import dataclasses
import json
import os
import struct

import numpy as np
from marshmallow import ValidationError as SchemaError

from src.models.pixelcnn import ModelConfig
from src.models.training import AdamState, Checkpoint
from src.numerics import ParamSet
from src.schemas.serializers.config import ModelConfigSchema
from src.utils.errors import FormatError, StorageError, ValidationError

__all__ = ("MAGIC", "VERSION", "encode_checkpoint", "decode_checkpoint", "save", "load")

MAGIC = b"PXCN"
VERSION = 1

_PREAMBLE = struct.Struct("<4sHI")


def _arrays(checkpoint: Checkpoint) -> list:
    sections = (
        ("params", checkpoint.params.arrays()),
        ("m", checkpoint.moments.m),
        ("v", checkpoint.moments.v),
    )
    return [
        (section, name, np.asarray(arrays[name]))
        for section, arrays in sections
        for name in sorted(arrays)
    ]


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    arrays = _arrays(checkpoint)
    header = {
        "config": ModelConfigSchema().dump(checkpoint.config),
        "step": checkpoint.step,
        "rng_state": checkpoint.rng_state,
        "arrays": [[section, name, list(a.shape)] for section, name, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(a.astype("<f4").tobytes() for _, _, a in arrays)
    return _PREAMBLE.pack(MAGIC, VERSION, len(blob)) + blob + body


def _layout_entry(entry) -> tuple:
    section, name, shape = entry
    if section not in ("params", "m", "v"):
        raise ValueError(f"unknown array section {section!r}")
    if not isinstance(name, str):
        raise ValueError(f"array name {name!r} is not a string")
    if not all(isinstance(n, int) and n >= 0 for n in shape):
        raise ValueError(f"array {name!r} has invalid shape {shape!r}")
    return section, name, tuple(shape)


def decode_checkpoint(data: bytes, expected: ModelConfig = None) -> Checkpoint:
    """Parse a checkpoint; nothing is returned unless the whole file is valid."""
    if len(data) < _PREAMBLE.size:
        raise FormatError(f"checkpoint too short: {len(data)} bytes")
    magic, version, header_len = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}, expected {VERSION}")
    start = _PREAMBLE.size
    try:
        header = json.loads(data[start : start + header_len].decode("utf-8"))
        config = ModelConfigSchema().load(header["config"])
        step = int(header["step"])
        rng_state = header["rng_state"]
        layout = [_layout_entry(entry) for entry in header["arrays"]]
    except (ValueError, KeyError, TypeError, SchemaError) as ex:
        raise FormatError(f"corrupt checkpoint header: {ex}") from ex

    sections = {"params": {}, "m": {}, "v": {}}
    offset = start + header_len
    for section, name, shape in layout:
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(data):
            raise FormatError(
                f"truncated checkpoint: array {name!r} needs bytes {offset}..{end}, "
                f"file has {len(data)}"
            )
        array = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        sections[section][name] = array.astype(np.float32).reshape(shape)
        offset = end
    if offset != len(data):
        raise FormatError(f"trailing bytes in checkpoint after byte {offset}")

    if expected is not None:
        check_config(config, expected)
    return Checkpoint(
        config=config,
        params=ParamSet(sections["params"]),
        moments=AdamState(m=sections["m"], v=sections["v"]),
        step=step,
        rng_state=rng_state,
    )


def check_config(actual: ModelConfig, expected: ModelConfig):
    for field in dataclasses.fields(ModelConfig):
        if getattr(actual, field.name) != getattr(expected, field.name):
            raise ValidationError(
                f"checkpoint {field.name}={getattr(actual, field.name)!r} "
                f"does not match expected {getattr(expected, field.name)!r}"
            )


def save(path, checkpoint: Checkpoint):
    try:
        with open(path, "wb") as f:
            f.write(encode_checkpoint(checkpoint))
    except OSError as ex:
        raise StorageError(os.fspath(path), ex.strerror or str(ex)) from ex


def load(path, expected: ModelConfig = None) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as ex:
        raise StorageError(os.fspath(path), ex.strerror or str(ex)) from ex
    return decode_checkpoint(data, expected)
