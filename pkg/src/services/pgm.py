import os

import numpy as np

from src.models.bridge import RasterImage
from src.utils.errors import FormatError, StorageError

__all__ = ("encode_pgm", "decode_pgm", "read_pgm", "write_pgm")

_WHITESPACE = b" \t\r\n"


def encode_pgm(image: RasterImage) -> bytes:
    """Binary PGM: ``P5\\n<W> <H>\\n255\\n`` followed by raw rows."""
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def _next_token(data: bytes, offset: int) -> tuple:
    while offset < len(data):
        if data[offset : offset + 1] in (b"#",):
            end = data.find(b"\n", offset)
            offset = len(data) if end < 0 else end + 1
        elif data[offset] in _WHITESPACE:
            offset += 1
        else:
            break
    start = offset
    while offset < len(data) and data[offset] not in _WHITESPACE:
        offset += 1
    if start == offset:
        raise FormatError(f"unexpected end of header at byte {start}")
    return data[start:offset], start, offset


def decode_pgm(data: bytes) -> RasterImage:
    if data[:2] != b"P5":
        raise FormatError(f"bad magic {data[:2]!r} at byte 0, expected b'P5'")
    offset = 2
    values = []
    for label in ("width", "height", "maxval"):
        token, start, offset = _next_token(data, offset)
        if not token.isdigit():
            raise FormatError(f"invalid {label} {token!r} at byte {start}")
        values.append(int(token))
    width, height, maxval = values
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} at byte {start}, expected 255")
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}")
    if offset >= len(data) or data[offset] not in _WHITESPACE:
        raise FormatError(f"missing separator after header at byte {offset}")
    offset += 1

    expected = width * height
    actual = len(data) - offset
    if actual < expected:
        raise FormatError(
            f"truncated body at byte {offset}: expected {expected} bytes, got {actual}"
        )
    if actual > expected:
        raise FormatError(
            f"trailing data at byte {offset + expected}: "
            f"expected {expected} bytes, got {actual}"
        )
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    return RasterImage(pixels.reshape(height, width).copy())


def read_pgm(path) -> RasterImage:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as ex:
        raise StorageError(path, ex.strerror or str(ex)) from ex
    try:
        return decode_pgm(data)
    except FormatError as ex:
        raise FormatError(f"{path}: {ex}") from ex


def write_pgm(path, image: RasterImage):
    try:
        with open(path, "wb") as f:
            f.write(encode_pgm(image))
    except OSError as ex:
        raise StorageError(os.fspath(path), ex.strerror or str(ex)) from ex
