"""Binary PPM (P6) and PGM (P5) readers and writers.

Images round-trip as float32 [3,H,W] scaled to [0,1] by /255. Mask files use
the external convention 255 = missing; reading inverts to internal 1 = known.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class PnmParseError(ValueError):
    """Malformed PNM data; messages name the byte offset of the problem."""


def _parse_header(buf: bytes, magic: bytes, path) -> tuple[int, int, int]:
    if buf[:2] != magic:
        raise PnmParseError(f"{path}: bad magic {buf[:2]!r} at offset 0, expected {magic!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        token = buf[start:pos]
        if not token.isdigit():
            raise PnmParseError(f"{path}: expected integer header field at offset {start}")
        fields.append(int(token))
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PnmParseError(f"{path}: missing whitespace after maxval at offset {pos}")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PnmParseError(f"{path}: non-positive dimensions {width}x{height}")
    if maxval != 255:
        raise PnmParseError(f"{path}: unsupported maxval {maxval}, only 255")
    return width, height, pos


def _payload(buf: bytes, offset: int, count: int, path) -> np.ndarray:
    raw = buf[offset:offset + count]
    if len(raw) != count:
        raise PnmParseError(
            f"{path}: truncated payload at offset {offset + len(raw)}, "
            f"expected {count} bytes"
        )
    return np.frombuffer(raw, dtype=np.uint8)


def read_image(path) -> np.ndarray:
    """P6 file -> float32 [3,H,W] in [0,1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    w, h, off = _parse_header(buf, b"P6", path)
    flat = _payload(buf, off, w * h * 3, path)
    return (flat.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float32)) / np.float32(255.0)


def write_image(image, path) -> None:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"write_image: expected [3,H,W], got {arr.shape}")
    quant = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = arr.shape[1:]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quant.transpose(1, 2, 0).tobytes())


def read_mask(path) -> np.ndarray:
    """P5 file (255 = missing) -> internal float32 [1,H,W] with 1 = known."""
    with open(path, "rb") as fh:
        buf = fh.read()
    w, h, off = _parse_header(buf, b"P5", path)
    flat = _payload(buf, off, w * h, path)
    return (flat.reshape(1, h, w) < 128).astype(np.float32)


def write_mask(mask, path) -> None:
    arr = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 1:
        raise ValueError(f"write_mask: expected [1,H,W], got {arr.shape}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("write_mask: mask entries must be exactly 0 or 1")
    quant = np.where(arr[0] == 0.0, np.uint8(255), np.uint8(0))
    h, w = arr.shape[1:]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quant.tobytes())
