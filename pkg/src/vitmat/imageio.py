"""Binary netpbm I/O (P6 colour, P5 grayscale) plus an optional Pillow fallback."""

from __future__ import annotations

from pathlib import Path

import numpy as np

NETPBM_SUFFIXES = {".ppm", ".pgm", ".pnm"}
OTHER_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}
IMAGE_SUFFIXES = NETPBM_SUFFIXES | OTHER_SUFFIXES


class ImageReadError(IOError):
    pass


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageReadError("truncated netpbm header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_netpbm(data: bytes) -> np.ndarray:
    """Decode P6/P5 bytes to an ``(H, W, 3)`` uint8 array (grayscale replicated)."""
    magic = data[:2]
    if magic not in (b"P6", b"P5"):
        raise ImageReadError(f"unsupported netpbm magic {magic!r}")
    tokens, pos = _header_tokens(data[2:], 3)
    pos += 2
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageReadError(f"bad netpbm header {tokens!r}") from exc
    if w < 1 or h < 1 or not 1 <= maxval <= 255:
        raise ImageReadError(f"unsupported netpbm geometry {w}x{h} maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise ImageReadError(f"raster truncated: {len(raster)} of {need} bytes")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, channels)
    if maxval != 255:
        arr = np.floor(arr.astype(np.float64) * 255.0 / maxval + 0.5).astype(np.uint8)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr.copy()


def encode_ppm(img) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img).tobytes()


def encode_pgm(gray) -> bytes:
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode() + np.ascontiguousarray(gray).tobytes()


def read_image(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageReadError(f"{path}: {exc}") from exc
    if data[:2] in (b"P5", b"P6"):
        try:
            return decode_netpbm(data)
        except ImageReadError as exc:
            raise ImageReadError(f"{path}: {exc}") from exc
    if path.suffix.lower() in OTHER_SUFFIXES:
        try:
            from PIL import Image
        except ImportError as exc:
            raise ImageReadError(f"{path}: Pillow is needed for {path.suffix} files") from exc
        try:
            with Image.open(path) as im:
                return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
        except Exception as exc:  # Pillow raises a zoo of types for bad files
            raise ImageReadError(f"{path}: {exc}") from exc
    raise ImageReadError(f"{path}: not a P5/P6 netpbm file")


def write_ppm(path, img) -> None:
    Path(path).write_bytes(encode_ppm(img))


def write_pgm(path, gray) -> None:
    Path(path).write_bytes(encode_pgm(gray))


def looks_like_image(path) -> bool:
    """Cheap sniff: netpbm magic, or a known raster suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in OTHER_SUFFIXES:
        return True
    if suffix not in NETPBM_SUFFIXES:
        return False
    try:
        with open(path, "rb") as fh:
            return fh.read(2) in (b"P5", b"P6")
    except OSError:
        return False
