"""File formats: numeric CSV, the ASVF frame/column stream, binary PGM, atomic writes."""
from __future__ import annotations

import contextlib
import csv
import io
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DimensionError, NonFiniteError, StateFormatError

ASVF_MAGIC = b"ASVF"
_ASVF_HEADER = struct.Struct("<4s3I")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the same directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@contextlib.contextmanager
def locked(path):
    """Advisory exclusive lock on ``<path>.lock`` for the duration of the block."""
    import fcntl

    lock_path = Path(str(path) + ".lock")
    with open(lock_path, "a") as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)


def parse_float(token: str) -> float:
    """Strict float parsing: plain decimal/scientific notation only, no locale."""
    t = token.strip()
    low = t.lower()
    if not t or "_" in t or low.lstrip("+-") in ("nan", "inf", "infinity"):
        raise ValueError(f"not a finite number: {token!r}")
    return float(t)


def read_matrix_csv(path) -> np.ndarray:
    """Numeric CSV, one matrix row per line. A single row of values is read as a column."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([parse_float(c) for c in row])
            except ValueError as exc:
                raise DimensionError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DimensionError(f"{path}: no data")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DimensionError(f"{path}: ragged rows")
    M = np.array(rows, dtype=float)
    if M.shape[0] == 1 and M.shape[1] > 1:
        M = M.T
    return M


def format_matrix_csv(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    buf = io.StringIO()
    for row in M:
        buf.write(",".join(repr(float(x)) for x in row))
        buf.write("\n")
    return buf.getvalue()


def write_matrix_csv(path, M) -> None:
    atomic_write_text(path, format_matrix_csv(M))


# --- ASVF stream -----------------------------------------------------------

def write_asvf(path, frames, width: int, height: int) -> None:
    """Frames (each ``width*height`` values, row-major) into one binary stream."""
    frames = [np.asarray(f, dtype="<f8").reshape(-1) for f in frames]
    d = width * height
    for i, f in enumerate(frames):
        if f.shape[0] != d:
            raise DimensionError(f"frame {i} has {f.shape[0]} values, expected {d}")
    data = _ASVF_HEADER.pack(ASVF_MAGIC, width, height, len(frames))
    data += b"".join(f.tobytes() for f in frames)
    atomic_write_bytes(path, data)


def read_asvf_header(fh) -> tuple[int, int, int]:
    head = fh.read(_ASVF_HEADER.size)
    if len(head) != _ASVF_HEADER.size:
        raise StateFormatError("ASVF stream truncated in header")
    magic, width, height, count = _ASVF_HEADER.unpack(head)
    if magic != ASVF_MAGIC:
        raise StateFormatError(f"bad ASVF magic {magic!r}")
    return width, height, count


def iter_asvf(path) -> Iterator[np.ndarray]:
    with open(path, "rb") as fh:
        width, height, count = read_asvf_header(fh)
        d = width * height
        for i in range(count):
            raw = fh.read(8 * d)
            if len(raw) != 8 * d:
                raise StateFormatError(f"ASVF stream truncated in frame {i}")
            frame = np.frombuffer(raw, dtype="<f8").astype(float)
            if not np.all(np.isfinite(frame)):
                raise NonFiniteError(f"frame {i} contains non-finite values")
            yield frame


def read_asvf(path) -> tuple[np.ndarray, int, int]:
    """Whole stream as a ``d x count`` matrix plus ``(width, height)``."""
    with open(path, "rb") as fh:
        width, height, _ = read_asvf_header(fh)
    frames = list(iter_asvf(path))
    M = np.column_stack(frames) if frames else np.zeros((width * height, 0))
    return M, width, height


# --- PGM -------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise StateFormatError("PGM header truncated")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Binary (P5) PGM, 8 or 16 bit, as a float image in ``[0, 1]``."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise StateFormatError(f"{path}: only binary P5 PGM is supported")
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise StateFormatError(f"{path}: bad maxval {maxval}")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    need = w * h * dtype.itemsize
    raw = data[offset:offset + need]
    if len(raw) != need:
        raise StateFormatError(f"{path}: pixel data truncated")
    img = np.frombuffer(raw, dtype=dtype).reshape(h, w).astype(float)
    return img / maxval


def write_pgm(path, image, maxval: int = 255) -> None:
    """Clamp to ``[0, 1]``, quantize and write a binary PGM."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    h, w = img.shape
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    pixels = np.rint(img * maxval).astype(dtype)
    atomic_write_bytes(path, f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + pixels.tobytes())
