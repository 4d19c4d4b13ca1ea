"""Streaming PCA of image sequences.

Frames are flattened row-major into columns and fed in chunks through the
block update. Frames are not mean-centred, so the leading left singular
vector plays the role of the static background.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from ._io import iter_asvf, read_asvf_header, read_pgm
from .errors import DimensionError
from .state import FactoredSVD, ThresholdPolicy, apply_U_block, apply_Ut_block, init_from_column
from .update import ColumnBlock, augment


@dataclass
class FrameSource:
    width: int
    height: int
    frames: Iterable
    chunk: int = 30

    def __post_init__(self):
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")

    @property
    def d(self) -> int:
        return self.width * self.height

    def __iter__(self) -> Iterator[np.ndarray]:
        for i, frame in enumerate(self.frames):
            f = np.asarray(frame, dtype=float)
            if f.size != self.d or (f.ndim == 2 and f.shape != (self.height, self.width)):
                raise DimensionError(
                    f"frame {i} has shape {f.shape}, expected {self.height}x{self.width}")
            yield f.reshape(-1)

    def chunks(self) -> Iterator[np.ndarray]:
        buf = []
        for f in self:
            buf.append(f)
            if len(buf) == self.chunk:
                yield np.column_stack(buf)
                buf = []
        if buf:
            yield np.column_stack(buf)


class _Lazy:
    """Re-iterable view that reopens its files on every pass."""

    def __init__(self, factory):
        self.factory = factory

    def __iter__(self):
        return iter(self.factory())


def pgm_directory_source(directory, chunk: int = 30) -> FrameSource:
    """Frames from the ``*.pgm`` files of a directory, in lexicographic order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    paths = sorted(directory.glob("*.pgm"))
    if not paths:
        return FrameSource(0, 0, [], chunk)
    h, w = read_pgm(paths[0]).shape
    return FrameSource(w, h, _Lazy(lambda: (read_pgm(p) for p in paths)), chunk)


def asvf_source(path, chunk: int = 30) -> FrameSource:
    with open(path, "rb") as fh:
        width, height, _ = read_asvf_header(fh)
    return FrameSource(width, height, _Lazy(lambda: iter_asvf(path)), chunk)


def ingest(source: FrameSource, policy: ThresholdPolicy | float,
           telemetry: Optional[list] = None) -> FactoredSVD:
    """Fold all frames of ``source`` into a factored SVD, one chunk per update.

    If ``telemetry`` is a list, one dict per chunk (frames, seconds,
    frames_per_second, rank) is appended to it.
    """
    if not isinstance(policy, ThresholdPolicy):
        policy = ThresholdPolicy(float(policy))
    state = None
    for k, block in enumerate(source.chunks()):
        t0 = time.perf_counter()
        if state is None:
            state = init_from_column(block[:, 0], policy)
            block = block[:, 1:]
        if block.shape[1]:
            state, _ = augment(state, ColumnBlock(block, label=f"chunk {k}"))
        if telemetry is not None:
            dt = time.perf_counter() - t0
            frames = block.shape[1] + (1 if k == 0 else 0)
            telemetry.append({"chunk": k, "frames": frames, "seconds": dt,
                              "frames_per_second": frames / dt if dt > 0 else float("inf"),
                              "rank": state.r})
    if state is None:
        raise DimensionError("frame source is empty")
    return state


@dataclass
class Decomposition:
    background: np.ndarray
    foreground: np.ndarray
    q: int


def decompose_frame(state: FactoredSVD, frame, q: int) -> Decomposition:
    """Split ``frame`` into its projection on the leading ``q`` left singular vectors and the rest.

    The foreground is formed first and the background recomputed from it,
    which makes ``background + foreground == frame`` hold bit-exactly whenever
    each background pixel is no larger in modulus than the frame pixel, or
    within a factor of two of it (always the case for the static parts of
    non-negative images).
    """
    if not 1 <= q <= state.r:
        raise IndexError(f"q={q} outside 1..{state.r}")
    x = np.asarray(frame, dtype=float).reshape(-1)
    if x.shape[0] != state.d:
        raise DimensionError(f"frame has {x.shape[0]} pixels, state has {state.d} rows")
    coeffs = apply_Ut_block(state, x)
    coeffs[q:] = 0.0
    projected = apply_U_block(state, coeffs)[:, 0]
    foreground = x - projected
    background = x - foreground
    return Decomposition(background, foreground, q)


def singular_value_report(state: FactoredSVD) -> list[tuple[int, float]]:
    """Rows ``(index, sigma)`` with 1-based indices."""
    return [(i + 1, float(s)) for i, s in enumerate(state.sigma)]


def format_singular_value_csv(state: FactoredSVD) -> str:
    lines = ["index,sigma"]
    lines += [f"{i},{s!r}" for i, s in singular_value_report(state)]
    return "\n".join(lines) + "\n"


# --- synthetic test video -----------------------------------------------------

def synthetic_background(width: int = 64, height: int = 48) -> np.ndarray:
    y, x = np.mgrid[0:height, 0:width]
    img = 0.35 + 0.12 * np.sin(x / 6.0) * np.cos(y / 5.0) + 0.1 * (x / width) - 0.05 * (y / height)
    return np.clip(img, 0.0, 1.0)


def square_path(width: int, height: int, size: int, period: int) -> list[tuple[int, int]]:
    """Top-left corners of a square travelling once around an ellipse in ``period`` steps."""
    cx, cy = (width - size) / 2.0, (height - size) / 2.0
    rx, ry = 0.7 * cx, 0.7 * cy
    t = 2 * np.pi * np.arange(period) / period
    return [(int(round(cx + rx * np.cos(a))), int(round(cy + ry * np.sin(a)))) for a in t]


@dataclass
class SyntheticVideo:
    width: int
    height: int
    background: np.ndarray
    frames: np.ndarray          # (count, height, width)
    boxes: list                 # (row0, row1, col0, col1) of the square per frame

    def source(self, chunk: int = 30) -> FrameSource:
        return FrameSource(self.width, self.height, list(self.frames), chunk)


def synthetic_video(width: int = 64, height: int = 48, count: int = 120, size: int = 6,
                    period: int = 24, intensity: float = 1.0) -> SyntheticVideo:
    """Static background plus a bright square moving periodically.

    The square revisits ``period`` positions, so the frame matrix has rank at
    most ``period``.
    """
    bg = synthetic_background(width, height)
    path = square_path(width, height, size, period)
    frames, boxes = [], []
    for t in range(count):
        x0, y0 = path[t % period]
        f = bg.copy()
        f[y0:y0 + size, x0:x0 + size] = intensity
        frames.append(f)
        boxes.append((y0, y0 + size, x0, x0 + size))
    return SyntheticVideo(width, height, bg, np.array(frames), boxes)
