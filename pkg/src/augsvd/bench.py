"""Timing of a single update step as the row dimension grows.

With ``n`` and ``m`` fixed the work of one step is dominated by applying the
stored reflectors to the new block and by rotating the stack, both linear in
``d``; doubling ``d`` should roughly double the time.
"""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .state import FactoredSVD, init_from_column
from .update import augment


@dataclass
class BenchRow:
    d: int
    n: int
    m: int
    r: int
    seconds: float          # best of the repeats
    median: float

    def as_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "m": self.m, "r": self.r,
                "seconds": self.seconds, "median": self.median}


def prepared_state(d: int, n_before: int, tau: float = 0.0, seed: int = 0) -> FactoredSVD:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, n_before))
    state = init_from_column(A[:, 0], tau)
    if n_before > 1:
        state, _ = augment(state, A[:, 1:])
    return state


def time_step(d: int, n: int = 20, m: int = 5, repeats: int = 5, tau: float = 0.0,
              seed: int = 0) -> BenchRow:
    """Time augmenting a ``d x (n - m)`` state by ``m`` random columns."""
    if not 0 < m < n <= d:
        raise ValueError(f"need 0 < m < n <= d, got d={d} n={n} m={m}")
    state = prepared_state(d, n - m, tau, seed)
    B = np.random.default_rng(seed + 1).standard_normal((d, m))
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out, _ = augment(state, B)
        times.append(time.perf_counter() - t0)
    return BenchRow(d, n, m, out.r, min(times), statistics.median(times))


def run(dims=(50_000, 100_000, 200_000), n: int = 20, m: int = 5, repeats: int = 5,
        tau: float = 0.0) -> list[BenchRow]:
    return [time_step(d, n, m, repeats, tau) for d in dims]


def format_csv(rows) -> str:
    lines = ["d,n,m,r,seconds,median"]
    lines += [f"{r.d},{r.n},{r.m},{r.r},{r.seconds!r},{r.median!r}" for r in rows]
    return "\n".join(lines) + "\n"
