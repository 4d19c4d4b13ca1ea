"""Implicit full SVD of a tall-thin matrix.

The ``d x d`` left factor is never formed. It is kept as

    U = [[C, 0], [0, I]] @ (I - h_1 h_1^T) @ ... @ (I - h_q h_q^T)

with a small orthogonal ``C`` (``core_U``) acting on the leading rows and the
Householder vectors ``h_j`` (norm ``sqrt(2)``) stored as rows of a ``q x d``
array. ``V`` is a dense ``n x n`` orthogonal matrix; its trailing ``n - r``
columns are an orthonormal kernel basis.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Union

import numpy as np

from .errors import (
    DimensionError,
    NonFiniteError,
    StateFormatError,
    VersionError,
)
from .kernels import make_reflector

MAGIC = b"ASVD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sI5Q")


@dataclass(frozen=True)
class ThresholdPolicy:
    """Absolute threshold; singular values below ``tau`` are treated as zero."""

    tau: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"tau must be a finite non-negative number, got {self.tau}")


@dataclass
class HouseholderStack:
    """Householder vectors ``h_1..h_q`` stored as the rows of a ``(q, d)`` array."""

    vectors: np.ndarray

    @classmethod
    def empty(cls, d: int) -> "HouseholderStack":
        return cls(np.zeros((0, d)))

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def apply_transpose(self, Z: np.ndarray) -> np.ndarray:
        """In place ``(I - h_q h_q^T) ... (I - h_1 h_1^T) Z``; ``h_1`` acts first."""
        for h in self.vectors:
            Z -= np.outer(h, h @ Z)
        return Z

    def apply_forward(self, Z: np.ndarray) -> np.ndarray:
        """In place ``(I - h_1 h_1^T) ... (I - h_q h_q^T) Z``; ``h_q`` acts first."""
        for h in self.vectors[::-1]:
            Z -= np.outer(h, h @ Z)
        return Z


@dataclass
class FactoredSVD:
    """State of the augmented SVD for a ``d x n`` matrix of rank ``r``.

    ``core_U`` is ``c x c`` with ``c`` either ``0`` (meaning identity, right
    after initialization) or ``n``.
    """

    d: int
    n: int
    core_U: np.ndarray
    stack: HouseholderStack
    sigma: np.ndarray
    V: np.ndarray
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)

    @property
    def r(self) -> int:
        return self.sigma.shape[0]

    @property
    def tau(self) -> float:
        return self.policy.tau

    @property
    def q(self) -> int:
        return len(self.stack)

    def nbytes(self) -> int:
        return self.core_U.nbytes + self.stack.vectors.nbytes + self.sigma.nbytes + self.V.nbytes


def _as_block(B, d: int, name: str = "block") -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != d:
        raise DimensionError(f"{name} has shape {B.shape}, expected {d} rows")
    return B


def init_from_column(a, policy: ThresholdPolicy | float = 0.0) -> FactoredSVD:
    """State for the single-column matrix ``a``."""
    if not isinstance(policy, ThresholdPolicy):
        policy = ThresholdPolicy(float(policy))
    a = np.asarray(a, dtype=float).reshape(-1)
    d = a.shape[0]
    if d == 0:
        raise DimensionError("cannot initialize from an empty column")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("initial column contains non-finite entries")
    norm = float(np.linalg.norm(a))
    if norm > policy.tau:
        h, beta = make_reflector(a, positive=True)
        stack = HouseholderStack(h.v[None, :].copy())
        sigma = np.array([beta])
    else:
        stack = HouseholderStack.empty(d)
        sigma = np.zeros(0)
    return FactoredSVD(d, 1, np.zeros((0, 0)), stack, sigma, np.ones((1, 1)), policy)


def apply_Ut_block(state: FactoredSVD, B) -> np.ndarray:
    """``U^T B`` for a ``d x m`` block."""
    Z = np.array(_as_block(B, state.d), dtype=float, copy=True)
    c = state.core_U.shape[0]
    if c:
        Z[:c] = state.core_U.T @ Z[:c]
    return state.stack.apply_transpose(Z)


def apply_U_block(state: FactoredSVD, C) -> np.ndarray:
    """``U C`` for a ``d x m`` block; inverse of :func:`apply_Ut_block`."""
    Z = np.array(_as_block(C, state.d), dtype=float, copy=True)
    state.stack.apply_forward(Z)
    c = state.core_U.shape[0]
    if c:
        Z[:c] = state.core_U @ Z[:c]
    return Z


def left_singular_vector(state: FactoredSVD, p: int) -> np.ndarray:
    """The ``p``-th left singular vector, ``p`` counted from 1."""
    if not 1 <= p <= state.r:
        raise IndexError(f"singular vector index {p} outside 1..{state.r}")
    e = np.zeros((state.d, 1))
    e[p - 1, 0] = 1.0
    return apply_U_block(state, e)[:, 0]


def left_singular_vectors(state: FactoredSVD, q: int | None = None) -> np.ndarray:
    """The leading ``q`` left singular vectors as a ``d x q`` array."""
    q = state.r if q is None else q
    if not 0 <= q <= state.r:
        raise IndexError(f"requested {q} singular vectors, rank is {state.r}")
    E = np.zeros((state.d, q))
    E[np.arange(q), np.arange(q)] = 1.0
    return apply_U_block(state, E)


def kernel_basis(state: FactoredSVD) -> np.ndarray:
    return state.V[:, state.r:].copy()


def singular_values(state: FactoredSVD) -> np.ndarray:
    return state.sigma.copy()


def rank(state: FactoredSVD) -> int:
    return state.r


def low_rank_matrix(state: FactoredSVD) -> np.ndarray:
    """``U Sigma V^T`` as a dense ``d x n`` array (no ``d x d`` intermediate)."""
    top = np.zeros((state.d, state.n))
    top[:state.r] = state.sigma[:, None] * state.V[:, :state.r].T
    return apply_U_block(state, top)


def materialize_U(state: FactoredSVD) -> np.ndarray:
    """Dense ``d x d`` left factor. Only meant for small test sizes."""
    return apply_U_block(state, np.eye(state.d))


# --- serialization -------------------------------------------------------

def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"state field {name} contains non-finite values")


def serialize(state: FactoredSVD, sink: Union[BinaryIO, None] = None) -> bytes:
    """Write the versioned little-endian dump; also returns the bytes."""
    c = state.core_U.shape[0]
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, state.d, state.n, state.r, state.q, c),
        np.ascontiguousarray(state.core_U, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.sigma, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.V, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.stack.vectors, dtype="<f8").tobytes(),
        struct.pack("<d", state.tau),
    ]
    data = b"".join(parts)
    if sink is not None:
        sink.write(data)
    return data


def deserialize(source: Union[BinaryIO, bytes], expected_version: int = FORMAT_VERSION) -> FactoredSVD:
    data = source if isinstance(source, (bytes, bytearray, memoryview)) else source.read()
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise StateFormatError("state dump truncated in header")
    magic, version, d, n, r, q, c = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise VersionError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != expected_version:
        raise VersionError(f"format version {version}, expected {expected_version}")
    if not (r <= n <= d) or c not in (0, n):
        raise StateFormatError(f"inconsistent dimensions d={d} n={n} r={r} c={c}")
    sizes = [c * c, r, n * n, q * d, 1]
    expected = _HEADER.size + 8 * sum(sizes)
    if len(data) != expected:
        raise StateFormatError(f"state dump has {len(data)} bytes, expected {expected}")
    buf = io.BytesIO(data[_HEADER.size:])

    def take(k):
        return np.frombuffer(buf.read(8 * k), dtype="<f8").astype(float)

    core_U = take(c * c).reshape(c, c)
    sigma = take(r)
    V = take(n * n).reshape(n, n)
    H = take(q * d).reshape(q, d)
    tau = float(take(1)[0])
    for name, arr in (("core_U", core_U), ("sigma", sigma), ("V", V), ("stack", H), ("tau", tau)):
        _check_finite(name, arr)
    try:
        policy = ThresholdPolicy(tau)
    except ValueError as exc:
        raise StateFormatError(str(exc)) from exc
    return FactoredSVD(d, n, core_U, HouseholderStack(H), sigma, V, policy)


def save(state: FactoredSVD, path) -> None:
    """Atomically write ``state`` to ``path``."""
    from ._io import atomic_write_bytes
    atomic_write_bytes(path, serialize(state))


def load(path, expected_version: int = FORMAT_VERSION) -> FactoredSVD:
    with open(path, "rb") as fh:
        return deserialize(fh, expected_version)
