"""Small dense building blocks: Householder reflectors, pivoted QR, small SVD.

Reflectors use the normalization ``H = I - v v^T`` with ``||v||_2 = sqrt(2)``,
so no scalar factor has to be carried around. A zero vector stands for the
identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DimensionError

SQRT2 = np.sqrt(2.0)

# relative drop of a downdated column norm that triggers recomputation
_NORM_RECOMPUTE = 1e-2
# relative window within which pivot candidates are compared on exact norms
_CONTENDER = 1e-8


@dataclass(frozen=True)
class Reflector:
    """Householder reflector ``I - v v^T`` acting on rows ``offset:offset+len(v)``."""

    v: np.ndarray
    offset: int = 0

    @property
    def size(self) -> int:
        return self.v.shape[0]

    @property
    def is_identity(self) -> bool:
        return not np.any(self.v)

    def apply(self, M: np.ndarray) -> np.ndarray:
        """Apply in place to the rows of ``M`` covered by the reflector and return ``M``."""
        if self.is_identity:
            return M
        window = M[self.offset:self.offset + self.size]
        if window.ndim == 1:
            window -= self.v * (self.v @ window)
        else:
            window -= np.outer(self.v, self.v @ window)
        return M

    def matrix(self, n: Optional[int] = None) -> np.ndarray:
        """Explicit ``n x n`` matrix, for tests and small sizes only."""
        n = self.offset + self.size if n is None else n
        return self.apply(np.eye(n))


def make_reflector(x, positive: bool = False) -> tuple[Reflector, float]:
    """Reflector mapping ``x`` onto a multiple of ``e_1``.

    Returns the reflector and the leading entry ``beta`` of ``H x = beta e_1``.
    By default ``beta`` has the sign opposite to ``x[0]`` (no cancellation).
    With ``positive=True`` the image is ``+||x|| e_1``; the first component of
    the reflection vector is then formed with the cancellation-free identity
    ``x_1 - ||x|| = -||x_{2:}||^2 / (x_1 + ||x||)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DimensionError("make_reflector needs a non-empty vector")
    scale = np.max(np.abs(x))
    if scale == 0.0:
        return Reflector(np.zeros_like(x)), 0.0
    # work on x / scale so squares neither underflow nor overflow
    x = x / scale
    norm = np.linalg.norm(x)
    v = x.copy()
    if positive:
        beta = norm
        if x[0] > 0.0:
            tail = x[1:] @ x[1:]
            v[0] = -tail / (x[0] + norm)
        else:
            v[0] = x[0] - norm
    else:
        beta = -norm if x[0] >= 0.0 else norm
        v[0] = x[0] - beta
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        # x is already beta * e_1
        return Reflector(np.zeros_like(x)), float(beta * scale)
    v *= SQRT2 / vnorm
    return Reflector(v), float(beta * scale)


def apply_reflectors(reflectors: Sequence[Reflector], M, transpose_order: bool = False) -> np.ndarray:
    """Return ``(H_1 H_2 ... H_p) M``, or ``(H_p ... H_1) M`` if ``transpose_order``.

    The product ``H_1 ... H_p`` is the orthogonal factor ``Q`` of a Householder QR,
    so ``transpose_order=True`` computes ``Q^T M``. ``M`` is not modified.
    """
    out = np.array(M, dtype=float, copy=True)
    rows = out.shape[0]
    for i, h in enumerate(reflectors):
        if h.offset + h.size > rows:
            raise DimensionError(
                f"reflector {i} spans rows {h.offset}..{h.offset + h.size - 1} "
                f"but the matrix has {rows} rows")
    order = reflectors if transpose_order else reversed(reflectors)
    for h in order:
        h.apply(out)
    return out


@dataclass
class PivotedQR:
    """Result of :func:`pivoted_qr`.

    ``M[:, perm] = Q @ [R; 0]`` up to the unreduced remainder, whose Frobenius
    norm is ``residual``; ``Q = H_1 ... H_steps``. Rows of ``R`` at and beyond
    ``steps`` are zero.
    """

    reflectors: list
    R: np.ndarray
    perm: np.ndarray
    steps: int
    residual: float = 0.0
    shape: tuple = field(default=(0, 0))

    def q_matrix(self) -> np.ndarray:
        return apply_reflectors(self.reflectors, np.eye(self.shape[0]))

    def permutation_matrix(self) -> np.ndarray:
        """``P`` with ``M @ P = M[:, perm]``."""
        m = len(self.perm)
        P = np.zeros((m, m))
        P[self.perm, np.arange(m)] = 1.0
        return P

    def reconstruct(self) -> np.ndarray:
        ell, m = self.shape
        full = np.zeros((ell, m))
        k = min(ell, m)
        full[:k] = self.R[:k]
        full = apply_reflectors(self.reflectors, full)
        out = np.empty_like(full)
        out[:, self.perm] = full
        return out


def _zero_rule(j: int) -> float:
    return 0.0


def pivoted_qr(M, stop_rule: Optional[Callable[[int], float]] = None) -> PivotedQR:
    """Householder QR with greedy column pivoting.

    Before step ``j`` (0-based, ``j`` reflections done) the remaining column
    of largest norm is pivoted to the front; if that norm is ``<= stop_rule(j)``
    the factorization stops. Ties go to the lowest original column index.
    """
    A = np.array(M, dtype=float, order="F", copy=True)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"pivoted_qr needs a non-empty matrix, got shape {A.shape}")
    rule = _zero_rule if stop_rule is None else stop_rule
    ell, m = A.shape
    perm = np.arange(m)
    norms = np.linalg.norm(A, axis=0)
    ref_norms = norms.copy()
    R = np.zeros((m, m))
    reflectors = []
    steps = 0
    for j in range(min(ell, m)):
        rest = norms[j:]
        best = rest.max()
        threshold = rule(j)
        if best <= threshold:
            # downdated estimates may be stale; decide on exact norms
            norms[j:] = np.linalg.norm(A[j:, j:], axis=0)
            ref_norms[j:] = norms[j:]
            best = norms[j:].max()
            if best <= threshold:
                break
        # estimates carry relative errors up to ~eps / _NORM_RECOMPUTE**2; settle
        # close contenders on exact norms
        close = np.flatnonzero(norms[j:] >= best * (1.0 - _CONTENDER)) + j
        if close.size > 1:
            norms[close] = np.linalg.norm(A[j:, close], axis=0)
            ref_norms[close] = norms[close]
            best = norms[close].max()
        ties = np.flatnonzero(norms[j:] == best) + j
        piv = ties[np.argmin(perm[ties])]
        if piv != j:
            A[:, [j, piv]] = A[:, [piv, j]]
            perm[[j, piv]] = perm[[piv, j]]
            norms[[j, piv]] = norms[[piv, j]]
            ref_norms[[j, piv]] = ref_norms[[piv, j]]
        h, beta = make_reflector(A[j:, j])
        A[j, j] = beta
        A[j + 1:, j] = 0.0
        if j + 1 < m and not h.is_identity:
            block = A[j:, j + 1:]
            block -= np.outer(h.v, h.v @ block)
        reflectors.append(Reflector(h.v, offset=j))
        steps += 1
        if j + 1 < m:
            tail = norms[j + 1:] ** 2 - A[j, j + 1:] ** 2
            np.maximum(tail, 0.0, out=tail)
            tail = np.sqrt(tail)
            stale = tail < _NORM_RECOMPUTE * ref_norms[j + 1:]
            if np.any(stale):
                cols = np.flatnonzero(stale) + j + 1
                tail[cols - j - 1] = np.linalg.norm(A[j + 1:, cols], axis=0)
                ref_norms[cols] = tail[cols - j - 1]
            norms[j + 1:] = tail
    R[:steps] = np.triu(A[:steps])
    residual = 0.0
    if steps < m and steps < ell:
        residual = float(np.linalg.norm(A[steps:, steps:]))
    return PivotedQR(reflectors, R, perm, steps, residual, (ell, m))


@dataclass
class SmallSVD:
    """``M = U @ diag(sigma) @ V.T`` with square orthogonal ``U``, ``V``."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray


def small_svd(M) -> SmallSVD:
    """Full SVD of a small square matrix, singular values non-increasing."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"small_svd needs a square matrix, got shape {M.shape}")
    p = M.shape[0]
    if p == 0:
        return SmallSVD(np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0)))
    if p == 1:
        x = M[0, 0]
        return SmallSVD(np.array([[-1.0 if x < 0 else 1.0]]), np.array([abs(x)]), np.ones((1, 1)))
    if not np.all(np.isfinite(M)):
        raise ConvergenceError("small_svd input is not finite", {"size": p})
    try:
        U, s, Vt = np.linalg.svd(M)
    except np.linalg.LinAlgError as exc:
        try:
            U, s, Vt = scipy.linalg.svd(M, lapack_driver="gesvd")
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "SVD did not converge",
                {"size": p, "frobenius": float(np.linalg.norm(M)), "cause": str(exc)}) from exc
    return SmallSVD(U, s, Vt.T)
