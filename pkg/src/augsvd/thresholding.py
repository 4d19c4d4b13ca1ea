"""Absolute thresholding of the triangular core and the bounds that justify it.

The core is split as ``[[R11, R12], [0, R22]]`` at the first diagonal entry
small enough that the whole trailing block is guaranteed to carry Frobenius
mass at most ``tau``. ``R22`` is zeroed, the rest goes through a dense SVD and
singular values below ``tau`` are dropped. Values equal to ``tau`` are kept.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .kernels import SmallSVD, small_svd


def cut_bound(n: int, j: int, tau: float) -> float:
    """Largest admissible ``|r_{j+1,j+1}|`` for cutting an ``n x n`` core after ``j`` rows."""
    k = n - j
    return np.sqrt(2.0 / (k * (k + 1))) * tau


@dataclass
class CutDecision:
    m: int
    bound_used: float
    diagonal: np.ndarray


def choose_cut(R, tau: float, protected: int = 0) -> CutDecision:
    """Smallest ``m >= protected`` with ``|R[m, m]| <= cut_bound(n, m, tau)``; ``n`` if none."""
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    if protected > n:
        raise DimensionError(f"protected block {protected} larger than core size {n}")
    diag = np.abs(np.diag(R)).copy()
    for j in range(protected, n):
        bound = cut_bound(n, j, tau)
        if diag[j] <= bound:
            return CutDecision(j, bound, diag)
    return CutDecision(n, np.nan, diag)


@dataclass
class ThresholdedSVD:
    """Outcome of :func:`thresholded_svd`.

    ``svd`` is the full SVD of ``R_hat`` (the core with ``R22`` zeroed); only
    its first ``rank`` singular values survive. ``discarded`` lists, in
    decreasing order, the nonzero values removed in this step: singular
    values of ``R_hat`` below ``tau`` and singular values of the zeroed
    trailing block ``R22``.
    """

    svd: SmallSVD
    rank: int
    discarded: np.ndarray
    cut: CutDecision
    R_hat: np.ndarray
    cut_error: float = 0.0  # Frobenius norm of the zeroed R22

    @property
    def sigma(self) -> np.ndarray:
        return self.svd.sigma[:self.rank]


def thresholded_svd(R_core, tau: float, protected: int = 0) -> ThresholdedSVD:
    R_core = np.asarray(R_core, dtype=float)
    if R_core.ndim != 2 or R_core.shape[0] != R_core.shape[1]:
        raise DimensionError(f"core must be square, got shape {R_core.shape}")
    cut = choose_cut(R_core, tau, protected)
    R_hat = R_core.copy()
    cut_error = float(np.linalg.norm(R_hat[cut.m:, cut.m:]))
    R_hat[cut.m:, :] = 0.0
    svd = small_svd(R_hat)
    s = svd.sigma
    keep = int(np.count_nonzero((s >= tau) & (s > 0.0)))
    keep = min(keep, cut.m)
    # interlacing gives sigma_protected(R_hat) >= tau exactly; never let
    # rounding at the boundary lower the rank
    keep = max(keep, min(protected, cut.m))
    dropped = s[keep:cut.m]
    if cut.m < R_core.shape[0] and cut_error > 0.0:
        dropped = np.concatenate([dropped, np.linalg.svd(R_core[cut.m:, cut.m:], compute_uv=False)])
    dropped = np.sort(dropped[dropped > 0.0])[::-1]
    return ThresholdedSVD(svd, keep, dropped, cut, R_hat, cut_error)


def bound_sigma_tail(R, m: int) -> float:
    """Upper bound on ``sigma_{m+1}(R)`` from the size of the trailing diagonal entry."""
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    if not 0 <= m < n:
        raise DimensionError(f"need 0 <= m < n, got m={m}, n={n}")
    k = n - m
    return float(np.sqrt(k * (k + 1) / 2.0) * abs(R[m, m]))


def bound_sigma_head(R11) -> float:
    """Lower bound on the smallest singular value of an invertible triangular block.

    Writes ``R11 = D (I - N)`` with ``D`` diagonal and ``N`` strictly upper
    triangular, and returns ``min_j |r_jj| / ||sum_{j<m} N^j||_F``; for a
    pivoted factor the minimum is the last diagonal entry.
    """
    R11 = np.asarray(R11, dtype=float)
    m = R11.shape[0]
    if m == 0:
        raise DimensionError("empty block")
    d = np.diag(R11)
    if np.any(d == 0.0):
        raise DimensionError("singular diagonal")
    N = np.eye(m) - R11 / d[:, None]
    N = np.triu(N, 1)
    S = np.eye(m)
    P = np.eye(m)
    for _ in range(1, m):
        P = P @ N
        S += P
    return float(np.min(np.abs(d)) / np.linalg.norm(S))


def check_rank_robustness(r11_sigma_k: float, tau: float, sigma: float) -> bool:
    """Whether ``sigma_k(R11) >= tau + sigma``, which forces ``sigma_k(R_hat) > sigma``."""
    return r11_sigma_k >= tau + sigma
