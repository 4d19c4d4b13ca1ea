"""One step of the block-column SVD update, and a fold over many blocks."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import CapacityError, DimensionError, NonFiniteError
from .kernels import pivoted_qr
from .state import FactoredSVD, HouseholderStack, apply_Ut_block
from .thresholding import cut_bound, thresholded_svd


@dataclass
class ColumnBlock:
    data: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[1] < 1:
            raise DimensionError(f"column block must be a non-empty d x m array, got {data.shape}")
        self.data = data

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


@dataclass
class UpdateReport:
    rank_before: int
    rank_after: int
    qr_steps: int
    discarded_singular_values: np.ndarray
    elapsed: float
    label: Optional[str] = None
    cut_index: int = 0
    # Frobenius norm of everything zeroed before the small SVD: the QR remainder
    # left behind by the early stop plus the cut block of the core
    truncation_error: float = 0.0
    # Frobenius norm of the columns the pivoted QR left unreduced
    qr_residual: float = 0.0
    core: Optional[np.ndarray] = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "rank_before": self.rank_before,
            "rank_after": self.rank_after,
            "qr_steps": self.qr_steps,
            "cut_index": self.cut_index,
            "discarded": [float(x) for x in self.discarded_singular_values],
            "truncation_error": self.truncation_error,
            "qr_residual": self.qr_residual,
            "elapsed": self.elapsed,
        }


def _coerce_block(block) -> ColumnBlock:
    return block if isinstance(block, ColumnBlock) else ColumnBlock(block)


def augment(state: FactoredSVD, block) -> tuple[FactoredSVD, UpdateReport]:
    """SVD of ``[A B]`` from the SVD of ``A``. ``state`` is left untouched."""
    t0 = time.perf_counter()
    block = _coerce_block(block)
    d, n_k, r_k = state.d, state.n, state.r
    B, m = block.data, block.m
    if block.d != d:
        raise DimensionError(f"block has {block.d} rows, state has {d}")
    if n_k + m > d:
        raise CapacityError(f"augmenting to {n_k + m} columns exceeds row dimension {d}")
    if not np.all(np.isfinite(B)):
        raise NonFiniteError(f"block {block.label!r} contains non-finite entries")
    tau = state.tau
    n_new = n_k + m
    p_k = r_k + m

    Z = apply_Ut_block(state, B)

    qr = pivoted_qr(Z[r_k:], stop_rule=lambda j: cut_bound(m, j, tau))
    steps = qr.steps

    core = np.zeros((p_k, p_k))
    core[:r_k, :r_k] = np.diag(state.sigma)
    core[:r_k, r_k:] = Z[:r_k, qr.perm]
    core[r_k:, r_k:] = qr.R

    th = thresholded_svd(core, tau, protected=r_k)
    r_new = th.rank
    Ut, Vt = th.svd.U, th.svd.V

    # left core: [[C_k, 0], [0, I]] @ [[Ut, 0], [0, I]], both padded to n_new
    c_k = state.core_U.shape[0]
    core_U = np.eye(n_new)
    if c_k:
        core_U[:c_k, :c_k] = state.core_U
    core_U[:, :p_k] = core_U[:, :p_k] @ Ut

    # stack: [[Ut^T, 0], [0, I]] applied to [H_k, y_1..y_p]
    H = np.zeros((state.q + steps, d))
    H[:state.q] = state.stack.vectors
    for i, y in enumerate(qr.reflectors):
        start = r_k + y.offset
        H[state.q + i, start:start + y.size] = y.v
    H[:, :p_k] = H[:, :p_k] @ Ut

    # right factor: [[V_k, 0], [0, I]] (P_k' P_k)^T [[Vt, 0], [0, I]]
    V_ext = np.zeros((n_new, n_new))
    V_ext[:n_k, :n_k] = state.V
    V_ext[n_k:, n_k:] = np.eye(m)
    cols = np.concatenate([np.arange(r_k), n_k + qr.perm, np.arange(r_k, n_k)])
    V = V_ext[:, cols]
    V[:, :p_k] = V[:, :p_k] @ Vt

    new_state = FactoredSVD(
        d=d,
        n=n_new,
        core_U=core_U,
        stack=HouseholderStack(H),
        sigma=th.svd.sigma[:r_new].copy(),
        V=V,
        policy=state.policy,
    )
    report = UpdateReport(
        rank_before=r_k,
        rank_after=r_new,
        qr_steps=steps,
        discarded_singular_values=th.discarded,
        elapsed=time.perf_counter() - t0,
        label=block.label,
        cut_index=th.cut.m,
        truncation_error=float(np.hypot(qr.residual, th.cut_error)),
        qr_residual=qr.residual,
        core=core,
    )
    return new_state, report


def augment_many(state: FactoredSVD, blocks: Iterable) -> tuple[FactoredSVD, list[UpdateReport]]:
    """Fold :func:`augment` over ``blocks``.

    If a block fails, the exception propagates; ``state`` itself is never
    modified, so the caller still holds the last good state it passed in. The
    partial progress is attached to the exception as ``partial``.
    """
    reports = []
    current = state
    for i, block in enumerate(blocks):
        try:
            current, rep = augment(current, block)
        except Exception as exc:
            exc.partial = (current, reports, i)
            raise
        reports.append(rep)
    return current, reports
