"""Prony-type kernel detection with Hankel matrices of growing total degree.

For samples of ``f(x) = sum_w f_w exp(w . x)`` the matrix with entries
``f(alpha + beta)`` (rows ``alpha`` in ``A``, columns ``beta`` in ``B``) has a
kernel made of coefficient vectors of polynomials vanishing on the points
``exp(w)``. Columns are added one total degree at a time and the kernel is
read off once the rank stops growing.

Monomial order: graded lexicographic. Degrees ascend; within a degree,
exponent tuples descend lexicographically, so ``x1`` precedes ``x2``:
``1, x1, x2, x1^2, x1 x2, x2^2, ...``.

``sign=-1`` selects entries ``f(alpha - beta)`` instead; kernel polynomials
then vanish on ``exp(-w)``.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._io import parse_float
from .errors import CapacityError, DimensionError, SamplerError, StabilizationError
from .state import FactoredSVD, ThresholdPolicy, init_from_column
from .update import ColumnBlock, augment

MONOMIAL_ORDER = "graded lexicographic (degree ascending, x1 > x2 > ... within a degree)"


def monomials_of_degree(s: int, n: int) -> list[tuple[int, ...]]:
    if s == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        out += [(first,) + rest for rest in monomials_of_degree(s - 1, n - first)]
    return out


def total_degree_set(s: int, n: int) -> list[tuple[int, ...]]:
    """All exponents of total degree ``<= n`` in graded lexicographic order."""
    return [a for k in range(n + 1) for a in monomials_of_degree(s, k)]


def monomial_name(alpha) -> str:
    parts = []
    for i, a in enumerate(alpha, start=1):
        if a == 1:
            parts.append(f"x{i}")
        elif a > 1:
            parts.append(f"x{i}^{a}")
    return "*".join(parts) or "1"


@dataclass
class ExponentialSum:
    """``f(x) = sum_w c_w exp(w . x)`` with real samples on the integer grid."""

    frequencies: np.ndarray
    coefficients: np.ndarray
    imag_tol: float = 1e-9

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.frequencies, dtype=complex))
        c = np.asarray(self.coefficients, dtype=complex).reshape(-1)
        if w.shape[0] != c.shape[0] or w.shape[0] < 1:
            raise ValueError("need one coefficient per frequency and at least one frequency")
        w = w.real + 1j * np.mod(w.imag + np.pi, 2 * np.pi) - 1j * np.pi
        if len({tuple(np.round(row, 12)) for row in w}) != w.shape[0]:
            raise ValueError("frequencies must be pairwise distinct")
        self.frequencies, self.coefficients = w, c

    @property
    def s(self) -> int:
        return self.frequencies.shape[1]

    def nodes(self, sign: int = 1) -> np.ndarray:
        """``exp(sign * w)``, one row per frequency; kernel polynomials vanish here."""
        return np.exp(sign * self.frequencies)

    def __call__(self, alpha) -> float:
        alpha = np.asarray(alpha, dtype=float)
        value = np.sum(self.coefficients * np.exp(self.frequencies @ alpha))
        if abs(value.imag) > self.imag_tol * max(1.0, abs(value.real)):
            raise SamplerError(f"sample at {tuple(alpha.astype(int))} is not real", tuple(alpha.astype(int)))
        return float(value.real)


@dataclass
class HankelSpec:
    rows: list
    sampler: Callable
    s: int
    sign: int = 1

    def __post_init__(self):
        self.rows = [tuple(int(a) for a in r) for r in self.rows]
        if any(len(r) != self.s for r in self.rows):
            raise DimensionError(f"all row indices must have {self.s} components")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def columns(self, n: int) -> list[tuple[int, ...]]:
        """Column indices added at degree ``n``."""
        return monomials_of_degree(self.s, n)

    def gamma(self, n: int) -> list[tuple[int, ...]]:
        return total_degree_set(self.s, n)

    def sample(self, index) -> float:
        try:
            value = float(self.sampler(index))
        except SamplerError:
            raise
        except Exception as exc:
            raise SamplerError(f"sampler failed at {index}: {exc}", index) from exc
        if not np.isfinite(value):
            raise SamplerError(f"sampler returned {value} at {index}", index)
        return value

    def entry_index(self, alpha, beta) -> tuple[int, ...]:
        return tuple(a + self.sign * b for a, b in zip(alpha, beta))

    def dense(self, n: int) -> np.ndarray:
        """``F_{A, Gamma_n}`` assembled in one go."""
        return np.column_stack([build_block(self, k).data for k in range(n + 1)])


def build_block(spec: HankelSpec, n: int) -> ColumnBlock:
    if n < 0:
        raise ValueError("degree must be non-negative")
    cols = spec.columns(n)
    data = np.empty((len(spec.rows), len(cols)))
    for j, beta in enumerate(cols):
        for i, alpha in enumerate(spec.rows):
            data[i, j] = spec.sample(spec.entry_index(alpha, beta))
    return ColumnBlock(data, label=f"degree {n}")


@dataclass
class IdealBasis:
    polynomials: np.ndarray          # (k, len(monomials)), orthonormal rows
    monomials: list
    stabilized_degree: int
    trajectory: list = field(default_factory=list)
    sign: int = 1

    def __len__(self) -> int:
        return self.polynomials.shape[0]


def rank_stabilize(spec: HankelSpec, policy: ThresholdPolicy | float,
                   n_max: int, exact_rtol: float = 1e-9) -> tuple[FactoredSVD, IdealBasis]:
    """Add degree blocks until two consecutive degrees have the same rank.

    Returns the state and kernel at the degree where the repeat is first
    seen. The rank trajectory (rank after degree 0, 1, ...) is stored on the
    basis.

    With ``tau = 0`` rounding noise never gets truncated, so ranks are then
    counted as singular values above ``exact_rtol * sigma_1`` and the kernel
    is spanned by the remaining right singular vectors.
    """
    if not isinstance(policy, ThresholdPolicy):
        policy = ThresholdPolicy(float(policy))

    def effective_rank(state):
        if policy.tau > 0 or state.r == 0:
            return state.r
        return int(np.count_nonzero(state.sigma > exact_rtol * state.sigma[0]))

    trajectory = []
    state = None
    for n in range(n_max + 1):
        block = build_block(spec, n)
        if state is None:
            state = init_from_column(block.data[:, 0], policy)
        else:
            try:
                state, _ = augment(state, block)
            except CapacityError as exc:
                raise StabilizationError(
                    f"row set too small for degree {n}: {exc}", trajectory) from exc
        trajectory.append(effective_rank(state))
        if n >= 1 and trajectory[-1] == trajectory[-2]:
            K = state.V[:, trajectory[-1]:].T.copy()
            return state, IdealBasis(K, spec.gamma(n), n, trajectory, spec.sign)
    raise StabilizationError(f"rank did not stabilize up to degree {n_max}: {trajectory}", trajectory)


def evaluate_ideal(basis: IdealBasis, points) -> np.ndarray:
    """``|p_i(z_j)|`` for every basis polynomial ``p_i`` and point ``z_j``."""
    points = np.atleast_2d(np.asarray(points, dtype=complex))
    if len(basis) == 0 or points.shape[0] == 0:
        return np.zeros((len(basis), points.shape[0]))
    exps = np.array(basis.monomials)
    # monomial values, (len(monomials), npoints)
    mono = np.prod(points[None, :, :] ** exps[:, None, :], axis=2)
    return np.abs(basis.polynomials @ mono)


# --- synthetic instances and file formats ------------------------------------------

def synthetic_instance(frequencies, coefficients, row_degree: int, sign: int = 1,
                       ) -> tuple[ExponentialSum, HankelSpec]:
    """Exponential sum plus rows ``A = Gamma_row_degree``.

    Checks that the monomials on ``A`` interpolate at the nodes, i.e. that the
    Vandermonde matrix ``[z^alpha]`` has full column rank.
    """
    f = ExponentialSum(frequencies, coefficients)
    rows = total_degree_set(f.s, row_degree)
    nodes = f.nodes()
    vander = np.array([[np.prod(z ** np.array(a)) for z in nodes] for a in rows])
    if np.linalg.matrix_rank(vander) < f.frequencies.shape[0]:
        raise ValueError("row set does not interpolate at the planted nodes; raise row_degree")
    return f, HankelSpec(rows, f, f.s, sign)


def load_instance(path) -> tuple[ExponentialSum, HankelSpec]:
    """Read a JSON instance description.

    Keys: ``frequencies`` (list of s-vectors), optional ``frequencies_imag``,
    ``coefficients``, optional ``coefficients_imag``, and either
    ``row_degree`` or an explicit ``rows`` list. Optional ``sign`` (+1/-1).
    """
    with open(path) as fh:
        desc = json.load(fh)
    w = np.asarray(desc["frequencies"], dtype=float)
    if "frequencies_imag" in desc:
        w = w + 1j * np.asarray(desc["frequencies_imag"], dtype=float)
    c = np.asarray(desc["coefficients"], dtype=float)
    if "coefficients_imag" in desc:
        c = c + 1j * np.asarray(desc["coefficients_imag"], dtype=float)
    sign = int(desc.get("sign", 1))
    if "rows" in desc:
        f = ExponentialSum(w, c)
        return f, HankelSpec(desc["rows"], f, f.s, sign)
    return synthetic_instance(w, c, int(desc["row_degree"]), sign)


class TableSampler:
    """Sampler backed by a table of ``(multi-index, value)`` pairs."""

    def __init__(self, table: dict):
        self.table = table

    def __call__(self, index):
        try:
            return self.table[tuple(index)]
        except KeyError:
            raise SamplerError(f"no sample for index {tuple(index)}", tuple(index)) from None


def read_samples_csv(path) -> tuple[dict, int]:
    """Rows ``i_1, ..., i_s, value``; returns the table and ``s``."""
    table, s = {}, None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row]
            if not row or not any(row) or row[0].startswith("#"):
                continue
            try:
                idx = tuple(int(c) for c in row[:-1])
                value = parse_float(row[-1])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise DimensionError(f"{path}:{lineno}: malformed sample row") from None
            if s is None:
                s = len(idx)
            elif len(idx) != s:
                raise DimensionError(f"{path}:{lineno}: expected {s} index components")
            table[idx] = value
    if not table:
        raise DimensionError(f"{path}: no samples")
    return table, s


def format_basis_csv(basis: IdealBasis) -> str:
    lines = [f"# monomial order: {MONOMIAL_ORDER}",
             f"# stabilized degree: {basis.stabilized_degree}",
             f"# rank trajectory: {' '.join(map(str, basis.trajectory))}",
             ",".join(monomial_name(a) for a in basis.monomials)]
    lines += [",".join(repr(float(x)) for x in p) for p in basis.polynomials]
    return "\n".join(lines) + "\n"
