"""Command line interface.

Every command prints JSON lines on stdout and writes files atomically.
Exit codes: 0 success, 1 usage error, 2 data or dimension error, 3 numerical
failure. Errors produce a single ``augsvd: error: ...`` line on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench as _bench
from . import prony, video
from ._io import (
    atomic_write_text,
    locked,
    read_matrix_csv,
    write_matrix_csv,
    write_pgm,
)
from ._threads import deterministic
from .errors import AugSVDError, ConvergenceError, DimensionError
from .state import (
    ThresholdPolicy,
    init_from_column,
    kernel_basis,
    load,
    low_rank_matrix,
    save,
)
from .update import ColumnBlock, augment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _tau(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid tau {text!r}") from None
    if not math.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"tau must be finite and >= 0, got {text}")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _dims(text: str) -> list[int]:
    return [_positive(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="augsvd", description="Block-column SVD updating with absolute thresholding.")
    p.add_argument("--deterministic", action="store_true",
                   help="pin BLAS to a single thread for bit-reproducible results")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_text, state=True):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS)
        if state:
            c.add_argument("--state", required=True, help="state file")
        return c

    c = cmd("init", "start a state from one column")
    c.add_argument("--column", required=True, help="CSV with one value per line (or one row)")
    c.add_argument("--tau", type=_tau, required=True)

    c = cmd("update", "append column blocks to a state")
    c.add_argument("--block", action="append", required=True,
                   help="CSV block, rows = matrix rows; may be repeated")

    cmd("rank", "print the numerical rank")
    c = cmd("singvals", "print the singular values")
    c.add_argument("--out", help="also write them as CSV")
    c = cmd("kernel", "print an orthonormal kernel basis")
    c.add_argument("--out", help="also write the basis (one vector per column) as CSV")

    c = cmd("reconstruct-check", "compare U S V^T with a reference matrix")
    c.add_argument("--matrix", required=True, help="CSV of the full matrix")

    c = cmd("video-decompose", "streaming PCA background/foreground split", state=False)
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", help="directory of PGM frames")
    src.add_argument("--stream", help="ASVF frame stream")
    c.add_argument("--chunk", type=_positive, default=30)
    c.add_argument("--q", type=_positive, required=True)
    c.add_argument("--tau", type=_tau, required=True)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--state", help="also save the final state here")

    c = cmd("prony", "kernel of Hankel matrices of growing degree", state=False)
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="JSON instance description")
    src.add_argument("--samples", help="CSV of multi-index,value rows")
    c.add_argument("--row-degree", type=int,
                   help="rows are all multi-indices of total degree <= this (with --samples)")
    c.add_argument("--sign", type=int, choices=(1, -1), default=1,
                   help="entries f(a + sign*b) (with --samples)")
    c.add_argument("--tau", type=_tau, required=True)
    c.add_argument("--n-max", type=int, default=10)
    c.add_argument("--out", help="CSV for the kernel basis")
    c.add_argument("--state", help="also save the final state here")

    c = cmd("bench", "time one update step for growing d", state=False)
    c.add_argument("--dims", type=_dims, default=[50_000, 100_000, 200_000])
    c.add_argument("--n", type=_positive, default=20)
    c.add_argument("--m", type=_positive, default=5)
    c.add_argument("--repeats", type=_positive, default=5)
    c.add_argument("--out", help="CSV for the timing table")
    return p


def _emit(out, record: dict) -> None:
    out.write(json.dumps(record) + "\n")


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a).reshape(-1)]


# --- commands ---------------------------------------------------------------

def _init(args, out):
    column = read_matrix_csv(args.column)
    if column.shape[1] != 1:
        raise UsageError(f"{args.column}: expected a single column, got {column.shape[1]}")
    with locked(args.state):
        state = init_from_column(column[:, 0], ThresholdPolicy(args.tau))
        save(state, args.state)
    _emit(out, {"command": "init", "d": state.d, "n": state.n, "rank": state.r})


def _update(args, out):
    blocks = [ColumnBlock(read_matrix_csv(path), label=path) for path in args.block]
    with locked(args.state):
        state = load(args.state)
        reports = []
        for block in blocks:
            state, rep = augment(state, block)
            reports.append(rep)
        save(state, args.state)
    for rep in reports:
        _emit(out, {"command": "update", **rep.as_dict()})


def _rank(args, out):
    state = load(args.state)
    # roundoff-relative count, printed for comparison only; never used to truncate
    rel = 0
    if state.r:
        rel = int(np.count_nonzero(state.sigma > state.sigma[0] * max(state.d, state.n) * np.finfo(float).eps))
    _emit(out, {"command": "rank", "rank": state.r, "n": state.n, "d": state.d,
                "tau": state.tau, "relative_rank_diagnostic": rel})


def _singvals(args, out):
    state = load(args.state)
    if args.out:
        atomic_write_text(args.out, video.format_singular_value_csv(state))
    _emit(out, {"command": "singvals", "sigma": _floats(state.sigma)})


def _kernel(args, out):
    state = load(args.state)
    K = kernel_basis(state)
    if args.out:
        write_matrix_csv(args.out, K)
    _emit(out, {"command": "kernel", "dimension": K.shape[1],
                "basis": [_floats(K[:, j]) for j in range(K.shape[1])]})


def _reconstruct_check(args, out):
    state = load(args.state)
    A = read_matrix_csv(args.matrix)
    if A.shape != (state.d, state.n):
        raise DimensionError(f"matrix is {A.shape[0]}x{A.shape[1]}, state is {state.d}x{state.n}")
    err = float(np.linalg.norm(A - low_rank_matrix(state)))
    norm = float(np.linalg.norm(A))
    _emit(out, {"command": "reconstruct-check", "frobenius_error": err,
                "relative_error": err / norm if norm else err, "rank": state.r})


def _video(args, out):
    source = (video.pgm_directory_source(args.frames, args.chunk) if args.frames
              else video.asvf_source(args.stream, args.chunk))
    telemetry = []
    state = video.ingest(source, ThresholdPolicy(args.tau), telemetry)
    for t in telemetry:
        _emit(out, {"command": "video-decompose", "event": "chunk", **t})
    if args.q > state.r:
        raise DimensionError(f"q={args.q} exceeds the rank {state.r}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(outdir / "singular_values.csv", video.format_singular_value_csv(state))
    for i, frame in enumerate(source):
        dec = video.decompose_frame(state, frame, args.q)
        shape = (source.height, source.width)
        write_pgm(outdir / f"background_{i:05d}.pgm", dec.background.reshape(shape))
        write_pgm(outdir / f"foreground_{i:05d}.pgm", dec.foreground.reshape(shape))
    if args.state:
        save(state, args.state)
    _emit(out, {"command": "video-decompose", "event": "done", "frames": state.n,
                "rank": state.r, "q": args.q, "out": str(outdir)})


def _prony(args, out):
    if args.samples:
        if args.row_degree is None:
            raise UsageError("--samples needs --row-degree")
        table, s = prony.read_samples_csv(args.samples)
        spec = prony.HankelSpec(prony.total_degree_set(s, args.row_degree),
                                prony.TableSampler(table), s, args.sign)
    else:
        _, spec = prony.load_instance(args.instance)
    state, basis = prony.rank_stabilize(spec, ThresholdPolicy(args.tau), args.n_max)
    if args.out:
        atomic_write_text(args.out, prony.format_basis_csv(basis))
    if args.state:
        save(state, args.state)
    _emit(out, {"command": "prony", "trajectory": basis.trajectory,
                "stabilized_degree": basis.stabilized_degree, "rank": state.r,
                "monomials": [prony.monomial_name(a) for a in basis.monomials],
                "basis": [_floats(p) for p in basis.polynomials]})


def _bench_cmd(args, out):
    if not args.dims:
        raise UsageError("--dims is empty")
    rows = [_bench.time_step(d, args.n, args.m, args.repeats) for d in args.dims]
    if args.out:
        atomic_write_text(args.out, _bench.format_csv(rows))
    for row in rows:
        _emit(out, {"command": "bench", **row.as_dict()})


COMMANDS = {
    "init": _init, "update": _update, "rank": _rank, "singvals": _singvals,
    "kernel": _kernel, "reconstruct-check": _reconstruct_check,
    "video-decompose": _video, "prony": _prony, "bench": _bench_cmd,
}


def _validate(args):
    if getattr(args, "n_max", 0) < 0:
        raise UsageError("--n-max must be >= 0")
    if args.command == "bench" and not 0 < args.m < args.n:
        raise UsageError("bench needs 0 < m < n")


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("no command given")
        _validate(args)
    except UsageError as exc:
        stderr.write(f"augsvd: usage error: {exc}\n")
        return EXIT_USAGE
    try:
        with deterministic(args.deterministic):
            COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        stderr.write(f"augsvd: usage error: {exc}\n")
        return EXIT_USAGE
    except ConvergenceError as exc:
        stderr.write(f"augsvd: numerical error: {exc}\n")
        return EXIT_NUMERIC
    except (AugSVDError, OSError, IndexError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        stderr.write(f"augsvd: error: {msg}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
