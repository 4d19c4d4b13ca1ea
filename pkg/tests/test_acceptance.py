"""End-to-end acceptance checks.

Each test prints a single ``PASS``/``FAIL`` line (visible even under output
capture) and then asserts the same condition.
"""
import io
import json
import subprocess
import sys
import time
import tracemalloc

import numpy as np
import pytest

from augsvd import (
    apply_Ut_block,
    augment,
    bench,
    bound_sigma_head,
    bound_sigma_tail,
    deserialize,
    deterministic,
    init_from_column,
    kernel_basis,
    left_singular_vectors,
    low_rank_matrix,
    rank,
    serialize,
    singular_values,
    thresholded_svd,
)
from augsvd._io import write_matrix_csv
from augsvd.cli import main
from augsvd.prony import evaluate_ideal, rank_stabilize, synthetic_instance
from augsvd.state import load
from augsvd.video import decompose_frame, ingest, synthetic_video

from _oracles import (
    chain_matrix,
    numerical_rank,
    oracle_sigma,
    random_history,
    random_pivoted_triangular,
)

HISTORIES = range(200)
TAUS = (1e-10, 1e-6, 1e-3)


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}")
        assert ok, f"criterion {number} failed: {detail}"
    return report


def padded(sigma, n):
    out = np.zeros(n)
    out[:sigma.size] = sigma
    return out


# --- 1 -------------------------------------------------------------------

def test_1_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst, rank_mismatch, steps = 0.0, 0, 0
    for seed in HISTORIES:
        first, blocks = random_history(seed)
        s = init_from_column(first, 0.0)
        A = first[:, None]
        for B in blocks:
            s, _ = augment(s, B)
            A = np.column_stack([A, B])
            ref = oracle_sigma(A)
            ours = padded(s.sigma, s.n)
            worst = max(worst, np.max(np.abs(ours - ref)) / ref[0])
            dim = s.n - numerical_rank(ours)
            rank_mismatch += dim != A.shape[1] - numerical_rank(ref)
            steps += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and rank_mismatch == 0 and elapsed < 60
    verdict(1, "oracle equivalence at tau=0", ok,
            f"{steps} steps, worst |dsigma|/sigma1={worst:.2e}, "
            f"kernel mismatches={rank_mismatch}, {elapsed:.1f}s")


# --- 2 and 3 -------------------------------------------------------------

@pytest.fixture(scope="module")
def thresholded_runs():
    """Every thresholded step of the histories in (1), rerun at each tau.

    For each step we keep the core the update actually thresholded, the exact
    core it stands in for, and the reports.
    """
    records = []
    for tau in TAUS:
        for seed in HISTORIES:
            first, blocks = random_history(seed)
            s = init_from_column(first, tau)
            for B in blocks:
                Z = apply_Ut_block(s, B)
                r_k = s.r
                exact = np.zeros((s.d, r_k + B.shape[1]))
                exact[:r_k, :r_k] = np.diag(s.sigma)
                exact[:, r_k:] = Z
                s_new, rep = augment(s, B)
                records.append((tau, seed, s.r, s_new, rep, exact))
                s = s_new
    return records


def test_2_rank_monotone(verdict, thresholded_runs):
    drops = [(tau, seed) for tau, seed, before, after, rep, _ in thresholded_runs
             if after.r < before or rep.rank_after < rep.rank_before]
    verdict(2, "rank never decreases", not drops,
            f"{len(thresholded_runs)} steps over tau in {TAUS}, decreases={len(drops)}")


def _random_core(rng):
    n = int(rng.integers(1, 13))
    r_k = int(rng.integers(0, n + 1))
    tau = 10.0 ** rng.uniform(-10, -2)
    R = np.zeros((n, n))
    R[:r_k, :r_k] = np.diag(np.sort(tau * 10.0 ** rng.uniform(0, 4, r_k))[::-1])
    R[:r_k, r_k:] = rng.standard_normal((r_k, n - r_k)) * 10.0 ** rng.uniform(-3, 1)
    if n > r_k:
        R[r_k:, r_k:] = tau * 10.0 ** rng.uniform(-2, 1) * random_pivoted_triangular(rng, n - r_k)
    return R, tau, r_k


def test_3_discard_safety_and_spectral_perturbation(verdict, thresholded_runs):
    rng = np.random.default_rng(2024)
    bad, checked, worst = [], 0, 0.0
    for i in range(1000):
        R, tau, r_k = _random_core(rng)
        t = thresholded_svd(R, tau, protected=r_k)
        wh = np.sum((oracle_sigma(R) - oracle_sigma(t.R_hat)) ** 2)
        worst = max(worst, wh / tau ** 2)
        checked += 1
        if not (np.all(t.discarded < tau) and np.all(t.sigma >= tau) and wh < tau ** 2):
            bad.append(("random", i))
    for tau, seed, _, after, rep, exact in thresholded_runs:
        k = rep.core.shape[0]
        s_exact = oracle_sigma(exact)
        s_hat = padded(after.sigma, k)
        wh = np.sum((s_exact[:k] - s_hat) ** 2)
        worst = max(worst, wh / tau ** 2)
        checked += 1
        ok = (np.all(rep.discarded_singular_values < tau) and np.all(after.sigma >= tau)
              and wh < tau ** 2)
        if not ok:
            bad.append((tau, seed))
    verdict(3, "discard safety and spectral perturbation", not bad,
            f"{checked} cores, worst sum(dsigma^2)/tau^2={worst:.3f}, failures={len(bad)}")


# --- 4 -------------------------------------------------------------------

def test_4_triangular_bounds(verdict):
    rng = np.random.default_rng(4)
    mats = [chain_matrix(8), chain_matrix(12)]
    mats += [random_pivoted_triangular(rng, int(rng.integers(1, 13))) for _ in range(998)]
    tail_bad = head_bad = 0
    for R in mats:
        n = R.shape[0]
        s = oracle_sigma(R)
        for m in range(n):
            if s[m] > bound_sigma_tail(R, m) + 1e-12 * s[0]:
                tail_bad += 1
            R11 = R[:m + 1, :m + 1]
            if np.all(np.diag(R11) != 0):
                s11 = oracle_sigma(R11)
                if s11[-1] < bound_sigma_head(R11) * (1 - 1e-10) - 4 * np.finfo(float).eps * s11[0]:
                    head_bad += 1
    chain = chain_matrix(12)
    chain_min = oracle_sigma(chain)[-1]
    ok = tail_bad == 0 and head_bad == 0 and chain_min < 1e-2 and np.all(np.diag(chain) == 1)
    verdict(4, "triangular bounds", ok,
            f"{len(mats)} matrices, tail violations={tail_bad}, head violations={head_bad}, "
            f"chain(12) sigma_min={chain_min:.2e}")


# --- 5 -------------------------------------------------------------------

def test_5_memory(verdict):
    t0 = time.perf_counter()
    d, n, m = 1_000_000, 20, 5
    state = bench.prepared_state(d, n - m, seed=5)
    B = np.random.default_rng(6).standard_normal((d, m))
    tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    out, _ = augment(state, B)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    extra = peak - base
    budget = 8 * (n * n + n * d) * 8
    elapsed = time.perf_counter() - t0
    ok = out.n == n and extra <= budget and extra < d * d and elapsed < 30
    verdict(5, "memory per step", ok,
            f"d={d}, n={n}: peak extra {extra / 2**20:.1f} MiB = "
            f"{extra / (8 * (n * n + n * d)):.2f} x (n^2+n d) doubles, {elapsed:.1f}s")


# --- 6 -------------------------------------------------------------------

def test_6_linear_in_d(verdict):
    with deterministic():
        rows = bench.run(dims=(100_000, 200_000), n=20, m=5, repeats=7)
    ratio = rows[1].seconds / rows[0].seconds
    verdict(6, "time linear in d", 1.6 <= ratio <= 2.6,
            f"t(200k)={rows[1].seconds * 1e3:.1f}ms t(100k)={rows[0].seconds * 1e3:.1f}ms "
            f"ratio={ratio:.2f}")


# --- 7 -------------------------------------------------------------------

def test_7_video(verdict):
    t0 = time.perf_counter()
    v = synthetic_video()
    state = ingest(v.source(chunk=30), 1e-6)
    u1 = left_singular_vectors(state, 1)[:, 0]
    bg = v.background.reshape(-1)
    cos = abs(u1 @ bg) / np.linalg.norm(bg)
    worst_share, exact = 1.0, True
    for i, frame in enumerate(v.frames):
        dec = decompose_frame(state, frame, 1)
        exact &= bool(np.array_equal(dec.background + dec.foreground, frame.reshape(-1)))
        fg = dec.foreground.reshape(v.height, v.width)
        r0, r1, c0, c1 = v.boxes[i]
        worst_share = min(worst_share, np.sum(fg[r0:r1, c0:c1] ** 2) / np.sum(fg ** 2))
    elapsed = time.perf_counter() - t0
    ok = state.r < 30 and cos >= 0.99 and worst_share >= 0.8 and exact and elapsed < 20
    verdict(7, "synthetic video separation", ok,
            f"rank={state.r}, |cos|={cos:.5f}, min in-box energy={worst_share:.3f}, "
            f"exact sum={exact}, {elapsed:.1f}s")


# --- 8 -------------------------------------------------------------------

def test_8_prony(verdict):
    _, spec = synthetic_instance([[0.0], [np.log(2.0)]], [1.0, 2.0], 4)
    state, basis = rank_stabilize(spec, 1e-9, 6)
    # dense oracle: kernel of the Hankel matrix at the stabilized degree
    F = spec.dense(basis.stabilized_degree)
    k = np.linalg.svd(F)[2][-1]
    p = basis.polynomials[0]
    err_oracle = np.max(np.abs(p * np.sign(p @ k) - k)) / np.max(np.abs(k))
    err_exact = np.max(np.abs(p / p[-1] - [2.0, -3.0, 1.0])) / 3.0
    one_d = state.r == 2 and len(basis) == 1 and err_oracle <= 1e-8 and err_exact <= 1e-8

    f2, spec2 = synthetic_instance([[0.0, 0.0], [np.log(2.0), 0.0], [0.0, np.log(3.0)]],
                                   [1.0, 2.0, -1.5], 3)
    state2, basis2 = rank_stabilize(spec2, 1e-9, 5)
    res = float(np.max(evaluate_ideal(basis2, f2.nodes())))
    two_d = state2.r == 3 and len(basis2) > 0 and res <= 1e-6
    verdict(8, "Prony ideal recovery", one_d and two_d,
            f"1-var rank={state.r} rel err={max(err_oracle, err_exact):.1e}; "
            f"2-var rank={state2.r} basis={len(basis2)} max residual={res:.1e}")


# --- 9 -------------------------------------------------------------------

def _queries(s):
    return (serialize(s), singular_values(s).tobytes(), kernel_basis(s).tobytes(), rank(s),
            left_singular_vectors(s).tobytes(), low_rank_matrix(s).tobytes())


def test_9_cli_library_bit_exact(verdict, tmp_path):
    mismatches, roundtrip_bad = [], []
    for seed in range(20):
        first, blocks = random_history(seed)
        base = tmp_path / f"h{seed}"
        base.mkdir()
        write_matrix_csv(base / "first.csv", first[:, None])
        args = []
        for i, B in enumerate(blocks):
            write_matrix_csv(base / f"b{i}.csv", B)
            args += ["--block", str(base / f"b{i}.csv")]
        st = str(base / "s.asvd")
        out = io.StringIO()
        code = main(["--deterministic", "init", "--state", st, "--column",
                     str(base / "first.csv"), "--tau", "0"], stdout=out, stderr=io.StringIO())
        code |= main(["--deterministic", "update", "--state", st] + args,
                     stdout=out, stderr=io.StringIO())
        with deterministic():
            lib = init_from_column(first, 0.0)
            for B in blocks:
                lib, _ = augment(lib, B)
        cli_state = load(st)
        if code != 0 or _queries(cli_state) != _queries(lib):
            mismatches.append(seed)
        if _queries(deserialize(serialize(lib))) != _queries(lib):
            roundtrip_bad.append(seed)

    # the same through a separate interpreter for a few histories
    for seed in range(3):
        base = tmp_path / f"h{seed}"
        st = str(base / "sub.asvd")
        blocks = sorted(base.glob("b*.csv"), key=lambda p: int(p.stem[1:]))
        cmds = [["init", "--state", st, "--column", str(base / "first.csv"), "--tau", "0"],
                ["update", "--state", st] + sum([["--block", str(b)] for b in blocks], [])]
        for c in cmds:
            res = subprocess.run([sys.executable, "-m", "augsvd", "--deterministic"] + c,
                                 capture_output=True, text=True)
            json.loads(res.stdout.splitlines()[-1])
        if (base / "sub.asvd").read_bytes() != (base / "s.asvd").read_bytes():
            mismatches.append(f"subprocess {seed}")
    ok = not mismatches and not roundtrip_bad
    verdict(9, "CLI and library agree bit for bit", ok,
            f"20 histories in process + 3 via subprocess, mismatches={mismatches}, "
            f"round-trip failures={roundtrip_bad}")
