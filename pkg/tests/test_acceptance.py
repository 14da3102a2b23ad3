"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are echoed in
the "acceptance criteria" section of the terminal summary. Criterion 10
needs external data, supplied through ``GPCMRH_BCSSTK17`` (Matrix Market
file) and ``GPCMRH_BCSSTK17_PARTITION`` (partition file, METIS part labels
unless ``GPCMRH_PARTITION_FORMAT=indices``).
"""

import math
import os
import time

import numpy as np
import pytest

from gpcmrh.baselines import MonolithicOperator, cmrh_solve, gmres_solve
from gpcmrh.gpmr import SandwichCheck, gpmr_solve, sandwich_verify
from gpcmrh.harness import ExperimentConfig, lotkin_conditioning, run_experiment
from gpcmrh.hessenberg import SimultaneousHessenberg
from gpcmrh.operators import BlockSystem
from gpcmrh.solver import givens4, gpcmrh_solve, qr_block, true_residual

EPS = np.finfo(float).eps


def verdict(report_line, number, ok, detail):
    report_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    assert ok, detail


def random_pair(rng, m, n, density):
    A = rng.standard_normal((m, n))
    B = rng.standard_normal((n, m))
    if density < 1:
        A *= rng.random((m, n)) < density
        B *= rng.random((n, m)) < density
    return A, B, rng.standard_normal(m), rng.standard_normal(n)


def desk_suite():
    """20 random nonsingular systems, blocks up to 60 + 48."""
    rng = np.random.default_rng(20240601)
    systems = []
    while len(systems) < 20:
        m, n = int(rng.integers(8, 61)), int(rng.integers(8, 49))
        lam = float(rng.choice([1.0, 2.0, -1.5]))
        mu = float(rng.choice([1.0, -1.0, 0.5]))
        scale = float(rng.uniform(0.3, 1.0)) / math.sqrt(max(m, n))
        density = float(rng.choice([1.0, 0.2]))
        A, B, b, c = random_pair(rng, m, n, density)
        if density < 1:
            A, B = A / math.sqrt(density), B / math.sqrt(density)
        sys = BlockSystem(A * scale, B * scale, b, c, lam, mu)
        if np.linalg.cond(sys.to_dense()) < 1e4:
            systems.append(sys)
    return systems


@pytest.fixture(scope="module")
def hessenberg_runs():
    rng = np.random.default_rng(1)
    runs = []
    t0 = time.perf_counter()
    for i in range(20):
        m, n = int(rng.integers(8, 41)), int(rng.integers(8, 41))
        A, B, b, c = random_pair(rng, m, n, 1.0 if i % 2 == 0 else 0.2)
        p = SimultaneousHessenberg(A, B, b, c)
        k = min(m, n) - 1
        while p.k < k and p.breakdown is None:
            p.step()
        runs.append((A, B, p))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def desk_results():
    out = []
    for sys in desk_suite():
        N = sys.m + sys.n
        reps = {
            "gpcmrh": gpcmrh_solve(sys, tol=1e-10, maxit=N, track_true_residual=True),
            "gpmr": gpmr_solve(sys, tol=1e-10, maxit=N, track_true_residual=True),
            "gmres": gmres_solve(MonolithicOperator(sys), sys.rhs, tol=1e-10, maxit=N),
            "cmrh": cmrh_solve(MonolithicOperator(sys), sys.rhs, tol=1e-10, maxit=N),
        }
        out.append((sys, reps))
    return out


def basis_and_hessenberg(store, H):
    """``D_{k+1}`` and ``H_{k+1,k}``; after a breakdown on this side the last
    row of ``H`` is exactly zero and ``d_{k+1}`` does not exist."""
    j = min(len(store), H.shape[0])
    assert not np.any(H[j:]), "dropped Hessenberg row must be exactly zero"
    return store.matrix(j), H[:j]


def test_criterion_01_factorization_identities(hessenberg_runs, report_line):
    runs, elapsed = hessenberg_runs
    worst, reached = 0.0, 0
    for A, B, p in runs:
        k = p.k
        reached += k == min(p.m, p.n) - 1
        Lk, Dk = p.L.matrix(k), p.D.matrix(k)
        D1, H = basis_and_hessenberg(p.D, p.H())
        L1, F = basis_and_hessenberg(p.L, p.F())
        ra = np.linalg.norm(A @ Lk - D1 @ H) / (np.linalg.norm(A) * np.linalg.norm(Lk))
        rb = np.linalg.norm(B @ Dk - L1 @ F) / (np.linalg.norm(B) * np.linalg.norm(Dk))
        worst = max(worst, ra, rb)
    ok = worst <= 1e-10 and reached == len(runs) and elapsed < 5.0
    verdict(report_line, 1, ok,
            f"max relative residual {worst:.2e} (<= 1e-10), {reached}/20 runs reached "
            f"k=min(m,n)-1, {elapsed:.2f}s (< 5s)")


def test_criterion_02_pivot_structure(hessenberg_runs, report_line):
    runs, _ = hessenberg_runs
    max_entry, exact = 0.0, True
    for _, _, p in runs:
        for store, perm in ((p.D, p.p), (p.L, p.q)):
            k = len(store)
            M = store.matrix(k)
            max_entry = max(max_entry, float(np.abs(M).max()))
            exact &= bool(np.array_equal(np.triu(M[perm.map[:k]]), np.eye(k)))
    ok = max_entry <= 1 + 1e-12 and exact
    verdict(report_line, 2, ok,
            f"max |D|,|L| entry {max_entry!r} (<= 1+1e-12), permuted leading blocks "
            f"unit lower triangular: {exact}")


def test_criterion_03_lotkin(report_line):
    t0 = time.perf_counter()
    rows = lotkin_conditioning(1000, 50)
    elapsed = time.perf_counter() - t0
    piv = [r[1] for r in rows if r[0] >= 2]
    unpiv = [r[2] for r in rows]
    piv_max = max(piv)
    first_big = next((r[0] for r in rows if r[2] > 1e6), None)
    ok = (not any(math.isnan(v) for v in piv) and piv_max <= 1e3 and first_big is not None
          and elapsed < 60)
    verdict(report_line, 3, ok,
            f"pivoted max kappa(D_k) {piv_max:.1f} (<= 1e3) over 2<=k<=50, unpivoted "
            f"exceeds 1e6 first at k={first_big} (max {np.nanmax(unpiv):.2e}), {elapsed:.2f}s (< 60s)")


def test_criterion_04_sandwich(report_line):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    n_checks, bad, worst_ratio = 0, [], 0.0
    for i in range(10):
        m, n = int(rng.integers(20, 61)), int(rng.integers(16, 49))
        A, B, b, c = random_pair(rng, m, n, 1.0)
        s = 0.5 / math.sqrt(max(m, n))
        sys = BlockSystem(A * s, B * s, b, c, 1.0, float(rng.choice([1.0, -1.0])))
        checks = sandwich_verify(sys, 12)
        if len(checks) != 12:
            bad.append((i, "short"))
        for chk in checks:
            raw = SandwichCheck(chk.k, chk.r_gpmr, chk.r_gpcmrh, chk.kappa_W)
            n_checks += 1
            worst_ratio = max(worst_ratio, chk.ratio / chk.kappa_W)
            if not (raw.lower_ok and raw.upper_ok):
                bad.append((i, chk.k))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 30
    verdict(report_line, 4, ok,
            f"{n_checks - len(bad)}/{n_checks} checks hold with no floor, max "
            f"(r_gpcmrh/r_gpmr)/kappa {worst_ratio:.3f}, {elapsed:.2f}s (< 30s)")


def test_criterion_05_bound_validity(desk_results, report_line):
    violations, total = 0, 0
    for sys, reps in desk_results:
        An = np.linalg.norm(sys.A @ np.eye(sys.n))
        Bn = np.linalg.norm(sys.B @ np.eye(sys.m))
        for rep in (reps["gpcmrh"], reps["gpmr"]):
            for k in range(rep.iterations):
                slack = (128 * EPS * (k + 1) * (An + Bn + abs(sys.lam) + abs(sys.mu))
                         * rep.z_norm_history[k])
                total += 1
                violations += rep.true_residual_history[k] > rep.rho_history[k] + slack
    verdict(report_line, 5, violations == 0,
            f"true residual <= bound + slack at {total - violations}/{total} tracked iterations "
            f"(GP-CMRH and GPMR)")


def test_criterion_06_desk_scale_exactness(desk_results, report_line):
    failures, worst_res, worst_err = [], 0.0, 0.0
    for i, (sys, reps) in enumerate(desk_results):
        ref = np.linalg.solve(sys.to_dense(), sys.rhs)
        g = np.linalg.norm(sys.rhs)
        for name, rep in reps.items():
            rel = true_residual(sys, rep.x, rep.y) / g
            worst_res = max(worst_res, rel)
            if rel > 1e-10 or rep.iterations > sys.m + sys.n:
                failures.append((i, name, rel, rep.iterations))
            if name in ("gpcmrh", "gpmr"):
                err = np.linalg.norm(np.concatenate([rep.x, rep.y]) - ref) / np.linalg.norm(ref)
                worst_err = max(worst_err, err)
                if err > 1e-8:
                    failures.append((i, name, "err", err))
    verdict(report_line, 6, not failures,
            f"80 solves, max true relative residual {worst_res:.2e} (<= 1e-10), max GP-CMRH/GPMR "
            f"relative error {worst_err:.2e} (<= 1e-8), failures {failures}")


def test_criterion_07_iteration_parity(desk_results, report_line):
    ratios = [reps["gpcmrh"].iterations / reps["gpmr"].iterations for _, reps in desk_results]
    share = sum(r <= 1.5 for r in ratios) / len(ratios)
    verdict(report_line, 7, share >= 0.95,
            f"iterations(GP-CMRH) <= 1.5*iterations(GPMR) in {share:.0%} of instances (>= 95%), "
            f"max ratio {max(ratios):.3f}")


def test_criterion_08_qr_block(report_line):
    rng = np.random.default_rng(8)
    worst_zero, worst_unit = 0.0, 0.0
    for _ in range(1000):
        v = rng.standard_normal(6) * 10.0 ** rng.uniform(-3, 3, 6)
        blk, r11, r12, r22 = qr_block(*v)
        S = np.array([[v[0], v[1]], [v[2], v[3]], [0.0, v[4]], [v[5], 0.0]])
        out = np.column_stack([givens4(blk, *S[:, 0]), givens4(blk, *S[:, 1])])
        scale = np.linalg.norm(S)
        # (3,2), (4,1), (2,1) and the fill at (4,2)
        zeros = np.abs([out[2, 1], out[3, 0], out[1, 0], out[3, 1]]) / (EPS * scale)
        worst_zero = max(worst_zero, zeros.max())
        for c, s in ((blk.c1, blk.s1), (blk.c2, blk.s2), (blk.c3, blk.s3), (blk.c4, blk.s4)):
            worst_unit = max(worst_unit, abs(c * c + s * s - 1) / EPS)
    ok = worst_zero <= 16 and worst_unit <= 8
    verdict(report_line, 8, ok,
            f"max eliminated entry {worst_zero:.2f} eps*||block||_F (<= 16), "
            f"max |c^2+s^2-1| {worst_unit:.2f} eps (<= 8)")


def test_criterion_09_trivial_operator(report_line):
    rng = np.random.default_rng(9)
    b, c = rng.standard_normal(5), rng.standard_normal(3)
    sys = BlockSystem(np.zeros((5, 3)), np.zeros((3, 5)), b, c, 1.0, 1.0)
    op = MonolithicOperator(sys)
    reps = [gpcmrh_solve(sys), gpmr_solve(sys), gmres_solve(op, sys.rhs), cmrh_solve(op, sys.rhs)]
    ok = all(r.iterations == 1 and r.converged and np.allclose(r.x, b, rtol=1e-15, atol=0)
             and np.allclose(r.y, c, rtol=1e-15, atol=0) for r in reps)
    verdict(report_line, 9, ok,
            "A=B=0, lam=mu=1: " + ", ".join(f"{r.solver} k={r.iterations}" for r in reps))


def test_criterion_10_bcsstk17_informational(report_line, tmp_path):
    matrix = os.environ.get("GPCMRH_BCSSTK17")
    partition = os.environ.get("GPCMRH_BCSSTK17_PARTITION")
    if not (matrix and partition):
        report_line("[SKIP] criterion 10: informational; set GPCMRH_BCSSTK17 and "
                    "GPCMRH_BCSSTK17_PARTITION to run")
        pytest.skip("bcsstk17 and its partition were not supplied")
    cfg = ExperimentConfig(matrix_path=matrix, partition=partition,
                           partition_format=os.environ.get("GPCMRH_PARTITION_FORMAT", "metis"),
                           solvers=("gpcmrh", "gpmr"), out_dir=str(tmp_path))
    rows, _ = run_experiment(cfg)
    its = {r.solver: r.iterations for r in rows}
    completed = all(r.status == "converged" for r in rows)
    near = all(0.75 * 121 <= v <= 1.25 * 121 for v in its.values())
    # informational: only completion is a hard requirement
    report_line(f"[{'PASS' if completed else 'FAIL'}] criterion 10: harness completed; iterations "
                f"{its}, within +-25% of 121: {near}")
    assert completed
