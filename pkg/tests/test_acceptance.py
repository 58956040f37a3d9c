"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (collected again in the terminal
summary).  Data come from the seeded continuous-time presets, so every
refinement level samples the same problem.
"""

import math
import time

import pytest

from artifact import experiments as ex

from conftest import ACCEPTANCE_LINES

SEED = 0
PROFILE = ex.PROFILES["default"]


def verdict(number, title, rows, extra=""):
    ok = all(r["pass"] for r in rows)
    bits = []
    for r in rows:
        if r["name"].endswith("_order"):
            bits.append(f"{r['name']}={r['order']:.2f}")
        elif not r["pass"] or r is rows[-1]:
            bits.append(f"{r['name']}={r['rel_error']:.2e}")
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | " + ", ".join(bits) + extra
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def failing(rows):
    return [(r["name"], r["N"], r["rel_error"], r["order"]) for r in rows if not r["pass"]]


def test_criterion_01_car_exactness():
    t = time.perf_counter()
    rows = ex.car_check(8, 200, SEED, PROFILE["exact"])
    dt = time.perf_counter() - t
    rows.append(ex.row("car_runtime_s", 8, 8, SEED, dt, dt, passed=dt < 10.0))
    assert verdict(1, "CAR exactness n=1..8", rows), failing(rows)


def test_criterion_02_brownian_algebra():
    rows = ex.brownian_check(8, 1.0, PROFILE["exact"])
    assert verdict(2, "W(t)* = W(t), W(t)^2 = t I at n=N=8", rows), failing(rows)


def test_criterion_03_ito_isometries():
    t = time.perf_counter()
    rows = ex.isometry_check(6, 50, SEED, PROFILE["derived"])
    dt = time.perf_counter() - t
    rows.append(ex.row("isometry_runtime_s", 6, 6, SEED, dt, dt, passed=dt < 30.0))
    assert verdict(3, "vector and HS isometries at n=N=6", rows), failing(rows)


def test_criterion_04_linear_duality():
    rows = ex.linear_duality_sweep((3, 4, 5), SEED, PROFILE)
    assert verdict(4, "linear backward duality, order and w=0 exactness", rows), failing(rows)


def test_criterion_05_transposition_identity():
    rows = ex.transposition_sweep((2, 4, 8), SEED, 4, PROFILE)
    assert verdict(5, "seven-term identity order and trivial case", rows), failing(rows)


def test_criterion_06_relaxed_identity():
    t = time.perf_counter()
    rows = [r for r in ex.relaxed_sweep((2, 3, 4), SEED, 20, PROFILE) if not r["name"].startswith("uniqueness")]
    dt = time.perf_counter() - t
    rows.append(ex.row("relaxed_runtime_s", 4, 4, SEED, dt, dt, passed=dt < 300.0))
    assert verdict(6, "nine-term identity order and adjoint condition", rows), failing(rows)


def test_criterion_07_p_consistency():
    rows = ex.consistency_sweep((2, 3, 4, 5, 6), SEED, 0.3, 6, PROFILE)
    assert verdict(7, "recursion vs representation, scalar benchmark", rows), failing(rows)


def test_criterion_08_galerkin():
    rows, _ = ex.galerkin_sweep(3, 10, SEED, PROFILE)
    assert verdict(8, "Galerkin errors nonincreasing, zero at full rank", rows), failing(rows)


def test_criterion_09_a_priori_ratio():
    rows = ex.apriori_sweep((2, 4, 8), SEED, PROFILE)
    assert all(math.isfinite(r["abs_error"]) for r in rows)
    assert verdict(9, "a priori ratio finite and stable under refinement", rows), failing(rows)


def test_criterion_10_rank_one_and_trace():
    rows = ex.rank_one_sweep(6, (3, 4, 5, 6), SEED, PROFILE)
    assert verdict(10, "rank-one identities, trace dictionary, propagation order", rows), failing(rows)


def test_criterion_11_uniqueness():
    rows = [r for r in ex.relaxed_sweep((2, 3, 4), SEED, 20, PROFILE) if r["name"].startswith("uniqueness")]
    assert verdict(11, "two relaxed constructions agree at O(dt)", rows), failing(rows)
