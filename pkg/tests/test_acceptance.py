"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Reference values come from ``oracles`` (closed forms) or from exact
algebraic identities; tolerances are the stated ones, never widened.
"""
import json
import math
import time
from pathlib import Path

import numpy as np

from qspatch.calculus import (
    GridProcess,
    epsilon_error_bound,
    ito_epsilon,
    ito_limsup,
    ito_sum,
    qv_from_integral,
)
from qspatch.cli import main
from qspatch.gexpect import payoff, robust_price, g_expect
from qspatch.measures import (
    Constant,
    MeasureFamily,
    Member,
    PathStream,
    RegimeSwitching,
    average_measure,
    make_grid,
    sample_driver,
    sample_vol_path,
    simulate_family,
)
from qspatch.patching import check_average_consistency, check_compatibility, max_residual, patch
from qspatch.sde import builtin_coefficients, check_lipschitz, check_monotone, check_yamada_watanabe

from .fixtures import nominal_qv_solver
from .oracles import CALL_AT_30PCT, lognormal_call
from .test_sde import custom

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def overlap():
    return MeasureFamily((Member("c4", Constant(4.0)), Member("regime", RegimeSwitching((1.0, 4.0), 0.1))))


def test_qv_lens(criterion):
    t0 = time.perf_counter()
    grid = make_grid(1.0, 10_000)
    got = {}
    for v in (4.0, 1.0):
        B = sample_driver(Constant(v), grid, PathStream.for_path(2024, f"vol{v:g}", 0)).values
        got[v] = qv_from_integral(GridProcess(grid, B)).values[-1]
    elapsed = time.perf_counter() - t0
    ok = abs(got[4.0] - 4.0) <= 0.17 and abs(got[1.0] - 1.0) <= 0.043 and elapsed < 1.0
    criterion(1, ok, f"qv_T={got[4.0]:.4f} (4+-0.17), {got[1.0]:.4f} (1+-0.043), {elapsed:.2f}s < 1s")
    assert ok


def test_exact_qv_identity(criterion):
    t0 = time.perf_counter()
    grid = make_grid(1.0, 256)
    worst = 0.0
    for i in range(1000):
        p = sample_driver(RegimeSwitching((1.0, 4.0), 0.05), grid, PathStream.for_path(5, "qv", i))
        qv = qv_from_integral(GridProcess(grid, p.values)).values[1:]
        ref = np.cumsum(np.diff(p.values) ** 2)  # independent accumulation
        worst = max(worst, float(np.max(np.abs(qv - ref) / ref)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    criterion(2, ok, f"max rel err {worst:.2e} <= 1e-12 on 1000 paths, {elapsed:.2f}s < 5s")
    assert ok


def test_epsilon_bound_and_stabilization(criterion):
    t0 = time.perf_counter()
    grid = make_grid(1.0, 2**10)
    bound_rows = bad_rows = 0
    unstable = []
    for i in range(100):
        B = GridProcess(grid, sample_driver(Constant(1.0), grid, PathStream.for_path(0, "eps", i)).values)
        exact = ito_sum(B, B).values
        for n in range(1, 21):
            eps = 2.0**-n
            err = float(np.max(np.abs(ito_epsilon(B, B, eps).values - exact)))
            bound_rows += 1
            bad_rows += err > epsilon_error_bound(B, eps)
        res = ito_limsup(B, B, n_max=20)
        if res.stabilized_at is None:
            unstable.append(i)
    elapsed = time.perf_counter() - t0
    ok = bad_rows == 0 and not unstable and elapsed < 10.0
    criterion(
        3,
        ok,
        f"bound violated on {bad_rows}/{bound_rows} rows; {len(unstable)}/100 paths not "
        f"stabilized by n=20 {unstable}; {elapsed:.2f}s < 10s",
    )
    assert ok


def test_pathwise_compatibility(criterion):
    t0 = time.perf_counter()
    fam = overlap()
    grid = make_grid(1.0, 256)
    shared = simulate_family(fam, grid, 100, 11)["c4"]  # Constant(4) paths are seen by both
    rep = {}
    for name in ("gbm", "qv_drift_gbm"):
        rep[name] = check_compatibility(fam, builtin_coefficients(name), 1.0, shared)
    # GBM has no d<B> term, so a measure-dependent d<B> only shows with h != 0
    broken = check_compatibility(fam, builtin_coefficients("qv_drift_gbm"), 1.0, shared, solver=nominal_qv_solver)
    elapsed = time.perf_counter() - t0
    n_checked = {len({p[2] for p in r.pairs}) for r in rep.values()}
    ok = (
        all(r.max_deviation == 0.0 for r in rep.values())
        and n_checked == {100}
        and broken.n_paths_deviating >= 99
        and elapsed < 5.0
    )
    criterion(
        4,
        ok,
        f"max deviation {max(r.max_deviation for r in rep.values())!r} on {n_checked} shared paths; "
        f"broken solver deviates on {broken.n_paths_deviating}/100 (>=99); {elapsed:.2f}s < 5s",
    )
    assert ok


def test_average_measure_consistency(criterion):
    t0 = time.perf_counter()
    grid = make_grid(1.0, 256)
    P, Q = Member("v1", Constant(1.0)), Member("v4", Constant(4.0))
    rep = check_average_consistency(P, Q, builtin_coefficients("qv_drift_gbm"), 1.0, 200, grid, 8)
    R = average_measure(P.spec, Q.spec)
    n = 10_000
    left = sum(sample_vol_path(R, grid, PathStream.for_path(8, "avg", i))[1] == "left" for i in range(n))
    sigma = math.sqrt(n * 0.25)
    elapsed = time.perf_counter() - t0
    ok = rep.max_deviation == 0.0 and len(rep.pairs) == 200 and abs(left - n / 2) <= 3 * sigma and elapsed < 10.0
    criterion(
        5,
        ok,
        f"branch deviation {rep.max_deviation!r} on 200 paths; left={left}/{n} "
        f"(|dev| {abs(left - n / 2):.0f} <= {3 * sigma:.0f}); {elapsed:.2f}s < 10s",
    )
    assert ok


def test_universal_solution(criterion):
    t0 = time.perf_counter()
    fam = overlap()
    grid = make_grid(1.0, 256)
    batches = simulate_family(fam, grid, 250, 13)
    paths = batches["c4"] + batches["regime"]
    coeffs = builtin_coefficients("qv_drift_gbm")
    table = patch(fam, coeffs, 1.0, paths)
    resid = max_residual(table, coeffs, paths)
    shared_ok = all(len(table.provenance(p.path_id)) == 2 for p in batches["c4"])
    elapsed = time.perf_counter() - t0
    ok = not table.conflicts and not table.exceptional and resid == 0.0 and shared_ok and elapsed < 10.0
    hist = table.summary()["provenance_size_histogram"]
    criterion(
        6,
        ok,
        f"{len(paths)} paths, conflicts={len(table.conflicts)}, exceptional={len(table.exceptional)}, "
        f"max residual {resid!r}, provenance sizes {hist}; {elapsed:.2f}s < 10s",
    )
    assert ok


def test_g_expectation_envelope(criterion):
    t0 = time.perf_counter()
    fam = MeasureFamily(tuple(Member(f"v{v:g}", Constant(v)) for v in (1.0, 2.25, 4.0)))
    F = payoff("driver_terminal", "square")
    g = g_expect(fam, None, 0.0, F, 100_000, 17, make_grid(1.0, 64))
    # oracle: E[B_T^2] = v T per member, enumerated
    oracle = {m.id: m.spec.v * 1.0 for m in fam}
    sup_id, inf_id = max(oracle, key=oracle.get), min(oracle, key=oracle.get)
    se_hi, se_lo = g.stderr_of(sup_id), g.stderr_of(inf_id)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(g.sup_value - oracle[sup_id]) <= 3 * se_hi
        and g.argmax_id == sup_id
        and abs(g.inf_value - oracle[inf_id]) <= 3 * se_lo
        and elapsed < 30.0
    )
    criterion(
        7,
        ok,
        f"sup {g.sup_value:.4f} at {g.argmax_id} (4 +- {3 * se_hi:.4f}); "
        f"inf {g.inf_value:.4f} (1 +- {3 * se_lo:.4f}); {elapsed:.2f}s < 30s",
    )
    assert ok


def test_robust_price(criterion):
    t0 = time.perf_counter()
    fam = MeasureFamily(tuple(Member(f"var{v:g}", Constant(v)) for v in (0.01, 0.04, 0.09)))
    coeffs = builtin_coefficients("stochvol", mu=0.0)
    grid = make_grid(1.0, 256)
    call = payoff("terminal", "call", strike=1.0)
    oracle = lognormal_call(1.0, 1.0, 0.3, 1.0)
    g, _ = robust_price(fam, coeffs, 1.0, call, 100_000, 31, grid, threads=4)
    neg, _ = robust_price(fam, coeffs, 1.0, call.scaled(-1.0), 100_000, 31, grid, threads=4)
    se = g.stderr_of(g.argmax_id)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(oracle - CALL_AT_30PCT) < 1e-12
        and g.argmax_id == "var0.09"
        and abs(g.sup_value - oracle) <= 3 * se
        and neg.argmax_id == "var0.01"
        and elapsed < 60.0
    )
    criterion(
        8,
        ok,
        f"sup {g.sup_value:.5f} at {g.argmax_id} vs oracle {oracle:.5f} +- {3 * se:.5f}; "
        f"negated argmax {neg.argmax_id}; {elapsed:.2f}s < 60s",
    )
    assert ok


def test_validators(criterion):
    t0 = time.perf_counter()
    lin = check_lipschitz(custom(b=lambda t, x: 2.0 * x, sigma=lambda t, x: -0.5 * x), (-1, 1), 3000, PathStream(1), K=2.0)
    k_hat = max(lin.constants["K_b"], lin.constants["K_h"], lin.constants["K_sigma"])
    yw_ok = check_yamada_watanabe(builtin_coefficients("sqrt_diffusion", alpha=0.5), stream=PathStream(2))
    yw_bad = check_yamada_watanabe(builtin_coefficients("sqrt_diffusion", alpha=0.4), stream=PathStream(2))
    cubic = check_monotone(builtin_coefficients("cubic_monotone"), (-10, 10), 3000, PathStream(3))
    square = check_monotone(custom(b=lambda t, x: x**2, K=1.0), (-10, 10), 3000, PathStream(3))
    elapsed = time.perf_counter() - t0
    ok = (
        lin.verdict
        and abs(k_hat - 2.0) <= 0.02
        and yw_ok.verdict
        and not yw_bad.verdict
        and cubic.verdict
        and not square.verdict
        and elapsed < 5.0
    )
    criterion(
        9,
        ok,
        f"Lipschitz K={k_hat:.4f} (2 +- 1%) {lin.verdict}; YW 0.5 {yw_ok.verdict}, 0.4 {yw_bad.verdict}; "
        f"-x^3 {cubic.verdict}, x^2 {square.verdict}; {elapsed:.2f}s < 5s",
    )
    assert ok


def test_price_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    # same family, coefficients and grid as the shipped config, fewer paths
    text = (CONFIGS / "price_call.toml").read_text().replace("n_paths = 100000", "n_paths = 10000")
    cfg = tmp_path / "price.toml"
    cfg.write_text(text)
    runs = []
    for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / tag
        code = main(["price", "--config", str(cfg), "--out", str(out), "--threads", str(threads)])
        runs.append((code, {n: (out / n).read_bytes() for n in ("gexpect.json", "breakdown.csv", "manifest.json")}))
    same = all(r[1] == runs[0][1] for r in runs) and all(r[0] == 0 for r in runs)
    sup = json.loads(runs[0][1]["gexpect.json"])["sup_value"]
    elapsed = time.perf_counter() - t0
    criterion(10, same, f"gexpect.json/breakdown.csv/manifest.json identical over runs x threads 1,1,8 "
                        f"(sup={sup:.5f}); {elapsed:.2f}s")
    assert same
