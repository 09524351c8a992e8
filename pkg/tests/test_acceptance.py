"""Acceptance criteria 1-9.

Each test prints one line ``CRITERION n: PASS|FAIL  <details>`` straight to
the terminal (bypassing capture) and then asserts.  Shared suite results are
computed once per module.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from sideinfo.binning import TypicalityParams, simulate
from sideinfo.capacity import solve_capacity
from sideinfo.oracle import GridSpec, deterministic_sufficiency_check, oracle_capacity, oracle_rd
from sideinfo.problems import bsc, binary_uniform_hamming, binary_wyner_ziv, stuck_at, two_state_bsc
from sideinfo.ratedist import check_curve, solve_rd_point, sweep_rd_curve
from sideinfo.special import PATTERNS, dedicated_capacity, dedicated_rd, degenerate, verify_reduction
from sideinfo.suite import channel_suite, distortion_levels, random_channel, random_source, source_suite

SPECS = Path(__file__).resolve().parent.parent / "specs"
H2 = lambda p: -p * math.log2(p) - (1 - p) * math.log2(1 - p)
ORDER_SLACK = 1e-6


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


@pytest.fixture(scope="module")
def suite():
    """General and dedicated values for every suite case, plus the runtime."""
    t0 = time.perf_counter()
    channels = []
    for prob in channel_suite():
        channels.append({pat: verify_reduction(prob, pat) for pat in PATTERNS})
    sources = []
    for prob in source_suite():
        for D in distortion_levels(prob):
            sources.append({pat: verify_reduction(prob, pat, D) for pat in PATTERNS})
    return channels, sources, time.perf_counter() - t0


def test_criterion_1_reduction_suite(suite, report):
    channels, sources, runtime = suite
    reps = [r for case in channels + sources for r in case.values()]
    worst = max(r.diff for r in reps)
    ok = len(channels) == 20 and len(sources) == 40 and worst <= 1e-3 and runtime <= 300
    report(1, ok, f"{len(reps)} cases, worst |general - dedicated| = {worst:.2e} bits, runtime {runtime:.0f} s")
    assert worst <= 1e-3
    assert runtime <= 300


def test_criterion_2_asymmetry(suite, report):
    channels, _, _ = suite
    worst_r = 0.0
    for prob in source_suite():
        for D in distortion_levels(prob):
            worst_r = max(worst_r, abs(dedicated_rd(prob, "10", D) - dedicated_rd(prob, "00", D)))
    gaps = [c["01"].dedicated - c["00"].dedicated for c in channels]
    ok = worst_r <= 1e-9 and max(gaps) >= 0.05
    report(2, ok, f"max |R_10 - R_00| = {worst_r:.1e}, max C_01 - C_00 = {max(gaps):.4f} bits")
    assert worst_r <= 1e-9
    assert max(gaps) >= 0.05


def test_criterion_3_anchors(report):
    # each anchor is checked against the oracle before being used as a constant
    checks = []

    def anchor(name, solver, oracle, expected, tol):
        checks.append((name, solver, oracle, expected, tol,
                       abs(solver - expected) <= tol and abs(oracle - expected) <= max(tol, 1e-2)))

    anchor("BSC(0.1) capacity", solve_capacity(bsc(0.1)).value,
           oracle_capacity(bsc(0.1), 2, GridSpec(0.01)).value, 1 - H2(0.1), 1e-4)
    anchor("Hamming R(0.1)", solve_rd_point(binary_uniform_hamming(), 0.1).rate,
           oracle_rd(binary_uniform_hamming(), 0.1, 2, GridSpec(0.01)).value, 1 - H2(0.1), 1e-4)
    anchor("Wyner-Ziv R(0)", solve_rd_point(binary_wyner_ziv(), 0.0).rate,
           oracle_rd(binary_wyner_ziv(), 0.0, 2, GridSpec(0.02)).value, H2(0.25), 2e-3)
    anchor("stuck-at capacity", solve_capacity(stuck_at()).value,
           oracle_capacity(stuck_at(), 2, GridSpec(0.02)).value, 0.8, 1e-2)
    ok = all(c[-1] for c in checks)
    detail = "; ".join(f"{n} = {s:.6f} (oracle {o:.6f}, expected {e:.6f})" for n, s, o, e, _, _ in checks)
    report(3, ok, detail)
    assert ok


def test_criterion_4_convexity(report):
    curves = [("hamming", binary_uniform_hamming()), ("wyner-ziv", binary_wyner_ziv())]
    for i, prob in enumerate(source_suite()):
        curves += [(f"src{i}/{pat}", degenerate(prob, pat)) for pat in ("00", "01", "11")]
    bad, rise, excess = [], 0.0, 0.0
    for name, prob in curves:
        chk = check_curve(sweep_rd_curve(prob), convex_tol=1e-4, monotone_tol=1e-6)
        rise, excess = max(rise, chk.worst_rise), max(excess, chk.worst_excess)
        if not chk.passed:
            bad.append(name)
    report(4, not bad, f"{len(curves)} swept curves, worst rise {rise:.1e}, worst chord excess {excess:.1e}"
           + (f", failing: {bad}" if bad else ""))
    assert not bad


def test_criterion_5_orderings(suite, report):
    channels, sources, _ = suite
    bad = 0
    for c in channels:
        v = {p: c[p].general for p in PATTERNS}
        bad += not (v["00"] <= v["01"] + ORDER_SLACK and v["00"] <= v["10"] + ORDER_SLACK
                    and v["10"] <= v["11"] + ORDER_SLACK and v["01"] <= v["11"] + ORDER_SLACK)
    for c in sources:
        v = {p: c[p].general for p in PATTERNS}
        bad += not (v["11"] <= v["01"] + ORDER_SLACK and v["01"] <= v["00"] + ORDER_SLACK)
    report(5, bad == 0, f"{len(channels)} channel and {len(sources)} source cases, {bad} ordering violations")
    assert bad == 0


def oracle_instances():
    """Ten binary instances small enough for the stochastic-kernel grid."""
    rng = np.random.default_rng(7)
    ch = random_channel(rng, 2, 2)
    so = random_source(rng, 2, 2)
    D = distortion_levels(so)[0]
    return [
        ("bsc(0.1)", bsc(0.1), None),
        ("two-state bsc", two_state_bsc(), None),
        ("random channel 01", degenerate(ch, "01"), None),
        ("random channel 10", degenerate(ch, "10"), None),
        ("random channel 11", degenerate(ch, "11"), None),
        ("hamming D=0.1", binary_uniform_hamming(), 0.1),
        ("wyner-ziv D=0", binary_wyner_ziv(), 0.0),
        ("wyner-ziv D=0.1", binary_wyner_ziv(), 0.1),
        ("random source 01", degenerate(so, "01"), D),
        ("random source 10", degenerate(so, "10"), D),
    ]


U_ORACLE = 2
GRID = GridSpec(0.02)


def test_criterion_6_oracle_equivalence(report):
    t0 = time.perf_counter()
    rows = []
    for name, prob, D in oracle_instances():
        if D is None:
            main = solve_capacity(prob, U_ORACLE).value
            orc = oracle_capacity(prob, U_ORACLE, GRID)
        else:
            main = solve_rd_point(prob, D, U_ORACLE).rate
            orc = oracle_rd(prob, D, U_ORACLE, GRID)
        rows.append((name, abs(main - orc.value), max(1e-3, orc.bound)))
    runtime = time.perf_counter() - t0
    bad = [n for n, d, tol in rows if d > tol]
    worst = max(rows, key=lambda r: r[1])
    report(6, not bad and runtime <= 600,
           f"{len(rows)} instances, largest diff {worst[1]:.2e} ({worst[0]}, allowed {worst[2]:.2e}), "
           f"runtime {runtime:.0f} s" + (f", failing: {bad}" if bad else ""))
    assert not bad
    assert runtime <= 600


def test_criterion_7_deterministic_sufficiency(report):
    reps = [(name, deterministic_sufficiency_check(prob, U_ORACLE, GRID, D))
            for name, prob, D in oracle_instances()]
    bad = [n for n, r in reps if not r.passed]
    worst = max(r.diff for _, r in reps)
    report(7, not bad, f"{len(reps)} instances, largest |deterministic - stochastic| = {worst:.2e}"
           + (f", failing: {bad}" if bad else ""))
    assert not bad


def _nonincreasing(v):
    return all(b <= a for a, b in zip(v, v[1:]))


def test_criterion_8_binning_trend(report):
    t0 = time.perf_counter()
    params = TypicalityParams(0.1)
    n_list = (4, 8, 12)
    ch = stuck_at()
    cap = solve_capacity(ch, 2)
    ch_reps = simulate("channel", ch, cap, n_list, 0.5 * cap.value, 2000, params, seed=0)
    src = binary_wyner_ziv()
    pt = solve_rd_point(src, 0.25)
    src_reps = simulate("source", src, pt, n_list, 0.25, 2000, params, seed=0, bin_rate=pt.rate + 0.2)
    runtime = time.perf_counter() - t0
    errs = [r.error_rate for r in ch_reps]
    excess = [r.excess_distortion for r in src_reps]
    counts_ok = all(sum(r.failures.values()) == r.failure_count for r in ch_reps + src_reps)
    ch_ok, src_ok = _nonincreasing(errs), _nonincreasing(excess)
    ok = ch_ok and src_ok and counts_ok and runtime <= 600
    report(8, ok, f"channel error rate {[round(e, 4) for e in errs]} ({'ok' if ch_ok else 'not monotone'}); "
                  f"source excess distortion {[round(e, 4) for e in excess]} "
                  f"({'ok' if src_ok else 'not monotone'}); event counts {'ok' if counts_ok else 'mismatch'}; "
                  f"runtime {runtime:.0f} s")
    assert counts_ok
    assert ch_ok
    assert src_ok
    assert runtime <= 600


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "sideinfo.cli", *map(str, args)],
                          capture_output=True, text=True)


def test_criterion_9_cli_determinism(tmp_path, report):
    commands = {
        "capacity": ["capacity", SPECS / "stuck_at.json", "--oracle", "--seed", "3"],
        "rd-point": ["rd", SPECS / "wyner_ziv.json", "--d", "0.1", "--seed", "3"],
        "rd-sweep": ["rd", SPECS / "hamming.json", "--sweep", "--seed", "3"],
        "simulate-channel": ["simulate", SPECS / "stuck_at.json", "--n", "4,8", "--rate", "0.4",
                             "--trials", "300", "--seed", "3"],
        "simulate-source": ["simulate", SPECS / "wyner_ziv.json", "--n", "4,8", "--d", "0.25",
                            "--bin-rate", "0.2", "--trials", "300", "--seed", "3"],
    }
    bad = []
    for name, cmd in commands.items():
        outs = []
        for k in range(2):
            f = tmp_path / f"{name}-{k}.csv"
            r = _cli(*cmd, "--csv", f)
            assert r.returncode == 0, r.stderr
            outs.append(f.read_bytes())
        if outs[0] != outs[1] or not outs[0]:
            bad.append(name)
    # commands without CSV output: compare stdout
    for cmd in (["reduce", SPECS / "two_state.json", "--pattern", "01"], ["duality", "--kind", "channel"]):
        if _cli(*cmd).stdout != _cli(*cmd).stdout:
            bad.append(cmd[0])
    report(9, not bad, f"{len(commands)} CSV-producing commands and 2 report-only commands rerun"
           + (f", differing: {bad}" if bad else ", all byte-identical"))
    assert not bad
