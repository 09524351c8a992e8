import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sideinfo.ascent import SolverOptions
from sideinfo.problems import SourceProblem, binary_uniform_hamming, binary_wyner_ziv, hamming
from sideinfo.ratedist import (InfeasibleDistortion, RdCurve, check_curve, default_lambda_grid,
                               feasible_range, rd_objective, solve_rd_point, sweep_rd_curve,
                               zero_rate_distortion)

H2 = lambda p: 0.0 if p in (0, 1) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def wz_closed_form(D, p=0.25):
    """Doubly symmetric binary source: time-share g(d) = H2(p * d) - H2(d) with (p, 0)."""
    g = lambda d: H2(p + d - 2 * p * d) - H2(d)
    ds = np.linspace(0.0, D, 20001)
    return min(g(D), min(g(d) * (p - D) / (p - d) for d in ds))


@pytest.mark.parametrize("D", [0.05, 0.1, 0.2, 0.3])
def test_hamming_closed_form(D):
    r = solve_rd_point(binary_uniform_hamming(), D)
    assert r.rate == pytest.approx(1 - H2(D), abs=1e-6)
    assert r.achieved_d <= D + 1e-9


def test_zero_rate_region():
    r = solve_rd_point(binary_uniform_hamming(), 0.5)
    assert r.rate == 0.0
    assert solve_rd_point(binary_wyner_ziv(), 0.25).rate == 0.0
    assert zero_rate_distortion(binary_wyner_ziv()) == pytest.approx(0.25)


def test_wyner_ziv_points():
    src = binary_wyner_ziv()
    assert solve_rd_point(src, 0.0).rate == pytest.approx(H2(0.25), abs=1e-6)
    assert solve_rd_point(src, 0.1).rate == pytest.approx(wz_closed_form(0.1), abs=2e-4)


def test_infeasible_target_names_d_min():
    src = SourceProblem.from_arrays(np.full((2, 1, 1), 0.5), hamming(2) + 0.1)
    d_min, d_max = feasible_range(src)
    assert d_min == pytest.approx(0.1)
    with pytest.raises(InfeasibleDistortion, match="d_min"):
        solve_rd_point(src, 0.05)


def test_configuration_reproduces_rate():
    src = binary_wyner_ziv()
    r = solve_rd_point(src, 0.1)
    rate, dist = rd_objective(src, r.u_given_xs1, r.xhat_map)
    assert rate == pytest.approx(r.rate, abs=1e-12)
    assert dist == pytest.approx(r.achieved_d, abs=1e-12)


def test_constrained_method_agrees():
    src = binary_wyner_ziv()
    a = solve_rd_point(src, 0.1, 3, method="constrained")
    b = solve_rd_point(src, 0.1, 3)
    assert a.rate == pytest.approx(b.rate, abs=1e-5)
    assert a.diagnostics["feasible"]


@given(st.floats(0.01, 0.45))
def test_rate_is_nonincreasing_in_d(D):
    src = binary_uniform_hamming()
    lo = solve_rd_point(src, D, 2).rate
    hi = solve_rd_point(src, D + 0.04, 2).rate
    assert hi <= lo + 1e-7


def test_sweep_is_sorted_convex_and_nondominated():
    curve = sweep_rd_curve(binary_uniform_hamming())
    pr = curve.pairs()
    assert len(pr) >= 2
    assert np.all(np.diff(pr[:, 0]) >= 0)
    assert check_curve(curve).passed
    for d, r in pr:
        assert r == pytest.approx(1 - H2(min(d, 0.5)), abs=2e-3)


def test_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        sweep_rd_curve(binary_uniform_hamming(), lambda_grid=[])
    with pytest.raises(ValueError):
        sweep_rd_curve(binary_uniform_hamming(), lambda_grid=[-1.0])


def test_default_grid_shape():
    g = default_lambda_grid()
    assert len(g) == 20 and g[0] == 0.0 and g[-1] == pytest.approx(100.0)


def test_check_curve_flags_violations():
    from sideinfo.ratedist import RdPoint

    def curve(pairs):
        return RdCurve([RdPoint(d, r, d, None, None) for d, r in pairs], 0.0, 1.0)

    assert not check_curve(curve([(0.0, 1.0), (0.5, 0.9), (1.0, 0.0)])).convex
    assert not check_curve(curve([(0.0, 1.0), (0.5, 1.1), (1.0, 0.0)])).monotone
    assert check_curve(curve([(0.0, 1.0), (0.5, 0.3), (1.0, 0.0)])).passed


def test_seeded_runs_match():
    src = binary_wyner_ziv()
    a = solve_rd_point(src, 0.05, opts=SolverOptions(seed=3))
    b = solve_rd_point(src, 0.05, opts=SolverOptions(seed=3))
    assert a.rate == b.rate


def test_cardinality_gap_flags_single_symbol_u():
    from sideinfo.ratedist import cardinality_gap
    prob = binary_uniform_hamming()
    # one symbol cannot describe anything, so D = 0.1 needs a second symbol
    assert cardinality_gap(prob, 0.1, 1) == math.inf
    assert abs(cardinality_gap(prob, 0.1, 2)) <= 1e-6
