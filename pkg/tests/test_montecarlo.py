import math
from fractions import Fraction as F

import numpy as np
import pytest

from extremap.errors import InfeasibleError
from extremap.intervals import IntervalUnion, ball
from extremap.maps import FullBranchMap, ulam_matrix
from extremap.events import (
    Observable,
    exact_evl_prob,
    exact_hts_prob,
    threshold_for,
)
from extremap import montecarlo as mc

DOUBLING = FullBranchMap.doubling()
TRIPLING = FullBranchMap.tripling()
WIDTHS = FullBranchMap.from_widths([F(1, 2), F(1, 4), F(1, 4)])


def test_wilson_halfwidth_bounds():
    for n in (100, 10000, 100000):
        for s in (0, 1, n // 3, n // 2, n - 1, n):
            hw = mc.wilson_halfwidth(s, n)
            assert 0 <= hw <= 1.96 / (2 * math.sqrt(n)) + 1e-9
    assert mc.wilson_halfwidth(0, 0) == 1.0


def test_evl_estimate_matches_exact_oracle():
    obs = Observable(center=F(1, 3))
    est = mc.estimate_evl(DOUBLING, obs, 10, 1, trials=30000, seed=3)
    exact = float(exact_evl_prob(DOUBLING, threshold_for(obs, 10, 1).exceedance, 10))
    assert abs(est.estimate - exact) <= 3 * est.half_width


def test_evl_estimate_tripling_and_nonuniform():
    obs = Observable(center=F(1, 8))
    est = mc.estimate_evl(TRIPLING, obs, 9, 1, trials=30000, seed=4)
    exact = float(exact_evl_prob(TRIPLING, threshold_for(obs, 9, 1).exceedance, 9))
    assert abs(est.estimate - exact) <= 3 * est.half_width

    obsw = Observable(center=F(1, 5))
    estw = mc.estimate_evl(WIDTHS, obsw, 8, 1, trials=30000, seed=5)
    exactw = float(exact_evl_prob(WIDTHS, threshold_for(obsw, 8, 1).exceedance, 8))
    assert abs(estw.estimate - exactw) <= 3 * estw.half_width


def test_evl_points_multiple_tau_single_pass():
    obs = Observable(center=F(1, 3))
    pairs = [(10, F(1, 2)), (10, F(1)), (10, F(2))]
    pts = mc.estimate_evl_points(DOUBLING, obs, pairs, trials=40000, seed=13)
    for (n, tau), p in zip(pairs, pts):
        exact = float(exact_evl_prob(
            DOUBLING, threshold_for(obs, n, tau).exceedance, n))
        assert abs(p.estimate - exact) <= 3 * p.half_width, tau


def test_evl_tau_zero_degenerate():
    obs = Observable(center=F(1, 3))
    est = mc.estimate_evl(DOUBLING, obs, 100, 0, trials=1000, seed=1)
    assert est.estimate == 1.0


def test_evl_infeasible_threshold():
    obs = Observable(center=F(1, 3))
    with pytest.raises(InfeasibleError):
        mc.estimate_evl(DOUBLING, obs, 4, 8, trials=100, seed=1)


def test_evl_determinism_and_grid_consistency():
    obs = Observable(center=F(1, 3))
    a = mc.estimate_evl_grid(DOUBLING, obs, [50, 200], 1, trials=70000, seed=11)
    b = mc.estimate_evl_grid(DOUBLING, obs, [50, 200], 1, trials=70000, seed=11)
    assert a == b
    c = mc.estimate_evl_grid(DOUBLING, obs, [50, 200], 1, trials=70000, seed=12)
    assert c != a


def test_evl_worker_invariance():
    obs = Observable(center=F(1, 3))
    a = mc.estimate_evl_grid(DOUBLING, obs, [64], 1, trials=70000, seed=2,
                             workers=1)
    b = mc.estimate_evl_grid(DOUBLING, obs, [64], 1, trials=70000, seed=2,
                             workers=2)
    assert a == b


def test_hts_estimates_and_edges():
    B = ball(F(1, 3), F(1, 20))
    ecdf = mc.estimate_hts(DOUBLING, F(1, 3), F(1, 20), [0, F(1, 4), F(1, 2)],
                           trials=40000, seed=6)
    assert ecdf.estimates[0] == 1.0
    assert list(ecdf.estimates) == sorted(ecdf.estimates, reverse=True)
    for tau, est, hw in zip(ecdf.grid[1:], ecdf.estimates[1:],
                            ecdf.half_widths[1:]):
        t_int = int(F(tau) / B.measure())
        exact = float(exact_hts_prob(DOUBLING, B, t_int))
        assert abs(est - exact) <= 3 * hw
    with pytest.raises(InfeasibleError):
        mc.estimate_hts(DOUBLING, F(1, 3), F(3, 10), [1], trials=100, seed=1)


def test_hts_matches_open_ulam_system():
    # the holed Ulam system is exact for bin-aligned holes of the doubling map
    eps = F(1, 200)
    hole = ball(F(1, 3), eps)
    bins = mc.aligned_bins(DOUBLING, hole)
    P = ulam_matrix(DOUBLING, bins)
    mask = np.zeros(bins, dtype=bool)
    for lo, hi in hole.components:
        mask[int(lo * bins):int(hi * bins)] = True
    v = np.full(bins, 1.0 / bins)
    surv = {}
    for t in range(1, 41):
        v = v @ P
        v[mask] = 0.0
        surv[t] = v.sum()
    PB = hole.measure()
    taus = [F(1, 10), F(1, 5), F(2, 5)]
    ecdf = mc.estimate_hts(DOUBLING, F(1, 3), eps, taus, trials=60000, seed=8)
    for tau, est, hw in zip(ecdf.grid, ecdf.estimates, ecdf.half_widths):
        t_int = int(F(tau) / PB)
        assert abs(est - surv[t_int]) <= 3 * hw


def test_escape_rate_trivial_and_small():
    fit = mc.estimate_escape_rate(DOUBLING, F(0), 0, trials=100, seed=1)
    assert fit.slope == 0.0
    with pytest.raises(InfeasibleError):
        # far too few trials for the tail window
        mc.estimate_escape_rate(DOUBLING, F(0), F(1, 25), trials=300, seed=1)


def test_escape_rate_against_oracle():
    eps = F(1, 25)
    hole = ball(F(0), eps)
    rate = mc.ulam_escape_oracle(DOUBLING, hole, mc.aligned_bins(DOUBLING, hole))
    fit = mc.estimate_escape_rate(DOUBLING, F(0), eps, trials=300000, seed=7,
                                  theta_hint=0.5)
    assert abs(fit.slope - rate) / rate < 0.08
    assert fit.window[0] == math.ceil(5 / (0.5 * float(hole.measure())))


def test_ulam_escape_oracle_edges():
    assert mc.ulam_escape_oracle(DOUBLING, IntervalUnion.empty(), 64) == 0.0
    assert mc.ulam_escape_oracle(DOUBLING, IntervalUnion.full(), 64) == math.inf
    with pytest.raises(ValueError):
        mc.ulam_escape_oracle(DOUBLING, ball(F(1, 3), F(1, 101)), 64)
    with pytest.raises(ValueError):
        mc.ulam_escape_oracle(DOUBLING, ball(F(0), F(1, 100)), 32)


def test_ulam_escape_oracle_frozen_value():
    hole = ball(F(0), F(1, 100))
    bins = mc.aligned_bins(DOUBLING, hole)
    assert bins == 100
    rate = mc.ulam_escape_oracle(DOUBLING, hole, bins)
    assert rate == pytest.approx(0.01066645282166119, rel=1e-9)


def test_aligned_bins():
    assert mc.aligned_bins(DOUBLING, ball(F(0), F(1, 25))) == 100
    assert mc.aligned_bins(DOUBLING, ball(F(1, 3), F(1, 200))) == 600


def test_convergence_sweep_deterministic():
    cfg = mc.SweepConfig(map=DOUBLING, zeta=F(1, 3), tau=F(1),
                         n_grid=(200, 800), trials=30000, seed=9)
    t1 = mc.convergence_sweep(cfg)
    t2 = mc.convergence_sweep(cfg)
    assert t1.rows == t2.rows
    assert t1.config == t2.config
    for col in mc.SWEEP_COLUMNS:
        assert col in t1.rows[0]
    assert t1.rows[0]["q"] == 2 and t1.rows[0]["theta"] == 0.75
    assert all(r["bracket"] > 0 for r in t1.rows)


def test_evl_hts_duality_consistency():
    # with eps equal to the threshold radius of (n, tau), the hitting-time
    # horizon tau/P(B) is exactly n, and invariance makes the two survival
    # probabilities identical; the estimators must agree within noise
    n, tau = 64, F(1)
    obs = Observable(center=F(1, 3))
    sched = threshold_for(obs, n, tau)
    evl = mc.estimate_evl(DOUBLING, obs, n, tau, trials=60000, seed=21)
    hts = mc.estimate_hts(DOUBLING, F(1, 3), sched.radius, [tau],
                          trials=60000, seed=22)
    assert abs(evl.estimate - hts.estimates[0]) <= \
        3 * (evl.half_width + hts.half_widths[0])


def test_escape_rate_sandwich():
    # spectral rate between the guaranteed lower bound and the nominal
    # zero-hole value, with 10% slack, at a periodic center and small hole
    from extremap.brackets import (DecayModel, escape_rate_window,
                                   optimize_kt_hts, upsilon)
    from extremap.events import annulus_set, first_return_time
    from extremap.maps import bv_norm_indicator
    eps = F(1, 100)
    hole = ball(F(0), eps)
    PB = float(hole.measure())
    spectral = mc.ulam_escape_oracle(DOUBLING, hole,
                                     mc.aligned_bins(DOUBLING, hole))
    A = annulus_set(DOUBLING, hole, 1)
    dm = DecayModel.for_map(DOUBLING)
    bp = optimize_kt_hts(PB, dm)
    ell = max(bp.ell, 1)
    R = first_return_time(DOUBLING, A, horizon=128) or ell
    Y = upsilon(float(A.measure()), bv_norm_indicator(A), ell, bp.t, R, dm)
    window = escape_rate_window(0.5, bp.k, Y,
                                max(1.0 - ell * float(A.measure()), 1e-12), PB)
    slack = 0.1 * window.nominal
    assert window.lower - slack <= spectral <= window.nominal + slack


def test_sweep_nonperiodic_center_uses_theta_one():
    # dyadic denominator: strictly preperiodic, hence not periodic
    cfg = mc.SweepConfig(map=DOUBLING, zeta=F(419, 1024), tau=F(1),
                         n_grid=(128,), trials=20000, seed=3)
    row = mc.convergence_sweep(cfg).rows[0]
    assert row["q"] == 0 and row["theta"] == 1.0
    assert row["limit"] == pytest.approx(math.exp(-1.0))
