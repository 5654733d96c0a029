import math
import random
from fractions import Fraction as F

import numpy as np
import pytest

from extremap.errors import BoundaryPointError, CapExceededError
from extremap.intervals import IntervalUnion, ball
from extremap.maps import (
    AffineBranch,
    FullBranchMap,
    Potential,
    SmoothBranch,
    bv_norm_indicator,
    periodic_points,
    pressure_sequence,
    symbolic_sample,
    ulam_matrix,
    weighted_periodic_sum,
)

DOUBLING = FullBranchMap.doubling()
TRIPLING = FullBranchMap.tripling()
WIDTHS = FullBranchMap.from_widths([F(1, 2), F(1, 4), F(1, 4)])


def random_union(rnd, max_components=3):
    k = rnd.randrange(1, max_components + 1)
    pts = sorted(rnd.sample(range(1, 600), 2 * k))
    return IntervalUnion([(F(a, 600), F(b, 600)) for a, b in zip(pts[::2], pts[1::2])])


def test_apply_examples():
    assert DOUBLING.apply(F(3, 10)) == F(3, 5)
    assert DOUBLING.apply(F(7, 10)) == F(2, 5)
    assert WIDTHS.apply(F(3, 5)) == F(2, 5)


def test_apply_boundary_error_and_resample_convention():
    with pytest.raises(BoundaryPointError):
        DOUBLING.apply(F(1, 2))
    assert DOUBLING.apply(F(1, 2), boundary="right") == 0


def test_preimage_examples():
    got = DOUBLING.preimage(IntervalUnion([(F(2, 10), F(3, 10))]))
    assert got.components == ((F(1, 10), F(3, 20)), (F(3, 5), F(13, 20)))
    assert got.measure() == F(1, 10)
    assert DOUBLING.preimage(IntervalUnion.empty()).is_empty
    assert DOUBLING.preimage(IntervalUnion.full()) == IntervalUnion.full()


def test_preimage_lebesgue_invariance_random():
    rnd = random.Random(7)
    for m in (DOUBLING, TRIPLING, WIDTHS):
        for _ in range(340):
            s = random_union(rnd)
            assert m.preimage(s).measure() == s.measure()


def test_image_examples():
    assert DOUBLING.image(IntervalUnion([(F(1, 10), F(3, 20))])).components == (
        (F(1, 5), F(3, 10)),)
    wrapped = DOUBLING.image(IntervalUnion([(F(2, 5), F(3, 5))]))
    assert wrapped.components == ((F(0), F(1, 5)), (F(4, 5), F(1)))
    s = random_union(random.Random(3))
    back_forth = DOUBLING.image(DOUBLING.preimage(s))
    for x in [F(i, 997) for i in range(0, 997, 11)]:
        if s.contains(x):
            assert back_forth.contains(x)


def test_periodic_points_doubling_period1():
    pts = periodic_points(DOUBLING, 1)
    assert len(pts) == 2
    assert pts[0].point == 0 and pts[0].multiplier == 2
    assert pts[1].point == 0 and pts[1].boundary_degenerate
    assert len(periodic_points(DOUBLING, 1, distinct=True)) == 1


def test_periodic_points_doubling_period2():
    pts = {p.point for p in periodic_points(DOUBLING, 2)}
    assert {F(1, 3), F(2, 3)} <= pts
    for p in periodic_points(DOUBLING, 2):
        assert p.multiplier == 4


@pytest.mark.parametrize("m,n", [(DOUBLING, 5), (TRIPLING, 4), (WIDTHS, 4)])
def test_periodic_point_count_and_fixedness(m, n):
    pts = periodic_points(m, n)
    assert len(pts) == m.d ** n
    for p in pts[:: max(1, len(pts) // 20)]:
        x = p.point
        for _ in range(n):
            x = m.apply(x, boundary="right")
        assert x == p.point


def test_periodic_cap():
    with pytest.raises(CapExceededError):
        periodic_points(DOUBLING, 21)


@pytest.mark.parametrize("m", [DOUBLING, TRIPLING, WIDTHS])
def test_weighted_sum_geometric_is_one(m):
    for n in range(1, 8):
        assert weighted_periodic_sum(m, Potential.geometric(), n) == 1


def test_weighted_sum_zero_potential_counts_points():
    assert weighted_periodic_sum(DOUBLING, Potential.zero(), 3) == 8.0
    assert weighted_periodic_sum(WIDTHS, Potential.zero(), 1) == 3.0


def test_pressure_sequences():
    assert pressure_sequence(DOUBLING, Potential.geometric(), 6) == [0.0] * 6
    for v in pressure_sequence(DOUBLING, Potential.zero(), 6):
        assert v == pytest.approx(math.log(2), abs=1e-12)
    for v in pressure_sequence(WIDTHS, Potential.zero(), 5):
        assert v == pytest.approx(math.log(3), abs=1e-12)


def test_symbolic_sample_fair_coin_digits():
    rng = np.random.default_rng(2)
    orbit = symbolic_sample(DOUBLING, rng, horizon=200000)
    assert abs((orbit.digits == 0).mean() - 0.5) < 0.005


def test_symbolic_sample_coding_consistency():
    rng = np.random.default_rng(11)
    orbit = symbolic_sample(DOUBLING, rng, horizon=500)
    for k in range(499):
        x = F(int(orbit.windows[k]), orbit.denominator)
        assert DOUBLING.branch_index(float(x), boundary="right") == orbit.digits[k]
        stepped = DOUBLING.apply(x, boundary="right")
        nxt = F(int(orbit.windows[k + 1]), orbit.denominator)
        assert abs(stepped - nxt) <= F(1, orbit.denominator)


def test_symbolic_sample_occupation_frequency():
    rng = np.random.default_rng(5)
    orbit = symbolic_sample(DOUBLING, rng, horizon=1_000_000)
    inside = ((orbit.points >= 0.2) & (orbit.points < 0.3)).mean()
    assert abs(inside - 0.1) < 0.001


def test_symbolic_sample_nonuniform():
    rng = np.random.default_rng(9)
    orbit = symbolic_sample(WIDTHS, rng, horizon=2000)
    for k in range(0, 1999, 97):
        assert WIDTHS.branch_index(orbit.points[k], boundary="right") == orbit.digits[k]
        assert abs(WIDTHS.apply(orbit.points[k], boundary="right")
                   - orbit.points[k + 1]) < 1e-9
    freq = (orbit.digits == 0).mean()
    assert abs(freq - 0.5) < 0.05


def test_ulam_doubling_two_bins():
    M = ulam_matrix(DOUBLING, 2)
    assert np.allclose(M, 0.5)
    assert ulam_matrix(DOUBLING, 1).tolist() == [[1.0]]


@pytest.mark.parametrize("m,bins", [(DOUBLING, 64), (TRIPLING, 63), (WIDTHS, 60)])
def test_ulam_rows_and_invariant_vector(m, bins):
    M = ulam_matrix(m, bins)
    assert np.allclose(M.sum(axis=1), 1.0, atol=1e-12)
    u = np.full(bins, 1.0 / bins)
    assert np.allclose(u @ M, u, atol=1e-8)


def test_ulam_smooth_branches():
    c = 0.4

    def mk(lo):
        def fn(x):
            t = 2 * (x - lo)
            return t + c * t * (1 - t) * 0.25

        def dfn(x):
            t = 2 * (x - lo)
            return 2 + c * (1 - 2 * t) * 0.5

        return fn, dfn

    f0, d0 = mk(0.0)
    f1, d1 = mk(0.5)
    m = FullBranchMap([
        SmoothBranch(0.0, 0.5, f0, d0),
        SmoothBranch(0.5, 1.0, f1, d1),
    ])
    assert not m.is_affine
    M = ulam_matrix(m, 64)
    assert np.allclose(M.sum(axis=1), 1.0, atol=1e-9)


def test_bv_norm_indicator():
    assert bv_norm_indicator(IntervalUnion([(F(1, 4), F(1, 2))])) == 2
    annulus = ball(F(1, 3), F(1, 50)).difference(ball(F(1, 3), F(1, 200)))
    assert bv_norm_indicator(annulus) == 4
    assert bv_norm_indicator(IntervalUnion.empty()) == 0
    assert bv_norm_indicator(ball(F(0), F(1, 10))) == 2  # one arc after unwrap


def test_from_spec():
    assert FullBranchMap.from_spec("doubling").d == 2
    assert FullBranchMap.from_spec("tripling").d == 3
    assert FullBranchMap.from_spec("uniform:5").d == 5
    m = FullBranchMap.from_spec("widths:1/2,1/4,1/4")
    assert m.widths == (F(1, 2), F(1, 4), F(1, 4))
    j = '[{"lo": "0", "hi": "1/2", "slope": 2, "intercept": 0},' \
        ' {"lo": "1/2", "hi": "1", "slope": 2, "intercept": -1}]'
    assert FullBranchMap.from_spec(j).is_uniform
    with pytest.raises(ValueError):
        FullBranchMap.from_spec("nonsense")


def test_branch_validation():
    with pytest.raises(ValueError):
        AffineBranch(F(0), F(1, 2), F(3), F(0))  # not onto [0,1)
    with pytest.raises(ValueError):
        FullBranchMap([AffineBranch(F(0), F(1, 2), F(2), F(0))])  # one branch
    with pytest.raises(ValueError):
        FullBranchMap.from_widths([F(1, 2), F(1, 3)])  # widths don't tile
