"""Extreme-event sets, thresholds, extremal indices and exact probabilities.

Everything here works on ``IntervalUnion`` values, so in rational mode
the exceedance set U(u), the annulus A(q) obtained by removing the first
q dynamical preimages, the survivor sets of finite windows, and the
short-range recurrence sums are all computed with zero tolerance.

The time conventions follow the max/hitting duality: the survivor set
over the window [s, s + ell) is the set of points whose orbit avoids B
at times s, ..., s + ell - 1, so the window [0, n) survivor set of U(u)
is exactly {max of the first n observations <= u}, and its preimage is
{first hitting time > n}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple, Union

from .errors import ComponentBudgetError, InfeasibleError, PeriodUndecidedError
from .intervals import IntervalUnion, as_exact, ball, circle_distance
from .maps import FullBranchMap

DEFAULT_BUDGET = 10 ** 6

NEG_LOG = "neg-log"
POWER = "power"


@dataclass(frozen=True)
class Observable:
    """Observable maximized at ``center`` whose super-level sets are balls.

    Profiles: ``neg-log`` is -log dist(x, center); ``power`` is
    cap - dist(x, center)**beta.  The distance is the circle metric, so
    {value > u} = ball(center, radius_of_level(u)) with a strictly
    decreasing, continuous radius.
    """

    center: Fraction
    profile: str = NEG_LOG
    beta: float = 1.0
    cap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", as_exact(self.center))
        if self.profile not in (NEG_LOG, POWER):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == POWER and self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def sup_value(self) -> float:
        return math.inf if self.profile == NEG_LOG else self.cap

    def value(self, x) -> float:
        dist = float(circle_distance(float(x), float(self.center)))
        if self.profile == NEG_LOG:
            return math.inf if dist == 0 else -math.log(dist)
        return self.cap - dist ** self.beta

    def value_exact_compare(self, x, u_radius: Fraction) -> bool:
        """Exact test of {value(x) > u} via the equivalent radius condition."""
        return circle_distance(as_exact(x), self.center) < u_radius

    def radius_of_level(self, u: float) -> float:
        """Radius of the super-level ball {value > u}."""
        if u >= self.sup_value:
            raise ValueError(f"level {u} at or above the maximum {self.sup_value}")
        if self.profile == NEG_LOG:
            return math.exp(-u)
        return (self.cap - u) ** (1.0 / self.beta)

    def level_of_radius(self, rho: float) -> float:
        if rho <= 0:
            raise ValueError("radius must be positive")
        if self.profile == NEG_LOG:
            return -math.log(rho)
        return self.cap - rho ** self.beta


def exceedance_set(obs: Observable, u: float) -> IntervalUnion:
    """The exceedance set U(u) = {value > u}, a ball around the center.

    The radius comes from inverting the profile at u (floating); use
    ``threshold_for`` when an exactly normalized set is needed.
    """
    return ball(obs.center, obs.radius_of_level(u))


@dataclass(frozen=True)
class ThresholdSchedule:
    """Level u_n chosen so that n * P(U(u_n)) equals tau exactly.

    The ball measure is exactly computable, so the usual asymptotic
    normalization is realized with zero defect: radius = tau / (2n).
    """

    tau: Fraction
    n: int
    radius: Fraction
    u: float
    exceedance: IntervalUnion

    @property
    def p(self) -> Fraction:
        return self.tau / self.n


def threshold_for(obs: Observable, n: int, tau) -> ThresholdSchedule:
    tau = as_exact(tau)
    if tau <= 0:
        raise InfeasibleError("tau must be positive (tau = 0 is degenerate)")
    if tau / n >= 1:
        raise InfeasibleError(f"tau/n = {tau}/{n} >= 1: ball radius would reach 1/2")
    radius = tau / (2 * n)
    U = ball(obs.center, radius)
    u = obs.level_of_radius(float(radius))
    return ThresholdSchedule(tau=tau, n=n, radius=radius, u=u, exceedance=U)


# ---------------------------------------------------------------------------
# annuli, survivor sets, extremal index
# ---------------------------------------------------------------------------


def annulus_set(map_: FullBranchMap, B: IntervalUnion, q: int,
                budget: int = DEFAULT_BUDGET) -> IntervalUnion:
    """A(q) = B minus its first q dynamical preimages of itself.

    Equals B intersect f^(-1)(B^c) ... f^(-q)(B^c); q = 0 returns B.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    A = B
    P = B
    for _ in range(q):
        P = map_.preimage(P)
        if len(P) > budget:
            raise ComponentBudgetError("annulus preimages exceed budget")
        A = A.difference(P)
    return A


def survivor_set(map_: FullBranchMap, B: IntervalUnion, s: int, ell: int,
                 budget: int = DEFAULT_BUDGET) -> IntervalUnion:
    """Points avoiding B at times s, ..., s + ell - 1 (full space if ell = 0)."""
    s, ell = int(math.floor(s)), int(math.floor(ell))
    if s < 0 or ell < 0:
        raise ValueError("window parameters must be nonnegative")
    W = IntervalUnion.full(B.topology, exact=B.is_exact)
    Bc = B.complement()
    for _ in range(ell):
        W = Bc.intersect(map_.preimage(W))
        if len(W) > budget:
            raise ComponentBudgetError(
                "survivor set exceeds component budget; use Monte Carlo")
    for _ in range(s):
        W = map_.preimage(W)
        if len(W) > budget:
            raise ComponentBudgetError(
                "survivor set exceeds component budget; use Monte Carlo")
    return W


def theta_n(map_: FullBranchMap, B: IntervalUnion, q: int):
    """Finite-level extremal index: measure(A(q)) / measure(B)."""
    mB = B.measure()
    if mB <= 0:
        raise ValueError("event has zero measure")
    return annulus_set(map_, B, q).measure() / mB


@dataclass(frozen=True)
class EventFamily:
    """One exceedance event with its annulus, index ratio and return time."""

    U: IntervalUnion
    q: int
    annulus: IntervalUnion
    theta: Union[Fraction, float]
    first_return: Optional[int]


def event_family(map_: FullBranchMap, B: IntervalUnion, q: int,
                 horizon: int = 4096) -> EventFamily:
    A = annulus_set(map_, B, q)
    if A.intersect(B) != A:
        raise ValueError("annulus escaped its ball")
    theta = A.measure() / B.measure()
    R = first_return_time(map_, A, horizon) if A.measure() > 0 else None
    return EventFamily(U=B, q=q, annulus=A, theta=theta, first_return=R)


def _uniform_period(map_: FullBranchMap, zeta: Fraction, cap: int):
    """Closed-form period detection for x -> d*x mod 1 at a rational point.

    Returns the prime period, or None when the point is strictly
    preperiodic (denominator shares a factor with d).
    """
    d = map_.d
    den = zeta.denominator
    if den == 1:
        return 1  # zeta = 0
    if math.gcd(den, d) > 1:
        return None
    # prime period = multiplicative order of d modulo den
    acc = d % den
    for p in range(1, cap + 1):
        if acc == 1:
            return p
        acc = (acc * d) % den
    raise PeriodUndecidedError(f"period of {zeta} exceeds cap {cap}")


def detect_period(map_: FullBranchMap, zeta, cap: int = 64) -> Optional[int]:
    """Prime period of ``zeta`` under the map, or None if not periodic.

    Exact for rational points of affine maps.  For non-uniform maps the
    orbit is iterated up to ``cap``: a return to the start gives the
    period, any other repeat certifies non-periodicity, and otherwise
    the detection is inconclusive and raises.
    """
    map_._require_affine("period detection")
    zeta = as_exact(zeta)
    if map_.is_uniform:
        return _uniform_period(map_, zeta, cap)
    seen = {zeta: 0}
    z = zeta
    for j in range(1, cap + 1):
        z = map_.apply(z, boundary="right")
        if z == zeta:
            return j
        if z in seen:
            return None
        seen[z] = j
    raise PeriodUndecidedError(f"period of {zeta} undecided after {cap} steps")


def theta_limit(map_: FullBranchMap, obs, cap: int = 64) -> Tuple[int, float]:
    """(q, theta) in the limit of small events.

    For a periodic center of prime period p the limit extremal index is
    1 - 1/|DF^p| (the reciprocal of the orbit multiplier); a
    non-periodic center gives q = 0 and theta = 1.
    """
    zeta = obs.center if isinstance(obs, Observable) else as_exact(obs)
    p = detect_period(map_, zeta, cap=cap)
    if p is None:
        return 0, 1.0
    mult = Fraction(1)
    z = zeta
    for _ in range(p):
        mult *= abs(map_.derivative_at(z, boundary="right"))
        z = map_.apply(z, boundary="right")
    return p, float(1 - Fraction(1) / mult)


def theta_limit_exact(map_: FullBranchMap, obs, cap: int = 64):
    """Same as theta_limit but returning theta as an exact Fraction."""
    zeta = obs.center if isinstance(obs, Observable) else as_exact(obs)
    p = detect_period(map_, zeta, cap=cap)
    if p is None:
        return 0, Fraction(1)
    mult = Fraction(1)
    z = zeta
    for _ in range(p):
        mult *= abs(map_.derivative_at(z, boundary="right"))
        z = map_.apply(z, boundary="right")
    return p, 1 - Fraction(1) / mult


def first_return_time(map_: FullBranchMap, A: IntervalUnion,
                      horizon: int = 4096) -> Optional[int]:
    """Smallest j in [1, horizon] with f^j(A) meeting A, else None.

    Computed by an exact forward-image sweep; None is the distinguished
    "exceeds horizon" value, not a failure.
    """
    if A.measure() <= 0:
        raise ValueError("A must have positive measure")
    S = A
    for j in range(1, horizon + 1):
        S = map_.image(S)
        if S.intersects(A):
            return j
    return None


# ---------------------------------------------------------------------------
# pair correlations and the short-range recurrence sum
# ---------------------------------------------------------------------------


def _window_overlap(lo: Fraction, hi: Fraction, c: Fraction, e: Fraction) -> Fraction:
    """measure of ([c, e) + Z) intersect [lo, hi) for 0 <= c < e <= 1."""

    def cum(y: Fraction) -> Fraction:
        k = math.floor(y)
        frac = y - k
        return (e - c) * k + min(max(frac - c, Fraction(0)), e - c)

    return cum(hi) - cum(lo)


def pair_correlation_measure(map_: FullBranchMap, A: IntervalUnion, j: int,
                             budget: int = DEFAULT_BUDGET) -> Fraction:
    """Exact measure(A intersect f^(-j)(A)).

    For uniform maps (x -> d*x mod 1) the j-fold composition is globally
    x -> d^j x mod 1, so the measure reduces to counting translates of A
    inside a magnified window; this closed form has no component blowup
    and stays exact for arbitrarily large j.  Other affine maps fall
    back to budgeted iterated preimages.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    if map_.is_uniform:
        D = map_.d ** j
        total = Fraction(0)
        for lo, hi in A.components:
            wlo, whi = Fraction(lo) * D, Fraction(hi) * D
            for c, e in A.components:
                total += _window_overlap(wlo, whi, Fraction(c), Fraction(e))
        return total / D
    P = map_.preimage_iter(A, j, budget=budget)
    return A.intersect(P).measure()


def dprime_sum(map_: FullBranchMap, obs, n: int, q: int, k: int,
               tau=1, budget: int = DEFAULT_BUDGET,
               variant: str = "theorem") -> Fraction:
    """Short-range recurrence sum of the no-clustering condition.

    n * sum over j of measure(A(q) intersect f^(-j) A(q)), where A(q) is
    the annulus at the level with n * P(U) = tau.  ``variant="theorem"``
    sums j = q+1 .. floor(n/k) - 1; ``variant="corollary"`` sums
    j = 1 .. floor(n/k) (the two ranges stated alongside the two error
    brackets).  An empty range gives 0.
    """
    obs = obs if isinstance(obs, Observable) else Observable(center=as_exact(obs))
    if variant == "theorem":
        j_lo, j_hi = q + 1, n // k - 1
    elif variant == "corollary":
        j_lo, j_hi = 1, n // k
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if j_hi < j_lo:
        return Fraction(0)
    sched = threshold_for(obs, n, tau)
    A = annulus_set(map_, sched.exceedance, q, budget=budget)
    total = Fraction(0)
    for j in range(j_lo, j_hi + 1):
        total += pair_correlation_measure(map_, A, j, budget=budget)
    return n * total


# ---------------------------------------------------------------------------
# exact small-horizon probabilities
# ---------------------------------------------------------------------------


def exact_evl_prob(map_: FullBranchMap, U: IntervalUnion, n: int,
                   budget: int = DEFAULT_BUDGET):
    """P(max of the first n observations <= u) for U = {X_0 > u}, exact."""
    return survivor_set(map_, U, 0, n, budget=budget).measure()


def exact_hts_prob(map_: FullBranchMap, B: IntervalUnion, t: int,
                   budget: int = DEFAULT_BUDGET):
    """P(first hitting time of B > t), exact: the preimage of the
    window-[0, t) survivor set."""
    if t == 0:
        return IntervalUnion.full(B.topology, exact=B.is_exact).measure()
    W = survivor_set(map_, B, 0, t, budget=budget)
    return map_.preimage(W).measure()
