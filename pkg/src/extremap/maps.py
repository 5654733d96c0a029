"""Piecewise full-branch interval maps and their thermodynamic quantities.

A ``FullBranchMap`` is a finite collection of branches whose domains
tile [0, 1) and which each map their domain bijectively onto [0, 1).
Affine branches carry exact rational data, which keeps preimages,
periodic points and annulus constructions exactly computable; smooth
branches (monotone callables) are supported for pointwise evaluation
and Ulam discretization only.

Orbit simulation is symbolic: i.i.d. branch digits with probabilities
equal to the branch widths, reconstructed to a fixed digit depth.
Floating-point forward iteration of an expanding map collapses onto the
dyadic rationals after roughly 53 steps, so it is never used here.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    BoundaryPointError,
    CapExceededError,
    ComponentBudgetError,
    ConvergenceError,
)
from .intervals import CIRCLE, IntervalUnion, as_exact


# ---------------------------------------------------------------------------
# branches and maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineBranch:
    """Affine branch x -> slope*x + intercept mapping [lo, hi) onto [0, 1)."""

    lo: Fraction
    hi: Fraction
    slope: Fraction
    intercept: Fraction

    def __post_init__(self):
        for name in ("lo", "hi", "slope", "intercept"):
            object.__setattr__(self, name, as_exact(getattr(self, name)))
        if not (0 <= self.lo < self.hi <= 1):
            raise ValueError(f"branch domain [{self.lo}, {self.hi}) invalid")
        ends = sorted((self.slope * self.lo + self.intercept,
                       self.slope * self.hi + self.intercept))
        if ends != [Fraction(0), Fraction(1)]:
            raise ValueError("branch is not a bijection onto [0, 1)")
        if abs(self.slope) <= 1:
            raise ValueError("branch is not expanding")

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def value(self, x):
        return self.slope * x + self.intercept

    def inverse(self, y):
        return (y - self.intercept) / self.slope

    def deriv(self, x):
        return self.slope


@dataclass(frozen=True)
class SmoothBranch:
    """Monotone smooth branch given by function and derivative handles."""

    lo: float
    hi: float
    fn: Callable[[float], float]
    dfn: Callable[[float], float]
    increasing: bool = True

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def value(self, x):
        return self.fn(x)

    def deriv(self, x):
        return self.dfn(x)

    def inverse(self, y, tol: float = 1e-14):
        """Invert by bisection on the (monotone) branch."""
        lo, hi = self.lo, self.hi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            v = self.fn(mid)
            if (v < y) == self.increasing:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol:
                break
        return 0.5 * (lo + hi)


class FullBranchMap:
    """Expanding interval map with finitely many full branches."""

    def __init__(self, branches: Sequence, name: str = ""):
        branches = tuple(branches)
        if len(branches) < 2:
            raise ValueError("need at least 2 branches")
        branches = tuple(sorted(branches, key=lambda b: b.lo))
        lo0 = branches[0].lo
        if lo0 != 0:
            raise ValueError("branch domains must start at 0")
        for a, b in zip(branches, branches[1:]):
            if a.hi != b.lo:
                raise ValueError("branch domains must tile [0, 1)")
        if branches[-1].hi != 1:
            raise ValueError("branch domains must end at 1")
        self.branches = branches
        self.name = name or f"{len(branches)}-branch"
        self._los = [b.lo for b in branches]

    # -- structure ---------------------------------------------------------

    @property
    def d(self) -> int:
        return len(self.branches)

    @property
    def is_affine(self) -> bool:
        return all(isinstance(b, AffineBranch) for b in self.branches)

    @property
    def is_uniform(self) -> bool:
        """True for x -> d*x mod 1 (equal widths, increasing branches)."""
        if not self.is_affine:
            return False
        w = self.branches[0].width
        return all(b.width == w and b.slope > 0 for b in self.branches)

    @property
    def widths(self):
        return tuple(b.width for b in self.branches)

    # -- constructors ------------------------------------------------------

    @classmethod
    def uniform(cls, d: int) -> "FullBranchMap":
        """The map x -> d*x mod 1."""
        if d < 2:
            raise ValueError("d must be at least 2")
        branches = [
            AffineBranch(Fraction(i, d), Fraction(i + 1, d), Fraction(d), Fraction(-i))
            for i in range(d)
        ]
        names = {2: "doubling", 3: "tripling"}
        return cls(branches, name=names.get(d, f"uniform-{d}"))

    @classmethod
    def doubling(cls) -> "FullBranchMap":
        return cls.uniform(2)

    @classmethod
    def tripling(cls) -> "FullBranchMap":
        return cls.uniform(3)

    @classmethod
    def from_widths(cls, widths) -> "FullBranchMap":
        """Increasing affine branches with the given (rational) widths."""
        ws = [as_exact(w) for w in widths]
        if sum(ws) != 1:
            raise ValueError("widths must sum to 1")
        branches, lo = [], Fraction(0)
        for w in ws:
            slope = 1 / w
            branches.append(AffineBranch(lo, lo + w, slope, -lo * slope))
            lo += w
        name = "widths-" + ",".join(str(w) for w in ws)
        return cls(branches, name=name)

    @classmethod
    def from_spec(cls, spec) -> "FullBranchMap":
        """Build from a builtin name or an explicit branch list.

        Accepts "doubling", "tripling", "uniform:<d>",
        "widths:w1,w2,..." or a JSON list of
        {"lo":..., "hi":..., "slope":..., "intercept":...} dicts.
        """
        if isinstance(spec, FullBranchMap):
            return spec
        if isinstance(spec, (list, tuple)):
            branches = [
                AffineBranch(as_exact(b["lo"]), as_exact(b["hi"]),
                             as_exact(b["slope"]), as_exact(b["intercept"]))
                for b in spec
            ]
            return cls(branches, name="custom")
        s = str(spec).strip()
        if s.startswith("["):
            return cls.from_spec(json.loads(s))
        if s == "doubling":
            return cls.doubling()
        if s == "tripling":
            return cls.tripling()
        if s.startswith("uniform:"):
            return cls.uniform(int(s.split(":", 1)[1]))
        if s.startswith("widths:"):
            return cls.from_widths(s.split(":", 1)[1].split(","))
        raise ValueError(f"unknown map spec {spec!r}")

    def __repr__(self):
        return f"FullBranchMap({self.name}, d={self.d})"

    # -- pointwise dynamics --------------------------------------------------

    def branch_index(self, x, boundary: str = "error") -> int:
        """Index of the branch whose domain contains x.

        ``boundary="error"`` raises at interior branch boundaries (a
        measure-zero set; callers should resample); ``boundary="right"``
        uses the half-open [lo, hi) convention everywhere.
        """
        if not (0 <= x < 1):
            raise ValueError(f"point {x} outside [0, 1)")
        i = bisect_right(self._los, x) - 1
        if boundary == "error" and x != 0 and x == self.branches[i].lo:
            raise BoundaryPointError(f"{x} is a branch boundary")
        return i

    def apply(self, x, boundary: str = "error"):
        """One step of the map; exact on Fraction inputs of affine maps."""
        br = self.branches[self.branch_index(x, boundary)]
        y = br.value(x)
        zero = y - y
        if y >= 1:
            y = zero  # decreasing branch hits 1 at its left edge; 1 == 0 on the circle
        elif y < 0:
            y = zero  # float rounding guard
        return y

    def derivative_at(self, x, boundary: str = "error"):
        return self.branches[self.branch_index(x, boundary)].deriv(x)

    def orbit(self, x, n: int, boundary: str = "right"):
        """[x, f(x), ..., f^(n-1)(x)]."""
        out = [x]
        for _ in range(n - 1):
            x = self.apply(x, boundary)
            out.append(x)
        return out

    # -- set dynamics (affine only) -----------------------------------------

    def _require_affine(self, what: str):
        if not self.is_affine:
            raise ValueError(f"{what} requires an affine map")

    def preimage(self, S: IntervalUnion) -> IntervalUnion:
        """Full preimage f^(-1)(S), exact for exact inputs."""
        self._require_affine("preimage")
        out = []
        for br in self.branches:
            for lo, hi in S.components:
                a, b = br.inverse(lo), br.inverse(hi)
                if a > b:
                    a, b = b, a
                a = max(a, br.lo)
                b = min(b, br.hi)
                if a < b:
                    out.append((a, b))
        return IntervalUnion._wrap(out, S.topology)

    def image(self, S: IntervalUnion) -> IntervalUnion:
        """Forward image f(S), exact for exact inputs."""
        self._require_affine("image")
        out = []
        for br in self.branches:
            for lo, hi in S.components:
                a = max(lo, br.lo)
                b = min(hi, br.hi)
                if a >= b:
                    continue
                u, v = br.value(a), br.value(b)
                if u > v:
                    u, v = v, u
                zero = u - u
                u = max(u, zero)
                v = min(v, zero + 1)
                if u < v:
                    out.append((u, v))
        return IntervalUnion._wrap(out, S.topology)

    def preimage_iter(self, S: IntervalUnion, j: int,
                      budget: int = 10 ** 6) -> IntervalUnion:
        """f^(-j)(S) with a component-count budget."""
        for _ in range(j):
            S = self.preimage(S)
            if len(S) > budget:
                raise ComponentBudgetError(
                    f"preimage has more than {budget} components; use Monte Carlo"
                )
        return S


# ---------------------------------------------------------------------------
# potentials and thermodynamic sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Observable weighting periodic-orbit sums.

    ``geometric`` is -log|DF|, ``zero`` the constant 0; ``custom`` wraps
    an arbitrary handle with an optional per-cylinder variation bound
    sequence.
    """

    kind: str
    fn: Optional[Callable] = None
    variations: tuple = field(default=())

    @classmethod
    def geometric(cls) -> "Potential":
        return cls(kind="geometric")

    @classmethod
    def zero(cls) -> "Potential":
        return cls(kind="zero")

    @classmethod
    def from_function(cls, fn, variations=()) -> "Potential":
        return cls(kind="custom", fn=fn, variations=tuple(variations))

    def variation(self, n: int, map_: Optional[FullBranchMap] = None):
        """Variation bound V_n; identically 0 for geometric on affine maps."""
        if self.kind == "zero":
            return Fraction(0)
        if self.kind == "geometric":
            if map_ is None or map_.is_affine:
                return Fraction(0)
            raise ValueError("no variation bound for geometric on smooth maps")
        if n <= len(self.variations):
            return self.variations[n - 1]
        return self.variations[-1] if self.variations else None


class PeriodicPoint(NamedTuple):
    word: tuple
    point: Fraction
    multiplier: Fraction
    boundary_degenerate: bool


_PERIODIC_CACHE: dict = {}
_ZSUM_CACHE: dict = {}


def _periodic_points_uniform(map_: FullBranchMap, n: int):
    """Integer fast path for x -> d*x mod 1: the word (i_0 .. i_{n-1})
    fixes x = (sum_j i_j d^(n-1-j)) / (d^n - 1), i.e. the word read as a
    base-d integer over that denominator."""
    import itertools

    d = map_.d
    den = d ** n - 1
    mult = Fraction(d ** n)
    zero = Fraction(0)
    out = []
    for s, word in enumerate(itertools.product(range(d), repeat=n)):
        degenerate = s == den
        point = zero if degenerate else Fraction(s, den)
        out.append(PeriodicPoint(word, point, mult, degenerate))
    return tuple(out)


def periodic_points(map_: FullBranchMap, n: int, cap: int = 20,
                    distinct: bool = False):
    """All period-n symbolic fixed points of an affine map.

    One point per n-cylinder (d^n in total), each solved in closed form
    from the composed affine branch; composition prefixes are shared via
    depth-first traversal.  The compositions whose fixed point lands on 1
    are canonicalized to 0 and flagged boundary-degenerate;
    ``distinct=True`` deduplicates canonical points instead.
    """
    map_._require_affine("periodic_points")
    if n < 1:
        raise ValueError("period must be >= 1")
    if n > cap:
        raise CapExceededError(f"period {n} exceeds cap {cap}")
    key = (id(map_), n)
    cached = _PERIODIC_CACHE.get(key)
    if cached is None or cached[0] is not map_:
        mult_counts: dict = {}
        if map_.is_uniform:
            pts = _periodic_points_uniform(map_, n)
            mult_counts[map_.d ** n] = len(pts)
        else:
            d = map_.d
            integral = all(br.slope.denominator == 1
                           and br.intercept.denominator == 1
                           for br in map_.branches)
            if integral:
                slopes = [int(br.slope) for br in map_.branches]
                intercepts = [int(br.intercept) for br in map_.branches]
                one, zero = 1, 0
            else:
                slopes = [br.slope for br in map_.branches]
                intercepts = [br.intercept for br in map_.branches]
                one, zero = Fraction(1), Fraction(0)
            out = []
            # DFS over words, stack of partial affine compositions (A, B)
            word = [0] * n
            stack = [(one, zero)]
            while True:
                while len(stack) <= n:
                    digit = word[len(stack) - 1]
                    A, B = stack[-1]
                    stack.append((slopes[digit] * A,
                                  slopes[digit] * B + intercepts[digit]))
                A, B = stack[-1]
                x = Fraction(B, 1 - A) if integral else B / (1 - A)
                degenerate = x == 1
                canonical = Fraction(0) if degenerate else x
                mult = abs(A)
                mult_counts[mult] = mult_counts.get(mult, 0) + 1
                out.append(PeriodicPoint(tuple(word), canonical,
                                         Fraction(mult), degenerate))
                i = n - 1
                while i >= 0 and word[i] == d - 1:
                    word[i] = 0
                    i -= 1
                if i < 0:
                    break
                word[i] += 1
                del stack[i + 1:]
            pts = tuple(out)
        cached = (map_, pts, mult_counts)
        _PERIODIC_CACHE[key] = cached
    pts = cached[1]
    if distinct:
        seen, dedup = set(), []
        for p in pts:
            if p.point not in seen:
                seen.add(p.point)
                dedup.append(p)
        return dedup
    return pts


def birkhoff_sum(map_: FullBranchMap, potential: Potential, x, n: int):
    """S_n(potential) along the orbit of x."""
    if potential.kind == "zero":
        return 0.0
    if potential.kind == "geometric":
        total = 0.0
        for pt in map_.orbit(x, n):
            total -= math.log(abs(float(map_.derivative_at(pt, boundary="right"))))
        return total
    total = 0.0
    for pt in map_.orbit(x, n):
        total += float(potential.fn(pt))
    return total


def weighted_periodic_sum(map_: FullBranchMap, potential: Potential, n: int,
                          cap: int = 20):
    """Z_n: sum of exp(Birkhoff sum) over period-n symbolic points.

    Exact (a Fraction) for the geometric and zero potentials on affine
    maps: each cylinder contributes the product of its branch widths,
    respectively weight 1.
    """
    key = (id(map_), n, potential.kind)
    if potential.kind in ("zero", "geometric"):
        cached = _ZSUM_CACHE.get(key)
        if cached is not None and cached[0] is map_:
            return cached[1]
    pts = periodic_points(map_, n, cap=cap)
    if potential.kind == "zero":
        total = Fraction(len(pts))
    elif potential.kind == "geometric":
        # expansions repeat across cylinders; the enumeration keeps
        # per-multiplier counts alongside the points
        counts = _PERIODIC_CACHE[(id(map_), n)][2]
        total = Fraction(0)
        for mult, count in counts.items():
            total += Fraction(count) / mult
    else:
        total = 0.0
        for p in pts:
            total += math.exp(birkhoff_sum(map_, potential, p.point, n))
        return total
    _ZSUM_CACHE[key] = (map_, total)
    return total


def pressure_sequence(map_: FullBranchMap, potential: Potential, n_max: int,
                      cap: int = 20):
    """Finite-n pressure approximants (1/n) log Z_n for n = 1..n_max."""
    out = []
    for n in range(1, n_max + 1):
        z = float(weighted_periodic_sum(map_, potential, n, cap=cap))
        out.append(math.log(z) / n)
    return out


# ---------------------------------------------------------------------------
# indicator BV norm
# ---------------------------------------------------------------------------


def bv_norm_indicator(S: IntervalUnion) -> int:
    """Variation of the indicator of S: two jumps per unwrapped component.

    On the circle a pair of components touching 0 and 1 is one arc after
    unwrapping; a two-component annulus therefore comes out at 4 and the
    full space at 0.
    """
    comps = S.components
    c = len(comps)
    if c == 0:
        return 0
    if S.topology == CIRCLE and comps[0][0] == 0 and comps[-1][1] == 1:
        c -= 1
    return 2 * c


# ---------------------------------------------------------------------------
# symbolic sampling
# ---------------------------------------------------------------------------


@dataclass
class SymbolicOrbit:
    """Orbit represented by its branch digit stream.

    ``windows[k]`` encodes digits k..k+depth-1 as an integer in base-d
    (uniform maps), so the reconstructed point at time k is
    windows[k]/denominator, accurate to 1/denominator.
    """

    digits: np.ndarray
    points: np.ndarray
    depth: int
    windows: Optional[np.ndarray] = None
    denominator: Optional[int] = None

    def __len__(self):
        return len(self.points)


def symbolic_sample(map_: FullBranchMap, rng: np.random.Generator,
                    horizon: int, depth: int = 64) -> SymbolicOrbit:
    """Sample a statistically exact orbit of a Lebesgue-random point.

    Digits are i.i.d. with probabilities equal to the branch widths; the
    point at time k is reconstructed from digits k..k+depth-1 and lies
    in the corresponding depth-k cylinder.
    """
    map_._require_affine("symbolic_sample")
    d = map_.d
    total = horizon + depth
    if map_.is_uniform:
        digits = rng.integers(0, d, size=total).astype(np.int64)
        if d == 2:
            eff = min(depth, 62)
        else:
            eff = min(depth, int(62 / math.log2(d)))
        win = np.lib.stride_tricks.sliding_window_view(digits, eff)[:horizon]
        powers = d ** np.arange(eff - 1, -1, -1, dtype=object)
        powers = np.array([int(p) for p in powers], dtype=np.int64)
        windows = win @ powers
        denom = d ** eff
        points = windows.astype(np.float64) / float(denom)
        return SymbolicOrbit(digits[:horizon], points, eff, windows, denom)
    cum = np.cumsum([float(w) for w in map_.widths])
    u = rng.random(total)
    digits = np.searchsorted(cum, u, side="right").astype(np.int64)
    digits[digits >= d] = d - 1
    los = np.array([float(b.lo) for b in map_.branches])
    ws = np.array([float(b.width) for b in map_.branches])
    pts = np.empty(horizon)
    y = 0.5
    # backward Horner: y_k = lo[d_k] + w[d_k] * y_{k+1}
    for k in range(total - 1, -1, -1):
        y = los[digits[k]] + ws[digits[k]] * y
        if k < horizon:
            pts[k] = y
    return SymbolicOrbit(digits[:horizon], pts, depth)


# ---------------------------------------------------------------------------
# Ulam discretization
# ---------------------------------------------------------------------------


def ulam_matrix(map_: FullBranchMap, bins: int) -> np.ndarray:
    """Row-stochastic Ulam matrix on the uniform partition into ``bins`` cells.

    Entry (i, j) is m(bin_i intersect f^(-1)(bin_j)) / m(bin_i); for
    affine maps the overlaps are computed with exact rational arithmetic
    before conversion to float.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    N = bins
    M = np.zeros((N, N))
    if map_.is_affine:
        for br in map_.branches:
            for j in range(N):
                a = br.inverse(Fraction(j, N))
                b = br.inverse(Fraction(j + 1, N))
                if a > b:
                    a, b = b, a
                a, b = max(a, br.lo), min(b, br.hi)
                if a >= b:
                    continue
                i0 = int(a * N)
                i1 = min(int(math.ceil(b * N)), N)
                for i in range(i0, i1):
                    lo = max(a, Fraction(i, N))
                    hi = min(b, Fraction(i + 1, N))
                    if lo < hi:
                        M[i, j] += float((hi - lo) * N)
        return M
    for br in map_.branches:
        edges = [br.inverse(j / N) for j in range(N + 1)]
        for j in range(N):
            a, b = sorted((edges[j], edges[j + 1]))
            a, b = max(a, br.lo), min(b, br.hi)
            if a >= b:
                continue
            i0, i1 = int(a * N), min(int(b * N) + 1, N)
            for i in range(i0, i1):
                lo, hi = max(a, i / N), min(b, (i + 1) / N)
                if lo < hi:
                    M[i, j] += (hi - lo) * N
    return M


def save_matrix_csv(matrix: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def open_system_decay_rate(matrix: np.ndarray, keep: np.ndarray,
                           tol: float = 1e-12, max_iter: int = 100000) -> float:
    """-log(spectral radius) of the matrix restricted to ``keep`` indices.

    Power iteration on the left eigenvector (distributions evolve by
    left multiplication for a row-stochastic matrix).
    """
    if keep.size == 0:
        return math.inf
    Q = matrix[np.ix_(keep, keep)]
    v = np.full(len(keep), 1.0 / len(keep))
    lam, stable = -1.0, 0
    for _ in range(max_iter):
        w = v @ Q
        new = w.sum()
        if new <= 0:
            return math.inf
        w /= new
        stable = stable + 1 if abs(new - lam) <= tol * max(new, 1e-300) else 0
        if stable >= 3:
            return -math.log(new)
        lam, v = new, w
    raise ConvergenceError("power iteration did not converge; degenerate hole?")
