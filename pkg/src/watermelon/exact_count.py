"""Exact counting of stars and watermelons, and exact step probabilities.

A star is a family of p paths of m steps, each step +-1, the i-th path
starting at height 2i-2, mutually non-touching at every integer time,
with free endpoints; with the wall condition every path must in addition
stay nonnegative.  A watermelon of length 2n is a star of length 2n whose
endpoints return to the starting heights (0, 2, ..., 2p-2).

Counts are evaluated through closed product/factorial formulas using
integer arithmetic only, so they are exact for any size.  A brute-force
path enumerator over the full 2^(p*m) step space serves as the
independent oracle on small instances.  The exact one-step conditional
probability of a uniformly random watermelon is the ratio of two star
counts; it is returned as an exact rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

#: bound on p*m for the brute-force enumerator (raw search space is 2^(p*m))
BRUTE_FORCE_BUDGET = 24

#: star length above which the floating count path is preferred by samplers
FLOAT_SWITCHOVER_LENGTH = 4096


class BruteForceBudgetError(ValueError):
    """Raised when a brute-force query exceeds the configured search budget."""


_fact = lru_cache(maxsize=None)(math.factorial)


@dataclass(frozen=True)
class StarQuery:
    """A star-counting query: p branches, m steps, fixed endpoints.

    Endpoints must be strictly increasing, share the parity of m (starting
    heights are even and each step flips parity), and be nonnegative when
    the wall condition is on.
    """

    p: int
    m: int
    endpoints: tuple[int, ...]
    wall: bool

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(int(e) for e in self.endpoints))
        if self.p < 1:
            raise ValueError(f"branch count must be positive, got p={self.p}")
        if self.m < 0:
            raise ValueError(f"path length must be nonnegative, got m={self.m}")
        if len(self.endpoints) != self.p:
            raise ValueError(
                f"expected {self.p} endpoints, got {len(self.endpoints)}"
            )
        for lo, hi in zip(self.endpoints, self.endpoints[1:]):
            if lo >= hi:
                raise ValueError(
                    f"endpoints must be strictly increasing, got {self.endpoints}"
                )
        for e in self.endpoints:
            if (e - self.m) % 2 != 0:
                raise ValueError(
                    f"endpoint parity mismatch: {e} with length {self.m}"
                )
        if self.wall and self.endpoints[0] < 0:
            raise ValueError(
                f"wall queries need nonnegative endpoints, got {self.endpoints}"
            )


def count_stars_wall(q: StarQuery) -> int:
    """Exact number of stars with wall ending at q.endpoints.

    Product form: up to the power of two, the count is
    prod_i (e_i + 1) * prod_{i<j} (e_j - e_i)(e_j + e_i + 2)
    times a factorial ratio per branch.  Evaluated with exact integers;
    a negative factorial argument means the endpoint set is unreachable
    and the count is 0.
    """
    if not q.wall:
        raise ValueError("count_stars_wall needs a wall=True query")
    p, m, e = q.p, q.m, q.endpoints
    numer = 1
    denom = 1 << (p * p - p)
    for i, ei in enumerate(e, start=1):
        down = (m - ei) // 2 + p - 1
        if down < 0:
            return 0
        numer *= _fact(m + 2 * i - 2)
        denom *= _fact((m + ei) // 2 + p) * _fact(down)
    for ei in e:
        numer *= ei + 1
    for i in range(p):
        for j in range(i + 1, p):
            numer *= (e[j] - e[i]) * (e[j] + e[i] + 2)
    if numer % denom:
        raise ArithmeticError(
            f"non-integral star count for {q}; formula inconsistency"
        )
    return numer // denom


def count_stars_nowall(q: StarQuery) -> int:
    """Exact number of stars without wall ending at q.endpoints.

    Product form: 2^(-p(p-1)/2) * prod_{i<j}(e_j - e_i) times a factorial
    ratio per branch.  Negative factorial arguments mean count 0.
    """
    if q.wall:
        raise ValueError("count_stars_nowall needs a wall=False query")
    p, m, e = q.p, q.m, q.endpoints
    numer = 1
    denom = 1 << (p * (p - 1) // 2)
    for i, ei in enumerate(e, start=1):
        up = (m + ei) // 2
        down = (m - ei) // 2 + p - 1
        if up < 0 or down < 0:
            return 0
        numer *= _fact(m - i + p)
        denom *= _fact(up) * _fact(down)
    for i in range(p):
        for j in range(i + 1, p):
            numer *= e[j] - e[i]
    if numer % denom:
        raise ArithmeticError(
            f"non-integral star count for {q}; formula inconsistency"
        )
    return numer // denom


def count_stars(q: StarQuery) -> int:
    """Dispatch on the wall flag of the query."""
    return count_stars_wall(q) if q.wall else count_stars_nowall(q)


def watermelon_start(p: int) -> tuple[int, ...]:
    """The pinned start/end configuration (0, 2, ..., 2p-2)."""
    return tuple(2 * i for i in range(p))


def count_watermelons(p: int, n: int, wall: bool) -> int:
    """Exact number of watermelons: stars of length 2n ending at the start."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    return count_stars(StarQuery(p, 2 * n, watermelon_start(p), wall))


def _count_or_zero(p: int, m: int, e: tuple[int, ...], wall: bool) -> int:
    """Star count extended by 0 to endpoint tuples violating the chamber."""
    for lo, hi in zip(e, e[1:]):
        if lo >= hi:
            return 0
    if wall and e[0] < 0:
        return 0
    return count_stars(StarQuery(p, m, e, wall))


# ---------------------------------------------------------------------------
# brute force oracle


def _enumerate_endpoint_counts(p, m, wall):
    """Depth-first enumeration of every admissible star of length m.

    Walks the full tree of step assignments (2^p sign choices per time
    step), pruning branches as soon as two paths touch or the wall is
    violated, and tallies the endpoint configuration of every surviving
    leaf.  Returns a dict mapping endpoint tuples to exact counts.
    """
    moves = []
    for mask in range(1 << p):
        moves.append(tuple(1 if mask & (1 << i) else -1 for i in range(p)))
    counts: dict[tuple[int, ...], int] = {}
    start = watermelon_start(p)

    def descend(pos, depth):
        if depth == m:
            counts[pos] = counts.get(pos, 0) + 1
            return
        for mv in moves:
            nxt = tuple(x + s for x, s in zip(pos, mv))
            if wall and nxt[0] < 0:
                continue
            ok = True
            for a, b in zip(nxt, nxt[1:]):
                if a >= b:
                    ok = False
                    break
            if ok:
                descend(nxt, depth + 1)

    descend(start, 0)
    return counts


_enumerate_endpoint_counts = lru_cache(maxsize=64)(_enumerate_endpoint_counts)


def enumerate_brute_force(q: StarQuery) -> int:
    """Count stars by exhaustive enumeration; the test oracle.

    Independent of the closed forms: nothing is shared with them except
    the admissibility predicate.  Rejects queries whose raw search space
    2^(p*m) exceeds the budget.
    """
    if q.p * q.m > BRUTE_FORCE_BUDGET:
        raise BruteForceBudgetError(
            f"p*m = {q.p * q.m} exceeds brute-force budget {BRUTE_FORCE_BUDGET}"
        )
    return _enumerate_endpoint_counts(q.p, q.m, q.wall).get(q.endpoints, 0)


# ---------------------------------------------------------------------------
# exact one-step transition probabilities


def is_valid_cross_section(p, n, k, x, wall) -> bool:
    """True when x can be the time-k cross-section of some (p,2n)-watermelon."""
    if not (0 <= k <= 2 * n) or len(x) != p:
        return False
    for lo, hi in zip(x, x[1:]):
        if lo >= hi:
            return False
    if wall and x[0] < 0:
        return False
    for i, xi in enumerate(x):
        if (xi - k - 2 * i) % 2 != 0:
            return False
    # reachable from the pinned start, and completable back to it
    if _count_or_zero(p, k, tuple(x), wall) == 0:
        return False
    return _count_or_zero(p, 2 * n - k, tuple(x), wall) > 0


def step_probability(p, n, k, x, eps, wall) -> Fraction:
    """Exact conditional probability of the step eps for a uniform watermelon.

    Given that a uniformly drawn (p,2n)-watermelon passes through integer
    positions x at time k, the probability that branch i next moves by
    eps_i is the ratio of completion counts

        N(2n-k-1, x+eps) / N(2n-k, x)

    where N counts stars (by time reversal, completions from x in j steps
    are stars of length j ending at x).  The ratio is returned as an exact
    Fraction; over all 2^p sign vectors the probabilities sum to exactly 1.
    """
    x = tuple(int(v) for v in x)
    eps = tuple(int(s) for s in eps)
    if len(eps) != p or any(s not in (-1, 1) for s in eps):
        raise ValueError(f"eps must be a vector of +-1, got {eps}")
    if not 0 <= k < 2 * n:
        raise ValueError(f"step index k={k} outside [0, 2n) with n={n}")
    if not is_valid_cross_section(p, n, k, x, wall):
        raise ValueError(
            f"invalid cross-section x={x} at time k={k} for (p={p}, n={n}, wall={wall})"
        )
    denom = _count_or_zero(p, 2 * n - k, x, wall)
    nxt = tuple(a + s for a, s in zip(x, eps))
    numer = _count_or_zero(p, 2 * n - k - 1, nxt, wall)
    return Fraction(numer, denom)


def step_distribution(p, n, k, x, wall):
    """All one-step probabilities at once, ordered by sign-vector index.

    Sign vectors are ordered by their bit mask (bit i set means branch i
    steps up).  Returns a list of (eps, Fraction) pairs including the
    zero-probability moves; the fractions sum to exactly 1.
    """
    x = tuple(int(v) for v in x)
    if not is_valid_cross_section(p, n, k, x, wall):
        raise ValueError(
            f"invalid cross-section x={x} at time k={k} for (p={p}, n={n}, wall={wall})"
        )
    denom = _count_or_zero(p, 2 * n - k, x, wall)
    out = []
    for mask in range(1 << p):
        eps = tuple(1 if mask & (1 << i) else -1 for i in range(p))
        nxt = tuple(a + s for a, s in zip(x, eps))
        out.append((eps, Fraction(_count_or_zero(p, 2 * n - k - 1, nxt, wall), denom)))
    return out


# ---------------------------------------------------------------------------
# factorial-ratio asymptotics


def _ratio_grid_arguments(n, t, a, b, c, d):
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    k = round(n * t)
    beta_real = b * math.sqrt(2 * n)
    beta = round(beta_real)
    if abs(beta_real - beta) > 1e-9:
        raise ValueError(
            f"b*sqrt(2n) = {beta_real} is not an integer; adjust b to the grid"
        )
    if 2 * k + a < 0 or k + beta + c < 0 or k - beta + d < 0:
        raise ValueError("factorial argument would be negative")
    return k, beta


def factorial_ratio_log_exact(n, t, a, b, c, d) -> float:
    """log of (2k+a)! / ((k+b*sqrt(2n)+c)! (k-b*sqrt(2n)+d)!) with k=round(nt).

    The factorials have exact integer arguments; the log is evaluated by
    lgamma, so this side is exact up to float rounding and serves as the
    reference when measuring the asymptotic's relative error.
    """
    k, beta = _ratio_grid_arguments(n, t, a, b, c, d)
    return (
        math.lgamma(2 * k + a + 1)
        - math.lgamma(k + beta + c + 1)
        - math.lgamma(k - beta + d + 1)
    )


def stirling_ratio_log_asymptotic(n, t, a, b, c, d) -> float:
    """log of the closed asymptotic form for the factorial ratio.

    The approximation is (2^(2k+a)/sqrt(pi)) (nt)^(a-c-d-1/2) e^(-2b^2/t)
    with k = round(nt); its relative error decays like 1/sqrt(n),
    uniformly over t in (0, 1] and bounded a, b, c, d.
    """
    k, _beta = _ratio_grid_arguments(n, t, a, b, c, d)
    return (
        (2 * k + a) * math.log(2.0)
        - 0.5 * math.log(math.pi)
        + (a - c - d - 0.5) * math.log(n * t)
        - 2.0 * b * b / t
    )


def stirling_ratio_asymptotic(n, t, a, b, c, d) -> float:
    """The asymptotic factorial-ratio value itself (not its log).

    Overflows float range once 2k+a is large (k beyond ~500); the log
    variants carry the acceptance-grade error measurement for large n.
    """
    return math.exp(stirling_ratio_log_asymptotic(n, t, a, b, c, d))


def stirling_ratio_relative_error(n, t, a, b, c, d) -> float:
    """|exact/asymptotic - 1| computed stably in log space."""
    return abs(
        math.expm1(
            factorial_ratio_log_exact(n, t, a, b, c, d)
            - stirling_ratio_log_asymptotic(n, t, a, b, c, d)
        )
    )
