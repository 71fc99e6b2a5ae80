"""Follow-up probe: quantify the half-step lattice shift in wall ensembles.

The first probe (lattice_gap_probe.py) showed that symmetric jitter alone
leaves the wall marginals about 0.018-0.027 away from the continuum CDF in
KS distance at n = 2048, with an order-1 moment bias of almost exactly
-1/sqrt(2n) per branch.  That points at a half-cell offset: the natural
dequantization cell for a wall walk sitting at even height x is [x, x+2),
not [x-1, x+1).  Equivalently, compare x + 1 + U with U ~ Uniform[-1, 1).

This script measures, at n = 2048:
  * p = 1 wall, exact atoms: jittered KS and moment biases for shifts 0, +1;
  * p = 2, both walls, N = 1e5 sampled: per-branch mean bias in lattice
    units, then jittered branch KS for a few candidate shift vectors;
  * squared-norm KS when the jitter is applied in position space first.

Run:  python3 scripts/lattice_shift_probe.py
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from watermelon.discrete_walk import sample_marginal_batch
from watermelon.exact_count import StarQuery, count_stars
from watermelon.stats_verify import branch_marginal_cdf, ks_statistic, norm_squared_cdf

N_LATTICE = 2048
T_MID = 0.5


def exact_p1_atoms(n: int, t: float, wall: bool) -> tuple[list[int], list[Fraction]]:
    """Exact one-path marginal at time floor(2nt): lattice heights and masses."""
    k = int(math.floor(2 * n * t))
    total = count_stars(StarQuery(1, 2 * n, (0,), wall))
    atoms: list[tuple[int, Fraction]] = []
    lo = 0 if wall else -k
    for x in range(lo, k + 1):
        if (x - k) % 2 != 0:
            continue
        left = count_stars(StarQuery(1, k, (x,), wall))
        if left == 0:
            continue
        right = count_stars(StarQuery(1, 2 * n - k, (x,), wall))
        if right == 0:
            continue
        atoms.append((x, Fraction(left * right, total)))
    xs = [a[0] for a in atoms]
    ps = [a[1] for a in atoms]
    assert sum(ps) == 1
    return xs, ps


def jittered_ks_exact(
    xs: list[int],
    ps: list[Fraction],
    n: int,
    cdf,
    shift: int,
    pts_per_cell: int = 24,
) -> float:
    """KS distance between the jittered shifted atom law and a continuum CDF.

    The jittered variable is (x + shift + U)/sqrt(2n) with U ~ Uniform[-1, 1),
    so its CDF is piecewise linear with knots at cell edges (x + shift -+ 1).
    The sup over each cell is attained on a fine grid (the continuum CDF is
    smooth, so 24 interior points give the sup to well below 1e-4).
    """
    scale = math.sqrt(2 * n)
    worst = 0.0
    cum = Fraction(0)
    for x, p in zip(xs, ps):
        left = float(cum)
        lo = (x + shift - 1) / scale
        hi = (x + shift + 1) / scale
        grid = np.linspace(lo, hi, pts_per_cell)
        ours = left + float(p) * (grid - lo) / (hi - lo)
        theirs = cdf(grid)
        worst = max(worst, float(np.max(np.abs(ours - theirs))))
        cum += p
    return worst


def jittered_moment_exact(
    xs: list[int], ps: list[Fraction], n: int, order: int, shift: int
) -> float:
    """E[((x + shift + U)/sqrt(2n))^order] for the exact atom law."""
    h = 1.0 / math.sqrt(2 * n)
    total = 0.0
    for x, p in zip(xs, ps):
        y = (x + shift) / math.sqrt(2 * n)
        acc = 0.0
        for j in range(0, order + 1, 2):
            acc += math.comb(order, j) * y ** (order - j) * h**j / (j + 1)
        total += float(p) * acc
    return total


def wall_moment_continuum(order: int, t: float) -> float:
    """Closed-form continuum moments of the one-path wall marginal."""
    s = math.sqrt(t * (1 - t))
    if order % 2 == 0:
        m = order // 2
        dfact = 1.0
        for j in range(2 * m + 1, 0, -2):
            dfact *= j
        return dfact * s**order
    m = (order - 1) // 2
    return math.sqrt(2 / math.pi) * 2 ** (m + 1) * math.factorial(m + 1) * s**order


def part_one() -> None:
    print("=== p = 1 wall, exact atoms, n =", N_LATTICE, "===")
    for t in (0.25, 0.5, 0.75):
        xs, ps = exact_p1_atoms(N_LATTICE, t, True)
        F = branch_marginal_cdf(1, t, True, 0)
        for shift in (0, 1):
            ks = jittered_ks_exact(xs, ps, N_LATTICE, F, shift)
            biases = []
            for r in (1, 2, 3, 4):
                got = jittered_moment_exact(xs, ps, N_LATTICE, r, shift)
                want = wall_moment_continuum(r, t)
                biases.append(got - want)
            btxt = " ".join(f"{b:+.2e}" for b in biases)
            print(f"t={t} shift={shift}: jitteredKS={ks:.3e}  moment bias r=1..4: {btxt}")


def quadrature_mean(p: int, t: float, wall: bool, branch: int) -> float:
    """Continuum branch mean via the validated marginal CDF."""
    F = branch_marginal_cdf(p, t, wall, branch)
    sig = math.sqrt(t * (1 - t))
    hi = 10.0 * sig * math.sqrt(p)
    lo = 0.0 if wall else -hi
    grid = np.linspace(lo, hi, 1 << 14 | 1)
    vals = F(grid)
    # E[X] = integral of x dF by midpoint on the CDF increments
    mids = 0.5 * (grid[1:] + grid[:-1])
    return float(np.sum(mids * np.diff(vals))) + lo * vals[0]


def part_two() -> None:
    n = N_LATTICE
    scale = math.sqrt(2 * n)
    reps = 100_000
    rng = np.random.default_rng(271828182)
    for wall in (True, False):
        tag = "wall" if wall else "nowall"
        print(f"=== p = 2 {tag}, sampled N = {reps}, n = {n}, t = {T_MID} ===")
        k = int(math.floor(2 * n * T_MID))
        lattice = sample_marginal_batch(2, n, wall, 424242, reps, [k])[:, 0, :]
        cont_means = [quadrature_mean(2, T_MID, wall, b) for b in (0, 1)]
        emp_means = lattice.mean(axis=0) / scale
        for b in (0, 1):
            bias = emp_means[b] - cont_means[b]
            print(
                f"branch {b}: emp mean {emp_means[b]:+.5f} cont {cont_means[b]:+.5f}"
                f"  bias {bias:+.2e} = {bias * scale:+.3f} lattice units"
            )
        jitter = rng.uniform(-1.0, 1.0, size=lattice.shape)
        cdfs = [branch_marginal_cdf(2, T_MID, wall, b) for b in (0, 1)]
        if wall:
            trials = [(0, 0), (1, 1), (2, 2), (0, 2), (2, 0)]
        else:
            trials = [(0, 0), (-1, 1), (1, -1), (-2, 2), (1, 1)]
        for delta in trials:
            shifted = (lattice + np.asarray(delta) + jitter) / scale
            ks = [ks_statistic(shifted[:, b], cdfs[b]) for b in (0, 1)]
            norm = norm_squared_cdf(2, T_MID, wall)
            ksn = ks_statistic(np.sum(shifted**2, axis=1), norm)
            print(
                f"shift {delta}: branch KS {ks[0]:.4f} {ks[1]:.4f}  normsq KS {ksn:.4f}"
            )


def part_three() -> None:
    print("=== p = 1, squared norm under position jitter, sampled N = 1e5 ===")
    n = N_LATTICE
    scale = math.sqrt(2 * n)
    reps = 100_000
    rng = np.random.default_rng(314159265)
    k = int(math.floor(2 * n * T_MID))
    for wall, shift in ((True, 1), (False, 0)):
        tag = "wall" if wall else "nowall"
        lattice = sample_marginal_batch(1, n, wall, 424243, reps, [k])[:, 0, :]
        jitter = rng.uniform(-1.0, 1.0, size=lattice.shape)
        vals = ((lattice + shift + jitter) / scale) ** 2
        F = norm_squared_cdf(1, T_MID, wall)
        ks = ks_statistic(vals[:, 0], F)
        print(f"{tag} shift={shift}: normsq jittered KS = {ks:.4f}  (null95 at 1e5 = 0.0043)")


if __name__ == "__main__":
    part_one()
    part_two()
    part_three()
