"""Measure how far the discrete n=2048 marginal sits from its continuum limit.

The rescaled cross-section at time t lives on a lattice with spacing
1/sqrt(2n) * 2, so its step CDF cannot get arbitrarily close to a
continuous CDF: the sup distance is at least half the largest atom.
This probe quantifies, exactly for p=1 (atom masses from integer counts)
and empirically for p=2:

  * the largest atom and the resulting floor for the plain KS distance,
  * the sup distance after dequantization (uniform jitter over the
    lattice cell, making the CDF piecewise linear),
  * raw and jittered moment biases against the continuum moments,
  * empirical jittered KS at large N for p=2 and for the norm law.

Run:  python scripts/lattice_gap_probe.py
"""

import math
import sys
from fractions import Fraction

import numpy as np

sys.path.insert(0, "src")

from watermelon.discrete_walk import sample_marginal_batch
from watermelon.exact_count import StarQuery, count_stars
from watermelon.stats_verify import branch_marginal_cdf, ks_statistic, norm_squared_cdf


def exact_p1_atoms(n, k, wall):
    """P(W(k) = x) for the single branch, exactly, as (xs, probs)."""
    total = count_stars(StarQuery(1, 2 * n, (0,), wall))
    xs, probs = [], []
    lo = 0 if wall else -k
    for x in range(lo, k + 1):
        if (x - k) % 2 != 0:
            continue
        fwd = count_stars(StarQuery(1, k, (x,), wall))
        if fwd == 0:
            continue
        back = count_stars(StarQuery(1, 2 * n - k, (x,), wall))
        if back == 0:
            continue
        pr = Fraction(fwd * back, total)
        xs.append(x)
        probs.append(float(pr))
    return np.array(xs, dtype=float), np.array(probs)


def plain_ks(xs, probs, scale, cdf):
    """Sup distance of the step CDF against a continuous CDF."""
    cum = np.cumsum(probs)
    pts = xs / scale
    f = cdf(pts)
    left = np.concatenate([[0.0], cum[:-1]])
    return float(np.max(np.maximum(np.abs(f - cum), np.abs(f - left))))


def jittered_ks(xs, probs, scale, cdf, per_cell=24):
    """Sup distance of the dequantized (piecewise-linear) CDF.

    Jitter is uniform on [-1, 1) in lattice units, so the CDF climbs
    linearly across each cell [x-1, x+1); evaluate on a dense grid.
    """
    cum = np.cumsum(probs)
    left_edge = np.concatenate([[0.0], cum[:-1]])
    worst = 0.0
    for x, c0, c1 in zip(xs, left_edge, cum):
        grid = np.linspace(x - 1.0, x + 1.0, per_cell)
        lin = c0 + (c1 - c0) * (grid - (x - 1.0)) / 2.0
        ref = cdf(grid / scale)
        worst = max(worst, float(np.max(np.abs(lin - ref))))
    return worst


def moment_table(xs, probs, scale, t, wall):
    """Raw and jittered moment bias vs the continuum, orders 1..6."""
    s2 = t * (1 - t)
    if wall:
        # density sqrt(2/pi) s^-3 x^2 exp(-x^2/2s^2) on x > 0:
        # even r=2m -> (2m+1)!! s^r; odd r=2m+1 -> sqrt(2/pi) 2^(m+1) (m+1)! s^r
        def cont(r):
            half = s2 ** (r / 2)
            if r % 2 == 0:
                prod = 1.0
                for j in range(1, r + 2, 2):
                    prod *= j
                return half * prod
            m = (r - 1) // 2
            return half * math.sqrt(2 / math.pi) * 2 ** (m + 1) * math.factorial(m + 1)
    else:
        def cont(r):
            if r % 2 == 1:
                return 0.0
            prod = 1.0
            for j in range(1, r, 2):
                prod *= j
            return prod * s2 ** (r // 2)

    rows = []
    for r in range(1, 7):
        raw = float(np.sum((xs / scale) ** r * probs))
        # jittered: E[(x+U)^r], U uniform on [-1,1): even-order corrections
        jit = 0.0
        for j in range(0, r + 1, 2):
            jit += math.comb(r, j) * float(np.sum(xs ** (r - j) * probs)) / (j + 1)
        jit /= scale ** r
        rows.append((r, raw, jit, cont(r)))
    return rows


def main():
    n = 2048
    scale = math.sqrt(2 * n)
    print(f"== p=1 exact lattice analysis, n={n} ==")
    for wall in (True, False):
        for t in (0.25, 0.5, 0.75):
            k = round(2 * n * t)
            xs, probs = exact_p1_atoms(n, k, wall)
            assert abs(probs.sum() - 1.0) < 1e-12
            cdf = branch_marginal_cdf(1, t, wall, 0)
            max_atom = probs.max()
            pk = plain_ks(xs, probs, scale, cdf)
            jk = jittered_ks(xs, probs, scale, cdf)
            tag = "wall" if wall else "nowall"
            print(f"{tag} t={t}: max_atom={max_atom:.5f} (floor {max_atom/2:.5f}) "
                  f"plainKS={pk:.5f} jitteredKS={jk:.2e}")
            if t == 0.5:
                print("  order |  raw_bias  |  jit_bias  | continuum | SE@1e4")
                for r, raw, jit, cm in moment_table(xs, probs, scale, t, wall):
                    # crude SE estimate from the discrete law itself
                    m2r = float(np.sum((xs / scale) ** (2 * r) * probs))
                    se = math.sqrt(max(m2r - raw * raw, 0.0) / 10_000)
                    print(f"   {r}    | {raw-cm:+.2e} | {jit-cm:+.2e} | {cm:+.5f} | {se:.2e}")
            # norm law at p=1: |X|^2 vs Gamma
            g = norm_squared_cdf(1, t, wall)
            sq_xs = xs ** 2
            order = np.argsort(sq_xs)
            # collapse duplicated +-x atoms for the nowall squared law
            uniq, inv = np.unique(sq_xs[order], return_inverse=True)
            pr2 = np.zeros(uniq.size)
            np.add.at(pr2, inv, probs[order])
            pk2 = plain_ks(uniq, pr2, scale * scale, g)
            print(f"  normsq: plainKS={pk2:.5f}")

    print()
    print("== p=2 empirical (N=100000), t=0.5 ==")
    rng = np.random.default_rng(987654321)
    for wall in (True, False):
        snaps = sample_marginal_batch(2, n, wall, 424242, 100_000, [n])
        jit = snaps[:, 0, :] + rng.uniform(-1.0, 1.0, size=snaps[:, 0, :].shape)
        vals = jit / scale
        for b in (0, 1):
            cdf = branch_marginal_cdf(2, 0.5, wall, b)
            d = ks_statistic(vals[:, b], cdf)
            print(f"wall={wall} branch {b}: jittered KS @1e5 = {d:.5f} "
                  f"(null 95pct approx {1.358/math.sqrt(100_000):.5f})")
        nsq = (vals ** 2).sum(axis=1)
        g = norm_squared_cdf(2, 0.5, wall)
        print(f"wall={wall} normsq jittered KS @1e5 = {ks_statistic(nsq, g):.5f}")


if __name__ == "__main__":
    main()
