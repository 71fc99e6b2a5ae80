"""Uniform sampling of discrete watermelons and their diffusive rescaling.

A (p, 2n)-watermelon is sampled one time step at a time: standing at
cross-section x after k steps, each of the 2^p candidate sign vectors eps
gets weight N(2n-k-1, x+eps), the number of ways to finish the
configuration, and the next step is drawn from the normalized weights.
Telescoping these conditionals gives every complete watermelon probability
1/N_total exactly, so the sampler is uniform by construction.

Weights are never materialized as full counts.  For a fixed remaining
length M every candidate endpoint differs from its neighbors by small
rational factors, so the relative weight of each sign vector is a product
of small nonnegative integers (see step_weights).  Invalid moves pick up
a literal zero factor, which is why no admissibility filtering is needed
before normalization.

Randomness: numpy's PCG64 underlies everything.  Replica r of a batch
draws from Generator(PCG64(SeedSequence((base_seed, r)))), and the scalar
sampler with seed s is bit-identical to replica 0 under base seed s.  Each
replica pre-draws one 53-bit integer per time step; the inverse-CDF
selection compares these integers against exact scaled cumulative weights
(scalar path) or float cumulative weights (batch path), with ties
resolving to the lower move index.  Moves are indexed by bit mask: bit i
set means branch i steps up.
"""

import csv
import math
from bisect import bisect_left
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

U_BITS = 53
_U_DEN = 1 << U_BITS

# replica-chunk size for batch sampling; results are chunk-invariant
# because every replica owns its seed stream
DEFAULT_CHUNK = 1024


def derive_replica_rng(base_seed, replica):
    """The named per-replica stream: PCG64 seeded by SeedSequence((base, r))."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((base_seed, replica))))


def _moves(p):
    """All 2^p sign vectors, indexed by mask; bit i set = branch i up."""
    return tuple(
        tuple(1 if (mask >> i) & 1 else -1 for i in range(p)) for mask in range(1 << p)
    )


_moves = lru_cache(maxsize=None)(_moves)


def step_weights(p, n, wall, k, x):
    """Integer weights for each of the 2^p moves out of cross-section x at time k.

    weights[mask] is proportional to the number of completions after the
    corresponding move; the shared proportionality constant cancels on
    normalization.  Invalid moves get weight exactly 0.
    """
    M = 2 * n - k - 1
    out = []
    for eps in _moves(p):
        e = tuple(a + s for a, s in zip(x, eps))
        w = 1
        for i in range(p):
            if eps[i] == 1:
                f = (M - e[i]) // 2 + p
            elif wall:
                f = (M + e[i]) // 2 + p + 1
            else:
                f = (M + e[i]) // 2 + 1
            if f <= 0:
                w = 0
                break
            w *= f
            if wall:
                w *= e[i] + 1
        if w > 0:
            for i in range(p):
                for j in range(i + 1, p):
                    w *= e[j] - e[i]
                    if wall:
                        w *= e[j] + e[i] + 2
        out.append(max(w, 0))
    return out


@lru_cache(maxsize=1 << 17)
def _cdf_table(p, n, wall, k, x):
    """Scaled cumulative weights for exact inverse-CDF selection.

    Returns (scaled_cum, total): scaled_cum[j] = (w_0+...+w_j) << 53.
    A 53-bit uniform integer u selects bisect_left(scaled_cum, u*total),
    which is the smallest j with u/2^53 <= cum_j/total; an exact tie
    lands on the lower index.
    """
    weights = step_weights(p, n, wall, k, x)
    total = sum(weights)
    if total <= 0:
        raise ValueError(f"no admissible continuation from {x} at step {k}")
    cum = []
    c = 0
    for w in weights:
        c += w
        cum.append(c << U_BITS)
    return tuple(cum), total


@dataclass(frozen=True)
class WatermelonPath:
    """One discrete watermelon: integer branch positions on the time grid 0..2n."""

    p: int
    n: int
    positions: np.ndarray
    wall: bool

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        object.__setattr__(self, "positions", pos)
        if self.p < 1 or self.n < 1:
            raise ValueError("need p >= 1 and n >= 1")
        if pos.shape != (2 * self.n + 1, self.p):
            raise ValueError(f"positions shape {pos.shape} != {(2 * self.n + 1, self.p)}")
        start = np.arange(0, 2 * self.p, 2)
        if not (np.array_equal(pos[0], start) and np.array_equal(pos[-1], start)):
            raise ValueError("endpoints must be pinned at (0, 2, ..., 2p-2)")
        if self.p > 1 and not (pos[:, :-1] < pos[:, 1:]).all():
            raise ValueError("branches must stay strictly ordered")
        if not (np.abs(np.diff(pos, axis=0)) == 1).all():
            raise ValueError("every step must move each branch by exactly one")
        if self.wall and pos.min() < 0:
            raise ValueError("wall paths must stay nonnegative")


@dataclass(frozen=True)
class RescaledPath:
    """Diffusively rescaled view: times k/(2n), values positions/sqrt(2n)."""

    times: np.ndarray
    values: np.ndarray

    @property
    def n(self):
        return (self.values.shape[0] - 1) // 2


def rescale(path):
    two_n = 2 * path.n
    return RescaledPath(
        times=np.arange(two_n + 1) / two_n,
        values=path.positions / math.sqrt(two_n),
    )


def marginal_at(path, t):
    """Cross-section of a rescaled path at time t: values[floor(2n t)]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    return path.values[int(math.floor(2 * path.n * t))]


def sample_watermelon(p, n, wall, seed):
    """Draw one watermelon exactly uniformly.

    Equals replica 0 of sample_path_batch under base seed `seed`.  Every
    configuration with p >= 1, n >= 1 admits at least one watermelon (the
    nested mirror paths), so no zero-count rejection can trigger in
    domain; out-of-domain parameters raise.
    """
    if p < 1 or n < 1:
        raise ValueError("need p >= 1 and n >= 1")
    rng = derive_replica_rng(seed, 0)
    u = rng.integers(0, _U_DEN, size=2 * n, dtype=np.int64)
    moves = _moves(p)
    pos = np.empty((2 * n + 1, p), dtype=np.int64)
    x = tuple(range(0, 2 * p, 2))
    pos[0] = x
    for k in range(2 * n):
        cum, total = _cdf_table(p, n, wall, k, x)
        j = bisect_left(cum, int(u[k]) * total)
        x = tuple(a + s for a, s in zip(x, moves[j]))
        pos[k + 1] = x
    return WatermelonPath(p=p, n=n, positions=pos, wall=wall)


def _batch_core(p, n, wall, base_seed, replicas, k_indices, collect_paths, chunk):
    if p < 1 or n < 1 or replicas < 1:
        raise ValueError("need p >= 1, n >= 1, replicas >= 1")
    two_n = 2 * n
    ks = sorted(set(int(k) for k in k_indices))
    if ks and not (0 <= ks[0] and ks[-1] <= two_n):
        raise ValueError("snapshot indices must lie in [0, 2n]")
    k_slot = {k: s for s, k in enumerate(ks)}

    eps_all = np.array(_moves(p), dtype=np.int64)  # (2^p, p)
    nmask = 1 << p
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]

    snaps = np.empty((replicas, len(ks), p), dtype=np.int64)
    paths = np.empty((replicas, two_n + 1, p), dtype=np.int64) if collect_paths else None
    if collect_paths and paths.size > 60_000_000:
        raise ValueError("path collection for this batch would be too large; "
                         "use snapshots instead")
    start = np.arange(0, 2 * p, 2, dtype=np.int64)

    for lo in range(0, replicas, chunk):
        hi = min(lo + chunk, replicas)
        b = hi - lo
        u = np.empty((b, two_n), dtype=np.int64)
        for r in range(lo, hi):
            u[r - lo] = derive_replica_rng(base_seed, r).integers(
                0, _U_DEN, size=two_n, dtype=np.int64
            )
        x = np.tile(start, (b, 1))
        if 0 in k_slot:
            snaps[lo:hi, k_slot[0]] = x
        if collect_paths:
            paths[lo:hi, 0] = x
        w = np.empty((b, nmask))
        for k in range(two_n):
            M = two_n - k - 1
            for mask in range(nmask):
                e = x + eps_all[mask]
                wm = np.ones(b)
                for i in range(p):
                    if (mask >> i) & 1:
                        f = (M - e[:, i]) * 0.5 + p
                    else:
                        f = (M + e[:, i]) * 0.5 + (p + 1 if wall else 1)
                    wm *= np.maximum(f, 0.0)
                    if wall:
                        wm *= e[:, i] + 1
                for i, j in pairs:
                    wm *= e[:, j] - e[:, i]
                    if wall:
                        wm *= e[:, j] + e[:, i] + 2
                w[:, mask] = wm
            cum = np.cumsum(w, axis=1)
            target = (u[:, k].astype(np.float64) / _U_DEN) * cum[:, -1]
            j = np.sum(cum < target[:, None], axis=1)
            x = x + eps_all[j]
            if k + 1 in k_slot:
                snaps[lo:hi, k_slot[k + 1]] = x
            if collect_paths:
                paths[lo:hi, k + 1] = x
    return snaps, paths


def sample_marginal_batch(p, n, wall, base_seed, replicas, k_indices,
                          chunk=DEFAULT_CHUNK):
    """Cross-sections of many independent watermelons at the requested times.

    Runs the same conditional chain as sample_watermelon but vectorized
    across replicas with float weights (relative rounding ~1e-15, far
    below the 2^-53 uniform resolution; agreement with the exact sampler
    is tested at n = 512 and spot-checked at n = 2048).  Returns integer
    positions with shape (replicas, len(k_indices), p), snapshot times
    sorted ascending.  Replica r depends only on (base_seed, r), so the
    result is independent of chunking and of any outer work splitting.
    """
    snaps, _ = _batch_core(p, n, wall, base_seed, replicas, k_indices, False, chunk)
    return snaps


def sample_path_batch(p, n, wall, base_seed, replicas, chunk=DEFAULT_CHUNK):
    """Full integer paths for a small batch, shape (replicas, 2n+1, p)."""
    _, paths = _batch_core(p, n, wall, base_seed, replicas, (), True, chunk)
    return paths


def write_path_csv(path, fileobj):
    """Write one watermelon as CSV rows k,branch_1,...,branch_p."""
    writer = csv.writer(fileobj)
    writer.writerow(["k"] + [f"branch_{i + 1}" for i in range(path.p)])
    for k, row in enumerate(path.positions):
        writer.writerow([k] + [int(v) for v in row])


def read_path_csv(fileobj, wall):
    """Inverse of write_path_csv; wall is metadata the CSV does not carry."""
    reader = csv.reader(fileobj)
    header = next(reader)
    p = len(header) - 1
    rows = [[int(v) for v in row[1:]] for row in reader]
    n = (len(rows) - 1) // 2
    return WatermelonPath(p=p, n=n, positions=np.array(rows), wall=wall)
