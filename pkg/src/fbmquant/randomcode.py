"""Random-codebook coding: first hit into an i.i.d. pool under zeta weights.

The pool carries the weight p_n = (6/pi^2) n^{-2} on its n-th entry (1-based),
so a hit at index T costs 2 log T + log(pi^2/6) nats regardless of the pool's
actual size.  Misses are explicit: the infimum over an exhausted pool is
reported as no hit, never silently replaced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .codebook import CodeLength
from .paths import RngSpec, SampledPath, check_hurst, sample_fbm_batch

__all__ = [
    "ZETA_NORM",
    "RandomPool",
    "RandomCode",
    "SmallBallEstimate",
    "zeta_weights",
    "sample_pool",
    "first_hit",
    "encode_at_rate",
    "fallback_on_miss",
    "smallball_conditional",
]

# sum of n^{-2} over n >= 1
ZETA_NORM = math.pi**2 / 6.0

POOL_CAP = 100_000


def zeta_weights(n: int) -> float:
    """Weight of the n-th pool entry, p_n = (6/pi^2) / n^2 for n >= 1."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"entry index must be a positive integer, got {n!r}")
    return 1.0 / (ZETA_NORM * float(n) ** 2)


class RandomPool:
    """An i.i.d. FBM codebook, pinned by its RngSpec.

    Entries are stored as a stacked value matrix; `paths` materializes them
    as SampledPath objects on demand (pools can hold up to 1e5 entries, so
    the matrix is the working representation).
    """

    def __init__(self, matrix: np.ndarray, hurst: float, n_per_unit: int, rng: RngSpec):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != n_per_unit + 1:
            raise ValueError("pool matrix must be (size, n_per_unit + 1)")
        if matrix.shape[0] < 1:
            raise ValueError("pool must hold at least one entry")
        self.matrix = matrix
        self.hurst = check_hurst(hurst)
        self.n_per_unit = int(n_per_unit)
        self.rng = rng
        self._paths: list[SampledPath] | None = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def paths(self) -> list[SampledPath]:
        if self._paths is None:
            self._paths = [
                SampledPath(
                    hurst=self.hurst, horizon=1, n_per_unit=self.n_per_unit, values=row
                )
                for row in self.matrix
            ]
        return self._paths

    def entry(self, index: int) -> SampledPath:
        """Pool entry by 1-based index (the index that carries the weight)."""
        if not (1 <= index <= self.size):
            raise ValueError(f"1-based entry index out of range: {index}")
        return SampledPath(
            hurst=self.hurst,
            horizon=1,
            n_per_unit=self.n_per_unit,
            values=self.matrix[index - 1],
        )


def sample_pool(hurst: float, size: int, n_per_unit: int, rng: RngSpec) -> RandomPool:
    """Draw `size` independent FBM paths on [0, 1] as a codebook."""
    if not (1 <= size <= POOL_CAP):
        raise ValueError(f"pool size must lie in [1, {POOL_CAP}], got {size!r}")
    matrix = sample_fbm_batch(hurst, 1, n_per_unit, rng, size)
    return RandomPool(matrix, hurst, n_per_unit, rng)


@dataclass(frozen=True)
class RandomCode:
    """First-hit outcome: 1-based hit index, search radius, realized length.

    hit_index None means the pool was exhausted without a hit; the miss keeps
    code_length None and must be handled by the caller (fallback_on_miss
    gives the nearest entry for reconstruction-only use).
    """

    hit_index: int | None
    radius: float
    code_length: CodeLength | None

    def __post_init__(self):
        if self.hit_index is not None and self.hit_index < 1:
            raise ValueError("hit_index is 1-based")
        if (self.hit_index is None) != (self.code_length is None):
            raise ValueError("code_length must be present exactly when there is a hit")


def hit_code_length(hit_index: int) -> CodeLength:
    """Nats paid for a hit at the given 1-based index: 2 log T + log(pi^2/6)."""
    return CodeLength(2.0 * math.log(hit_index) + math.log(ZETA_NORM))


def _check_query(pool: RandomPool, x: SampledPath) -> None:
    if x.grid_shape() != (1, pool.n_per_unit):
        raise ValueError("query path must live on the pool's unit-interval grid")


def first_hit(pool: RandomPool, x: SampledPath, radius: float) -> RandomCode:
    """Smallest pool index whose entry is within `radius` of x in sup distance."""
    _check_query(pool, x)
    if not (radius >= 0.0):
        raise ValueError(f"radius must be nonnegative, got {radius!r}")
    dists = np.abs(pool.matrix - x.values[None, :]).max(axis=1)
    hits = np.flatnonzero(dists <= radius)
    if hits.size == 0:
        return RandomCode(hit_index=None, radius=float(radius), code_length=None)
    t = int(hits[0]) + 1
    return RandomCode(hit_index=t, radius=float(radius), code_length=hit_code_length(t))


def encode_at_rate(pool: RandomPool, x: SampledPath, rate: float, hurst: float) -> RandomCode:
    """First hit at the rate-matched radius rate^{-H}."""
    check_hurst(hurst)
    if not (rate > 0.0):
        raise ValueError(f"rate must be positive, got {rate!r}")
    return first_hit(pool, x, rate ** (-hurst))


def fallback_on_miss(pool: RandomPool, x: SampledPath, norm: str = "sup", p: float = 2.0):
    """Nearest pool entry (0-based index, distance) for reconstruction after a miss."""
    _check_query(pool, x)
    diffs = pool.matrix - x.values[None, :]
    if norm == "sup":
        dists = np.abs(diffs).max(axis=1)
    elif norm == "lp":
        if not (p >= 1.0):
            raise ValueError(f"p must be >= 1, got {p!r}")
        dists = (np.abs(diffs[:, :-1]) ** p).mean(axis=1) ** (1.0 / p)
    else:
        raise ValueError(f"norm must be 'sup' or 'lp', got {norm!r}")
    idx = int(np.argmin(dists))
    return idx, float(dists[idx])


@dataclass(frozen=True)
class SmallBallEstimate:
    """Monte Carlo estimate of P(||X - x|| <= eps) with a 95% interval."""

    probability: float
    ci_low: float
    ci_high: float
    hits: int
    mc_samples: int


def smallball_conditional(
    x: SampledPath, eps: float, mc_samples: int, rng: RngSpec
) -> SmallBallEstimate:
    """Estimate the conditional small-ball probability of x's law around x.

    Draws mc_samples fresh paths with x's Hurst index on x's grid and counts
    sup-distance hits within eps.  The interval is Clopper-Pearson, exact at
    zero observed hits.
    """
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps!r}")
    if mc_samples < 100:
        raise ValueError(f"mc_samples must be >= 100, got {mc_samples!r}")
    fresh = sample_fbm_batch(x.hurst, x.horizon, x.n_per_unit, rng, mc_samples)
    dists = np.abs(fresh - x.values[None, :]).max(axis=1)
    hits = int(np.count_nonzero(dists <= eps))
    p_hat = hits / mc_samples
    if hits == 0:
        lo = 0.0
    else:
        lo = float(beta_dist.ppf(0.025, hits, mc_samples - hits + 1))
    if hits == mc_samples:
        hi = 1.0
    else:
        hi = float(beta_dist.ppf(0.975, hits + 1, mc_samples - hits))
    return SmallBallEstimate(p_hat, lo, hi, hits, mc_samples)
