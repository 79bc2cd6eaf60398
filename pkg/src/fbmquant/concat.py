"""Concatenation of unit-interval quantizers with offset correction.

A path on [0, n] is cut into unit blocks; each block increment is quantized
by a base quantizer on [0, 1] and re-anchored by an offset picked from the
grid {-d + 2kd/(M-1)}.  If every block's base error stays within d, the total
sup error is at most M/(M-1) * d on every single trial, not merely on
average: the offset grid absorbs the accumulated anchor drift each time a
block boundary is crossed.

Anchoring convention: the left limit of a block's reconstruction at its right
boundary is the base entry's final stored value shifted by the block's
cumulative offset.  Per-block errors are measured over the full closed block
grid, which is exactly what makes the propagation bound deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, CodeLength, code_length
from .paths import (
    RngSpec,
    SampledPath,
    sample_fbm_batch,
    scale_alpha,
    scale_alpha_inv,
    shift_increment,
)
from .randomcode import RandomPool, sample_pool

__all__ = [
    "ConcatParams",
    "ConcatCodeword",
    "BaseQuantizer",
    "offset_grid",
    "select_offset",
    "offsets_from_rate_step",
    "encode_concat",
    "decode_concat",
    "per_block_errors",
    "concat_code_length",
    "rescale_scheme",
    "typical_membership",
    "typical_codebook_bound",
    "build_base_quantizer",
]


@dataclass(frozen=True)
class ConcatParams:
    """Offset count M >= 2 and error budget d > 0 shared by grid and base."""

    n_offsets: int
    base_radius: float

    def __post_init__(self):
        if not isinstance(self.n_offsets, (int, np.integer)) or self.n_offsets < 2:
            raise ValueError(f"n_offsets must be an integer >= 2, got {self.n_offsets!r}")
        if not (self.base_radius > 0.0):
            raise ValueError(f"base_radius must be positive, got {self.base_radius!r}")

    @property
    def bound_factor(self) -> float:
        """Total-error guarantee M/(M-1) * d when per-block errors stay <= d."""
        m = self.n_offsets
        return m / (m - 1.0) * self.base_radius


@dataclass(frozen=True)
class ConcatCodeword:
    """Block entry indices plus the offset grid indices between blocks."""

    block_indices: tuple
    offset_indices: tuple
    params: ConcatParams

    def __post_init__(self):
        n = len(self.block_indices)
        if n < 1:
            raise ValueError("codeword needs at least one block")
        if len(self.offset_indices) != n - 1:
            raise ValueError("need exactly one offset per interior block boundary")
        m = self.params.n_offsets
        if any(not (0 <= k < m) for k in self.offset_indices):
            raise ValueError(f"offset indices must lie in [0, {m})")

    @property
    def n_blocks(self) -> int:
        return len(self.block_indices)


def offset_grid(n_offsets: int, half_width: float) -> np.ndarray:
    """The M offsets -d + 2kd/(M-1), k = 0..M-1, spanning [-d, d]."""
    if not isinstance(n_offsets, (int, np.integer)) or n_offsets < 2:
        raise ValueError(f"n_offsets must be an integer >= 2, got {n_offsets!r}")
    if not (half_width > 0.0):
        raise ValueError(f"half_width must be positive, got {half_width!r}")
    k = np.arange(n_offsets, dtype=float)
    return -half_width + 2.0 * half_width * k / (n_offsets - 1)


def select_offset(target: float, current: float, grid: np.ndarray) -> tuple[int, float]:
    """Grid offset bringing current closest to target; ties pick the smaller offset."""
    err = np.abs(target - (current + grid))
    idx = int(np.argmin(err))  # grid is ascending, argmin's first minimizer is smallest
    return idx, float(grid[idx])


def offsets_from_rate_step(rate_step: float) -> int:
    """Offset count M = floor(exp(rate_step)) for a per-block rate increment."""
    m = int(math.floor(math.exp(rate_step)))
    if m < 2:
        raise ValueError(
            f"rate_step {rate_step!r} gives fewer than 2 offsets; need rate_step >= log 2"
        )
    return m


class BaseQuantizer:
    """Unit-interval quantizer: a weighted codebook plus an encode rule.

    The default rule is first hit within `radius` in entry order with a
    nearest-entry fallback, i.e. a random-coding codebook used as the base
    strategy.  A custom encode_fn(path) -> index overrides it.
    """

    def __init__(self, codebook: Codebook, radius: float | None = None, encode_fn=None):
        if codebook.horizon != 1:
            raise ValueError("base quantizer codebook must live on [0, 1]")
        if encode_fn is None and radius is None:
            raise ValueError("need a radius for the default first-hit rule")
        if radius is not None and not (radius > 0.0):
            raise ValueError(f"radius must be positive, got {radius!r}")
        self.codebook = codebook
        self.radius = radius
        self._encode_fn = encode_fn

    @property
    def n_per_unit(self) -> int:
        return self.codebook.n_per_unit

    def encode(self, path: SampledPath) -> int:
        if self._encode_fn is not None:
            return int(self._encode_fn(path))
        return int(self.encode_many(path.values[None, :])[0])

    def encode_many(self, block_values: np.ndarray) -> np.ndarray:
        """Vectorized default rule over rows of block values."""
        if self._encode_fn is not None:
            raise ValueError("encode_many supports only the default first-hit rule")
        rows = np.atleast_2d(np.asarray(block_values, dtype=float))
        k, m = self.codebook.matrix.shape
        # keep the (rows, entries, points) broadcast near 64MB
        step = max(1, 8_000_000 // max(1, k * m))
        out = np.empty(rows.shape[0], dtype=int)
        for lo in range(0, rows.shape[0], step):
            dists = self.distances(rows[lo : lo + step])
            within = dists <= self.radius
            has_hit = within.any(axis=1)
            first = within.argmax(axis=1)  # first True per row
            nearest_idx = dists.argmin(axis=1)
            out[lo : lo + step] = np.where(has_hit, first, nearest_idx)
        return out

    def distances(self, block_values: np.ndarray) -> np.ndarray:
        """Sup distance of each row to each entry, over the full closed block."""
        return np.abs(block_values[:, None, :] - self.codebook.matrix[None, :, :]).max(axis=2)


def build_base_quantizer(
    hurst: float,
    n_per_unit: int,
    radius: float,
    pool_size: int,
    rng: RngSpec,
    calibration_size: int = 4096,
    pool: RandomPool | None = None,
) -> BaseQuantizer:
    """Random-coding base: i.i.d. pool entries with calibrated selection weights.

    The weights are smoothed empirical frequencies of the encoder's own
    output over fresh calibration draws, so they track the induced entry
    distribution (the quantity the product-weight accounting needs) rather
    than the pool's index law.  Consumes rng's stream and the next one
    (stream_id + 1) for pool and calibration respectively.
    """
    if pool is None:
        pool = sample_pool(hurst, pool_size, n_per_unit, rng)
    entries = [p.with_values(p.values, kind="step") for p in pool.paths]
    plain = Codebook(entries)
    quantizer = BaseQuantizer(plain, radius=radius)
    if calibration_size < 1:
        raise ValueError("calibration_size must be >= 1")
    samples = sample_fbm_batch(
        hurst, 1, n_per_unit, rng.stream(rng.stream_id + 1), calibration_size
    )
    picked = quantizer.encode_many(samples)
    counts = np.bincount(picked, minlength=len(plain)).astype(float)
    weights = (counts + 0.5) / (calibration_size + 0.5 * len(plain))
    weighted = Codebook(entries, weights=weights)
    return BaseQuantizer(weighted, radius=radius)


def _check_concat_inputs(w: SampledPath, base: BaseQuantizer) -> None:
    if w.n_per_unit != base.n_per_unit:
        raise ValueError(
            f"path grid ({w.n_per_unit}/unit) must match the base grid "
            f"({base.n_per_unit}/unit)"
        )


def encode_concat(w: SampledPath, base: BaseQuantizer, params: ConcatParams) -> ConcatCodeword:
    """Quantize a path on [0, n] blockwise with offset re-anchoring."""
    _check_concat_inputs(w, base)
    npu = w.n_per_unit
    grid = offset_grid(params.n_offsets, params.base_radius)
    blocks = np.stack([shift_increment(w, i).values for i in range(w.horizon)])
    if base._encode_fn is None:
        indices = base.encode_many(blocks)
    else:
        indices = [base.encode(shift_increment(w, i)) for i in range(w.horizon)]
    entry_matrix = base.codebook.matrix
    offsets = []
    cum = 0.0
    prev_end = None
    for i in range(w.horizon):
        if i >= 1:
            k, xi = select_offset(float(w.values[i * npu]), prev_end, grid)
            offsets.append(k)
            cum = prev_end + xi
        prev_end = cum + entry_matrix[indices[i], -1]
    return ConcatCodeword(
        block_indices=tuple(int(j) for j in indices),
        offset_indices=tuple(offsets),
        params=params,
    )


def decode_concat(cw: ConcatCodeword, base: BaseQuantizer) -> SampledPath:
    """Reconstruct the step path on [0, n] from a concat codeword."""
    npu = base.n_per_unit
    grid = offset_grid(cw.params.n_offsets, cw.params.base_radius)
    entry_matrix = base.codebook.matrix
    n = cw.n_blocks
    values = np.empty(n * npu + 1)
    cum = 0.0
    prev_end = None
    for i, j in enumerate(cw.block_indices):
        if i >= 1:
            cum = prev_end + grid[cw.offset_indices[i - 1]]
        values[i * npu : (i + 1) * npu] = cum + entry_matrix[j, :npu]
        prev_end = cum + entry_matrix[j, -1]
    values[-1] = prev_end
    head = base.codebook.entries[0]
    return SampledPath(
        hurst=head.hurst, horizon=n, n_per_unit=npu, values=values, kind="step"
    )


def per_block_errors(w: SampledPath, base: BaseQuantizer, cw: ConcatCodeword) -> np.ndarray:
    """Realized base error of each block over its full closed grid.

    Blocks where this exceeds params.base_radius are outside the propagation
    bound's hypothesis; callers surface them as flags.
    """
    _check_concat_inputs(w, base)
    if cw.n_blocks != w.horizon:
        raise ValueError("codeword block count must match the path horizon")
    blocks = np.stack([shift_increment(w, i).values for i in range(w.horizon)])
    chosen = base.codebook.matrix[list(cw.block_indices)]
    return np.abs(blocks - chosen).max(axis=1)


def concat_code_length(cw: ConcatCodeword, base: BaseQuantizer) -> CodeLength:
    """(n-1) log M for the offsets plus the weighted length of each block index."""
    if base.codebook.weights is None:
        raise ValueError("concat code length needs base codebook weights")
    total = (cw.n_blocks - 1) * math.log(cw.params.n_offsets)
    for j in cw.block_indices:
        total += code_length(base.codebook.weights, j).nats
    return CodeLength(total)


def rescale_scheme(
    w: SampledPath, n: int, base: BaseQuantizer, params: ConcatParams
) -> tuple[SampledPath, CodeLength]:
    """Code a unit-interval path at high resolution through the [0, n] scheme.

    Stretches w by self-similarity, concat-codes it, and maps the
    reconstruction back; the achieved error on [0, 1] is exactly n^{-H}
    times the error the concat scheme made on [0, n].
    """
    stretched = scale_alpha(w, n)
    cw = encode_concat(stretched, base, params)
    decoded = decode_concat(cw, base)
    # the inverse map must undo the forward map, so it carries w's exponent
    # even when the base codebook was built for a different one
    tagged = SampledPath(
        hurst=w.hurst,
        horizon=decoded.horizon,
        n_per_unit=decoded.n_per_unit,
        values=decoded.values,
        kind=decoded.kind,
    )
    back = scale_alpha_inv(tagged, n)
    return back, concat_code_length(cw, base)


def typical_membership(
    code_length_per_unit: float, base_entropy: float, n_offsets: int, eps: float
) -> bool:
    """Whether a realized per-block code length sits inside the typical budget."""
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    return code_length_per_unit <= base_entropy + math.log(n_offsets) + eps


def typical_codebook_bound(
    n_blocks: int, base_entropy: float, n_offsets: int, eps: float
) -> float:
    """Log-cardinality budget n (H + log M + eps) of the typical codeword set."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    return n_blocks * (base_entropy + math.log(n_offsets) + eps)
