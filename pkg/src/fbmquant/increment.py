"""Partial-sum lattice coder and the within/across-block decomposition.

encode_sums tracks a running reconstruction on the lattice 2eps*Z: each
step transmits one integer offset k with weight proportional to
(|k|+1)^-2, which keeps every partial sum within eps of its target
deterministically. decompose splits a multi-block path into its
within-block shape and the step process of its block-start values;
encode_lp codes the two parts separately and adds the reconstructions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, CodeLength, code_length
from .paths import SampledPath, lp_distance

__all__ = [
    "IncrementCode",
    "IncrementLpResult",
    "decode_sums",
    "decompose",
    "encode_lp",
    "encode_sums",
    "increment_weight_constant",
    "integer_weights",
    "symbol_lengths",
]

# sum over k in Z of (|k|+1)^-2 = 1 + 2(pi^2/6 - 1)
INTEGER_NORM = math.pi**2 / 3.0 - 1.0


def increment_weight_constant() -> float:
    """Per-symbol overhead c = log(pi^2/3 - 1) of the integer weights."""
    return math.log(INTEGER_NORM)


def integer_weights(k) -> np.ndarray:
    """Probability weight e^{-c} (|k|+1)^{-2} of each integer offset."""
    k = np.asarray(k, dtype=float)
    return (np.abs(k) + 1.0) ** -2 / INTEGER_NORM


@dataclass(frozen=True)
class IncrementCode:
    """Lattice code for a sequence of partial sums.

    offsets are the transmitted integers k_i; the reconstruction after
    step i is 2 eps times the running sum of offsets, and it stays
    within eps of the target sum at every step.
    """

    offsets: tuple[int, ...]
    eps: float
    code_length: CodeLength

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def symbol_lengths(code: IncrementCode) -> np.ndarray:
    """Per-symbol code lengths 2 log(|k_i|+1) + c in nats."""
    k = np.asarray(code.offsets, dtype=float)
    return 2.0 * np.log(np.abs(k) + 1.0) + increment_weight_constant()


def encode_sums(s, eps: float) -> IncrementCode:
    """Code a real sequence by lattice offsets, one per entry.

    Each step moves the running lattice position to the point of
    2 eps Z nearest the target, ties broken toward the smaller offset,
    so every reconstructed sum is within eps of its target.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return IncrementCode(offsets=(), eps=eps, code_length=CodeLength(0.0))
    t = s / (2.0 * eps)
    # nearest lattice index; a tie between floor and floor+1 takes floor,
    # which is the smaller offset wherever the previous position sits
    lower = np.floor(t)
    pos = np.where(t - lower == 0.5, lower, np.floor(t + 0.5)).astype(np.int64)
    offsets = np.diff(pos, prepend=np.int64(0))
    total = float(
        np.sum(2.0 * np.log(np.abs(offsets) + 1.0))
        + offsets.size * increment_weight_constant()
    )
    return IncrementCode(
        offsets=tuple(int(k) for k in offsets),
        eps=eps,
        code_length=CodeLength(total),
    )


def decode_sums(code: IncrementCode) -> np.ndarray:
    """Reconstructed sums: the lattice points 2 eps * cumsum(offsets)."""
    k = np.cumsum(np.asarray(code.offsets, dtype=np.int64))
    return 2.0 * code.eps * k


def decompose(w: SampledPath) -> tuple[SampledPath, SampledPath]:
    """Split w into its within-block part and its block-start step part.

    The step part holds the value at the start of the current block; the
    within part is what remains, vanishing at every block start. The two
    add back to w, exactly where the subtraction was exact and to one
    ulp otherwise. The final grid point belongs to the last block, so
    for a single-block path the step part is identically zero.
    """
    npu = w.n_per_unit
    idx = np.arange(w.values.size)
    anchor = np.minimum(idx // npu, w.horizon - 1) * npu
    x2_values = w.values[anchor]
    x1_values = w.values - x2_values
    x1 = SampledPath(
        hurst=w.hurst, horizon=w.horizon, n_per_unit=npu, values=x1_values,
        kind=w.kind,
    )
    x2 = SampledPath(
        hurst=w.hurst, horizon=w.horizon, n_per_unit=npu, values=x2_values,
        kind="step",
    )
    return x1, x2


@dataclass(frozen=True)
class IncrementLpResult:
    """Everything the two-part coder produced for one path."""

    reconstruction: SampledPath
    code_length: CodeLength
    distortion: float
    block_distortion: float
    block_indices: tuple[int, ...]
    increment_code: IncrementCode


def encode_lp(
    w: SampledPath, block_cb: Codebook, eps: float, p: float = 2.0
) -> IncrementLpResult:
    """Code w as within-block shapes plus lattice-quantized anchors.

    The within-block part is coded per block by the nearest codebook
    entry in the L^p cell mean; the block-start values (one per block
    after the first) are coded by encode_sums at accuracy eps. Total
    L^p distortion is at most the blockwise distortion plus eps. Block
    cost is the entry's code length under the codebook weights, or
    log(size) per block without weights.
    """
    if block_cb.horizon != 1:
        raise ValueError("block codebook entries must live on the unit grid")
    if block_cb.n_per_unit != w.n_per_unit:
        raise ValueError(
            f"grid mismatch: codebook has {block_cb.n_per_unit} cells per unit, "
            f"path has {w.n_per_unit}"
        )
    npu, n = w.n_per_unit, w.horizon
    x1, _ = decompose(w)

    blocks = x1.values[:-1].reshape(n, npu)
    cells = block_cb.matrix[:, :npu]
    dist_p = np.mean(
        np.abs(blocks[:, None, :] - cells[None, :, :]) ** p, axis=2
    )
    indices = np.argmin(dist_p, axis=1)
    block_distortion = float(np.mean(dist_p[np.arange(n), indices]) ** (1.0 / p))

    inc = encode_sums(w.values[npu : n * npu : npu], eps)
    shat = decode_sums(inc)

    step_levels = np.concatenate([[0.0], shat])
    block_no = np.minimum(np.arange(w.values.size) // npu, n - 1)
    x2_hat = step_levels[block_no]
    x1_hat = np.concatenate(
        [cells[indices].ravel(), [block_cb.matrix[indices[-1], -1]]]
    )
    recon = SampledPath(
        hurst=w.hurst, horizon=n, n_per_unit=npu, values=x1_hat + x2_hat,
        kind="step",
    )

    if block_cb.weights is not None:
        block_total = sum(
            code_length(block_cb.weights, int(j)).nats for j in indices
        )
    else:
        block_total = n * math.log(len(block_cb.entries))
    total = CodeLength(block_total) + inc.code_length

    return IncrementLpResult(
        reconstruction=recon,
        code_length=total,
        distortion=lp_distance(w, recon, p),
        block_distortion=block_distortion,
        block_indices=tuple(int(j) for j in indices),
        increment_code=inc,
    )
