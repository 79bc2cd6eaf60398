"""Finite codebooks over a shared grid: nearest lookup and code-length accounting.

Code lengths are in nats throughout (-log p for an entry of weight p); entropy
uses the 0 log 0 = 0 convention.  Nearest lookup is a brute-force scan, which
is exact and fast enough for the codebook sizes used here (up to 1e5 entries).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .paths import SampledPath

__all__ = [
    "CodeLength",
    "Codebook",
    "nearest",
    "entropy",
    "code_length",
]

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class CodeLength:
    """A code length in nats."""

    nats: float

    def __post_init__(self):
        if not (self.nats >= 0.0):
            raise ValueError(f"code length must be nonnegative, got {self.nats!r}")

    def __add__(self, other: "CodeLength") -> "CodeLength":
        return CodeLength(self.nats + other.nats)


class Codebook:
    """Entries on one shared grid, optionally with a probability vector.

    JSON layout (see to_json/from_json): a dict with keys "hurst", "horizon",
    "n_per_unit", "kind", "entries" (list of value lists), and "weights"
    (list of floats or null).
    """

    def __init__(self, entries: Sequence[SampledPath], weights=None):
        entries = list(entries)
        if not entries:
            raise ValueError("codebook needs at least one entry")
        shape = entries[0].grid_shape()
        for e in entries[1:]:
            if e.grid_shape() != shape:
                raise ValueError("all codebook entries must share one grid")
        self.entries = entries
        self._matrix = np.stack([e.values for e in entries])
        self._matrix.setflags(write=False)
        if weights is None:
            self.weights = None
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (len(entries),):
                raise ValueError("weights must have one value per entry")
            if np.any(w <= 0.0):
                raise ValueError("codebook weights must be positive")
            if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
            w.setflags(write=False)
            self.weights = w

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> SampledPath:
        return self.entries[i]

    @property
    def matrix(self) -> np.ndarray:
        """Stacked entry values, one row per entry."""
        return self._matrix

    @property
    def horizon(self) -> int:
        return self.entries[0].horizon

    @property
    def n_per_unit(self) -> int:
        return self.entries[0].n_per_unit

    def to_json(self) -> dict:
        head = self.entries[0]
        return {
            "hurst": head.hurst,
            "horizon": head.horizon,
            "n_per_unit": head.n_per_unit,
            "kind": head.kind,
            "entries": [e.values.tolist() for e in self.entries],
            "weights": None if self.weights is None else self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict | str) -> "Codebook":
        if isinstance(payload, str):
            payload = json.loads(payload)
        entries = [
            SampledPath(
                hurst=payload["hurst"],
                horizon=payload["horizon"],
                n_per_unit=payload["n_per_unit"],
                values=np.asarray(v, dtype=float),
                kind=payload["kind"],
            )
            for v in payload["entries"]
        ]
        return cls(entries, weights=payload["weights"])


def _distances(matrix: np.ndarray, x: SampledPath, norm: str, p: float) -> np.ndarray:
    diffs = matrix - x.values[None, :]
    if norm == "sup":
        return np.abs(diffs).max(axis=1)
    if norm == "lp":
        if not (p >= 1.0):
            raise ValueError(f"p must be >= 1, got {p!r}")
        # left-endpoint rule, matching paths.lp_distance
        return (np.abs(diffs[:, :-1]) ** p).mean(axis=1) ** (1.0 / p)
    raise ValueError(f"norm must be 'sup' or 'lp', got {norm!r}")


def nearest(cb: Codebook, x: SampledPath, norm: str = "sup", p: float = 2.0) -> tuple[int, float]:
    """Index and distance of the closest entry; ties go to the smallest index."""
    if x.grid_shape() != (cb.horizon, cb.n_per_unit):
        raise ValueError("query path must live on the codebook grid")
    d = _distances(cb.matrix, x, norm, p)
    idx = int(np.argmin(d))  # argmin returns the first minimizer
    return idx, float(d[idx])


def entropy(weights) -> float:
    """Shannon entropy -sum p log p in nats; zero weights contribute zero."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    pos = w[w > 0.0]
    return float(-(pos * np.log(pos)).sum())


def code_length(weights, index: int) -> CodeLength:
    """Ideal code length -log p_index in nats; selecting weight 0 is an error."""
    w = np.asarray(weights, dtype=float)
    if not (0 <= index < w.size):
        raise ValueError(f"index {index} out of range for {w.size} weights")
    if not (w[index] > 0.0):
        raise ValueError(f"entry {index} has zero weight; its code length is undefined")
    return CodeLength(-math.log(w[index]))
