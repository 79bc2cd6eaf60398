"""Estimator facades over the three coding schemes.

Each coder follows the fit/transform protocol: fit builds or adopts a
codebook (sampling one internally when no pool matrix is supplied),
transform maps a matrix of path values to the matrix of reconstructions,
and encode exposes the underlying codewords for rate accounting. The
functional modules stay the source of truth; these classes only manage
configuration and fitted state.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .codebook import Codebook
from .concat import ConcatParams, build_base_quantizer, decode_concat, encode_concat
from .increment import encode_lp
from .paths import RngSpec, SampledPath, sample_fbm_batch
from .randomcode import RandomPool, encode_at_rate, fallback_on_miss, sample_pool

__all__ = ["ConcatCoder", "IncrementLpCoder", "RandomCodebookCoder"]


def _as_paths(X, hurst: float, n_per_unit: int, kind: str = "sampled"):
    """Rows of X as SampledPath objects on the common grid."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array of path values")
    cols = X.shape[1]
    if cols < n_per_unit + 1 or (cols - 1) % n_per_unit != 0:
        raise ValueError(
            f"X must have horizon*n_per_unit+1 columns for n_per_unit="
            f"{n_per_unit}, got {cols}"
        )
    horizon = (cols - 1) // n_per_unit
    return [
        SampledPath(
            hurst=hurst, horizon=horizon, n_per_unit=n_per_unit, values=row,
            kind=kind,
        )
        for row in X
    ]


def _unit_pool(X, hurst: float, n_per_unit: int, rng: RngSpec) -> RandomPool:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != n_per_unit + 1:
        raise ValueError(
            f"pool rows must be unit paths with {n_per_unit + 1} columns"
        )
    return RandomPool(X, hurst=hurst, n_per_unit=n_per_unit, rng=rng)


class ConcatCoder(BaseEstimator):
    """Concatenation coder: chained base blocks with offset corrections."""

    def __init__(
        self,
        hurst: float = 0.5,
        n_per_unit: int = 16,
        base_radius: float = 1.0,
        n_offsets: int = 3,
        pool_size: int = 1024,
        calibration_size: int = 4096,
        root_seed: int = 0,
    ):
        self.hurst = hurst
        self.n_per_unit = n_per_unit
        self.base_radius = base_radius
        self.n_offsets = n_offsets
        self.pool_size = pool_size
        self.calibration_size = calibration_size
        self.root_seed = root_seed

    def fit(self, X=None, y=None):
        """Build the base quantizer, from X's rows as pool entries if given."""
        rng = RngSpec(self.root_seed)
        pool = None
        if X is not None:
            pool = _unit_pool(X, self.hurst, self.n_per_unit, rng)
        self.base_ = build_base_quantizer(
            self.hurst,
            self.n_per_unit,
            self.base_radius,
            self.pool_size,
            rng,
            calibration_size=self.calibration_size,
            pool=pool,
        )
        self.params_ = ConcatParams(
            n_offsets=self.n_offsets, base_radius=self.base_radius
        )
        return self

    def paths_from_matrix(self, X):
        return _as_paths(X, self.hurst, self.n_per_unit)

    def encode(self, X):
        check_is_fitted(self, "base_")
        return [
            encode_concat(w, self.base_, self.params_)
            for w in self.paths_from_matrix(X)
        ]

    def transform(self, X):
        check_is_fitted(self, "base_")
        return np.stack(
            [decode_concat(cw, self.base_).values for cw in self.encode(X)]
        )


class RandomCodebookCoder(BaseEstimator):
    """First-hit coder against an i.i.d. pool at a rate-matched radius."""

    def __init__(
        self,
        hurst: float = 0.5,
        n_per_unit: int = 16,
        pool_size: int = 1024,
        rate: float = 4.0,
        norm: str = "sup",
        p: float = 2.0,
        root_seed: int = 0,
    ):
        self.hurst = hurst
        self.n_per_unit = n_per_unit
        self.pool_size = pool_size
        self.rate = rate
        self.norm = norm
        self.p = p
        self.root_seed = root_seed

    def fit(self, X=None, y=None):
        """Draw the reference pool, or adopt X's rows as its entries."""
        rng = RngSpec(self.root_seed)
        if X is None:
            self.pool_ = sample_pool(
                self.hurst, self.pool_size, self.n_per_unit, rng
            )
        else:
            self.pool_ = _unit_pool(X, self.hurst, self.n_per_unit, rng)
        return self

    def paths_from_matrix(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2 and X.shape[1] != self.n_per_unit + 1:
            raise ValueError(
                f"X rows must be unit paths with {self.n_per_unit + 1} columns, "
                f"got {X.shape[1]}"
            )
        return _as_paths(X, self.hurst, self.n_per_unit)

    def encode(self, X):
        """First-hit codes per row; None where the pool missed."""
        check_is_fitted(self, "pool_")
        codes = []
        for w in self.paths_from_matrix(X):
            code = encode_at_rate(self.pool_, w, self.rate, self.hurst)
            codes.append(code if code.hit_index is not None else None)
        return codes

    def transform(self, X):
        check_is_fitted(self, "pool_")
        rows = []
        for w in self.paths_from_matrix(X):
            code = encode_at_rate(self.pool_, w, self.rate, self.hurst)
            if code.hit_index is not None:
                rows.append(self.pool_.matrix[code.hit_index - 1])
            else:
                idx, _ = fallback_on_miss(self.pool_, w, norm=self.norm, p=self.p)
                rows.append(self.pool_.matrix[idx])
        return np.stack(rows)


class IncrementLpCoder(BaseEstimator):
    """Two-part coder: nearest block shapes plus lattice-coded anchors."""

    def __init__(
        self,
        hurst: float = 0.5,
        n_per_unit: int = 16,
        codebook_size: int = 64,
        eps: float = 0.25,
        p: float = 2.0,
        root_seed: int = 0,
    ):
        self.hurst = hurst
        self.n_per_unit = n_per_unit
        self.codebook_size = codebook_size
        self.eps = eps
        self.p = p
        self.root_seed = root_seed

    def fit(self, X=None, y=None):
        """Sample the block codebook, or adopt X's rows as its entries."""
        if X is None:
            matrix = sample_fbm_batch(
                self.hurst, 1, self.n_per_unit, RngSpec(self.root_seed),
                self.codebook_size,
            )
        else:
            matrix = np.asarray(X, dtype=float)
        entries = _as_paths(matrix, self.hurst, self.n_per_unit, kind="step")
        if any(e.horizon != 1 for e in entries):
            raise ValueError("codebook rows must be unit paths")
        self.codebook_ = Codebook(entries)
        return self

    def paths_from_matrix(self, X):
        return _as_paths(X, self.hurst, self.n_per_unit)

    def encode(self, X):
        check_is_fitted(self, "codebook_")
        return [
            encode_lp(w, self.codebook_, self.eps, p=self.p)
            for w in self.paths_from_matrix(X)
        ]

    def transform(self, X):
        check_is_fitted(self, "codebook_")
        return np.stack([res.reconstruction.values for res in self.encode(X)])
