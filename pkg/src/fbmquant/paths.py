"""Grid-sampled fractional Brownian motion and path-space distances.

Paths live on uniform grids t_k = k / n_per_unit over [0, horizon].  Sampling
uses circulant embedding of the fractional Gaussian noise increments with a
dense Cholesky fallback, so one seed spec pins one path exactly.  The scaling
and shift operators act by grid-point selection only, never interpolation,
which keeps the self-similarity identities testable as equalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz

__all__ = [
    "RngSpec",
    "SampledPath",
    "fbm_covariance",
    "fgn_autocovariance",
    "sample_fbm",
    "sample_fbm_batch",
    "scale_alpha",
    "scale_alpha_inv",
    "shift_increment",
    "unit_blocks",
    "sup_distance",
    "lp_distance",
]

# Cholesky fallback is O(N^3); refuse past this many increments.
CHOLESKY_CAP = 8192
# Embedding eigenvalues below this are treated as genuinely negative.
EMBED_EIG_TOL = -1e-9

PATH_KINDS = ("sampled", "step")


@dataclass(frozen=True)
class RngSpec:
    """Reproducible randomness: a 64-bit root seed plus a stream label.

    Identical (root_seed, stream_id) pairs produce identical sample
    sequences.  Disjoint stream ids give independent streams, so parallel
    work can draw from per-task streams without sharing generator state.
    """

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not isinstance(self.root_seed, (int, np.integer)) or self.root_seed < 0:
            raise ValueError(f"root_seed must be a nonnegative integer, got {self.root_seed!r}")
        if not isinstance(self.stream_id, (int, np.integer)) or self.stream_id < 0:
            raise ValueError(f"stream_id must be a nonnegative integer, got {self.stream_id!r}")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([int(self.root_seed), int(self.stream_id)])

    def stream(self, stream_id: int) -> "RngSpec":
        """Same root seed, different stream."""
        return RngSpec(self.root_seed, stream_id)


@dataclass(frozen=True)
class SampledPath:
    """A path observed on the uniform grid k / n_per_unit, k = 0..horizon*n_per_unit.

    kind "sampled" marks grid samples of a continuous path; kind "step" marks
    a right-continuous piecewise-constant reconstruction whose value on
    [t_k, t_{k+1}) is values[k], with the final right endpoint closed.
    """

    hurst: float
    horizon: int
    n_per_unit: int
    values: np.ndarray
    kind: str = "sampled"

    def __post_init__(self):
        check_hurst(self.hurst)
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not isinstance(self.n_per_unit, (int, np.integer)) or self.n_per_unit < 1:
            raise ValueError(f"n_per_unit must be a positive integer, got {self.n_per_unit!r}")
        if self.kind not in PATH_KINDS:
            raise ValueError(f"kind must be one of {PATH_KINDS}, got {self.kind!r}")
        vals = np.asarray(self.values, dtype=float)
        expected = self.horizon * self.n_per_unit + 1
        if vals.ndim != 1 or vals.shape[0] != expected:
            raise ValueError(
                f"values must be a 1-d array of length horizon*n_per_unit+1={expected}, "
                f"got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)

    @property
    def n_steps(self) -> int:
        return self.horizon * self.n_per_unit

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) / self.n_per_unit

    def grid_shape(self) -> tuple[int, int]:
        return (self.horizon, self.n_per_unit)

    def with_values(self, values: np.ndarray, kind: str | None = None) -> "SampledPath":
        return replace(self, values=values, kind=self.kind if kind is None else kind)


def check_hurst(hurst: float) -> float:
    if not (0.0 < hurst < 1.0):
        raise ValueError(f"hurst must lie in the open interval (0, 1), got {hurst!r}")
    return float(hurst)


def fbm_covariance(t, s, hurst: float):
    """Covariance kernel K(t, s) = (t^2H + s^2H - |t-s|^2H) / 2 for t, s >= 0.

    Broadcasts over array arguments.
    """
    check_hurst(hurst)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("time arguments must be nonnegative")
    h2 = 2.0 * hurst
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    if out.ndim == 0:
        return float(out)
    return out


def fgn_autocovariance(lags, hurst: float):
    """Autocovariance of unit-spaced fractional Gaussian noise at integer lags."""
    check_hurst(hurst)
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)


@lru_cache(maxsize=64)
def _embedding_eigs(hurst: float, n_steps: int):
    """Circulant-embedding eigenvalues for fGn of length n_steps.

    Returns None when the embedding is not nonnegative definite (any
    eigenvalue below EMBED_EIG_TOL), signalling the Cholesky fallback.
    """
    gamma = fgn_autocovariance(np.arange(n_steps + 1), hurst)
    # first row of the 2N-circulant: gamma_0..gamma_N, then mirrored interior
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigs = np.fft.fft(row).real
    if eigs.min() < EMBED_EIG_TOL:
        return None
    eigs = np.clip(eigs, 0.0, None)
    eigs.setflags(write=False)
    return eigs


@lru_cache(maxsize=16)
def _cholesky_factor(hurst: float, n_steps: int):
    gamma = fgn_autocovariance(np.arange(n_steps), hurst)
    factor = np.linalg.cholesky(toeplitz(gamma))
    factor.setflags(write=False)
    return factor


def _fgn_unit(gen: np.random.Generator, hurst: float, n_steps: int, count: int) -> np.ndarray:
    """count independent rows of unit-spaced fGn of length n_steps."""
    eigs = _embedding_eigs(hurst, n_steps)
    if eigs is None:
        if n_steps > CHOLESKY_CAP:
            raise RuntimeError(
                f"circulant embedding failed and n_steps={n_steps} exceeds the "
                f"Cholesky cap of {CHOLESKY_CAP}"
            )
        factor = _cholesky_factor(hurst, n_steps)
        z = gen.standard_normal((count, n_steps))
        return z @ factor.T
    m = 2 * n_steps
    # fixed draw order: one block of normals, sliced into the spectral coefficients
    g = gen.standard_normal((count, m))
    w = np.zeros((count, m), dtype=complex)
    w[:, 0] = math.sqrt(eigs[0] / m) * g[:, 0]
    w[:, n_steps] = math.sqrt(eigs[n_steps] / m) * g[:, 1]
    if n_steps > 1:
        u = g[:, 2 : n_steps + 1]
        v = g[:, n_steps + 1 :]
        amp = np.sqrt(eigs[1:n_steps] / (2.0 * m))
        w[:, 1:n_steps] = amp * (u + 1j * v)
        w[:, n_steps + 1 :] = np.conj(w[:, n_steps - 1 : 0 : -1])
    return np.fft.fft(w, axis=-1).real[:, :n_steps]


def sample_fbm_batch(
    hurst: float, horizon: int, n_per_unit: int, rng: RngSpec, count: int
) -> np.ndarray:
    """Sample `count` independent FBM paths; rows are value arrays X_0..X_N.

    Increments are unit-spaced fGn rescaled by self-similarity to the grid
    spacing; X_0 = 0 exactly.
    """
    check_hurst(hurst)
    if count < 1:
        raise ValueError("count must be >= 1")
    n_steps = horizon * n_per_unit
    gen = rng.generator()
    fgn = _fgn_unit(gen, float(hurst), n_steps, count)
    fgn *= (1.0 / n_per_unit) ** hurst
    out = np.zeros((count, n_steps + 1))
    np.cumsum(fgn, axis=1, out=out[:, 1:])
    return out


def sample_fbm(hurst: float, horizon: int, n_per_unit: int, rng: RngSpec) -> SampledPath:
    """Sample one FBM path on the grid, pinned exactly by `rng`."""
    values = sample_fbm_batch(hurst, horizon, n_per_unit, rng, 1)[0]
    return SampledPath(hurst=float(hurst), horizon=horizon, n_per_unit=n_per_unit, values=values)


def scale_alpha(f: SampledPath, n: int) -> SampledPath:
    """Self-similarity operator alpha_n(f)(s) = n^H f(s/n), mapping [0,1] to [0,n].

    Pure grid relabelling: requires n to divide f.n_per_unit so every target
    grid point is a source grid point.
    """
    if f.horizon != 1:
        raise ValueError("scale_alpha expects a path on [0, 1]")
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if f.n_per_unit % n != 0:
        raise ValueError(
            f"n={n} must divide n_per_unit={f.n_per_unit} for an exact grid match"
        )
    return SampledPath(
        hurst=f.hurst,
        horizon=int(n),
        n_per_unit=f.n_per_unit // int(n),
        values=(float(n) ** f.hurst) * f.values,
        kind=f.kind,
    )


def scale_alpha_inv(g: SampledPath, n: int) -> SampledPath:
    """Inverse of scale_alpha: maps a path on [0, n] back to [0, 1]."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if g.horizon != int(n):
        raise ValueError(f"expected a path on [0, {n}], got horizon {g.horizon}")
    return SampledPath(
        hurst=g.hurst,
        horizon=1,
        n_per_unit=g.n_per_unit * int(n),
        values=g.values / (float(n) ** g.hurst),
        kind=g.kind,
    )


def shift_increment(w: SampledPath, n: int) -> SampledPath:
    """Block increment w^(n)_t = w_{n+t} - w_n on [0, 1]; starts at 0 exactly."""
    if not isinstance(n, (int, np.integer)) or not (0 <= n < w.horizon):
        raise ValueError(f"block index must satisfy 0 <= n < horizon={w.horizon}, got {n!r}")
    npu = w.n_per_unit
    seg = w.values[n * npu : (n + 1) * npu + 1] - w.values[n * npu]
    return SampledPath(hurst=w.hurst, horizon=1, n_per_unit=npu, values=seg, kind=w.kind)


def unit_blocks(w: SampledPath) -> list[SampledPath]:
    return [shift_increment(w, i) for i in range(w.horizon)]


def _check_same_grid(f: SampledPath, g: SampledPath) -> None:
    if f.grid_shape() != g.grid_shape():
        raise ValueError(
            f"paths live on different grids: {f.grid_shape()} vs {g.grid_shape()}"
        )


def sup_distance(f: SampledPath, g: SampledPath) -> float:
    """Grid maximum of |f - g| over all horizon*n_per_unit + 1 grid points."""
    _check_same_grid(f, g)
    return float(np.max(np.abs(f.values - g.values)))


def lp_distance(f: SampledPath, g: SampledPath, p: float) -> float:
    """Normalized L^p distance ((1/n) int_0^n |f-g|^p)^(1/p), left-endpoint rule.

    The left-endpoint Riemann sum over the n_steps cells is exact for step
    reconstructions and makes the time-rescaling map an exact isometry on
    grids.
    """
    _check_same_grid(f, g)
    if not (p >= 1.0):
        raise ValueError(f"p must be >= 1, got {p!r}")
    diff = np.abs(f.values[:-1] - g.values[:-1])
    return float(np.mean(diff**p) ** (1.0 / p))
