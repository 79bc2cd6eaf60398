"""Gaussian L2 distortion-rate curves via reverse water-filling.

A Spectrum holds descending Karhunen-Loeve eigenvalues, either the
Brownian closed form 1/(pi^2 (k-1/2)^2) with its analytic tail or a
midpoint-rule discretization of the covariance kernel. waterfill solves
for the water level theta with (1/2) sum log+(lambda_k/theta) = r and
returns sqrt(sum min(lambda_k, theta) + tail).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import polygamma

from .paths import check_hurst

__all__ = [
    "Spectrum",
    "bm_spectrum",
    "covariance_spectrum",
    "export_curve_csv",
    "export_spectrum_csv",
    "kappa_rd_estimate",
    "level_rate",
    "water_level",
    "waterfill",
]

EIG_FLOOR = 1e-14
DISCRETIZATION_CAP = 4096
LEVEL_REL_TOL = 1e-10

SPECTRUM_SOURCES = ("exact_bm", "discretized")


@dataclass(frozen=True)
class Spectrum:
    """Descending eigenvalue sequence with an optional analytic tail.

    tail_mass is the summed eigenvalue mass beyond the stored terms; it
    adds to squared distortion but carries no rate, which is valid as
    long as the water level stays above the last stored eigenvalue.
    """

    eigenvalues: np.ndarray
    hurst: float
    source: str
    tail_mass: float = 0.0

    def __post_init__(self):
        check_hurst(self.hurst)
        if self.source not in SPECTRUM_SOURCES:
            raise ValueError(
                f"source must be one of {SPECTRUM_SOURCES}, got {self.source!r}"
            )
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1:
            raise ValueError("eigenvalues must be a 1-d array")
        if lam.size and np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be nonincreasing")
        if lam.size and lam[-1] < EIG_FLOOR:
            raise ValueError(f"eigenvalues must stay above the floor {EIG_FLOOR}")
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be nonnegative")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def size(self) -> int:
        return self.eigenvalues.size


def bm_spectrum(n_terms: int) -> Spectrum:
    """Brownian spectrum 1/(pi^2 (k-1/2)^2), k = 1..n_terms, exact tail.

    The tail sum over k > n_terms is the trigamma remainder
    psi'(n_terms + 1/2) / pi^2, so total mass is exactly the Brownian
    trace 1/2.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be positive")
    k = np.arange(1, n_terms + 1, dtype=float)
    lam = 1.0 / (np.pi**2 * (k - 0.5) ** 2)
    tail = float(polygamma(1, n_terms + 0.5)) / np.pi**2
    return Spectrum(eigenvalues=lam, hurst=0.5, source="exact_bm", tail_mass=tail)


def covariance_spectrum(hurst: float, n: int) -> Spectrum:
    """Eigenvalues of the midpoint-rule discretized covariance operator.

    Diagonalizes the n x n matrix (1/n) K(t_i, t_j) on the midpoint grid
    t_i = (i + 1/2)/n, a quadrature approximation of the KL spectrum.
    Eigenvalues below the floor are dropped.
    """
    check_hurst(hurst)
    if not 1 <= n <= DISCRETIZATION_CAP:
        raise ValueError(f"n must be between 1 and {DISCRETIZATION_CAP}")
    t = (np.arange(n) + 0.5) / n
    pow_t = t**(2.0 * hurst)
    gram = 0.5 * (pow_t[:, None] + pow_t[None, :] - np.abs(t[:, None] - t[None, :]) ** (2.0 * hurst))
    lam = np.linalg.eigvalsh(gram / n)
    lam = np.sort(lam)[::-1]
    lam = lam[lam >= EIG_FLOOR]
    return Spectrum(eigenvalues=lam, hurst=hurst, source="discretized")


def level_rate(spec: Spectrum, theta: float) -> float:
    """Rate (1/2) sum max(0, log(lambda_k / theta)) at water level theta."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    lam = spec.eigenvalues
    ascending = lam[::-1]
    m = lam.size - np.searchsorted(ascending, theta, side="right")
    if m == 0:
        return 0.0
    return 0.5 * float(np.sum(np.log(lam[:m])) - m * math.log(theta))


def water_level(spec: Spectrum, rate: float) -> float:
    """Water level theta solving level_rate(spec, theta) = rate.

    Bisection on log theta to relative tolerance 1e-10. With an analytic
    tail the level must stay above the last stored eigenvalue, otherwise
    the truncated tail would carry unaccounted rate; without one the
    spectrum is complete and the level may sink below every eigenvalue.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    lam = spec.eigenvalues
    if lam.size == 0:
        raise ValueError("empty spectrum")
    if rate == 0.0:
        return float(lam[0])
    lo, hi = float(lam[-1]), float(lam[0])
    # precompute cumulative log sums so each rate evaluation is a lookup
    cumlog = np.concatenate([[0.0], np.cumsum(np.log(lam))])
    if level_rate(spec, lo) < rate:
        if spec.tail_mass > 0:
            raise ValueError(
                f"rate {rate} exceeds the resolution of the stored spectrum; "
                f"use more eigenvalue terms"
            )
        # complete spectrum: every mode active, level solves in closed form
        return math.exp((cumlog[-1] - 2.0 * rate) / lam.size)
    log_lo, log_hi = math.log(lo), math.log(hi)
    ascending = lam[::-1]

    def rate_at(log_theta: float) -> float:
        m = lam.size - np.searchsorted(ascending, math.exp(log_theta), side="right")
        if m == 0:
            return 0.0
        return 0.5 * (cumlog[m] - m * log_theta)

    while hi / lo - 1.0 > LEVEL_REL_TOL:
        mid = 0.5 * (log_lo + log_hi)
        if rate_at(mid) > rate:
            log_lo = mid
        else:
            log_hi = mid
        lo, hi = math.exp(log_lo), math.exp(log_hi)
    return 0.5 * (lo + hi)


def waterfill(spec: Spectrum, rate: float) -> float:
    """L2 distortion D(r) = sqrt(sum min(lambda_k, theta) + tail_mass)."""
    theta = water_level(spec, rate)
    lam = spec.eigenvalues
    d_sq = float(np.sum(np.minimum(lam, theta))) + spec.tail_mass
    return math.sqrt(d_sq)


def kappa_rd_estimate(spec: Spectrum, r_list) -> list[tuple[float, float]]:
    """Normalized curve (r, r^H D(r)) along an increasing rate list."""
    rates = [float(r) for r in r_list]
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ValueError("r_list must be strictly increasing")
    return [(r, r**spec.hurst * waterfill(spec, r)) for r in rates]


def export_spectrum_csv(spec: Spectrum, path) -> None:
    """Write eigenvalues as CSV columns k, lambda."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "lambda"])
        for k, lam in enumerate(spec.eigenvalues, start=1):
            writer.writerow([k, repr(float(lam))])


def export_curve_csv(spec: Spectrum, r_list, path) -> None:
    """Write the distortion-rate curve as CSV columns r, D, rH_D."""
    rates = [float(r) for r in r_list]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "D", "rH_D"])
        for r in rates:
            d = waterfill(spec, r)
            writer.writerow([repr(r), repr(d), repr(r**spec.hurst * d)])
