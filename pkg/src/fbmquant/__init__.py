"""Constructive coding schemes and distortion benchmarks for FBM.

The package samples fractional Brownian motion on regular grids,
implements three codeable schemes (first-hit random coding,
concatenated block quantization, lattice increment coding), evaluates
the Gaussian distortion-rate benchmark by reverse water-filling, and
runs seeded Monte Carlo sweeps that reduce to normalized-constant
estimates.
"""

from .concat import (
    ConcatParams,
    build_base_quantizer,
    decode_concat,
    encode_concat,
    rescale_scheme,
)
from .increment import decode_sums, encode_lp, encode_sums
from .lab import (
    DistortionRecord,
    KappaEstimate,
    SweepConfig,
    kappa_estimate,
    log_moment_check,
    moment_concentration_diag,
    rd_sweep,
    read_report,
    render_report,
    resolution_refinement_check,
    selftest,
    write_report,
)
from .paths import (
    RngSpec,
    SampledPath,
    lp_distance,
    sample_fbm,
    sample_fbm_batch,
    scale_alpha,
    scale_alpha_inv,
    sup_distance,
)
from .randomcode import encode_at_rate, fallback_on_miss, first_hit, sample_pool
from .ratedist import Spectrum, bm_spectrum, covariance_spectrum, waterfill

__version__ = "0.1.0"

__all__ = [
    "ConcatParams",
    "DistortionRecord",
    "KappaEstimate",
    "RngSpec",
    "SampledPath",
    "Spectrum",
    "SweepConfig",
    "bm_spectrum",
    "build_base_quantizer",
    "covariance_spectrum",
    "decode_concat",
    "decode_sums",
    "encode_at_rate",
    "encode_concat",
    "encode_lp",
    "encode_sums",
    "fallback_on_miss",
    "first_hit",
    "kappa_estimate",
    "log_moment_check",
    "lp_distance",
    "moment_concentration_diag",
    "rd_sweep",
    "read_report",
    "render_report",
    "rescale_scheme",
    "resolution_refinement_check",
    "sample_fbm",
    "sample_fbm_batch",
    "sample_pool",
    "scale_alpha",
    "scale_alpha_inv",
    "selftest",
    "sup_distance",
    "waterfill",
    "write_report",
]
