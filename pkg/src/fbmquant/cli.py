"""Command-line front end.

Subcommands: ``sample`` draws one path, ``rd`` runs a rate-distortion
sweep, ``kappa`` reduces a sweep to a normalized-constant curve,
``waterfill`` evaluates the Gaussian benchmark, ``selftest`` runs the
built-in invariant checks.

Exit codes: 0 on success, 2 for configuration errors (bad flags, bad
config file, invalid parameter values), 1 for runtime failures such as
an unwritable output path.  All output goes to stdout unless ``--out``
is given; a relative ``--out`` resolves under ``$FBMQUANT_OUTDIR`` when
that variable is set.

A ``--config`` file supplies flat ``key=value`` defaults (keys match
flag names with hyphens as underscores, ``#`` starts a comment).
Values from the file apply only where the flag was not given on the
command line, so explicit flags always win.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from .lab import (
    DEFAULT_RATES,
    NORMS,
    SCHEMES,
    SweepConfig,
    kappa_estimate,
    rd_sweep,
    render_report,
    selftest,
)
from .paths import RngSpec, sample_fbm
from .ratedist import bm_spectrum, covariance_spectrum, waterfill

# schemes whose distortion lives in the lp metric
_LP_SCHEMES = ("increment_lp", "waterfill_ref")


def _moment_q(text: str):
    """Parse a moment order: a positive float or the string ``inf``."""
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"q must be a number or 'inf', got {text!r}"
        ) from None


def _parse_rates(text: str) -> tuple:
    try:
        values = tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise ValueError(
            f"rates must be a comma-separated list of numbers, got {text!r}"
        ) from None
    if not values or any(not math.isfinite(v) or v <= 0 for v in values):
        raise ValueError(f"rates must all be positive and finite, got {text!r}")
    return values


def _resolve_out(out: str | None) -> Path | None:
    if out is None:
        return None
    path = Path(out)
    root = os.environ.get("FBMQUANT_OUTDIR")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _emit(text: str, args) -> None:
    path = _resolve_out(args.out)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _read_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValueError(f"cannot read config file {path}: {exc}") from None
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(
                f"config line {lineno} is not key=value: {stripped!r}"
            )
        key, _, value = stripped.partition("=")
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _explicit_dests(actions, argv) -> set:
    """Dests of flags that literally appear on the command line."""
    given = set()
    for action in actions:
        for opt in action.option_strings:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                given.add(action.dest)
    return given


def _apply_config(subparser, args, argv) -> None:
    if args.config is None:
        return
    entries = _read_config(args.config)
    actions = {a.dest: a for a in subparser._actions if a.option_strings}
    given = _explicit_dests(subparser._actions, argv)
    for key, raw in entries.items():
        if key not in actions or key in ("help", "config"):
            raise ValueError(f"unknown config key '{key}'")
        if key in given:
            continue
        action = actions[key]
        cast = action.type if callable(action.type) else str
        try:
            value = cast(raw)
        except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
            raise ValueError(
                f"invalid config value for '{key}': {exc}"
            ) from None
        if action.choices is not None and value not in action.choices:
            raise ValueError(
                f"config value for '{key}' must be one of "
                f"{tuple(action.choices)}, got {value!r}"
            )
        setattr(args, key, value)


def _sweep_config_from(args) -> SweepConfig:
    if args.scheme is None:
        raise ValueError(
            "a scheme is required; pass --scheme or set scheme in the "
            "config file"
        )
    norm = args.norm
    if norm is None:
        norm = "lp" if args.scheme in _LP_SCHEMES else "sup"
    return SweepConfig(
        scheme=args.scheme,
        hurst=args.hurst,
        norm=norm,
        p=args.p if norm == "lp" else None,
        moment_q=args.q,
        rates=_parse_rates(args.rates),
        mc=args.mc,
        n_per_unit=args.n_per_unit,
        pool_size=args.pool_size,
        base_radius=args.base_radius,
        n_offsets=args.n_offsets,
        calibration_size=args.calibration_size,
        horizon=args.horizon,
        eps_scale=args.eps_scale,
        codebook_cap=args.codebook_cap,
        spectrum_terms=args.spectrum_terms,
    )


def _cmd_sample(args) -> int:
    path = sample_fbm(args.hurst, args.horizon, args.n_per_unit,
                      RngSpec(args.seed))
    lines = ["t,x"]
    for t, v in zip(path.times(), path.values):
        lines.append(f"{float(t)!r},{float(v)!r}")
    _emit("\n".join(lines) + "\n", args)
    return 0


def _cmd_rd(args) -> int:
    config = _sweep_config_from(args)
    records = rd_sweep(config, RngSpec(args.seed), threads=args.threads)
    _emit(render_report(records, args.format), args)
    return 0


def _cmd_kappa(args) -> int:
    config = _sweep_config_from(args)
    records = rd_sweep(config, RngSpec(args.seed), threads=args.threads)
    estimate = kappa_estimate(records, config.hurst)
    _emit(render_report(estimate, args.format), args)
    return 0


def _cmd_waterfill(args) -> int:
    if args.spectrum == "exact-bm":
        if args.hurst != 0.5:
            raise ValueError(
                f"the exact-bm spectrum requires hurst 0.5, got {args.hurst}"
            )
        spec = bm_spectrum(args.terms)
    else:
        spec = covariance_spectrum(args.hurst, args.grid_n)
    lines = ["r,D,rH_D"]
    for r in _parse_rates(args.rates):
        d = waterfill(spec, r)
        v = r ** args.hurst * d
        lines.append(f"{float(r)!r},{float(d)!r},{float(v)!r}")
    _emit("\n".join(lines) + "\n", args)
    return 0


def _cmd_selftest(args) -> int:
    results = selftest()
    lines = [
        f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}"
        for r in results
    ]
    _emit("\n".join(lines) + "\n", args)
    return 0 if all(r.passed for r in results) else 1


_COMMANDS = {
    "sample": _cmd_sample,
    "rd": _cmd_rd,
    "kappa": _cmd_kappa,
    "waterfill": _cmd_waterfill,
    "selftest": _cmd_selftest,
}


def _add_sweep_flags(sp) -> None:
    sp.add_argument("--scheme", choices=SCHEMES, default=None,
                    help="coding scheme; required unless set via --config")
    sp.add_argument("--hurst", type=float, default=0.5,
                    help="Hurst exponent of the source")
    sp.add_argument("--norm", choices=NORMS, default=None,
                    help="error norm (default: sup, or lp for "
                         "increment_lp and waterfill_ref)")
    sp.add_argument("--p", type=float, default=2.0,
                    help="exponent for the lp norm")
    sp.add_argument("--q", type=_moment_q, default=2.0,
                    help="distortion moment order; accepts 'inf'")
    sp.add_argument("--rates", default=",".join(str(r) for r in DEFAULT_RATES),
                    help="comma-separated code rates in nats")
    sp.add_argument("--mc", type=int, default=1000,
                    help="Monte Carlo sample count per rate")
    sp.add_argument("--n-per-unit", type=int, default=256,
                    help="grid points per unit time")
    sp.add_argument("--pool-size", type=int, default=1024,
                    help="codebook pool size for path coders")
    sp.add_argument("--base-radius", type=float, default=1.0,
                    help="per-block error radius of the base quantizer")
    sp.add_argument("--n-offsets", type=int, default=3,
                    help="offset grid size of the concatenation scheme")
    sp.add_argument("--calibration-size", type=int, default=4096,
                    help="paths used to calibrate base quantizer weights")
    sp.add_argument("--horizon", type=int, default=8,
                    help="time horizon of each coded path")
    sp.add_argument("--eps-scale", type=float, default=None,
                    help="override the increment coder step-size constant")
    sp.add_argument("--codebook-cap", type=int, default=4096,
                    help="largest per-block codebook for the increment coder")
    sp.add_argument("--spectrum-terms", type=int, default=100_000,
                    help="eigenvalues kept by the waterfill reference")
    sp.add_argument("--threads", type=int, default=1,
                    help="worker threads; results are identical at any count")
    sp.add_argument("--format", choices=("csv", "json"), default="csv",
                    help="report format")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="root seed for the run's random streams")
    common.add_argument("--out", default=None,
                        help="write output to this file instead of stdout; "
                             "relative paths resolve under $FBMQUANT_OUTDIR")
    common.add_argument("--config", default=None,
                        help="key=value file of defaults; flags override it")

    parser = argparse.ArgumentParser(
        prog="fbmquant",
        description="Coding schemes and distortion benchmarks for "
                    "fractional Brownian motion.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, help_text):
        sp = subparsers.add_parser(
            name, parents=[common], help=help_text, description=help_text,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        subs[name] = sp
        return sp

    sp = add("sample", "Draw one path and print it as t,x CSV.")
    sp.add_argument("--hurst", type=float, default=0.5,
                    help="Hurst exponent of the source")
    sp.add_argument("--horizon", type=int, default=1,
                    help="length of the sampled path in time units")
    sp.add_argument("--n-per-unit", type=int, default=256,
                    help="grid points per unit time")

    sp = add("rd", "Run a rate-distortion sweep and print the report.")
    _add_sweep_flags(sp)

    sp = add("kappa", "Reduce a sweep to the normalized-constant curve.")
    _add_sweep_flags(sp)

    sp = add("waterfill", "Evaluate the Gaussian distortion-rate benchmark.")
    sp.add_argument("--spectrum", choices=("exact-bm", "discretized"),
                    default="exact-bm",
                    help="eigenvalue source for the benchmark")
    sp.add_argument("--hurst", type=float, default=0.5,
                    help="Hurst exponent; exact-bm requires 0.5")
    sp.add_argument("--terms", type=int, default=100_000,
                    help="eigenvalues kept for the exact-bm spectrum")
    sp.add_argument("--grid-n", type=int, default=2048,
                    help="grid size for the discretized spectrum")
    sp.add_argument("--rates", default="10,100,1000",
                    help="comma-separated code rates in nats")

    add("selftest", "Run the built-in invariant checks.")

    return parser, subs


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config(subs[args.command], args, argv)
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
