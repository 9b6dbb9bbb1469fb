from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Callable, Sequence

from .config import RunConfig, default_config, load_config
from .pipeline import (
    log,
    run_calibration,
    run_fisher,
    run_fit,
    run_map,
    run_nutation,
    run_spectrum,
    run_verify,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _env_int(name: str) -> int | None:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError:
        log("warn", f"ignoring non-integer {name}={raw!r}")
        return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="correlated-rabi",
        description="Simulate and analyse correlated Rabi spectroscopy of trapped-ion spins.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Run configuration file (.cfg)")
    common.add_argument(
        "--out",
        type=Path,
        default=Path(os.getenv("CORRELATED_RABI_OUT", "results")),
        help="Output directory (defaults to CORRELATED_RABI_OUT or ./results)",
    )
    common.add_argument("--seed", type=int, help="Override the configured seed")
    common.add_argument("--shots", type=int, help="Override shots per point (0 = exact)")
    common.add_argument(
        "--threads",
        type=int,
        default=_env_int("CORRELATED_RABI_THREADS"),
        help="Worker threads (defaults to CORRELATED_RABI_THREADS or the config)",
    )
    common.add_argument("--debug", action="store_true", help="Print debugging output")

    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sub.add_parser("nutate", parents=[common], help="Populations versus pulse time")
    sub.add_parser("scan", parents=[common], help="One-axis spectrum")
    sub.add_parser("scan2d", parents=[common], help="Two-axis detuning map")
    fit = sub.add_parser("fit", parents=[common], help="Fit the Rabi lineshape")
    fit.add_argument("--data", type=Path, help="Dataset (.tsv) to fit instead of a fresh scan")
    sub.add_parser("fisher", parents=[common], help="Compare protocol frequency uncertainties")
    sub.add_parser("calibrate", parents=[common], help="Light-shift calibration pipeline")
    verify = sub.add_parser("verify", parents=[common], help="Run the invariant suite")
    verify.add_argument(
        "--skip-full-ms",
        dest="skip_full_ms",
        action="store_true",
        help="Skip the full drive-model integration check",
    )
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config is not None else default_config()
    config = config.with_overrides(seed=args.seed, shots=args.shots, threads=args.threads)
    if args.config is not None:
        log("info", f"config: {config.source}")
    return config


def _run(args: argparse.Namespace) -> dict[str, Any]:
    out: Path = args.out
    if args.command == "verify":
        return run_verify(out, include_full_ms=not args.skip_full_ms)

    config = _load(args)
    recipes: dict[str, Callable[..., dict[str, Any]]] = {
        "nutate": run_nutation,
        "scan": run_spectrum,
        "scan2d": run_map,
        "fisher": run_fisher,
        "calibrate": run_calibration,
    }
    if args.command == "fit":
        return run_fit(config, out, data_path=args.data, debug=args.debug)
    return recipes[args.command](config, out, debug=args.debug)


def _show_warning(message, category, filename, lineno, file=None, line=None) -> None:
    log("warn", f"{category.__name__}: {message}")


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit status.

    0 on success, 1 on a runtime failure (including failed checks or fits),
    2 on usage or configuration errors.
    """

    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    with warnings.catch_warnings():
        warnings.simplefilter("default")
        warnings.showwarning = _show_warning
        try:
            result = _run(args)
        except ValueError as exc:
            log("error", f"{exc.__class__.__name__}: {exc}")
            return EXIT_USAGE
        except (RuntimeError, OSError) as exc:
            log("error", f"{exc.__class__.__name__}: {exc}")
            return EXIT_FAILURE

    if args.debug:
        log("debug", f"result: {result}")
    if result.get("error") or result.get("passed") is False:
        return EXIT_FAILURE
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
