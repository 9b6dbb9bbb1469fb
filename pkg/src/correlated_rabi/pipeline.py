from __future__ import annotations

import sys
from math import pi
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .calibration import (
    CalibrationCurve,
    CalibrationError,
    build_calibration,
    compare_correlated_shift,
)
from .checks import CheckResult, run_checks
from .config import ConfigError, RunConfig
from .dataset_io import read_dataset, write_dataset, write_result, write_table
from .estimation import (
    FitError,
    FitResult,
    LineshapeParams,
    fisher_per_shot,
    fit_lineshape,
    initial_guess,
    lineshape,
    monte_carlo_uncertainty,
    product_fisher_per_shot,
    protocol_comparison,
)
from .ms_model import PiTimeReport, locate_pi_time
from .scan import (
    ScanConfig,
    SpectrumDataset,
    axis_column,
    resonance_locus,
    run_2d_scan,
    run_scan,
)

TWO_PI = 2.0 * pi

ScanRunner = Callable[[ScanConfig], SpectrumDataset]
Fitter = Callable[..., FitResult]


def log(level: str, message: str, *, debug: bool = True) -> None:
    if level == "debug" and not debug:
        return
    print(f"[{level}] {message}", file=sys.stderr)


def _provenance(ds: SpectrumDataset, config: RunConfig) -> SpectrumDataset:
    return ds.with_metadata(config=config.echo(), config_source=config.source)


def _write_spectrum(ds: SpectrumDataset, out_dir: Path, name: str) -> Path:
    path = write_dataset(ds, out_dir / f"{name}.tsv")
    log("info", f"wrote {path} ({ds.n_points} points, {'exact' if ds.exact else 'sampled'})")
    return path


def run_nutation(
    config: RunConfig,
    out_dir: Path | str,
    *,
    scan_runner: Optional[ScanRunner] = None,
    pi_time_locator: Optional[Callable[..., PiTimeReport]] = None,
    debug: bool = False,
) -> dict[str, Any]:
    """Populations against pulse time, plus the located flip time for the full drive."""

    cfg = config.scan_config()
    if cfg.axis1.parameter != "pulse_time" or cfg.axis2 is not None:
        raise ConfigError("nutate needs a single [axis1] over pulse_time")
    out = Path(out_dir)
    runner = scan_runner or run_scan
    log("debug", f"nutation: model={cfg.model} initial={cfg.initial_state}", debug=debug)
    ds = _provenance(runner(cfg), config)
    name = config["scan"]["name"]
    result: dict[str, Any] = {"dataset": str(_write_spectrum(ds, out, name))}

    if cfg.model == "full_ms" and config["drive"]["locate_pi_time"]:
        locator = pi_time_locator or locate_pi_time
        report = locator(cfg.drive, tol=cfg.tol)
        log(
            "info",
            f"full-drive pi time {report.located * 1e6:.1f} us "
            f"(prefactor {report.prefactor:.3f} over pi/(2 coupling))",
        )
        path = write_result(out / f"{name}_pi_time.json", report.to_dict())
        result["pi_time"] = report.to_dict()
        result["pi_time_report"] = str(path)
    return result


def run_spectrum(
    config: RunConfig,
    out_dir: Path | str,
    *,
    scan_runner: Optional[ScanRunner] = None,
    debug: bool = False,
) -> dict[str, Any]:
    cfg = config.scan_config()
    if cfg.axis2 is not None:
        raise ConfigError("scan takes one axis; use scan2d for [axis2]")
    runner = scan_runner or run_scan
    log("debug", f"scan: model={cfg.model} axis={cfg.axis1.parameter}", debug=debug)
    ds = _provenance(runner(cfg), config)
    return {"dataset": str(_write_spectrum(ds, Path(out_dir), config["scan"]["name"]))}


def run_map(
    config: RunConfig,
    out_dir: Path | str,
    *,
    scan_runner: Optional[ScanRunner] = None,
    debug: bool = False,
) -> dict[str, Any]:
    """Two-axis map, with the resonance locus table when ``locus_label`` is set."""

    cfg = config.scan_config(require_axis2=True)
    out = Path(out_dir)
    runner = scan_runner or run_2d_scan
    log("debug", f"scan2d: {cfg.axis1.points}x{cfg.axis2.points} grid", debug=debug)
    ds = _provenance(runner(cfg), config)
    name = config["scan"]["name"]
    result: dict[str, Any] = {"dataset": str(_write_spectrum(ds, out, name))}

    label = config["scan"]["locus_label"]
    if label:
        along = config["scan"]["locus_along"]
        fixed_name = next(n for n in ds.axis_names if n != along)
        fixed, peaks = resonance_locus(ds, label, along)
        scale = 1.0 if fixed_name == "pulse_time" else TWO_PI
        path = write_table(
            out / f"{name}_locus.tsv",
            {
                axis_column(fixed_name): fixed / scale,
                f"peak_{axis_column(along)}": peaks / TWO_PI,
            },
        )
        log("info", f"wrote {path}")
        result["locus"] = str(path)
    return result


def _fit_init(config: RunConfig, ds: SpectrumDataset, target: str, axis: str | None) -> LineshapeParams:
    start = initial_guess(ds, target, axis=axis)
    return LineshapeParams(start.A, start.omega_line, start.tau, config["fit"]["alpha"], start.delta0)


def run_fit(
    config: RunConfig,
    out_dir: Path | str,
    *,
    data_path: Path | str | None = None,
    scan_runner: Optional[ScanRunner] = None,
    fitter: Optional[Fitter] = None,
    debug: bool = False,
) -> dict[str, Any]:
    """Fit the lineshape to a stored dataset, or to a fresh scan of the config.

    A failed fit is reported under ``error`` and its best-effort parameters
    are still written.
    """

    out = Path(out_dir)
    fit_cfg = config["fit"]
    source = data_path or fit_cfg["data"] or None
    if source is not None:
        ds = read_dataset(source)
        log("info", f"fitting {source}")
    else:
        cfg = config.scan_config()
        ds = _provenance((scan_runner or run_scan)(cfg), config)
        _write_spectrum(ds, out, config["scan"]["name"])

    target = fit_cfg["target"]
    axis = fit_cfg["axis"] or None
    fit = fitter or fit_lineshape
    name = f"{config['scan']['name']}_fit"
    result: dict[str, Any] = {}
    fit_result: FitResult | None
    try:
        fit_result = fit(
            ds,
            target,
            _fit_init(config, ds, target, axis),
            fixed=fit_cfg["fixed"],
            axis=axis,
            require_convergence=fit_cfg["require_convergence"],
        )
    except FitError as exc:
        log("warn", f"lineshape fit failed: {exc}")
        result["error"] = str(exc) or exc.__class__.__name__
        fit_result = exc.result

    if fit_result is not None:
        alpha = fit_result.params.alpha
        alpha_error = fit_result.std_errors.get("alpha")
        shown = f"{alpha:.4f}" + (f" +/- {alpha_error:.4f}" if alpha_error is not None else "")
        log("info", f"fitted alpha = {shown} (converged={fit_result.converged})")
        payload = {
            **fit_result.to_dict(),
            "target": target,
            "dataset": str(source) if source is not None else config.source,
        }
        result["fit"] = payload
        x = ds.axis_values(axis)
        grid = np.linspace(float(x.min()), float(x.max()), fit_cfg["curve_points"])
        column = axis_column(axis or ds.axis_names[0])
        result["curve"] = str(
            write_table(
                out / f"{name}_curve.tsv",
                {column: grid / TWO_PI, f"p_{target}": lineshape(fit_result.params, grid)},
            )
        )
    document = {**result.get("fit", {}), **({"error": result["error"]} if "error" in result else {})}
    result["report"] = str(write_result(out / f"{name}.json", document))
    return result


def run_fisher(
    config: RunConfig,
    out_dir: Path | str,
    *,
    debug: bool = False,
) -> dict[str, Any]:
    """Protocol comparison at the optimal working points, with Monte Carlo confirmation."""

    out = Path(out_dir)
    fisher_cfg, scan_cfg = config["fisher"], config["scan"]
    shots = scan_cfg["shots"] or fisher_cfg["shots_per_point"]
    report = protocol_comparison(
        shots, omega_line=fisher_cfg["omega_line"], contrast=fisher_cfg["contrast"]
    )
    log(
        "info",
        f"correlated/uncorrelated-pair uncertainty ratio {report.correlated_over_pair:.4f}; "
        f"correlated/single {report.correlated_over_single:.4f}",
    )
    document: dict[str, Any] = {"protocols": report.to_dict(), "seed": scan_cfg["seed"]}
    if fisher_cfg["monte_carlo"]:
        log("debug", f"monte carlo: {fisher_cfg['replicas']} replicas", debug=debug)
        mc = monte_carlo_uncertainty(
            shots,
            fisher_cfg["replicas"],
            scan_cfg["seed"],
            omega_line=fisher_cfg["omega_line"],
            contrast=fisher_cfg["contrast"],
            threads=scan_cfg["threads"],
        )
        log("info", f"monte carlo correlated/pair ratio {mc.correlated_over_pair:.4f}")
        document["monte_carlo"] = mc.to_dict()
    document["config"] = config.echo()
    name = scan_cfg["name"]
    path = write_result(out / f"{name}_fisher.json", document)

    omega = fisher_cfg["omega_line"]
    single = LineshapeParams.pi_pulse(omega, 1.0, A=fisher_cfg["contrast"])
    correlated = LineshapeParams.pi_pulse(omega, 2.0, A=fisher_cfg["contrast"])
    delta = np.linspace(-2.0 * omega, 2.0 * omega, fisher_cfg["curve_points"])
    table = write_table(
        out / f"{name}_fisher_curves.tsv",
        {
            "delta_hz": delta / TWO_PI,
            "p_single": lineshape(single, delta),
            "p_product": np.asarray(lineshape(single, delta)) ** 2,
            "p_correlated": lineshape(correlated, delta),
            "fisher_single": np.asarray(fisher_per_shot(single, delta)) * TWO_PI**2,
            "fisher_product": np.asarray(product_fisher_per_shot(single, delta)) * TWO_PI**2,
            "fisher_correlated": np.asarray(fisher_per_shot(correlated, delta)) * TWO_PI**2,
        },
    )
    return {"report": str(path), "curves": str(table), "protocols": report.to_dict()}


def _calibration_table(curve: CalibrationCurve) -> dict[str, list[float]]:
    rows = [p.to_dict() for p in curve.points]
    return {key: [row[key] for row in rows] for key in rows[0]}


def run_calibration(
    config: RunConfig,
    out_dir: Path | str,
    *,
    calibrator: Optional[Callable[..., CalibrationCurve]] = None,
    debug: bool = False,
) -> dict[str, Any]:
    """Light-shift calibration curve and the correlated-shift consistency check."""

    out = Path(out_dir)
    cal, model, scan_cfg = config["calibration"], config["model"], config["scan"]
    which = cal["which_ion"]
    build = calibrator or build_calibration
    curve = build(
        cal["powers"],
        which if which == "both" else int(which),
        scan_cfg["shots"],
        scan_cfg["seed"],
        light=config.light_shift_params(),
        coupling=model["coupling"],
        pulse_time=scan_cfg["pulse_time"],
        baseline_diff=model["baseline_diff"],
        points=cal["points"],
        span=cal["span"],
        noise=config.noise_model(),
        threads=scan_cfg["threads"],
    )
    log("info", f"baseline difference {curve.baseline_diff / TWO_PI:.3f} Hz")
    for ion, line in curve.linear_fit.items():
        log(
            "info",
            f"ion {ion} shifted: slope {line.slope / TWO_PI:.3f} Hz/power, R^2 {line.r_squared:.6f}",
        )

    document: dict[str, Any] = {**curve.to_dict(), "config": config.echo()}
    result: dict[str, Any] = {}
    if cal["compare"]:
        comparisons = {}
        try:
            for ion in curve.linear_fit:
                rows = compare_correlated_shift(
                    curve,
                    ion,
                    shots=scan_cfg["shots"],
                    seed=scan_cfg["seed"],
                    coupling=model["coupling"],
                    pulse_time=scan_cfg["pulse_time"],
                    points=cal["points"],
                    span=cal["span"],
                    noise=config.noise_model(),
                )
                comparisons[str(ion)] = [row.to_dict() for row in rows]
                worst = max(abs(row.residual) for row in rows) / TWO_PI
                log("debug", f"ion {ion}: worst correlated-shift residual {worst:.3g} Hz", debug=debug)
        except CalibrationError as exc:
            log("warn", f"correlated shift comparison failed: {exc}")
            result["error"] = str(exc)
        document["correlated_shift"] = comparisons

    name = scan_cfg["name"]
    result["report"] = str(write_result(out / f"{name}_calibration.json", document))
    result["points"] = str(write_table(out / f"{name}_calibration_points.tsv", _calibration_table(curve)))
    result["baseline_diff_hz"] = curve.baseline_diff / TWO_PI
    return result


def run_verify(
    out_dir: Path | str,
    *,
    include_full_ms: bool = True,
    checker: Optional[Callable[..., list[CheckResult]]] = None,
) -> dict[str, Any]:
    results = (checker or run_checks)(include_full_ms=include_full_ms)
    for check in results:
        log("info" if check.passed else "error", f"{check.name}: {'ok' if check.passed else 'FAILED'} ({check.detail})")
    passed = all(check.passed for check in results)
    path = write_result(
        Path(out_dir) / "verify.json",
        {"passed": passed, "checks": [c.to_dict() for c in results]},
    )
    return {"passed": passed, "report": str(path)}
