from __future__ import annotations

import importlib
import json
from math import pi
from pathlib import Path
from unittest.mock import MagicMock

import pandas as pd
import pytest

from correlated_rabi.calibration import build_calibration
from correlated_rabi.checks import CheckResult
from correlated_rabi.config import ConfigError, parse_config
from correlated_rabi.estimation import FitError, FitResult, LineshapeParams
from correlated_rabi.ms_model import PiTimeReport
from correlated_rabi.scan import ScanAxis, ScanConfig, run_2d_scan, run_scan

TWO_PI = 2 * pi

SPECTRUM = """
[scan]
name = even

[axis1]
parameter = delta1
start = -3 kHz
stop = 3 kHz
points = 13
"""


def _load_pipeline_module():
    return importlib.import_module("correlated_rabi.pipeline")


def _fit_result(converged: bool = True) -> FitResult:
    return FitResult(
        params=LineshapeParams.pi_pulse(TWO_PI * 1e3, 2.0),
        std_errors={"alpha": 0.01, "delta0": TWO_PI * 2.0},
        log_likelihood=-12.5,
        converged=converged,
        n_points=13,
        free=("A", "omega_line", "alpha", "delta0"),
        method="least_squares",
    )


def test_spectrum_writes_dataset_with_provenance(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config(SPECTRUM, source="even.cfg")
    runner = MagicMock(side_effect=run_scan)

    result = pipeline.run_spectrum(config, tmp_path, scan_runner=runner)

    runner.assert_called_once()
    scan_cfg = runner.call_args.args[0]
    assert isinstance(scan_cfg, ScanConfig)
    assert scan_cfg.axis1.points == 13
    assert result == {"dataset": str(tmp_path / "even.tsv")}
    meta = json.loads((tmp_path / "even.tsv.meta.json").read_text(encoding="utf-8"))
    assert meta["config_source"] == "even.cfg"
    assert meta["config"]["axis1"]["start"] == "-3000 Hz"
    assert meta["mode"] == "exact"


def test_spectrum_rejects_second_axis(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config(SPECTRUM + "[axis2]\nparameter = delta2\nstart = 0 Hz\nstop = 1 Hz\n")

    with pytest.raises(ConfigError, match="scan2d"):
        pipeline.run_spectrum(config, tmp_path)


def test_map_writes_resonance_locus(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config(
        """
[model]
coupling = 255 Hz

[scan]
name = map
locus_label = uu
locus_along = delta1

[axis1]
parameter = light_shift
start = -400 Hz
stop = 400 Hz
points = 5

[axis2]
parameter = delta1
start = -1 kHz
stop = 1 kHz
points = 41
"""
    )

    result = pipeline.run_map(config, tmp_path, scan_runner=run_2d_scan)

    locus = pd.read_csv(result["locus"], sep="\t")
    assert list(locus.columns) == ["light_shift_hz", "peak_delta1_hz"]
    assert locus["light_shift_hz"].tolist() == pytest.approx([-400.0, -200.0, 0.0, 200.0, 400.0])
    # even resonance sits at half the light shift, up to the 50 Hz grid step
    assert locus["peak_delta1_hz"].abs().tolist() == pytest.approx([200.0, 100.0, 0.0, 100.0, 200.0], abs=25.0)


def test_nutation_reports_pi_time_for_full_drive(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config(
        """
[model]
model = full_ms

[drive]
locate_pi_time = true

[scan]
name = nutation

[axis1]
parameter = pulse_time
start = 0 us
stop = 2000 us
points = 3
"""
    )
    report = PiTimeReport(
        located=1.96e-3, peak_population=0.99, effective_prediction=1.96e-3, coupling_formula=0.98e-3
    )
    runner = MagicMock(
        return_value=run_scan(ScanConfig(axis1=ScanAxis("pulse_time", 0.0, 2e-3, 3)))
    )
    locator = MagicMock(return_value=report)

    result = pipeline.run_nutation(config, tmp_path, scan_runner=runner, pi_time_locator=locator)

    locator.assert_called_once_with(config.drive_params(), tol=1e-8)
    assert result["pi_time"]["prefactor"] == pytest.approx(2.0)
    saved = json.loads(Path(result["pi_time_report"]).read_text(encoding="utf-8"))
    assert saved["located_s"] == pytest.approx(1.96e-3)


def test_nutation_needs_time_axis(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()

    with pytest.raises(ConfigError, match="pulse_time"):
        pipeline.run_nutation(parse_config(SPECTRUM), tmp_path)


def test_fit_writes_report_and_curve(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config(SPECTRUM + "[fit]\nfixed = tau, A\nalpha = 1.5\ncurve_points = 11\n")
    fitter = MagicMock(return_value=_fit_result())

    result = pipeline.run_fit(config, tmp_path, fitter=fitter)

    args, kwargs = fitter.call_args
    assert args[1] == "uu"
    assert args[2].alpha == 1.5
    assert kwargs == {"fixed": ("tau", "A"), "axis": None, "require_convergence": False}
    assert (tmp_path / "even.tsv").exists()
    assert result["fit"]["params"]["alpha"] == 2.0
    assert result["fit"]["std_errors"]["delta0_hz"] == pytest.approx(2.0)
    curve = pd.read_csv(result["curve"], sep="\t")
    assert list(curve.columns) == ["delta1_hz", "p_uu"]
    assert len(curve) == 11
    assert curve["p_uu"].max() == pytest.approx(1.0)
    assert "error" not in json.loads(Path(result["report"]).read_text(encoding="utf-8"))


def test_fit_reads_stored_dataset(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config(SPECTRUM)
    stored = pipeline.run_spectrum(config, tmp_path / "data")["dataset"]
    fitter = MagicMock(return_value=_fit_result())
    runner = MagicMock()

    result = pipeline.run_fit(config, tmp_path / "fit", data_path=stored, scan_runner=runner, fitter=fitter)

    runner.assert_not_called()
    assert fitter.call_args.args[0].n_points == 13
    assert result["fit"]["dataset"] == stored


def test_failed_fit_keeps_best_effort_parameters(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    fitter = MagicMock(side_effect=FitError("did not converge", result=_fit_result(converged=False)))

    result = pipeline.run_fit(parse_config(SPECTRUM), tmp_path, fitter=fitter)

    assert result["error"] == "did not converge"
    document = json.loads(Path(result["report"]).read_text(encoding="utf-8"))
    assert document["error"] == "did not converge"
    assert document["converged"] is False
    assert Path(result["curve"]).exists()


def test_failed_fit_without_result_writes_error_only(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    fitter = MagicMock(side_effect=FitError("Degenerate dataset"))

    result = pipeline.run_fit(parse_config(SPECTRUM), tmp_path, fitter=fitter)

    assert "curve" not in result
    assert json.loads(Path(result["report"]).read_text(encoding="utf-8")) == {"error": "Degenerate dataset"}


def test_fisher_writes_comparison_and_curves(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config("[scan]\nname = compare\n[fisher]\nmonte_carlo = false\ncurve_points = 21\n")

    result = pipeline.run_fisher(config, tmp_path)

    assert result["protocols"]["correlated_over_pair"] == pytest.approx(2**-0.5, rel=0.03)
    document = json.loads(Path(result["report"]).read_text(encoding="utf-8"))
    assert "monte_carlo" not in document
    curves = pd.read_csv(result["curves"], sep="\t")
    assert len(curves) == 21
    assert curves["p_product"].max() == pytest.approx(1.0)
    assert (curves["fisher_correlated"] >= 0).all()
    assert curves["p_correlated"].sum() < curves["p_single"].sum()


def test_calibration_passes_configuration_to_calibrator(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config(
        "[scan]\nname = cal\nshots = 0\n[calibration]\npowers = 0, 1\nwhich_ion = 1\npoints = 21\ncompare = false\n"
    )
    curve = build_calibration([0.0, 1.0], 1, 0, seed=0, points=21)
    calibrator = MagicMock(return_value=curve)

    result = pipeline.run_calibration(config, tmp_path, calibrator=calibrator)

    args, kwargs = calibrator.call_args
    assert args == ((0.0, 1.0), 1, 0, 0)
    assert kwargs["points"] == 21
    assert kwargs["light"] == config.light_shift_params()
    assert result["baseline_diff_hz"] == pytest.approx(0.0, abs=1e-6)
    points = pd.read_csv(result["points"], sep="\t")
    assert points["power"].tolist() == [0.0, 1.0]
    assert "correlated_shift" not in json.loads(Path(result["report"]).read_text(encoding="utf-8"))


def test_calibration_compares_correlated_shift(tmp_path: Path) -> None:
    pipeline = _load_pipeline_module()
    config = parse_config("[scan]\nname = cal\n[calibration]\npowers = 0, 1\nwhich_ion = 2\npoints = 21\n")

    result = pipeline.run_calibration(config, tmp_path)

    document = json.loads(Path(result["report"]).read_text(encoding="utf-8"))
    rows = document["correlated_shift"]["2"]
    assert len(rows) == 2
    assert "error" not in result


def test_verify_reports_each_check(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    pipeline = _load_pipeline_module()
    checker = MagicMock(
        return_value=[CheckResult("unitarity", True, "norm drift 0"), CheckResult("full_drive", False, "boom")]
    )

    result = pipeline.run_verify(tmp_path, include_full_ms=False, checker=checker)

    checker.assert_called_once_with(include_full_ms=False)
    assert result["passed"] is False
    stderr = capsys.readouterr().err
    assert "[info] unitarity: ok" in stderr
    assert "[error] full_drive: FAILED (boom)" in stderr
    document = json.loads(Path(result["report"]).read_text(encoding="utf-8"))
    assert [c["name"] for c in document["checks"]] == ["unitarity", "full_drive"]
