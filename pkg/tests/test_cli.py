from __future__ import annotations

import importlib.util
import warnings
from pathlib import Path
from typing import Any

import pytest

from correlated_rabi import cli
from correlated_rabi.estimation import FitError
from correlated_rabi.ms_model import RegimeWarning

SPECTRUM = """
[scan]
name = even
seed = 3

[axis1]
parameter = delta1
start = -2 kHz
stop = 2 kHz
points = 5
"""


def _load_script():
    script_path = Path(__file__).resolve().parent.parent / "scripts" / "rabi_spectroscopy.py"
    spec = importlib.util.spec_from_file_location("rabi_spectroscopy_cli", script_path)
    assert spec is not None and spec.loader is not None
    script = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(script)
    return script


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "even.cfg"
    path.write_text(SPECTRUM, encoding="utf-8")
    return path


@pytest.fixture
def captured_run(monkeypatch: pytest.MonkeyPatch) -> dict[str, Any]:
    captured: dict[str, Any] = {}

    def fake_run_spectrum(config, out, **kwargs):
        captured.update(config=config, out=out, kwargs=kwargs)
        return {"dataset": str(out / "even.tsv")}

    monkeypatch.setattr(cli, "run_spectrum", fake_run_spectrum)
    return captured


def test_missing_command_is_a_usage_error(capsys: pytest.CaptureFixture[str]) -> None:
    assert cli.dispatch([]) == cli.EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_help_exits_cleanly(capsys: pytest.CaptureFixture[str]) -> None:
    assert cli.dispatch(["--help"]) == cli.EXIT_OK
    assert "calibrate" in capsys.readouterr().out


def test_scan_applies_command_line_overrides(
    config_file: Path, tmp_path: Path, captured_run: dict[str, Any]
) -> None:
    code = cli.dispatch(
        ["scan", "--config", str(config_file), "--out", str(tmp_path / "out"), "--seed", "11", "--shots", "200"]
    )

    assert code == cli.EXIT_OK
    config = captured_run["config"]
    assert config["scan"]["seed"] == 11
    assert config["scan"]["shots"] == 200
    assert config.source == str(config_file)
    assert captured_run["out"] == tmp_path / "out"
    assert captured_run["kwargs"] == {"debug": False}


def test_environment_supplies_output_and_threads(
    monkeypatch: pytest.MonkeyPatch, config_file: Path, tmp_path: Path, captured_run: dict[str, Any]
) -> None:
    monkeypatch.setenv("CORRELATED_RABI_OUT", str(tmp_path / "env-out"))
    monkeypatch.setenv("CORRELATED_RABI_THREADS", "3")

    assert cli.dispatch(["scan", "--config", str(config_file)]) == cli.EXIT_OK

    assert captured_run["out"] == tmp_path / "env-out"
    assert captured_run["config"]["scan"]["threads"] == 3


def test_non_integer_thread_variable_is_ignored(
    monkeypatch: pytest.MonkeyPatch,
    config_file: Path,
    captured_run: dict[str, Any],
    capsys: pytest.CaptureFixture[str],
) -> None:
    monkeypatch.setenv("CORRELATED_RABI_THREADS", "many")

    assert cli.dispatch(["scan", "--config", str(config_file)]) == cli.EXIT_OK

    assert captured_run["config"]["scan"]["threads"] == 1
    assert "ignoring non-integer CORRELATED_RABI_THREADS" in capsys.readouterr().err


def test_configuration_errors_exit_with_usage_status(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    code = cli.dispatch(["scan", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)])

    assert code == cli.EXIT_USAGE
    assert "[error] ConfigError" in capsys.readouterr().err


def test_runtime_failures_exit_with_failure_status(
    monkeypatch: pytest.MonkeyPatch, config_file: Path, tmp_path: Path
) -> None:
    def failing_fit(*_args, **_kwargs):
        raise FitError("Degenerate dataset")

    monkeypatch.setattr(cli, "run_fit", failing_fit)

    assert cli.dispatch(["fit", "--config", str(config_file), "--out", str(tmp_path)]) == cli.EXIT_FAILURE


def test_reported_errors_exit_with_failure_status(
    monkeypatch: pytest.MonkeyPatch, config_file: Path, tmp_path: Path
) -> None:
    captured: dict[str, Any] = {}

    def fake_run_fit(config, out, *, data_path, debug):
        captured["data_path"] = data_path
        return {"error": "did not converge", "report": str(out / "even_fit.json")}

    monkeypatch.setattr(cli, "run_fit", fake_run_fit)
    data = tmp_path / "even.tsv"

    code = cli.dispatch(["fit", "--config", str(config_file), "--out", str(tmp_path), "--data", str(data)])

    assert code == cli.EXIT_FAILURE
    assert captured["data_path"] == data


@pytest.mark.parametrize(("passed", "expected"), [(True, cli.EXIT_OK), (False, cli.EXIT_FAILURE)])
def test_verify_exit_status_follows_checks(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path, passed: bool, expected: int
) -> None:
    calls: list[bool] = []

    def fake_verify(out, *, include_full_ms):
        calls.append(include_full_ms)
        return {"passed": passed, "report": str(out / "verify.json")}

    monkeypatch.setattr(cli, "run_verify", fake_verify)

    assert cli.dispatch(["verify", "--out", str(tmp_path), "--skip-full-ms"]) == expected
    assert calls == [False]


def test_warnings_are_logged(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    def warning_fisher(config, out, **kwargs):
        warnings.warn("drive outside the perturbative regime", RegimeWarning)
        return {"report": str(out / "fisher.json")}

    monkeypatch.setattr(cli, "run_fisher", warning_fisher)

    assert cli.dispatch(["fisher", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert "[warn] RegimeWarning: drive outside the perturbative regime" in capsys.readouterr().err


def test_script_load_env_file_sets_missing_values(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    script = _load_script()
    env_file = tmp_path / ".env"
    env_file.write_text(
        "# defaults\nexport CORRELATED_RABI_OUT='from dotenv'  # quoted\nCORRELATED_RABI_THREADS=4\nbroken line\n"
    )
    monkeypatch.delenv("CORRELATED_RABI_OUT", raising=False)
    monkeypatch.delenv("CORRELATED_RABI_THREADS", raising=False)

    applied = script.load_env_file(env_file)

    assert applied == {"CORRELATED_RABI_OUT": "from dotenv", "CORRELATED_RABI_THREADS": "4"}
    assert script.os.environ["CORRELATED_RABI_OUT"] == "from dotenv"
    assert script.os.environ["CORRELATED_RABI_THREADS"] == "4"


def test_script_load_env_file_ignores_foreign_keys_and_bad_quoting(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    script = _load_script()
    env_file = tmp_path / ".env"
    env_file.write_text("HOME_DIR=/elsewhere\nCORRELATED_RABI_OUT='unterminated\n")
    monkeypatch.delenv("HOME_DIR", raising=False)
    monkeypatch.delenv("CORRELATED_RABI_OUT", raising=False)

    assert script.load_env_file(env_file) == {}
    assert "HOME_DIR" not in script.os.environ
    assert "CORRELATED_RABI_OUT" not in script.os.environ
    assert ".env:2" in capsys.readouterr().err


def test_script_load_env_file_does_not_override_existing_env(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    script = _load_script()
    env_file = tmp_path / ".env"
    env_file.write_text("CORRELATED_RABI_OUT=from-dotenv\n")
    monkeypatch.setenv("CORRELATED_RABI_OUT", "already-set")

    script.load_env_file(env_file)

    assert script.os.environ["CORRELATED_RABI_OUT"] == "already-set"


def test_script_main_loads_dotenv_before_dispatch(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    script = _load_script()
    (tmp_path / ".env").write_text("CORRELATED_RABI_OUT=dotenv-results\n")
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CORRELATED_RABI_OUT", raising=False)
    seen: dict[str, Any] = {}

    def fake_dispatch(argv):
        seen["argv"] = argv
        seen["out"] = script.os.environ.get("CORRELATED_RABI_OUT")
        return 0

    monkeypatch.setattr(script, "dispatch", fake_dispatch)
    monkeypatch.setattr(script.sys, "argv", ["rabi_spectroscopy", "verify"])

    with pytest.raises(SystemExit) as excinfo:
        script.main()

    assert excinfo.value.code == 0
    assert seen == {"argv": ["verify"], "out": "dotenv-results"}
