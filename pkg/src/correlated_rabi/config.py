from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import pi
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

from .calibration import TEXTBOOK_PREFACTOR, LightShiftParams
from .ms_model import MsDriveParams
from .scan import AXIS_PARAMETERS, MODELS, NoiseModel, ScanAxis, ScanConfig

TWO_PI = 2.0 * pi

FREQUENCY_UNITS = {
    "hz": TWO_PI,
    "khz": TWO_PI * 1e3,
    "mhz": TWO_PI * 1e6,
    "rad/s": 1.0,
    "krad/s": 1e3,
}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6}


class ConfigError(ValueError):
    """Raised for unreadable or invalid run configurations."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None) -> None:
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(field)
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
        self.line = line
        self.field = field


@dataclass(frozen=True)
class _Key:
    kind: str
    default: Any = None
    choices: tuple[str, ...] = ()


# kind: frequency | time | quantity | float | int | bool | str | floats | strs
_SCHEMA: dict[str, dict[str, _Key]] = {
    "model": {
        "model": _Key("str", "effective_ising", MODELS),
        "coupling": _Key("frequency", TWO_PI * 1e3),
        "initial_state": _Key("str", "dd"),
        "n_spins": _Key("int", 2),
        "ion": _Key("int", 1),
        "coupling_axis": _Key("str", "x", ("x", "y")),
        "max_spins": _Key("int", 10),
        "delta1": _Key("frequency", 0.0),
        "delta2": _Key("frequency", 0.0),
        "light_shift": _Key("frequency", 0.0),
        "ion_shift1": _Key("frequency", 0.0),
        "ion_shift2": _Key("frequency", 0.0),
        "baseline_diff": _Key("frequency", 0.0),
    },
    "scan": {
        "name": _Key("str", "spectrum"),
        "pulse_time": _Key("time", None),
        "shots": _Key("int", 0),
        "seed": _Key("int", 0),
        "threads": _Key("int", 1),
        "noise_samples": _Key("int", 64),
        "tol": _Key("float", 1e-8),
        "locus_label": _Key("str", ""),
        "locus_along": _Key("str", "delta1", AXIS_PARAMETERS),
    },
    "axis1": {
        "parameter": _Key("str", None, AXIS_PARAMETERS),
        "start": _Key("quantity", None),
        "stop": _Key("quantity", None),
        "points": _Key("int", 41),
    },
    "axis2": {
        "parameter": _Key("str", None, AXIS_PARAMETERS),
        "start": _Key("quantity", None),
        "stop": _Key("quantity", None),
        "points": _Key("int", 21),
    },
    "noise": {
        "sigma_common": _Key("frequency", 0.0),
        "sigma_diff": _Key("frequency", 0.0),
        "sigma_rabi_rel": _Key("float", 0.0),
    },
    "drive": {
        "nu": _Key("frequency", TWO_PI * 1e6),
        "epsilon": _Key("frequency", TWO_PI * 25.5e3),
        "delta": _Key("frequency", 0.0),
        "eta": _Key("float", 0.05),
        "omega_carrier": _Key("frequency", TWO_PI * 51e3),
        "offset1": _Key("frequency", 0.0),
        "offset2": _Key("frequency", 0.0),
        "n_max": _Key("int", 6),
        "n_init": _Key("int", 0),
        "locate_pi_time": _Key("bool", False),
    },
    "fit": {
        "data": _Key("str", ""),
        "target": _Key("str", "uu"),
        "axis": _Key("str", ""),
        "fixed": _Key("strs", ("tau",)),
        "alpha": _Key("float", 1.0),
        "require_convergence": _Key("bool", False),
        "curve_points": _Key("int", 401),
    },
    "fisher": {
        "shots_per_point": _Key("int", 10_000),
        "omega_line": _Key("frequency", TWO_PI * 1e3),
        "contrast": _Key("float", 1.0),
        "replicas": _Key("int", 200),
        "monte_carlo": _Key("bool", True),
        "curve_points": _Key("int", 401),
    },
    "calibration": {
        "powers": _Key("floats", (0.0, 0.25, 0.5, 0.75, 1.0)),
        "which_ion": _Key("str", "both", ("1", "2", "both")),
        "omega_ls": _Key("frequency", TWO_PI * 40e3),
        "delta_ls": _Key("frequency", TWO_PI * 3.5e6),
        "prefactor": _Key("str", "stated"),
        "points": _Key("int", 41),
        "span": _Key("float", 2.5),
        "compare": _Key("bool", True),
    },
}

_NON_NEGATIVE_INTS = {"shots", "seed", "n_init", "replicas"}
_POSITIVE_INTS = {"threads", "noise_samples", "points", "n_spins", "max_spins",
                  "n_max", "shots_per_point", "curve_points"}


def _strip_comment(value: str) -> str:
    for marker in (" #", "\t#"):
        index = value.find(marker)
        if index >= 0:
            value = value[:index]
    return value.strip()


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in {'"', "'"}:
        return value[1:-1]
    return value


def _split_unit(raw: str, units: Mapping[str, float], what: str, line: int, key: str) -> float:
    parts = raw.split()
    if len(parts) != 2:
        raise ConfigError(
            f"{what} value {raw!r} needs a number and a unit ({', '.join(units)})",
            line=line,
            field=key,
        )
    number, unit = parts
    scale = units.get(unit.lower())
    if scale is None:
        raise ConfigError(f"Unknown {what.lower()} unit {unit!r}", line=line, field=key)
    try:
        return float(number) * scale
    except ValueError as exc:
        raise ConfigError(f"Invalid number {number!r}", line=line, field=key) from exc


def _quantity(raw: str, line: int, key: str) -> tuple[str, float]:
    parts = raw.split()
    unit = parts[-1].lower() if len(parts) == 2 else ""
    if unit in TIME_UNITS:
        return "time", _split_unit(raw, TIME_UNITS, "Time", line, key)
    return "frequency", _split_unit(raw, FREQUENCY_UNITS, "Frequency", line, key)


def _convert(spec: _Key, raw: str, line: int, key: str) -> Any:
    kind = spec.kind
    try:
        if kind == "frequency":
            return _split_unit(raw, FREQUENCY_UNITS, "Frequency", line, key)
        if kind == "time":
            if raw.lower() == "auto":
                return None
            return _split_unit(raw, TIME_UNITS, "Time", line, key)
        if kind == "quantity":
            return _quantity(raw, line, key)
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in {"true", "yes", "on", "1"}:
                return True
            if lowered in {"false", "no", "off", "0"}:
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(part) for part in raw.split(",") if part.strip())
        if kind == "strs":
            return tuple(part.strip() for part in raw.split(",") if part.strip())
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"Invalid {kind} value {raw!r}", line=line, field=key) from exc
    if spec.choices and raw not in spec.choices:
        raise ConfigError(
            f"Expected one of {', '.join(spec.choices)}, got {raw!r}", line=line, field=key
        )
    return raw


def parse_config(text: str, *, source: str = "<string>") -> "RunConfig":
    """Parse run-configuration text into a validated :class:`RunConfig`."""

    values: dict[str, dict[str, Any]] = {}
    lines: dict[tuple[str, str], int] = {}
    section: str | None = None
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"Malformed section header {line!r}", line=number)
            section = line[1:-1].strip().lower()
            if section not in _SCHEMA:
                raise ConfigError(f"Unknown section [{section}]", line=number)
            values.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"Expected 'key = value', got {line!r}", line=number)
        if section is None:
            raise ConfigError("Setting outside of any [section]", line=number)
        key, raw_value = line.split("=", 1)
        key = key.strip()
        qualified = f"{section}.{key}"
        spec = _SCHEMA[section].get(key)
        if spec is None:
            raise ConfigError("Unknown key", line=number, field=qualified)
        if key in values[section]:
            raise ConfigError("Duplicate key", line=number, field=qualified)
        value = _unquote(_strip_comment(raw_value))
        if not value:
            raise ConfigError("Empty value", line=number, field=qualified)
        values[section][key] = _convert(spec, value, number, qualified)
        lines[(section, key)] = number

    config = RunConfig.from_sections(values, source=source, lines=lines)
    return config


def load_config(path: Path | str) -> "RunConfig":
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Config file does not exist: {config_path}")
    return parse_config(config_path.read_text(encoding="utf-8"), source=str(config_path))


def _materialize(values: Mapping[str, Mapping[str, Any]]) -> dict[str, dict[str, Any]]:
    sections: dict[str, dict[str, Any]] = {}
    for name, keys in _SCHEMA.items():
        if name.startswith("axis") and name not in values:
            continue
        given = values.get(name, {})
        sections[name] = {key: given.get(key, spec.default) for key, spec in keys.items()}
    return sections


@dataclass(frozen=True)
class RunConfig:
    """Normalized run configuration: rad/s and seconds throughout."""

    sections: Mapping[str, Mapping[str, Any]]
    source: str = "<defaults>"
    lines: Mapping[tuple[str, str], int] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_sections(
        cls,
        values: Mapping[str, Mapping[str, Any]] | None = None,
        *,
        source: str = "<defaults>",
        lines: Mapping[tuple[str, str], int] | None = None,
    ) -> "RunConfig":
        sections = _materialize(values or {})
        config = cls(
            MappingProxyType({k: MappingProxyType(v) for k, v in sections.items()}),
            source,
            MappingProxyType(dict(lines or {})),
        )
        config._validate()
        return config

    def __getitem__(self, section: str) -> Mapping[str, Any]:
        if section not in self.sections:
            raise ConfigError(f"Configuration has no [{section}] section")
        return self.sections[section]

    def has(self, section: str) -> bool:
        return section in self.sections

    def _fail(self, section: str, key: str, message: str) -> ConfigError:
        return ConfigError(message, line=self.lines.get((section, key)), field=f"{section}.{key}")

    def _validate(self) -> None:
        for section, keys in self.sections.items():
            for key, value in keys.items():
                if key in _NON_NEGATIVE_INTS and value < 0:
                    raise self._fail(section, key, f"must be >= 0, got {value}")
                if key in _POSITIVE_INTS and value < 1:
                    raise self._fail(section, key, f"must be >= 1, got {value}")
        for name in ("axis1", "axis2"):
            if not self.has(name):
                continue
            axis = self.sections[name]
            for key in ("parameter", "start", "stop"):
                if axis[key] is None:
                    raise self._fail(name, key, "is required")
            wanted = "time" if axis["parameter"] == "pulse_time" else "frequency"
            for key in ("start", "stop"):
                if axis[key][0] != wanted:
                    raise self._fail(
                        name, key, f"{axis['parameter']} needs a {wanted} unit"
                    )
        if self.has("axis2") and not self.has("axis1"):
            raise ConfigError("[axis2] requires an [axis1] section")
        prefactor = self.sections["calibration"]["prefactor"]
        try:
            self.light_shift_prefactor()
        except ValueError as exc:
            raise self._fail("calibration", "prefactor", f"invalid value {prefactor!r}") from exc

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        shots: int | None = None,
        threads: int | None = None,
    ) -> "RunConfig":
        scan = dict(self.sections["scan"])
        for key, value in (("seed", seed), ("shots", shots), ("threads", threads)):
            if value is not None:
                scan[key] = value
        sections = {k: dict(v) for k, v in self.sections.items()}
        sections["scan"] = scan
        config = replace(
            self,
            sections=MappingProxyType({k: MappingProxyType(v) for k, v in sections.items()}),
        )
        config._validate()
        return config

    def axis(self, name: str) -> ScanAxis | None:
        if not self.has(name):
            return None
        axis = self.sections[name]
        return ScanAxis(axis["parameter"], axis["start"][1], axis["stop"][1], axis["points"])

    def noise_model(self) -> NoiseModel | None:
        noise = NoiseModel(**self.sections["noise"])
        return noise if noise.active else None

    def drive_params(self) -> MsDriveParams:
        drive = self.sections["drive"]
        return MsDriveParams(
            nu=drive["nu"],
            epsilon=drive["epsilon"],
            delta=drive["delta"],
            eta=drive["eta"],
            omega_carrier=drive["omega_carrier"],
            carrier_offsets=(drive["offset1"], drive["offset2"]),
            n_max=drive["n_max"],
            n_init=drive["n_init"],
        )

    def scan_config(self, *, require_axis2: bool = False) -> ScanConfig:
        axis1 = self.axis("axis1")
        if axis1 is None:
            raise ConfigError("This command needs an [axis1] section")
        axis2 = self.axis("axis2")
        if require_axis2 and axis2 is None:
            raise ConfigError("This command needs an [axis2] section")
        model, scan = self.sections["model"], self.sections["scan"]
        return ScanConfig(
            axis1=axis1,
            axis2=axis2,
            model=model["model"],
            initial_state=model["initial_state"],
            pulse_time=scan["pulse_time"],
            shots=scan["shots"],
            noise=self.noise_model(),
            seed=scan["seed"],
            coupling=model["coupling"],
            delta1=model["delta1"],
            delta2=model["delta2"],
            light_shift=model["light_shift"],
            ion_shifts=(model["ion_shift1"], model["ion_shift2"]),
            baseline_diff=model["baseline_diff"],
            n_spins=model["n_spins"],
            ion=model["ion"],
            coupling_axis=model["coupling_axis"],
            max_spins=model["max_spins"],
            drive=self.drive_params(),
            tol=scan["tol"],
            noise_samples=scan["noise_samples"],
            threads=scan["threads"],
        )

    def light_shift_prefactor(self) -> float:
        raw = str(self.sections["calibration"]["prefactor"]).strip().lower()
        if raw == "stated":
            return 1.0
        if raw == "textbook":
            return TEXTBOOK_PREFACTOR
        return float(raw)

    def light_shift_params(self) -> LightShiftParams:
        calibration = self.sections["calibration"]
        return LightShiftParams.from_reference(
            calibration["omega_ls"],
            calibration["delta_ls"],
            prefactor=self.light_shift_prefactor(),
        )

    def echo(self) -> dict[str, dict[str, Any]]:
        """Every effective value, frequencies in Hz and times in seconds."""

        rendered: dict[str, dict[str, Any]] = {}
        for section, keys in self.sections.items():
            out: dict[str, Any] = {}
            for key, value in keys.items():
                kind = _SCHEMA[section][key].kind
                if value is None:
                    out[key] = "auto" if kind == "time" else None
                elif kind == "frequency":
                    out[key] = f"{value / TWO_PI:.12g} Hz"
                elif kind == "time":
                    out[key] = f"{value:.12g} s"
                elif kind == "quantity":
                    dimension, number = value
                    out[key] = (
                        f"{number:.12g} s" if dimension == "time" else f"{number / TWO_PI:.12g} Hz"
                    )
                elif isinstance(value, tuple):
                    out[key] = list(value)
                else:
                    out[key] = value
            rendered[section] = out
        return rendered


def default_config() -> RunConfig:
    return RunConfig.from_sections()
