from __future__ import annotations

import json
from math import pi
from pathlib import Path
from typing import TYPE_CHECKING, Any, Mapping, Sequence

import numpy as np
import pandas as pd

if TYPE_CHECKING:
    from .scan import SpectrumDataset

TWO_PI = 2.0 * pi
AXIS_PARAMETERS = ("delta1", "delta2", "light_shift", "pulse_time")
SIDECAR_SUFFIX = ".meta.json"
FLOAT_FORMAT = "%.17g"


class DatasetError(ValueError):
    """Raised for malformed spectrum datasets."""


def axis_column(parameter: str) -> str:
    return f"{parameter}_s" if parameter == "pulse_time" else f"{parameter}_hz"


def sidecar_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def _axis_scale(name: str) -> float:
    return 1.0 if name == "pulse_time" else TWO_PI


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, set, frozenset)):
        return list(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_result(path: Path | str, payload: Mapping[str, Any]) -> Path:
    """Write a result document as indented JSON."""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(
        json.dumps(payload, indent=2, ensure_ascii=False, default=_json_default) + "\n",
        encoding="utf-8",
    )
    return target


def write_table(path: Path | str, columns: Mapping[str, Sequence[float] | np.ndarray]) -> Path:
    """Write a plot-ready tab-separated table."""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({k: np.asarray(v) for k, v in columns.items()}).to_csv(
        target, sep="\t", index=False, float_format=FLOAT_FORMAT
    )
    return target


def write_dataset(ds: SpectrumDataset, path: Path | str) -> Path:
    """Write ``ds`` as a TSV table plus a JSON metadata sidecar.

    Axis columns are in Hz (``_hz``) or seconds (``_s``); values are
    ``p_<state>`` probabilities or ``k_<state>`` counts with a ``shots`` column.
    """

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            axis_column(name): ds.coordinates[:, i] / _axis_scale(name)
            for i, name in enumerate(ds.axis_names)
        }
    )
    if ds.exact:
        assert ds.populations is not None
        for j, label in enumerate(ds.labels):
            frame[f"p_{label}"] = ds.populations[:, j]
    else:
        assert ds.counts is not None and ds.shots is not None
        for j, label in enumerate(ds.labels):
            frame[f"k_{label}"] = ds.counts[:, j]
        frame["shots"] = ds.shots
    frame.to_csv(target, sep="\t", index=False, float_format=FLOAT_FORMAT)

    sidecar = {
        **ds.metadata,
        "axis_names": list(ds.axis_names),
        "labels": list(ds.labels),
        "grid_shape": list(ds.grid_shape),
        "mode": "exact" if ds.exact else "sampled",
    }
    write_result(sidecar_path(target), sidecar)
    return target


def _read_sidecar(path: Path) -> dict[str, Any]:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        return {}
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"Malformed metadata sidecar {meta_path}: {exc}") from exc
    if not isinstance(meta, dict):
        raise DatasetError(f"Metadata sidecar {meta_path} must hold an object")
    return meta


def _infer_axes(columns: Sequence[str]) -> list[str]:
    names = []
    for column in columns:
        for name in AXIS_PARAMETERS:
            if column == axis_column(name):
                names.append(name)
    return names


def read_dataset(path: Path | str) -> SpectrumDataset:
    """Read a dataset written by :func:`write_dataset`.

    The sidecar is optional; without it axes and labels are inferred from the
    column names and the grid is taken as one-dimensional.

    Raises:
        DatasetError: For unreadable files, column mismatches, missing shots
            or values violating the probability simplex or count totals.
    """

    from .scan import SpectrumDataset

    source = Path(path)
    if not source.exists():
        raise DatasetError(f"Dataset file does not exist: {source}")
    try:
        frame = pd.read_csv(source, sep="\t")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DatasetError(f"Malformed dataset {source}: {exc}") from exc

    meta = _read_sidecar(source)
    columns = list(frame.columns)
    axis_names = list(meta.get("axis_names") or _infer_axes(columns))
    if not axis_names:
        raise DatasetError(f"{source} has no recognised axis column")
    for name in axis_names:
        if name not in AXIS_PARAMETERS:
            raise DatasetError(f"Unknown axis {name!r} in {source}")
        if axis_column(name) not in columns:
            raise DatasetError(f"Column {axis_column(name)!r} missing from {source}")

    exact = any(c.startswith("p_") for c in columns)
    sampled = any(c.startswith("k_") for c in columns)
    if exact == sampled:
        raise DatasetError(f"{source} must hold either p_* or k_* columns")
    prefix = "p_" if exact else "k_"
    labels = list(meta.get("labels") or [c[2:] for c in columns if c.startswith(prefix)])
    value_columns = [f"{prefix}{label}" for label in labels]
    missing = [c for c in value_columns if c not in columns]
    if missing:
        raise DatasetError(f"Columns {missing} missing from {source}")
    if not exact and "shots" not in columns:
        raise DatasetError(f"Counts file {source} has no shots column")
    expected = {axis_column(n) for n in axis_names} | set(value_columns)
    if not exact:
        expected.add("shots")
    extra = set(columns) - expected
    if extra:
        raise DatasetError(f"Unexpected columns {sorted(extra)} in {source}")

    if frame[list(expected)].isna().any().any():
        raise DatasetError(f"{source} has empty cells")

    coordinates = np.column_stack(
        [frame[axis_column(n)].to_numpy(dtype=float) * _axis_scale(n) for n in axis_names]
    )
    grid_shape = tuple(int(n) for n in meta.get("grid_shape", ())) or (len(frame),)
    metadata = {
        k: v
        for k, v in meta.items()
        if k not in ("axis_names", "labels", "grid_shape")
    }
    common = {
        "axis_names": tuple(axis_names),
        "coordinates": coordinates,
        "labels": tuple(labels),
        "grid_shape": grid_shape,
        "metadata": metadata,
    }
    if exact:
        return SpectrumDataset(populations=frame[value_columns].to_numpy(dtype=float), **common)
    return SpectrumDataset(
        counts=frame[value_columns].to_numpy(),
        shots=frame["shots"].to_numpy(),
        **common,
    )
