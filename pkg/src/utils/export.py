"""CSV/JSON result files with reproducibility metadata."""

import io
import json
import math
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ParameterError, ResultsIOError

FLOAT_FORMAT = "%.17g"
FORMATS = ("csv", "json")


def _metadata_value(value) -> str:
    return value if isinstance(value, str) else json.dumps(value)


def _parse_metadata_value(raw: str):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def _metadata_lines(metadata: Dict[str, object]) -> str:
    return "".join(f"# {key}: {_metadata_value(value)}\n" for key, value in metadata.items())


def _frame_for(result) -> pd.DataFrame:
    if hasattr(result, "to_frame"):
        return result.to_frame()
    if hasattr(result, "to_dict"):
        return pd.DataFrame([result.to_dict()])
    raise ParameterError(f"Cannot tabulate a {type(result).__name__}")


def render_csv(frame: pd.DataFrame, metadata: Optional[Dict[str, object]] = None) -> str:
    buffer = io.StringIO()
    buffer.write(_metadata_lines(metadata or {}))
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def render_json(payload: Dict[str, object]) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _write_text(destination, text: str) -> Path:
    path = Path(destination)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ResultsIOError(path, str(exc)) from exc
    return path


def write_results(
    result,
    destination,
    fmt: str = "csv",
    fit=None,
    config: Optional[Dict[str, object]] = None,
) -> Path:
    """Write an error table, moment table, report or fit to ``destination``.

    CSV files start with ``# key: value`` lines (the result's own metadata,
    then the resolved run config and any fitted slope); JSON files carry the
    same under ``config`` and ``rate_fit``.
    """
    if fmt not in FORMATS:
        raise ParameterError(f"Unknown output format '{fmt}'; expected one of {FORMATS}")

    if fmt == "csv":
        metadata: Dict[str, object] = {}
        if hasattr(result, "metadata"):
            metadata.update(result.metadata())
        if config:
            metadata.update({f"config.{key}": value for key, value in config.items()})
        if fit is not None:
            metadata.update({f"rate_fit.{key}": value for key, value in fit.to_dict().items()})
        return _write_text(destination, render_csv(_frame_for(result), metadata))

    payload: Dict[str, object] = {}
    if config:
        payload["config"] = dict(config)
    payload.update(result.to_dict())
    if fit is not None:
        payload["rate_fit"] = fit.to_dict()
    return _write_text(destination, render_json(payload))


def write_json(payload: Dict[str, object], destination) -> Path:
    return _write_text(destination, render_json(payload))


def write_frame(frame: pd.DataFrame, destination, metadata: Optional[Dict[str, object]] = None) -> Path:
    return _write_text(destination, render_csv(frame, metadata))


def write_rate_plot_data(table, destination, config: Optional[Dict[str, object]] = None) -> Path:
    """Two whitespace-separated columns, log₂ N and log₂ rms_error, for gnuplot.

    The header repeats the table metadata and run config as `#` lines, as in
    the CSV.
    """
    metadata: Dict[str, object] = dict(table.metadata())
    if config:
        metadata.update({f"config.{key}": value for key, value in config.items()})
    lines = [_metadata_lines(metadata) + "# log2_N log2_rms_error"]
    for row in table.rows:
        if row.rms_error > 0 and math.isfinite(row.rms_error):
            lines.append(f"{np.log2(row.N):.17g} {np.log2(row.rms_error):.17g}")
    return _write_text(destination, "\n".join(lines) + "\n")


def read_results(source) -> Tuple[object, Optional[object]]:
    """Parse an error table (and its rate fit, if any) written by write_results."""
    from ..core.experiments import ErrorRow, ErrorTable, RateFit

    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ResultsIOError(path, str(exc), writing=False) from exc

    try:
        if path.suffix == ".json":
            payload = json.loads(text)
            fit = RateFit(**payload["rate_fit"]) if payload.get("rate_fit") else None
            return ErrorTable.from_dict(payload), fit

        metadata = {}
        for line in text.splitlines():
            if not line.startswith("#"):
                break
            key, _, raw = line[1:].strip().partition(": ")
            metadata[key] = _parse_metadata_value(raw)
        frame = pd.read_csv(io.StringIO(text), comment="#", float_precision="round_trip")
    except (ValueError, KeyError, TypeError) as exc:
        raise ResultsIOError(path, f"malformed results file ({exc})", writing=False) from exc

    rows = [
        ErrorRow(
            N=int(record["N"]),
            rms_error=float(record["rms_error"]),
            std_error=float(record["std_error"]),
            explosions=int(record["explosions"]),
        )
        for record in frame.to_dict(orient="records")
    ]
    fit_fields = {key.split(".", 1)[1]: value for key, value in metadata.items() if key.startswith("rate_fit.")}
    try:
        table = ErrorTable(
            problem=str(metadata["problem"]),
            scheme=str(metadata["scheme"]),
            taming_enabled=bool(metadata.get("taming_enabled", True)),
            N_list=[row.N for row in rows],
            N_ref=int(metadata["N_ref"]),
            paths=int(metadata["paths"]),
            master_seed=int(metadata["seed"]),
            rows=rows,
        )
        fit = RateFit(**fit_fields) if fit_fields else None
    except (KeyError, TypeError) as exc:
        raise ResultsIOError(path, f"missing metadata ({exc})", writing=False) from exc
    return table, fit
