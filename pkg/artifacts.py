"""
Run Artifacts

On-disk formats written by scenario runs:

- snapshots and checkpoints: one JSON header line followed by the field as
  row-major little-endian float64 values
- contours: CSV polylines (one block per chain) and a JSON document
- time series: CSV with a header row
- reports: JSON validated against a versioned schema before writing
"""

import csv
import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np

from errors import FormatError
from levelsets import Contour
from manifold import ChartGrid
from solver import LevelSetField, SolverState

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SNAPSHOT_FORMAT = "levelset-field"
SNAPSHOT_VERSION = 1
REPORT_FORMAT = "levelset-report"
CONTOUR_FORMAT = "levelset-contour"
PROPERTY_FORMAT = "levelset-properties"
SCHEMA_VERSION = 1

CONTOUR_CSV_HEADER = ("chain_id", "closed", "index", "coord0", "coord1")

_HEADER_KEYS = ("format", "format_version", "extents", "resolution", "periodic", "time", "endianness", "dtype")


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------

CHECK_SCHEMA = {
    "type": "object",
    "required": ["name", "passed", "value", "tolerance"],
    "properties": {
        "name": {"type": "string"},
        "passed": {"type": ["boolean", "null"]},
        "value": {"type": ["number", "null"]},
        "tolerance": {"type": ["number", "null"]},
        "detail": {"type": "object"},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Scenario report",
    "type": "object",
    "required": ["format", "format_version", "scenario", "passed", "error", "checks"],
    "properties": {
        "format": {"const": REPORT_FORMAT},
        "format_version": {"const": SCHEMA_VERSION},
        "scenario": {"type": "string"},
        "procedure": {"type": "string"},
        "passed": {"type": "boolean"},
        "error": {"type": ["string", "null"]},
        "elapsed_seconds": {"type": "number", "minimum": 0},
        "resolution": {"type": "integer", "minimum": 8},
        "checks": {"type": "array", "items": CHECK_SCHEMA},
        "series": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "object"}},
        },
        "artifacts": {"type": "object", "additionalProperties": {"type": "string"}},
        "config": {"type": "object"},
    },
}

CONTOUR_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Contour document",
    "type": "object",
    "required": ["format", "format_version", "level", "source_time", "chains"],
    "properties": {
        "format": {"const": CONTOUR_FORMAT},
        "format_version": {"const": SCHEMA_VERSION},
        "level": {"type": "number"},
        "source_time": {"type": "number", "minimum": 0},
        "empty": {"type": "boolean"},
        "chains": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["closed", "vertex_count", "vertices"],
                "properties": {
                    "closed": {"type": "boolean"},
                    "vertex_count": {"type": "integer", "minimum": 2},
                    "vertices": {
                        "type": "array",
                        "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    },
                },
            },
        },
    },
}

PROPERTY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Operator property report",
    "type": "object",
    "required": ["format", "format_version", "seed", "passed", "reports"],
    "properties": {
        "format": {"const": PROPERTY_FORMAT},
        "format_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer"},
        "passed": {"type": "boolean"},
        "reports": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["check", "operator", "trials", "violation_count", "passed"],
                "properties": {
                    "check": {"type": "string"},
                    "operator": {"type": "string"},
                    "trials": {"type": "integer", "minimum": 0},
                    "violation_count": {"type": "integer", "minimum": 0},
                    "violations": {"type": "array"},
                    "passed": {"type": "boolean"},
                },
            },
        },
    },
}


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def _write_json(document: Mapping[str, Any], path: PathLike, schema: Mapping[str, Any]) -> Path:
    jsonschema.validate(instance=document, schema=schema)
    path = Path(path)
    _atomic_write(path, (json.dumps(document, indent=2, sort_keys=False) + "\n").encode("utf-8"))
    return path


# ---------------------------------------------------------------------------
# Snapshots and checkpoints
# ---------------------------------------------------------------------------

def _encode_field(field: LevelSetField, state: Optional[Dict[str, Any]] = None) -> bytes:
    header: Dict[str, Any] = {
        "format": SNAPSHOT_FORMAT,
        "format_version": SNAPSHOT_VERSION,
        **field.grid.to_dict(),
        "time": field.time,
        "endianness": "little",
        "dtype": "float64",
    }
    if state is not None:
        header["state"] = state
    line = json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n"
    return line + np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")


def write_snapshot(field: LevelSetField, path: PathLike, state: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a field as a header line plus raw float64 values.

    Args:
        field: field to store
        path: destination file
        state: optional solver state stored in the header

    Returns:
        The written path
    """
    path = Path(path)
    _atomic_write(path, _encode_field(field, state))
    logger.debug(f"Wrote snapshot t={field.time:.6g} to {path}")
    return path


def _decode(data: bytes) -> Tuple[LevelSetField, Dict[str, Any]]:
    newline = data.find(b"\n")
    if newline < 0:
        raise FormatError("header line is not terminated", offset=len(data))
    try:
        header = json.loads(data[:newline].decode("utf-8"))
    except UnicodeDecodeError as e:
        raise FormatError("header is not UTF-8", offset=e.start) from e
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid header: {e.msg}", offset=e.pos) from e
    if not isinstance(header, dict):
        raise FormatError("header is not a JSON object", offset=0)

    if header.get("format") != SNAPSHOT_FORMAT:
        raise FormatError(f"expected format '{SNAPSHOT_FORMAT}', found '{header.get('format')}'", offset=0)
    if header.get("format_version") != SNAPSHOT_VERSION:
        raise FormatError(
            f"unsupported format_version: expected {SNAPSHOT_VERSION}, found {header.get('format_version')}",
            offset=0,
        )
    missing = [key for key in _HEADER_KEYS if key not in header]
    if missing:
        raise FormatError(f"header is missing {', '.join(missing)}", offset=newline)
    if header["endianness"] != "little" or header["dtype"] != "float64":
        raise FormatError(f"unsupported encoding {header['endianness']}/{header['dtype']}", offset=0)

    try:
        grid = ChartGrid.from_dict(header)
    except (TypeError, ValueError) as e:
        raise FormatError(f"invalid grid in header: {e}", offset=0) from e

    start = newline + 1
    expected = grid.shape[0] * grid.shape[1] * 8
    payload = data[start:]
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, expected {expected}",
                          offset=start + min(len(payload), expected))
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError("payload contains non-finite values", offset=start + 8 * int(bad[0]))
    return LevelSetField(grid, values, float(header["time"])), header


def read_snapshot(path: PathLike) -> LevelSetField:
    """
    Read a snapshot written by write_snapshot.

    Raises:
        FormatError: truncated, corrupt or incompatible file
    """
    field, _ = _decode(Path(path).read_bytes())
    return field


def write_checkpoint(state: SolverState, path: PathLike,
                     series: Optional[Sequence[Mapping[str, float]]] = None) -> Path:
    """Snapshot whose header carries the solver state and the step series so far."""
    payload = state.to_dict()
    payload["series"] = [dict(row) for row in (series or [])]
    path = write_snapshot(state.field, path, state=payload)
    logger.info(f"Checkpoint at step {state.step_index} (t={state.field.time:.6g}) written to {path}")
    return path


def read_checkpoint(path: PathLike) -> Tuple[SolverState, List[Dict[str, float]]]:
    """
    Returns:
        (solver state, per-step series recorded up to the checkpoint)

    Raises:
        FormatError: the file is not a checkpoint
    """
    field, header = _decode(Path(path).read_bytes())
    state = header.get("state")
    if not isinstance(state, dict):
        raise FormatError("snapshot carries no solver state", offset=0)
    try:
        solver_state = SolverState(
            field=field,
            step_index=int(state["step_index"]),
            snapshot_index=int(state["snapshot_index"]),
            reference_scale=float(state["reference_scale"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid solver state: {e}", offset=0) from e
    return solver_state, list(state.get("series", []))


# ---------------------------------------------------------------------------
# Contours, series, reports
# ---------------------------------------------------------------------------

def write_contour_csv(contour: Contour, path: PathLike) -> Path:
    """One row per vertex, chains in order; an empty contour writes only the header."""
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer)
    writer.writerow(CONTOUR_CSV_HEADER)
    for chain_id, chain in enumerate(contour.chains):
        for index, (c0, c1) in enumerate(chain.vertices):
            writer.writerow([chain_id, int(chain.closed), index, repr(float(c0)), repr(float(c1))])
    path = Path(path)
    _atomic_write(path, buffer.getvalue().encode("utf-8"))
    return path


def contour_document(contour: Contour) -> Dict[str, Any]:
    return {"format": CONTOUR_FORMAT, "format_version": SCHEMA_VERSION, **contour.to_dict()}


def write_contour_json(contour: Contour, path: PathLike) -> Path:
    return _write_json(contour_document(contour), path, CONTOUR_SCHEMA)


def write_series_csv(rows: Sequence[Mapping[str, Any]], path: PathLike,
                     columns: Optional[Iterable[str]] = None) -> Path:
    """
    Write a list of records as CSV. Columns default to the keys of the
    first row followed by any new keys in later rows.
    """
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
    columns = list(columns)
    buffer = io.StringIO(newline="")
    writer = csv.DictWriter(buffer, fieldnames=columns, extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    path = Path(path)
    _atomic_write(path, buffer.getvalue().encode("utf-8"))
    return path


def read_series_csv(path: PathLike) -> List[Dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_report(report: Mapping[str, Any], path: PathLike) -> Path:
    """Validate a scenario report document and write it."""
    return _write_json(report, path, REPORT_SCHEMA)


def write_property_report(document: Mapping[str, Any], path: PathLike) -> Path:
    return _write_json(document, path, PROPERTY_SCHEMA)
