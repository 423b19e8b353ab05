"""Portable output files.

Trajectory / field files
    ``<stem>.bin``: little-endian float64, rows = time snapshots, each row
    holding N complex values as interleaved (real, imag) pairs, so a row is
    2N doubles and the file is rows * 2N * 8 bytes with no padding.
    ``<stem>.hdr``: UTF-8 text sidecar, ``key: value`` lines (format,
    dtype, layout, rows, cols, plus free metadata), then the resolved run
    configuration as YAML under a ``config:`` key.

Tables
    CSV with a leading block of ``#``-prefixed lines: the resolved
    configuration as YAML, then ``# created: <UTC timestamp>``. The
    timestamp line is the only non-deterministic content of any file.
"""

from __future__ import annotations

import csv
import io as _io
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import yaml

from .errors import ConfigurationError

TIMESTAMP_PREFIX = "# created:"
FORMAT_TAG = "interleaved-complex-f64le/1"


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _config_block(config: Optional[Mapping]) -> str:
    if not config:
        return ""
    return yaml.safe_dump(dict(config), sort_keys=True, default_flow_style=False)


def write_field_file(stem, values: np.ndarray, config: Optional[Mapping] = None,
                     meta: Optional[Mapping] = None) -> tuple:
    """Write an (R, N) complex array as ``stem.bin`` + ``stem.hdr``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    values = np.atleast_2d(np.asarray(values, dtype=np.complex128))
    rows, cols = values.shape
    inter = np.empty((rows, 2 * cols), dtype="<f8")
    inter[:, 0::2] = values.real
    inter[:, 1::2] = values.imag
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(inter.tobytes())
    lines = [f"format: {FORMAT_TAG}", "dtype: <f8", "layout: row-major, (real, imag) interleaved",
             f"rows: {rows}", f"cols: {cols}"]
    for k, v in (meta or {}).items():
        lines.append(f"{k}: {v}")
    lines.append(f"created: {timestamp()}")
    text = "\n".join(lines) + "\n"
    if config:
        text += "config:\n" + "".join("  " + ln + "\n" for ln in _config_block(config).splitlines())
    hdr_path = stem.with_suffix(".hdr")
    hdr_path.write_text(text)
    return bin_path, hdr_path


def read_field_file(stem) -> tuple:
    """Inverse of :func:`write_field_file`; returns (array, header mapping)."""
    stem = Path(stem)
    if stem.suffix in (".bin", ".hdr"):
        stem = stem.with_suffix("")
    try:
        header = yaml.safe_load(stem.with_suffix(".hdr").read_text())
        raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read field file {stem}: {exc}") from exc
    if header.get("format") != FORMAT_TAG:
        raise ConfigurationError(f"{stem}.hdr: unknown format {header.get('format')!r}")
    rows, cols = int(header["rows"]), int(header["cols"])
    if raw.size != rows * cols * 2:
        raise ConfigurationError(f"{stem}.bin holds {raw.size} doubles, header says {rows * cols * 2}")
    raw = raw.reshape(rows, 2 * cols)
    return raw[:, 0::2] + 1j * raw[:, 1::2], header


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, complex):
        return repr(v)
    return str(v)


def write_table(path, rows: Sequence[Mapping], config: Optional[Mapping] = None,
                columns: Optional[Sequence[str]] = None) -> Path:
    """CSV with a ``#`` provenance header; floats are written with repr (round-trip exact)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    buf = _io.StringIO()
    for line in _config_block(config).splitlines():
        buf.write(f"# {line}\n")
    buf.write(f"{TIMESTAMP_PREFIX} {timestamp()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    path.write_text(buf.getvalue())
    return path


def read_table(path) -> tuple:
    """Rows (as str dicts) and the comment lines of a table written by :func:`write_table`."""
    lines = Path(path).read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return list(csv.DictReader(body)), comments


def strip_timestamps(text: str) -> str:
    """File content with the creation-time lines removed, for determinism checks."""
    return "\n".join(ln for ln in text.splitlines()
                     if not ln.startswith(TIMESTAMP_PREFIX) and not ln.startswith("created:"))
