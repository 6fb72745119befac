"""On-disk formats: sweep records, spectra, purity tables and JSON results.

Every CSV starts with '#' provenance lines (tool version, config digest,
seed) followed by a fixed header row. Writes go to a temporary file in the
target directory and are moved into place with os.replace.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .. import __version__
from .cavity_types import CavityParams
from .errors import RecordFormatError
from .photon_sim.detector import DEFAULT_WAVELENGTH_M, DetectorModel
from .photon_sim.sweep import MODE_SEQUENTIAL, SweepRecord, reference_counts
from .polarization import BASES, JonesField
from .tomography.spectrum import PuritySpectrum

logger = logging.getLogger('Pipeline')

PathLike = Union[str, Path]

RECORD_COLUMNS = ["detuning_hz"] + [f"counts_{basis}" for basis in BASES]
SPECTRUM_COLUMNS = ["detuning_hz", "value", "flag"]
PURITY_COLUMNS = ["detuning_hz", "purity", "s1", "s2", "s3", "convergence_flag"]

FLAG_OK = "ok"
FLAG_LOW_SIGNAL = "low_signal"
FLAG_CLAMPED = "clamped"
FLAG_INDETERMINATE = "indeterminate"
FLAG_UNDEFINED = "undefined"


@dataclass(frozen=True)
class Provenance:
    config_sha256: Optional[str] = None
    seed: Optional[int] = None
    kind: str = "data"

    def header_lines(self) -> List[str]:
        return [
            f"# fibersphere {__version__} {self.kind}",
            f"# config_sha256: {self.config_sha256 or 'none'}",
            f"# seed: {'none' if self.seed is None else self.seed}",
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {"tool": "fibersphere", "version": __version__, "config_sha256": self.config_sha256, "seed": self.seed}


def _format_float(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format(float(value), ".17g")


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write text to path via a sibling temporary file and os.replace."""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w",
        encoding="utf-8",
        newline="",
        dir=target.parent,
        prefix=f".{target.name}.",
        suffix=".tmp",
        delete=False,
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, target)
    except BaseException:
        try:
            os.unlink(handle.name)
        except OSError:
            pass
        raise
    logger.debug("Wrote %s", target)
    return target


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _scrub(value: Any) -> Any:
    """Replace non-finite floats with None; JSON has no NaN or Infinity."""

    if isinstance(value, dict):
        return {k: _scrub(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_scrub(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: PathLike, payload: Dict[str, Any], provenance: Optional[Provenance] = None) -> Path:
    body = dict(payload)
    if provenance is not None:
        body["provenance"] = provenance.to_dict()
    text = json.dumps(_scrub(body), indent=2, sort_keys=True, default=_json_default) + "\n"
    return atomic_write_text(path, text)


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"invalid JSON: {exc}", str(path)) from exc
    if not isinstance(data, dict):
        raise RecordFormatError("expected a JSON object", str(path))
    return data


def _csv_text(provenance: Provenance, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    for line in provenance.header_lines():
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def _read_csv(path: PathLike, columns: Sequence[str]) -> Tuple[Dict[str, str], List[List[str]]]:
    """Return (provenance header fields, data rows) after checking the column row."""

    header: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        lines = handle.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise RecordFormatError("missing column header row", str(path))
    reader = csv.reader(body)
    found = next(reader)
    if [c.strip() for c in found] != list(columns):
        raise RecordFormatError(f"expected columns {list(columns)}, got {found}", str(path))
    rows = []
    for number, row in enumerate(reader, start=1):
        if len(row) != len(columns):
            raise RecordFormatError(f"data row {number} has {len(row)} fields, expected {len(columns)}", str(path))
        rows.append(row)
    return header, rows


def sidecar_path(record_path: PathLike) -> Path:
    return Path(record_path).with_suffix(".json")


def write_sweep_record(path: PathLike, record: SweepRecord, provenance: Provenance) -> Tuple[Path, Path]:
    """Write the counts CSV and its JSON sidecar; returns both paths."""

    rows = (
        [_format_float(f)] + [str(int(c)) for c in counts]
        for f, counts in zip(record.detunings_hz, record.counts)
    )
    csv_path = atomic_write_text(path, _csv_text(provenance, RECORD_COLUMNS, rows))
    meta_path = write_json(sidecar_path(path), {"record": record.meta(), "columns": RECORD_COLUMNS}, provenance)
    return csv_path, meta_path


def read_sweep_record(
    path: PathLike,
    *,
    detector: Optional[DetectorModel] = None,
    probe: Optional[JonesField] = None,
    wavelength_m: Optional[float] = None,
) -> SweepRecord:
    """Load a sweep record CSV.

    Detector, probe and reference counts come from the JSON sidecar when one
    exists; otherwise the caller must supply detector and probe.
    """

    header, rows = _read_csv(path, RECORD_COLUMNS)
    if not rows:
        raise RecordFormatError("record has no data rows", str(path))
    try:
        detunings = np.array([float(row[0]) for row in rows])
        counts = np.array([[int(value) for value in row[1:]] for row in rows], dtype=np.int64)
    except ValueError as exc:
        raise RecordFormatError(f"malformed value: {exc}", str(path)) from exc

    meta: Dict[str, Any] = {}
    sidecar = sidecar_path(path)
    if sidecar.exists():
        meta = read_json(sidecar).get("record") or {}

    try:
        if meta:
            detector = DetectorModel.from_dict(meta["detector"])
            a_x = meta["probe"]["a_x"]
            a_y = meta["probe"]["a_y"]
            probe = JonesField(
                a_x=complex(a_x[0], a_x[1]),
                a_y=complex(a_y[0], a_y[1]),
                frequency_hz=float(meta["probe"].get("frequency_hz", 0.0)),
            )
            wavelength = float(meta.get("wavelength_m", DEFAULT_WAVELENGTH_M))
            reference = np.asarray(meta["reference_counts"], dtype=float)
            params = CavityParams.from_dict(meta["params"]) if meta.get("params") else None
            seed = meta.get("seed")
            extras = {
                "mode": meta.get("mode", MODE_SEQUENTIAL),
                "depolarization": float(meta.get("depolarization", 0.0)),
                "jitter_hz": float(meta.get("jitter_hz", 0.0)),
            }
        else:
            if detector is None or probe is None:
                raise RecordFormatError("no sidecar found; detector and probe must be supplied", str(path))
            wavelength = wavelength_m or DEFAULT_WAVELENGTH_M
            reference = reference_counts(probe, detector, wavelength)
            params = None
            seed = int(header["seed"]) if header.get("seed", "none").isdigit() else None
            extras = {}
        record = SweepRecord(
            detunings_hz=detunings,
            counts=counts,
            detector=detector,
            probe=probe,
            reference_counts=reference,
            wavelength_m=wavelength,
            seed=seed,
            params=params,
            **extras,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, RecordFormatError):
            raise
        raise RecordFormatError(f"inconsistent record: {exc}", str(path)) from exc
    logger.info("Loaded %d-point record from %s", len(record), path)
    return record


def write_spectrum(
    path: PathLike,
    detunings_hz: Sequence[float],
    values: Sequence[Optional[float]],
    flags: Sequence[str],
    provenance: Provenance,
) -> Path:
    """Spectrum CSV; gaps carry an empty value and a non-ok flag."""

    rows = ([_format_float(f), _format_float(v), flag] for f, v, flag in zip(detunings_hz, values, flags))
    return atomic_write_text(path, _csv_text(provenance, SPECTRUM_COLUMNS, rows))


def read_spectrum(path: PathLike, *, usable_only: bool = True) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """(detunings, values, flags). Rows without a value are dropped when usable_only."""

    _, rows = _read_csv(path, SPECTRUM_COLUMNS)
    detunings: List[float] = []
    values: List[float] = []
    flags: List[str] = []
    try:
        for row in rows:
            value = float(row[1]) if row[1].strip() else math.nan
            if usable_only and math.isnan(value):
                continue
            detunings.append(float(row[0]))
            values.append(value)
            flags.append(row[2].strip())
    except ValueError as exc:
        raise RecordFormatError(f"malformed value: {exc}", str(path)) from exc
    return np.array(detunings), np.array(values), flags


def write_purity_spectrum(path: PathLike, spectrum: PuritySpectrum, provenance: Provenance) -> Path:
    rows = []
    for point in spectrum.points:
        if point.low_signal:
            rows.append([_format_float(point.detuning_hz), "", "", "", "", FLAG_LOW_SIGNAL])
            continue
        s1, s2, s3 = point.bloch
        flag = "converged" if point.converged else "not_converged"
        rows.append(
            [
                _format_float(point.detuning_hz),
                _format_float(point.purity),
                _format_float(s1),
                _format_float(s2),
                _format_float(s3),
                flag,
            ]
        )
    return atomic_write_text(path, _csv_text(provenance, PURITY_COLUMNS, rows))


def write_density_matrices(path: PathLike, spectrum: PuritySpectrum, provenance: Provenance) -> Path:
    payload = {
        "points": [point.to_dict() for point in spectrum.points],
        "summary": spectrum.summary.to_dict(),
    }
    return write_json(path, payload, provenance)


GAP_COLUMNS = ["d_nm", "T_min", "Q"]


def write_gap_series(
    path: PathLike,
    distances_nm: Sequence[float],
    t_min: Sequence[float],
    q: Sequence[float],
    provenance: Provenance,
) -> Path:
    rows = ([_format_float(d), _format_float(t), _format_float(v)] for d, t, v in zip(distances_nm, t_min, q))
    return atomic_write_text(path, _csv_text(provenance, GAP_COLUMNS, rows))


def read_gap_series(path: PathLike) -> np.ndarray:
    """(n, 3) array of d_nm, T_min, Q."""

    _, rows = _read_csv(path, GAP_COLUMNS)
    try:
        return np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(-1, 3)
    except ValueError as exc:
        raise RecordFormatError(f"malformed value: {exc}", str(path)) from exc


def sniff_columns(path: PathLike) -> List[str]:
    """Column names of a CSV written by this module, skipping provenance lines."""

    with open(path, "r", encoding="utf-8", newline="") as handle:
        for line in handle:
            if line.strip() and not line.startswith("#"):
                return [c.strip() for c in next(csv.reader([line]))]
    raise RecordFormatError("missing column header row", str(path))
