"""Hourly incentive signal ingestion, validation, and month-hour averaging.

Signals are hourly series of either electricity prices ($/MWh, may be
negative) or grid emissions factors (kgCO2/MWh, non-negative). All internal
math uses MWh and 1-hour steps.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import SignalError

SIGNAL_KINDS = ("mef", "aef", "dam", "generic")

# Fixed UTC offsets per region label; no DST modeling, deterministic by design.
REGION_UTC_OFFSETS = {
    "CAISO": -8,
    "ERCOT": -6,
    "SPP": -6,
    "MISO": -6,
    "NYISO": -5,
    "PJM": -5,
    "ISONE": -5,
    "UTC": 0,
}

_EMISSIONS_KINDS = ("mef", "aef")


def region_utc_offset(region: str) -> int:
    """UTC offset in hours for a region label; labels like ``UTC-8`` are parsed."""
    label = (region or "UTC").upper()
    if label in REGION_UTC_OFFSETS:
        return REGION_UTC_OFFSETS[label]
    if label.startswith("UTC") and len(label) > 3:
        try:
            return int(label[3:])
        except ValueError:
            pass
    return 0


@dataclass(frozen=True)
class SignalSeries:
    """Uniform hourly incentive series.

    Parameters
    ----------
    kind : str
        One of ``mef``, ``aef``, ``dam``, ``generic``.
    region : str
        Opaque region label (e.g. ``CAISO``); sets the fixed UTC offset used
        for local month/hour bucketing.
    units : str
        Declared units, e.g. ``$/MWh`` or ``kgCO2/MWh``. Units are declared,
        never inferred.
    start : datetime
        UTC instant of the first sample.
    values : numpy.ndarray
        One value per hour, strictly hourly spacing.
    """

    kind: str
    region: str
    units: str
    start: datetime
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise SignalError(f"unknown signal kind {self.kind!r}; expected one of {SIGNAL_KINDS}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise SignalError("signal values must be a non-empty 1-D array")
        if not np.all(np.isfinite(vals)):
            raise SignalError("signal values must be finite")
        if self.kind in _EMISSIONS_KINDS and np.any(vals < 0.0):
            raise SignalError(f"{self.kind} emissions factors must be >= 0")
        start = self.start
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        else:
            start = start.astimezone(timezone.utc)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def timestamps(self) -> list[datetime]:
        """UTC timestamps of all samples (derived from the hourly grid)."""
        return [self.start + timedelta(hours=i) for i in range(len(self))]

    def local_timestamps(self) -> list[datetime]:
        """Timestamps shifted by the region's fixed UTC offset."""
        off = timedelta(hours=region_utc_offset(self.region))
        return [t + off for t in self.timestamps]


@dataclass(frozen=True)
class HourlyProfile:
    """Per-month mean value for each of the 24 hours of the day."""

    month: int
    values: np.ndarray = field(repr=False)
    counts: tuple = ()
    kind: str = "generic"
    region: str = "UTC"
    units: str = ""

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise SignalError(f"month must be in 1..12, got {self.month}")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (24,):
            raise SignalError("hourly profile requires exactly 24 values")
        object.__setattr__(self, "values", vals)
        counts = tuple(int(c) for c in self.counts) if self.counts else (0,) * 24
        if len(counts) != 24:
            raise SignalError("hourly profile requires exactly 24 slot counts")
        object.__setattr__(self, "counts", counts)


def _parse_timestamp(raw: str, line_no: int) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise SignalError(f"line {line_no}: unparseable timestamp {raw!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_signal(source, format: str = "csv", kind: str = "generic",
                units: str = "$/MWh", region: str = "UTC",
                max_gap_hours: int = 2) -> SignalSeries:
    """Load and validate an hourly incentive signal from CSV.

    The CSV must carry a ``timestamp,value`` header with ISO-8601 timestamps.
    Gaps of at most ``max_gap_hours`` missing hours are filled by linear
    interpolation (reported via :class:`UserWarning`); larger gaps are errors.

    Parameters
    ----------
    source : str, bytes, os.PathLike, or file-like
        CSV document or a path to one.
    format : str
        Only ``csv`` is supported.
    kind : str
        Signal kind; ``mef``/``aef`` values must be non-negative.
    units : str
        Declared units stored verbatim on the series.
    region : str
        Region label used for local-time bucketing.
    max_gap_hours : int
        Largest run of missing hours repaired by interpolation.

    Returns
    -------
    SignalSeries

    Raises
    ------
    SignalError
        On non-monotone timestamps, non-hourly spacing after interpolation,
        unparseable rows, or negative emissions factors.
    """
    if format != "csv":
        raise SignalError(f"unsupported signal format {format!r}; expected 'csv'")
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SignalError("empty signal document") from None
    if [h.strip().lower() for h in header[:2]] != ["timestamp", "value"]:
        raise SignalError(f"expected header 'timestamp,value', got {header!r}")

    stamps: list[datetime] = []
    values: list[float] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < 2:
            raise SignalError(f"line {line_no}: expected 2 columns, got {len(row)}")
        ts = _parse_timestamp(row[0], line_no)
        try:
            val = float(row[1])
        except ValueError as exc:
            raise SignalError(f"line {line_no}: unparseable value {row[1]!r}") from exc
        if not math.isfinite(val):
            raise SignalError(f"line {line_no}: non-finite value")
        stamps.append(ts)
        values.append(val)
    if not stamps:
        raise SignalError("signal document contains no data rows")

    for prev, cur in zip(stamps, stamps[1:]):
        if cur <= prev:
            raise SignalError(f"timestamps not strictly increasing at {cur.isoformat()}")

    filled_values: list[float] = [values[0]]
    gap_report: list[str] = []
    for i in range(1, len(stamps)):
        delta = (stamps[i] - stamps[i - 1]).total_seconds() / 3600.0
        if abs(delta - round(delta)) > 1e-9:
            raise SignalError(
                f"non-hourly spacing of {delta:.4f} h before {stamps[i].isoformat()}")
        step = int(round(delta))
        if step > max_gap_hours + 1:
            raise SignalError(
                f"gap of {step - 1} missing hours before {stamps[i].isoformat()} "
                f"exceeds the {max_gap_hours} hour interpolation limit")
        if step > 1:
            lo, hi = values[i - 1], values[i]
            for j in range(1, step):
                filled_values.append(lo + (hi - lo) * j / step)
            gap_report.append(f"{step - 1}h before {stamps[i].isoformat()}")
        filled_values.append(values[i])
    if gap_report:
        warnings.warn(
            f"interpolated {len(gap_report)} gap(s): " + "; ".join(gap_report),
            UserWarning, stacklevel=2)

    return SignalSeries(kind=kind, region=region, units=units,
                        start=stamps[0], values=np.array(filled_values))


def month_hour_average(series: SignalSeries, month: int) -> HourlyProfile:
    """Average a series by hour of the local day within one local month.

    Parameters
    ----------
    series : SignalSeries
    month : int
        Calendar month 1..12, interpreted in the region's local time.

    Returns
    -------
    HourlyProfile
        Slot ``h`` holds the arithmetic mean of all samples whose local
        hour-of-day is ``h`` within the month.

    Raises
    ------
    SignalError
        If the series does not cover at least one full day of the month.
    """
    if not 1 <= month <= 12:
        raise SignalError(f"month must be in 1..12, got {month}")
    sums = np.zeros(24)
    counts = np.zeros(24, dtype=int)
    for ts, value in zip(series.local_timestamps(), series.values):
        if ts.month == month:
            sums[ts.hour] += value
            counts[ts.hour] += 1
    total = int(counts.sum())
    if total < 24 or np.any(counts == 0):
        raise SignalError(
            f"series covers {total} in-month hours; need at least one full day of month {month}")
    return HourlyProfile(month=month, values=sums / counts, counts=tuple(counts),
                         kind=series.kind, region=series.region, units=series.units)


def profile_to_series(profile: HourlyProfile, days: int = 1,
                      start: datetime | None = None) -> SignalSeries:
    """Broadcast a 24-hour profile back to an hourly series of ``days`` days."""
    if days < 1:
        raise SignalError("days must be >= 1")
    if start is None:
        start = datetime(2023, profile.month, 1, tzinfo=timezone.utc)
    values = np.tile(profile.values, days)
    return SignalSeries(kind=profile.kind, region="UTC", units=profile.units,
                        start=start, values=values)


def series_to_json(series: SignalSeries) -> str:
    """Serialize to the canonical JSON form {kind, region, units, start, values}."""
    doc = {
        "kind": series.kind,
        "region": series.region,
        "units": series.units,
        "start": series.start.isoformat(),
        "values": [float(v) for v in series.values],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def series_from_json(text: str) -> SignalSeries:
    """Inverse of :func:`series_to_json`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SignalError(f"invalid series JSON: {exc}") from exc
    missing = {"kind", "region", "units", "start", "values"} - set(doc)
    if missing:
        raise SignalError(f"series JSON missing fields: {sorted(missing)}")
    return SignalSeries(kind=doc["kind"], region=doc["region"], units=doc["units"],
                        start=_parse_timestamp(doc["start"], 0),
                        values=np.array(doc["values"], dtype=float))


def series_to_csv(series: SignalSeries) -> str:
    """Render as ``timestamp,value`` CSV with full-precision values."""
    lines = ["timestamp,value"]
    for ts, value in zip(series.timestamps, series.values):
        lines.append(f"{ts.isoformat()},{float(value)!r}")
    return "\n".join(lines) + "\n"


def _read_text(source) -> str:
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    if isinstance(source, bytes):
        return source.decode("utf-8")
    text = str(source)
    if "\n" in text:  # inline document; paths never contain newlines
        return text
    with open(text, encoding="utf-8") as fh:
        return fh.read()
