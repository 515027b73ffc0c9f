"""Parsing, validation and filtering of dockless trip exports.

Rows that cannot be parsed are skipped and counted in the IngestReport so a
multi-million row civic export never aborts on a handful of dirty lines.
"""
import io
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from ..exceptions import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

MILE_IN_METERS = 1609.344
REPLACEMENT_CHARACTER = "\ufffd"


class VehicleType(str, Enum):
    SCOOTER = "scooter"
    BICYCLE = "bicycle"


VEHICLE_ALIASES = {
    "scooter": VehicleType.SCOOTER,
    "e-scooter": VehicleType.SCOOTER,
    "escooter": VehicleType.SCOOTER,
    "bicycle": VehicleType.BICYCLE,
    "bike": VehicleType.BICYCLE,
    "e-bike": VehicleType.BICYCLE,
    "ebike": VehicleType.BICYCLE,
}

TRIP_FIELDS = (
    "trip_id",
    "device_id",
    "vehicle_type",
    "duration",
    "distance",
    "start_time",
    "end_time",
    "month",
    "hour",
    "day_of_week",
    "year",
    "council_district_start",
    "council_district_end",
    "census_tract_start",
    "census_tract_end",
)
REQUIRED_FIELDS = ("vehicle_type", "duration", "distance", "start_time")
CALENDAR_FIELDS = ("day_of_week", "hour", "month", "year")
OPTIONAL_TEXT_FIELDS = (
    "council_district_start",
    "council_district_end",
    "census_tract_start",
    "census_tract_end",
)

# First failing check wins, in this order
REJECTION_REASONS = (
    "invalid_encoding",
    "unknown_vehicle_type",
    "unparseable_duration",
    "unparseable_distance",
    "unparseable_start_time",
    "negative_duration",
    "negative_distance",
)

NORMALIZED_COLUMNS = (
    "trip_id",
    "vehicle_type",
    "distance_m",
    "duration_s",
    "speed_mps",
    "start_time",
    "day_of_week",
    "hour",
)


def parse_vehicle_type(value):
    try:
        return VEHICLE_ALIASES[str(value).strip().lower()]
    except KeyError:
        raise ConfigurationError(f"Unknown vehicle type '{value}'") from None


@dataclass(frozen=True)
class TripSchema:
    """Maps file headers onto trip fields"""

    name: str
    columns: Mapping[str, str]
    timestamp_format: Optional[str] = None

    def __post_init__(self):
        seen = set()
        for header, trip_field in self.columns.items():
            if trip_field not in TRIP_FIELDS:
                raise ConfigurationError(f"Schema '{self.name}' maps header '{header}' to unknown field '{trip_field}'")
            if trip_field in seen:
                raise ConfigurationError(f"Schema '{self.name}' maps field '{trip_field}' more than once")
            seen.add(trip_field)
        missing = [f for f in REQUIRED_FIELDS if f not in seen]
        if missing:
            raise ConfigurationError(f"Schema '{self.name}' does not map required fields: {', '.join(missing)}")

    def header_for(self, trip_field):
        for header, mapped in self.columns.items():
            if mapped == trip_field:
                return header
        return None


AUSTIN_SCHEMA = TripSchema(
    name="austin",
    columns={
        "ID": "trip_id",
        "Device ID": "device_id",
        "Vehicle Type": "vehicle_type",
        "Trip Duration": "duration",
        "Trip Distance": "distance",
        "Start Time": "start_time",
        "End Time": "end_time",
        "Month": "month",
        "Hour": "hour",
        "Day of Week": "day_of_week",
        "Year": "year",
        "Council District (Start)": "council_district_start",
        "Council District (End)": "council_district_end",
        "Census Tract Start": "census_tract_start",
        "Census Tract End": "census_tract_end",
    },
)

NORMALIZED_SCHEMA = TripSchema(
    name="normalized",
    columns={
        "trip_id": "trip_id",
        "vehicle_type": "vehicle_type",
        "distance_m": "distance",
        "duration_s": "duration",
        "start_time": "start_time",
        "day_of_week": "day_of_week",
        "hour": "hour",
    },
    timestamp_format="ISO8601",
)

SCHEMA_PRESETS = {schema.name: schema for schema in (AUSTIN_SCHEMA, NORMALIZED_SCHEMA)}


def get_schema(name):
    try:
        return SCHEMA_PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown schema preset '{name}', expected one of: {', '.join(sorted(SCHEMA_PRESETS))}"
        ) from None


@dataclass(frozen=True)
class TripRecord:
    trip_id: str
    device_id: str
    vehicle_type: VehicleType
    duration_s: float
    distance_m: float
    start_time: datetime
    end_time: Optional[datetime]
    day_of_week: int
    hour: int
    month: int
    year: int
    council_district_start: Optional[str] = None
    council_district_end: Optional[str] = None
    census_tract_start: Optional[str] = None
    census_tract_end: Optional[str] = None

    def __post_init__(self):
        if not self.duration_s >= 0:
            raise DomainError(f"Trip {self.trip_id}: duration must be non-negative, got {self.duration_s}")
        if not self.distance_m >= 0:
            raise DomainError(f"Trip {self.trip_id}: distance must be non-negative, got {self.distance_m}")
        if not 0 <= self.hour <= 23:
            raise DomainError(f"Trip {self.trip_id}: hour out of range: {self.hour}")
        if not 0 <= self.day_of_week <= 6:
            raise DomainError(f"Trip {self.trip_id}: day_of_week out of range: {self.day_of_week}")

    @classmethod
    def from_start_time(cls, trip_id, device_id, vehicle_type, duration_s, distance_m, start_time, end_time=None, **extra):
        """Build a record whose calendar fields are decomposed from start_time (0 = Sunday)"""
        return cls(
            trip_id=trip_id,
            device_id=device_id,
            vehicle_type=VehicleType(vehicle_type),
            duration_s=float(duration_s),
            distance_m=float(distance_m),
            start_time=start_time,
            end_time=end_time,
            day_of_week=(start_time.weekday() + 1) % 7,
            hour=start_time.hour,
            month=start_time.month,
            year=start_time.year,
            **extra,
        )


@dataclass(frozen=True)
class FilterPolicy:
    min_distance_m: float = 160.9344
    max_distance_m: float = 804672.0
    max_duration_s: float = 86400.0
    min_duration_s: float = 1.0

    def __post_init__(self):
        # kept trips feed positive speeds to the clustering
        if not self.min_distance_m > 0:
            raise ConfigurationError(f"min_distance_m must be positive, got {self.min_distance_m}")
        if not self.min_distance_m < self.max_distance_m:
            raise ConfigurationError(
                f"min_distance_m ({self.min_distance_m}) must be below max_distance_m ({self.max_distance_m})"
            )
        if not self.min_duration_s >= 1:
            raise ConfigurationError(f"min_duration_s must be at least 1 second, got {self.min_duration_s}")
        if not self.max_duration_s > self.min_duration_s:
            raise ConfigurationError(
                f"max_duration_s ({self.max_duration_s}) must exceed min_duration_s ({self.min_duration_s})"
            )

    def admits(self, trip):
        return (
            self.min_distance_m <= trip.distance_m < self.max_distance_m
            and self.min_duration_s <= trip.duration_s < self.max_duration_s
        )


@dataclass(frozen=True)
class IngestReport:
    rows_read: int = 0
    rows_parsed: int = 0
    rows_rejected_by_reason: Mapping[str, int] = field(default_factory=dict)
    vehicle_counts: Mapping[str, int] = field(default_factory=dict)
    calendar_conflicts: Mapping[str, int] = field(default_factory=dict)

    @property
    def rows_rejected(self):
        return sum(self.rows_rejected_by_reason.values())

    def to_dict(self):
        return {
            "rows_read": self.rows_read,
            "rows_parsed": self.rows_parsed,
            "rows_rejected": self.rows_rejected,
            "rows_rejected_by_reason": dict(sorted(self.rows_rejected_by_reason.items())),
            "vehicle_counts": dict(sorted(self.vehicle_counts.items())),
            "calendar_conflicts": dict(sorted(self.calendar_conflicts.items())),
        }


@dataclass(frozen=True)
class FilterReport:
    kept: Mapping[str, int]
    dropped: Mapping[str, int]

    def to_dict(self):
        return {"kept": dict(sorted(self.kept.items())), "dropped": dict(sorted(self.dropped.items()))}


def _open_source(source):
    if isinstance(source, (str, os.PathLike)):
        return source
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source)
    if not source.seekable():
        return io.BytesIO(source.read())
    return source


def _read_header(source):
    start = source.tell() if hasattr(source, "seek") else None
    try:
        header = pd.read_csv(source, nrows=0, dtype=str, encoding="utf-8", encoding_errors="replace")
    except pd.errors.EmptyDataError:
        return None
    finally:
        if start is not None:
            source.seek(start)
    return [str(h).strip() for h in header.columns]


def _text(series):
    return series.fillna("").astype(str).str.strip()


def _parse_chunk(frame, schema, row_offset):
    frame = frame.rename(columns=lambda h: str(h).strip())
    size = len(frame)
    index = frame.index

    def column(trip_field):
        header = schema.header_for(trip_field)
        if header is None or header not in frame.columns:
            return None
        return _text(frame[header])

    vehicle = column("vehicle_type").str.lower().map(VEHICLE_ALIASES)
    duration = pd.to_numeric(column("duration"), errors="coerce")
    distance = pd.to_numeric(column("distance"), errors="coerce")
    start = pd.to_datetime(column("start_time"), format=schema.timestamp_format, errors="coerce")
    if getattr(start.dt, "tz", None) is not None:
        start = start.dt.tz_localize(None)

    # undecodable bytes were read as U+FFFD
    garbled = np.zeros(size, dtype=bool)
    for header in frame.columns:
        garbled |= frame[header].str.contains(REPLACEMENT_CHARACTER, regex=False, na=False).to_numpy(dtype=bool)

    checks = [
        garbled,
        vehicle.isna(),
        ~np.isfinite(duration.to_numpy(dtype=float)),
        ~np.isfinite(distance.to_numpy(dtype=float)),
        start.isna(),
        duration < 0,
        distance < 0,
    ]
    reason = pd.Series(
        np.select([np.asarray(c, dtype=bool) for c in checks], REJECTION_REASONS, default=""),
        index=index,
    )
    ok = (reason == "").to_numpy()
    rejected = Counter(reason[~ok].tolist())

    day_of_week = (start.dt.dayofweek + 1) % 7
    derived = {
        "day_of_week": day_of_week,
        "hour": start.dt.hour,
        "month": start.dt.month,
        "year": start.dt.year,
    }
    conflicts = Counter()
    for calendar_field in CALENDAR_FIELDS:
        raw = column(calendar_field)
        if raw is None:
            continue
        from_file = pd.to_numeric(raw, errors="coerce")
        disagree = from_file.notna() & (from_file != derived[calendar_field]) & ok
        if disagree.any():
            conflicts[calendar_field] += int(disagree.sum())

    end_raw = column("end_time")
    if end_raw is not None:
        end = pd.to_datetime(end_raw, format=schema.timestamp_format, errors="coerce")
        if getattr(end.dt, "tz", None) is not None:
            end = end.dt.tz_localize(None)
        end_values = [None if pd.isna(ts) else ts for ts in end[ok].tolist()]
    else:
        end_values = [None] * int(ok.sum())

    trip_ids = column("trip_id")
    if trip_ids is None:
        trip_ids = pd.Series([f"row-{row_offset + i}" for i in range(size)], index=index)
    device_ids = column("device_id")
    if device_ids is None:
        device_ids = pd.Series([""] * size, index=index)
    extras = {}
    for text_field in OPTIONAL_TEXT_FIELDS:
        values = column(text_field)
        extras[text_field] = [v or None for v in values[ok].tolist()] if values is not None else [None] * int(ok.sum())

    records = []
    rows = zip(
        trip_ids[ok].tolist(),
        device_ids[ok].tolist(),
        vehicle[ok].tolist(),
        duration[ok].tolist(),
        distance[ok].tolist(),
        start[ok].tolist(),
        end_values,
        derived["day_of_week"][ok].tolist(),
        derived["hour"][ok].tolist(),
        derived["month"][ok].tolist(),
        derived["year"][ok].tolist(),
        *(extras[f] for f in OPTIONAL_TEXT_FIELDS),
    )
    for trip_id, device_id, vtype, dur, dist, st, et, dow, hour, month, year, cds, cde, cts, cte in rows:
        records.append(
            TripRecord(
                trip_id=trip_id,
                device_id=device_id,
                vehicle_type=vtype,
                duration_s=float(dur),
                distance_m=float(dist),
                start_time=st,
                end_time=et,
                day_of_week=int(dow),
                hour=int(hour),
                month=int(month),
                year=int(year),
                council_district_start=cds,
                council_district_end=cde,
                census_tract_start=cts,
                census_tract_end=cte,
            )
        )
    return records, rejected, conflicts


def parse_trips(source, schema=AUSTIN_SCHEMA, chunksize=250_000):
    """Parse a UTF-8 CSV trip export into TripRecords.

    Returns the records in file order together with an IngestReport.
    Raises ConfigurationError when a header for a required field is missing.
    """
    if isinstance(schema, Mapping):
        schema = TripSchema(name="custom", columns=dict(schema))

    stream = _open_source(source)
    headers = _read_header(stream)
    if headers is None:
        logger.warning("Trip source is empty, nothing to ingest")
        return (), IngestReport()

    for trip_field in REQUIRED_FIELDS:
        header = schema.header_for(trip_field)
        if header not in headers:
            raise ConfigurationError(f"Missing required header '{header}' for field '{trip_field}'")
    ignored = [h for h in headers if h not in schema.columns]
    if ignored:
        logger.debug(f"Ignoring unmapped columns: {', '.join(ignored)}")

    records = []
    rows_read = 0
    rejected = Counter()
    conflicts = Counter()
    reader = pd.read_csv(
        stream,
        dtype=str,
        keep_default_na=False,
        encoding="utf-8",
        encoding_errors="replace",
        chunksize=chunksize,
    )
    with reader:
        for chunk in reader:
            chunk_records, chunk_rejected, chunk_conflicts = _parse_chunk(chunk, schema, rows_read)
            records.extend(chunk_records)
            rejected.update(chunk_rejected)
            conflicts.update(chunk_conflicts)
            rows_read += len(chunk)
            logger.debug(f"Parsed chunk: {len(chunk_records)}/{len(chunk)} rows accepted ({rows_read} read so far)")

    vehicle_counts = Counter(r.vehicle_type.value for r in records)
    report = IngestReport(
        rows_read=rows_read,
        rows_parsed=len(records),
        rows_rejected_by_reason=dict(rejected),
        vehicle_counts=dict(vehicle_counts),
        calendar_conflicts=dict(conflicts),
    )
    if report.rows_rejected:
        logger.warning(f"Rejected {report.rows_rejected} of {rows_read} rows: {dict(rejected)}")
    logger.info(f"Ingested {len(records)} trips from {rows_read} rows using schema '{schema.name}'")
    return tuple(records), report


def filter_trips(trips: Sequence[TripRecord], policy=None):
    """Keep trips whose distance and duration fall inside the policy's half-open ranges"""
    policy = policy or FilterPolicy()
    return tuple(trip for trip in trips if policy.admits(trip))


def filter_report(before, after):
    total = Counter(t.vehicle_type.value for t in before)
    kept = Counter(t.vehicle_type.value for t in after)
    return FilterReport(
        kept={v: kept.get(v, 0) for v in total},
        dropped={v: total[v] - kept.get(v, 0) for v in total},
    )


def trip_speed(trip):
    """Average speed in m/s"""
    if not trip.duration_s > 0:
        raise DomainError(f"Trip {trip.trip_id} has non-positive duration {trip.duration_s}; filter it out first")
    return trip.distance_m / trip.duration_s


def trips_to_frame(trips):
    return pd.DataFrame(
        {
            "trip_id": [t.trip_id for t in trips],
            "vehicle_type": [t.vehicle_type.value for t in trips],
            "distance_m": [t.distance_m for t in trips],
            "duration_s": [t.duration_s for t in trips],
            "speed_mps": [trip_speed(t) if t.duration_s > 0 else float("nan") for t in trips],
            "start_time": [t.start_time.isoformat() for t in trips],
            "day_of_week": [t.day_of_week for t in trips],
            "hour": [t.hour for t in trips],
        },
        columns=list(NORMALIZED_COLUMNS),
    )


def write_normalized(trips, destination):
    """Write trips in the fixed normalized column layout"""
    trips_to_frame(trips).to_csv(destination, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(trips)} normalized trips to {destination}")


def read_normalized(source):
    return parse_trips(source, NORMALIZED_SCHEMA)
