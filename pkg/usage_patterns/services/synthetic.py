"""Seeded synthetic dockless trips in the Austin export layout.

Speeds follow simple weekday/weekend and hour-of-day profiles so the
clustering has structure to find. A small share of rows is malformed or
outside the filter ranges to exercise ingestion and filtering.
"""
import logging

import numpy as np
import pandas as pd

from .trip_ingest import AUSTIN_SCHEMA

logger = logging.getLogger(__name__)

FIRST_DAY = pd.Timestamp("2018-12-03")
LAST_DAY = pd.Timestamp("2019-05-20")

# relative trip volume per hour of day
HOURLY_VOLUME = np.array(
    [3, 2, 2, 1, 1, 1, 2, 4, 6, 6, 6, 7, 8, 8, 8, 8, 9, 10, 10, 9, 8, 7, 5, 4],
    dtype=float,
)

BASE_SPEED = {"bicycle": 3.3, "scooter": 2.45}
WEEKEND_PENALTY = {"bicycle": 0.4, "scooter": 0.25}


def _hour_bonus(vehicle, hours):
    if vehicle == "bicycle":
        return np.where(hours < 12, 0.2, -0.1)
    return np.where((hours >= 3) & (hours < 13), 0.35, -0.25)


def generate_trip_frame(rows=10_000, seed=7, scooter_share=0.7, malformed_share=0.003, out_of_range_share=0.01):
    """DataFrame with the Austin headers, every cell as text"""
    rng = np.random.default_rng(seed)
    days = (LAST_DAY - FIRST_DAY).days + 1

    vehicles = np.where(rng.random(rows) < scooter_share, "scooter", "bicycle")
    day_offsets = rng.integers(0, days, size=rows)
    hours = rng.choice(24, size=rows, p=HOURLY_VOLUME / HOURLY_VOLUME.sum())
    seconds = rng.integers(0, 3600, size=rows)
    start = FIRST_DAY + pd.to_timedelta(day_offsets, unit="D") + pd.to_timedelta(hours * 3600 + seconds, unit="s")
    day_of_week = (start.dayofweek.to_numpy() + 1) % 7
    weekend = np.isin(day_of_week, (0, 6))

    speed = np.empty(rows)
    for vehicle in ("bicycle", "scooter"):
        chosen = vehicles == vehicle
        speed[chosen] = (
            BASE_SPEED[vehicle]
            - WEEKEND_PENALTY[vehicle] * weekend[chosen]
            + _hour_bonus(vehicle, hours[chosen])
            + rng.normal(0.0, 0.6, size=int(chosen.sum()))
        )
    speed = np.clip(speed, 0.4, 9.0)
    duration = np.clip(np.round(rng.lognormal(mean=6.3, sigma=0.6, size=rows)), 30, 7200)
    distance = np.round(speed * duration)

    short = rng.random(rows) < out_of_range_share
    distance[short] = rng.integers(0, 160, size=int(short.sum()))
    long_running = rng.random(rows) < out_of_range_share / 4
    duration[long_running] = 86400 + rng.integers(0, 3600, size=int(long_running.sum()))

    end = start + pd.to_timedelta(duration, unit="s")
    district = rng.integers(1, 11, size=rows)
    tract = rng.integers(0, 200, size=rows)

    headers = {field: header for header, field in AUSTIN_SCHEMA.columns.items()}
    frame = pd.DataFrame(
        {
            headers["trip_id"]: [f"trip-{seed}-{i:07d}" for i in range(rows)],
            headers["device_id"]: [f"device-{d:05d}" for d in rng.integers(0, 2000, size=rows)],
            headers["vehicle_type"]: vehicles,
            headers["duration"]: duration.astype(int).astype(str),
            headers["distance"]: distance.astype(int).astype(str),
            headers["start_time"]: start.strftime("%Y-%m-%d %H:%M:%S"),
            headers["end_time"]: end.strftime("%Y-%m-%d %H:%M:%S"),
            headers["month"]: start.month.astype(str),
            headers["hour"]: hours.astype(str),
            headers["day_of_week"]: day_of_week.astype(str),
            headers["year"]: start.year.astype(str),
            headers["council_district_start"]: district.astype(str),
            headers["council_district_end"]: district.astype(str),
            headers["census_tract_start"]: [f"48453{t:06d}" for t in tract],
            headers["census_tract_end"]: [f"48453{t:06d}" for t in tract],
        }
    )

    broken = np.flatnonzero(rng.random(rows) < malformed_share)
    for position, row in enumerate(broken):
        column = (headers["distance"], headers["duration"], headers["start_time"])[position % 3]
        frame.iat[row, frame.columns.get_loc(column)] = "abc"
    return frame


def write_synthetic_trips(destination, rows=10_000, seed=7):
    frame = generate_trip_frame(rows=rows, seed=seed)
    frame.to_csv(destination, index=False, lineterminator="\n")
    logger.info(f"Wrote {rows} synthetic trips to {destination}")
    return destination
