from datetime import datetime

import numpy as np
import pandas as pd

from usage_patterns.services.profile_builder import AnalysisDataset, Granularity, LabeledPoint, Mode, PeriodKey
from usage_patterns.services.trip_ingest import AUSTIN_SCHEMA, TripRecord


def make_trip(trip_id, vehicle="scooter", distance_m=900.0, duration_s=300.0, start=datetime(2019, 1, 7, 8, 15)):
    return TripRecord.from_start_time(
        trip_id=trip_id,
        device_id=f"device-{trip_id}",
        vehicle_type=vehicle,
        duration_s=duration_s,
        distance_m=distance_m,
        start_time=start,
    )


def austin_csv(rows):
    """CSV bytes with Austin headers; rows are dicts keyed by trip field"""
    headers = {trip_field: header for header, trip_field in AUSTIN_SCHEMA.columns.items()}
    fields = list(dict.fromkeys(f for row in rows for f in row)) or ["vehicle_type", "duration", "distance", "start_time"]
    frame = pd.DataFrame([{headers[f]: row.get(f, "") for f in fields} for row in rows], columns=[headers[f] for f in fields])
    return frame.to_csv(index=False).encode("utf-8")


def make_dataset(features, labels, weights=None, periods=None, mode=Mode.DAY_OF_WEEK):
    """Dataset over raw arrays; label 0 points sit on Monday, label 1 points on Sunday unless periods are given"""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    weights = np.ones(len(features), dtype=int) if weights is None else np.asarray(weights, dtype=int)
    periods = np.where(labels == 0, 1, 0) if periods is None else np.asarray(periods, dtype=int)
    points = tuple(
        LabeledPoint(feature=float(f), label=int(l), period=PeriodKey(mode, int(p)), weight=int(w))
        for f, l, p, w in zip(features, labels, periods, weights)
    )
    granularity = Granularity.PER_TRIP if np.all(weights == 1) else Granularity.PER_PERIOD_PER_DATE
    return AnalysisDataset(vehicle_type=None, mode=mode, points=points, granularity=granularity)


def two_blobs(seed, n_per_blob=100, low=3.0, high=5.0, spread=0.1):
    rng = np.random.default_rng(seed)
    features = np.concatenate([rng.normal(low, spread, n_per_blob), rng.normal(high, spread, n_per_blob)])
    labels = np.repeat([0, 1], n_per_blob)
    return features, labels
