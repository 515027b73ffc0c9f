"""Labeled average-speed datasets for the day-of-week and time-of-day analyses"""
import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from ..exceptions import ConfigurationError, DomainError, EmptyDatasetError
from .trip_ingest import VehicleType, trip_speed

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    DAY_OF_WEEK = "day_of_week"
    TIME_OF_DAY = "time_of_day"

    @property
    def period_count(self):
        return 7 if self is Mode.DAY_OF_WEEK else 24


class Granularity(str, Enum):
    PER_TRIP = "per_trip"
    PER_PERIOD_PER_DATE = "per_period_per_date"


class Label(IntEnum):
    REGIME_A = 0
    REGIME_B = 1


WEEKDAY = DAYTIME = Label.REGIME_A
WEEKEND = NIGHTTIME = Label.REGIME_B

LABEL_NAMES = {
    Mode.DAY_OF_WEEK: {Label.REGIME_A: "weekday", Label.REGIME_B: "weekend"},
    Mode.TIME_OF_DAY: {Label.REGIME_A: "daytime", Label.REGIME_B: "nighttime"},
}


def label_name(mode, label):
    return LABEL_NAMES[Mode(mode)][Label(label)]


def parse_mode(value):
    try:
        return Mode(str(value).strip().lower().replace("-", "_"))
    except ValueError:
        raise ConfigurationError(f"Unknown mode '{value}', expected day-of-week or time-of-day") from None


def parse_granularity(value):
    normalized = str(value).strip().lower().replace("-", "_")
    if normalized == "per_period":
        normalized = Granularity.PER_PERIOD_PER_DATE.value
    try:
        return Granularity(normalized)
    except ValueError:
        raise ConfigurationError(f"Unknown granularity '{value}', expected per-trip or per-period") from None


def default_granularity(mode):
    return Granularity.PER_TRIP if Mode(mode) is Mode.DAY_OF_WEEK else Granularity.PER_PERIOD_PER_DATE


@dataclass(frozen=True)
class DaytimeWindow:
    """Half-open hour range [start, end) labeled daytime"""

    start: int = 6
    end: int = 18

    def __post_init__(self):
        if not (isinstance(self.start, int) and isinstance(self.end, int)):
            raise ConfigurationError(f"Daytime boundary must be integer hours, got [{self.start}, {self.end})")
        if not 0 <= self.start < self.end <= 24:
            raise ConfigurationError(f"Invalid daytime boundary [{self.start}, {self.end})")


@dataclass(frozen=True)
class PeriodKey:
    mode: Mode
    index: int

    def __post_init__(self):
        if not 0 <= self.index < Mode(self.mode).period_count:
            raise DomainError(f"Period index {self.index} out of range for {Mode(self.mode).value}")


@dataclass(frozen=True)
class LabeledPoint:
    feature: float
    label: Label
    period: PeriodKey
    weight: int = 1

    def __post_init__(self):
        if not self.feature > 0:
            raise DomainError(f"Point feature must be positive, got {self.feature}")
        if not self.weight >= 1:
            raise DomainError(f"Point weight must be at least 1, got {self.weight}")


@dataclass(frozen=True)
class AnalysisDataset:
    vehicle_type: Optional[VehicleType]
    mode: Mode
    points: Tuple[LabeledPoint, ...]
    granularity: Granularity

    def __post_init__(self):
        if not self.points:
            raise EmptyDatasetError(getattr(self.vehicle_type, "value", self.vehicle_type), Mode(self.mode).value)
        if any(p.period.mode != self.mode for p in self.points):
            raise DomainError("All points of a dataset must share its mode")

    def __len__(self):
        return len(self.points)

    @cached_property
    def features(self):
        values = np.array([p.feature for p in self.points], dtype=float)
        values.flags.writeable = False
        return values

    @cached_property
    def labels(self):
        values = np.array([int(p.label) for p in self.points], dtype=int)
        values.flags.writeable = False
        return values

    @cached_property
    def weights(self):
        values = np.array([p.weight for p in self.points], dtype=float)
        values.flags.writeable = False
        return values

    @cached_property
    def periods(self):
        values = np.array([p.period.index for p in self.points], dtype=int)
        values.flags.writeable = False
        return values


@dataclass(frozen=True)
class PeriodStat:
    period_index: int
    mean: float
    std: float
    count: int
    weight: float


def label_day_of_week(day_of_week):
    """Saturday (6) and Sunday (0) are weekend, every other day is a weekday"""
    if not 0 <= day_of_week <= 6:
        raise DomainError(f"Day of week out of range: {day_of_week}")
    return WEEKEND if day_of_week in (0, 6) else WEEKDAY


def label_time_of_day(hour, boundary=None):
    boundary = boundary or DaytimeWindow()
    if not isinstance(boundary, DaytimeWindow):
        boundary = DaytimeWindow(*boundary)
    if not 0 <= hour <= 23:
        raise DomainError(f"Hour out of range: {hour}")
    return DAYTIME if boundary.start <= hour < boundary.end else NIGHTTIME


def label_period(mode, index, boundary=None):
    if Mode(mode) is Mode.DAY_OF_WEEK:
        return label_day_of_week(index)
    return label_time_of_day(index, boundary)


def _period_of(trip, mode):
    return trip.day_of_week if mode is Mode.DAY_OF_WEEK else trip.hour


def build_dataset(trips, vehicle, mode, granularity=None, boundary=None):
    """Turn filtered trips of one vehicle type into labeled speed points.

    per_trip keeps one point per trip. per_period_per_date averages the trips
    of each (calendar date, period) cell and weights the point by its trip count.
    """
    vehicle = VehicleType(vehicle)
    mode = Mode(mode)
    granularity = Granularity(granularity) if granularity else default_granularity(mode)
    boundary = boundary or DaytimeWindow()

    selected = [t for t in trips if t.vehicle_type is vehicle]
    if not selected:
        raise EmptyDatasetError(vehicle.value, mode.value)

    labels = {i: label_period(mode, i, boundary) for i in range(mode.period_count)}

    if granularity is Granularity.PER_TRIP:
        points = tuple(
            LabeledPoint(
                feature=trip_speed(t),
                label=labels[_period_of(t, mode)],
                period=PeriodKey(mode, _period_of(t, mode)),
            )
            for t in selected
        )
    else:
        frame = pd.DataFrame(
            {
                "date": [t.start_time.date() for t in selected],
                "period": [_period_of(t, mode) for t in selected],
                "speed": [trip_speed(t) for t in selected],
            }
        )
        cells = frame.groupby(["date", "period"], sort=True)["speed"].agg(mean_speed="mean", trips="count")
        points = tuple(
            LabeledPoint(
                feature=float(row.mean_speed),
                label=labels[int(period)],
                period=PeriodKey(mode, int(period)),
                weight=int(row.trips),
            )
            for (_, period), row in zip(cells.index, cells.itertuples(index=False))
        )

    logger.info(
        f"Built {granularity.value} {mode.value} dataset for {vehicle.value}: "
        f"{len(points)} points from {len(selected)} trips"
    )
    return AnalysisDataset(vehicle_type=vehicle, mode=mode, points=points, granularity=granularity)


def weighted_mean_std(values, weights):
    """Weight-aware mean and sample standard deviation (weights are trip counts)"""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    mean = float(np.sum(weights * values) / total)
    if total <= 1:
        return mean, 0.0
    variance = float(np.sum(weights * (values - mean) ** 2) / (total - 1))
    return mean, float(np.sqrt(variance))


def period_summary(dataset):
    rows = []
    for period in np.unique(dataset.periods):
        members = dataset.periods == period
        mean, std = weighted_mean_std(dataset.features[members], dataset.weights[members])
        rows.append(
            PeriodStat(
                period_index=int(period),
                mean=mean,
                std=std,
                count=int(members.sum()),
                weight=float(dataset.weights[members].sum()),
            )
        )
    return tuple(rows)


def write_dataset(dataset, destination):
    frame = pd.DataFrame(
        {
            "feature": dataset.features,
            "label": [label_name(dataset.mode, p.label) for p in dataset.points],
            "period": dataset.periods,
            "weight": [p.weight for p in dataset.points],
        }
    )
    frame.to_csv(destination, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(dataset)} points to {destination}")


def read_dataset(source, vehicle=None, mode=None):
    """Read a feature,label,period,weight CSV; the mode is inferred from the label names when not given"""
    frame = pd.read_csv(source, dtype={"label": str})
    missing = {"feature", "label", "period", "weight"} - set(frame.columns)
    if missing:
        raise ConfigurationError(f"Dataset file is missing columns: {', '.join(sorted(missing))}")
    if frame.empty:
        raise EmptyDatasetError(getattr(vehicle, "value", vehicle), getattr(mode, "value", mode))

    names = set(frame["label"].str.strip())
    if mode is None:
        candidates = [m for m in Mode if names <= set(LABEL_NAMES[m].values())]
        if len(candidates) != 1:
            raise ConfigurationError(f"Cannot infer mode from labels: {', '.join(sorted(names))}")
        mode = candidates[0]
    mode = Mode(mode)
    by_name = {name: label for label, name in LABEL_NAMES[mode].items()}
    unknown = names - set(by_name)
    if unknown:
        raise ConfigurationError(f"Labels not valid for {mode.value}: {', '.join(sorted(unknown))}")

    points = tuple(
        LabeledPoint(
            feature=float(row.feature),
            label=by_name[row.label.strip()],
            period=PeriodKey(mode, int(row.period)),
            weight=int(row.weight),
        )
        for row in frame.itertuples(index=False)
    )
    weights = frame["weight"].to_numpy()
    granularity = Granularity.PER_TRIP if np.all(weights == 1) else Granularity.PER_PERIOD_PER_DATE
    return AnalysisDataset(
        vehicle_type=VehicleType(vehicle) if vehicle else None,
        mode=mode,
        points=points,
        granularity=granularity,
    )
