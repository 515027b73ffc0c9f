"""AnalysisConfig resolution: settings defaults < config file < MOBILITY_* env vars < CLI flags"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from django.conf import settings
from dotenv import dotenv_values

from ..exceptions import ConfigurationError
from .ca_cluster import ClusterConfig
from .consensus import ConsensusConfig
from .profile_builder import DaytimeWindow, Granularity, Mode, parse_granularity, parse_mode
from .trip_ingest import FilterPolicy, VehicleType, get_schema, parse_vehicle_type

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisConfig:
    input_path: Path
    output_dir: Path
    schema: str = "austin"
    vehicles: Tuple[VehicleType, ...] = (VehicleType.BICYCLE, VehicleType.SCOOTER)
    modes: Tuple[Mode, ...] = (Mode.DAY_OF_WEEK, Mode.TIME_OF_DAY)
    granularity: Optional[Granularity] = None
    cluster: ClusterConfig = ClusterConfig()
    consensus: Optional[ConsensusConfig] = ConsensusConfig()
    fixed_k: Optional[int] = None
    seed: int = 0
    filter_policy: FilterPolicy = FilterPolicy()
    daytime: DaytimeWindow = DaytimeWindow()
    workers: int = 1

    def __post_init__(self):
        if (self.fixed_k is None) == (self.consensus is None):
            raise ConfigurationError("Exactly one of a fixed k or consensus model-order selection must be configured")
        if self.fixed_k is not None and self.fixed_k < 2:
            raise ConfigurationError(f"k must be at least 2, got {self.fixed_k}")
        if not self.vehicles:
            raise ConfigurationError("At least one vehicle type is required")
        if not self.modes:
            raise ConfigurationError("At least one mode is required")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be at least 1, got {self.workers}")
        get_schema(self.schema)

    def to_dict(self):
        """Replayable description of the run, output directory excluded"""
        return {
            "input": str(self.input_path),
            "schema": self.schema,
            "vehicles": [v.value for v in self.vehicles],
            "modes": [m.value for m in self.modes],
            "granularity": self.granularity.value if self.granularity else "auto",
            "k": "auto" if self.fixed_k is None else self.fixed_k,
            "seed": self.seed,
            "cluster": self.cluster.to_dict(),
            "consensus": self.consensus.to_dict() if self.consensus else None,
            "filter": {
                "min_distance_m": self.filter_policy.min_distance_m,
                "max_distance_m": self.filter_policy.max_distance_m,
                "min_duration_s": self.filter_policy.min_duration_s,
                "max_duration_s": self.filter_policy.max_duration_s,
            },
            "daytime": [self.daytime.start, self.daytime.end],
            "workers": self.workers,
        }

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _int(values, key):
    try:
        return int(str(values[key]).strip())
    except ValueError:
        raise ConfigurationError(f"Config key '{key}' must be an integer, got '{values[key]}'") from None


def _float(values, key):
    try:
        return float(str(values[key]).strip())
    except ValueError:
        raise ConfigurationError(f"Config key '{key}' must be a number, got '{values[key]}'") from None


def _items(values, key):
    return [item.strip() for item in str(values[key]).split(",") if item.strip()]


def _check_keys(source, keys, allowed):
    unknown = sorted(set(keys) - set(allowed))
    if unknown:
        raise ConfigurationError(f"Unknown config keys in {source}: {', '.join(unknown)}")


def resolve_values(config_path=None, overrides=None, environ=None):
    defaults = dict(settings.ANALYSIS_DEFAULTS)
    values = dict(defaults)

    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}")
        from_file = {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}
        _check_keys(path, from_file, defaults)
        values.update(from_file)
        logger.debug(f"Loaded {len(from_file)} config keys from {path}")

    environ = os.environ if environ is None else environ
    prefix = settings.ANALYSIS_ENV_PREFIX
    for key in defaults:
        env_key = f"{prefix}{key.upper()}"
        if env_key in environ:
            values[key] = environ[env_key]
            logger.debug(f"Config key '{key}' overridden by {env_key}")

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    _check_keys("command line", overrides, defaults)
    values.update({k: ",".join(v) if isinstance(v, (list, tuple)) else v for k, v in overrides.items()})
    return values


def build_config(values):
    seed = _int(values, "seed")
    k_value = str(values["k"]).strip().lower()
    fixed_k = None if k_value == "auto" else _int(values, "k")
    granularity = str(values["granularity"]).strip().lower()

    cluster = ClusterConfig(
        k=fixed_k or 2,
        quota_policy=values["quota"],
        max_outer_iters=_int(values, "max_outer_iters"),
        seed=seed,
        distance=values["distance"],
    )
    consensus = None
    if fixed_k is None:
        max_points = _int(values, "consensus_max_points")
        consensus = ConsensusConfig(
            k_min=_int(values, "k_min"),
            k_max=_int(values, "k_max"),
            resamples=_int(values, "resamples"),
            subsample_fraction=_float(values, "fraction"),
            seed=seed,
            flatness_threshold=_float(values, "flatness_threshold"),
            max_points=max_points if max_points > 0 else None,
            workers=_int(values, "workers"),
        )

    if not str(values["input"]).strip():
        raise ConfigurationError("Config key 'input' is required")

    return AnalysisConfig(
        input_path=Path(str(values["input"]).strip()),
        output_dir=Path(str(values["out"]).strip()),
        schema=str(values["schema"]).strip(),
        vehicles=tuple(dict.fromkeys(parse_vehicle_type(v) for v in _items(values, "vehicles"))),
        modes=tuple(dict.fromkeys(parse_mode(m) for m in _items(values, "modes"))),
        granularity=None if granularity == "auto" else parse_granularity(granularity),
        cluster=cluster,
        consensus=consensus,
        fixed_k=fixed_k,
        seed=seed,
        filter_policy=FilterPolicy(
            min_distance_m=_float(values, "min_distance_m"),
            max_distance_m=_float(values, "max_distance_m"),
            min_duration_s=_float(values, "min_duration_s"),
            max_duration_s=_float(values, "max_duration_s"),
        ),
        daytime=DaytimeWindow(_int(values, "daytime_start"), _int(values, "daytime_end")),
        workers=_int(values, "workers"),
    )


def load_analysis_config(config_path=None, overrides=None, environ=None):
    return build_config(resolve_values(config_path, overrides, environ))
