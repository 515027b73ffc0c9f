"""End-to-end usage pattern analysis and its static report artifacts"""
import json
import logging
import math
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from ..exceptions import PipelineStageError
from .ca_cluster import ClusterModel, fit, majority_period_coloring
from .consensus import ConsensusCurve, run_consensus
from .profile_builder import Granularity, Mode, build_dataset, label_name, period_summary
from .stats import RankSumResult, weighted_ranksum_test
from .svg import SvgCanvas, cluster_color
from .trip_ingest import VehicleType, filter_report, filter_trips, get_schema, parse_trips

logger = logging.getLogger(__name__)

DAY_NAMES = ("Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat")


@dataclass(frozen=True)
class AnalysisResult:
    vehicle_type: VehicleType
    mode: Mode
    granularity: Granularity
    n_points: int
    n_trips: int
    k: int
    model: ClusterModel
    coloring: Mapping[int, int]
    period_means: Mapping[int, float]
    curve: Optional[ConsensusCurve]
    comparisons: Tuple[Tuple[int, int, RankSumResult], ...]

    @property
    def stem(self):
        return f"{self.vehicle_type.value}_{self.mode.value}"

    def cluster_rows(self):
        return [
            {
                "cluster_id": c.cluster_id,
                "mean_mps": c.mean,
                "std_mps": c.std,
                "size": c.size,
                "weight": c.weight,
                "purity": c.purity,
                "majority_label": "" if c.majority_label is None else label_name(self.mode, c.majority_label),
            }
            for c in self.model.clusters
        ]


@dataclass(frozen=True)
class ReportBundle:
    analyses: Tuple[AnalysisResult, ...]
    metadata: Mapping
    files: Tuple[str, ...]


def _plain(value):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(payload, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=False))
        f.write("\n")


def write_csv(rows, columns, path):
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n")


@contextmanager
def _stage(name, context=""):
    try:
        yield
    except PipelineStageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed{context}: {str(e)}")
        raise PipelineStageError(name, e) from e


def emit_period_coloring(coloring, mode, period_means, directory, stem):
    """Write <stem>.csv (period_index, cluster_id, mean_speed) and a one-band-per-period <stem>.svg strip"""
    mode = Mode(mode)
    directory = Path(directory)
    periods = sorted(coloring)
    write_csv(
        [(p, coloring[p], period_means.get(p, float("nan"))) for p in periods],
        ["period_index", "cluster_id", "mean_speed"],
        directory / f"{stem}.csv",
    )

    band, margin = 32, 20
    canvas = SvgCanvas(width=2 * margin + band * max(len(periods), 1), height=110, title=f"Period clusters ({mode.value})")
    strip = canvas.group(id="bands")
    for position, period in enumerate(periods):
        x = margin + position * band
        canvas.rect(x, 20, band, 40, cluster_color(coloring[period]), parent=strip, stroke="#ffffff", data_period=period, data_cluster=coloring[period])
        caption = DAY_NAMES[period] if mode is Mode.DAY_OF_WEEK else str(period)
        canvas.text(x + band / 2, 78, caption, parent=strip, text_anchor="middle", font_size=10)
    canvas.write(directory / f"{stem}.svg")
    return directory / f"{stem}.csv", directory / f"{stem}.svg"


def emit_consensus_curve(curve, directory, stem):
    """Write <stem>.csv (k, area, delta, chosen) and an SVG line plot of area against k"""
    directory = Path(directory)
    write_csv(
        [(k, area, delta, int(chosen)) for k, area, delta, chosen in curve.rows()],
        ["k", "area", "delta", "chosen"],
        directory / f"{stem}.csv",
    )

    width, height, margin = 360, 240, 40
    ks = list(curve.ks)
    span = max(ks[-1] - ks[0], 1)

    def x_of(k):
        return margin + (k - ks[0]) / span * (width - 2 * margin)

    def y_of(area):
        return height - margin - area * (height - 2 * margin)

    canvas = SvgCanvas(width=width, height=height, title="Consensus CDF area by k")
    axes = canvas.group(id="axes")
    canvas.line(margin, height - margin, width - margin, height - margin, parent=axes)
    canvas.line(margin, margin, margin, height - margin, parent=axes)
    for k in ks:
        canvas.text(x_of(k), height - margin + 16, k, parent=axes, text_anchor="middle", font_size=10)
    for tick in (0.0, 0.5, 1.0):
        canvas.text(margin - 6, y_of(tick) + 3, f"{tick:.1f}", parent=axes, text_anchor="end", font_size=10)

    points = [(x_of(k), y_of(curve.areas[k])) for k in ks]
    canvas.polyline(points, stroke=cluster_color(1), stroke_width=2, id="area")
    chosen = curve.chosen_k
    canvas.circle(x_of(chosen), y_of(curve.areas[chosen]), 5, cluster_color(0), id="chosen-k", data_k=chosen)
    canvas.write(directory / f"{stem}.svg")
    return directory / f"{stem}.csv", directory / f"{stem}.svg"


def analyze_dataset(trips, vehicle, mode, config):
    """Profile, choose k, cluster, color periods and test one (vehicle, mode) pair"""
    context = f" for {VehicleType(vehicle).value}/{Mode(mode).value}"
    with _stage("profile", context):
        dataset = build_dataset(trips, vehicle, mode, config.granularity, config.daytime)

    curve = None
    if config.fixed_k is None:
        with _stage("consensus", context):
            _, curve = run_consensus(dataset, config.cluster, config.consensus)
        k = curve.chosen_k
    else:
        k = config.fixed_k

    with _stage("cluster", context):
        model = fit(dataset, config.cluster.with_k(k)).canonicalized()

    with _stage("coloring", context):
        coloring = majority_period_coloring(model, dataset)
        period_means = {row.period_index: row.mean for row in period_summary(dataset)}

    with _stage("ranksum", context):
        comparisons = []
        for i in range(model.k):
            for j in range(i + 1, model.k):
                a, b = model.assignment == i, model.assignment == j
                if not a.any() or not b.any():
                    continue
                result = weighted_ranksum_test(
                    dataset.features[a], dataset.weights[a], dataset.features[b], dataset.weights[b]
                )
                comparisons.append((i, j, result))
                logger.info(f"Rank-sum{context}, clusters {i} vs {j}: p={result.p_two_sided:.3g} ({result.method.value})")

    return AnalysisResult(
        vehicle_type=VehicleType(vehicle),
        mode=Mode(mode),
        granularity=dataset.granularity,
        n_points=len(dataset),
        n_trips=int(dataset.weights.sum()),
        k=k,
        model=model,
        coloring=coloring,
        period_means=period_means,
        curve=curve,
        comparisons=tuple(comparisons),
    )


def _emit_analysis(result, directory):
    stem = result.stem
    write_csv(
        result.cluster_rows(),
        ["cluster_id", "mean_mps", "std_mps", "size", "weight", "purity", "majority_label"],
        directory / f"clusters_{stem}.csv",
    )
    written = [f"clusters_{stem}.csv"]
    emit_period_coloring(result.coloring, result.mode, result.period_means, directory, f"coloring_{stem}")
    written += [f"coloring_{stem}.csv", f"coloring_{stem}.svg"]
    if result.curve is not None:
        emit_consensus_curve(result.curve, directory, f"consensus_{stem}")
        written += [f"consensus_{stem}.csv", f"consensus_{stem}.svg"]
    write_json(
        {
            "vehicle": result.vehicle_type.value,
            "mode": result.mode.value,
            "comparisons": [
                {"clusters": [i, j], **comparison.to_dict()} for i, j, comparison in result.comparisons
            ],
        },
        directory / f"ranksum_{stem}.json",
    )
    written.append(f"ranksum_{stem}.json")
    return written


class UsageReportGenerator:
    """ingest -> filter -> per (vehicle, mode): profile -> consensus or fixed k -> fit -> coloring -> rank-sum.

    Artifacts are written to a staging directory and only moved into the
    output directory once every analysis succeeded; the manifest goes last.
    """

    def __init__(self, config):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.ingest = None
        self.filtered = None
        self.kept = ()
        self.results = ()

    def generate_report(self):
        config = self.config
        self.output_dir.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{self.output_dir.name}-staging-", dir=self.output_dir.parent))
        logger.info(f"Starting analysis of {config.input_path} (config {config.config_hash()[:12]})")

        try:
            self._load_trips()
            self.results = self._run_analyses()
            with _stage("emit"):
                files = self._write_files(staging)
                metadata = self._manifest(files)
                write_json(metadata, staging / "manifest.json")
                files.append("manifest.json")
                self._publish(staging, files)
        except Exception:
            logger.error(f"Analysis aborted, discarding partial outputs in {staging}")
            raise
        finally:
            shutil.rmtree(staging, ignore_errors=True)

        logger.info(f"Wrote {len(files)} report files to {self.output_dir}")
        return ReportBundle(analyses=tuple(self.results), metadata=metadata, files=tuple(sorted(files)))

    def _load_trips(self):
        config = self.config
        with _stage("ingest"):
            if not Path(config.input_path).is_file():
                raise FileNotFoundError(f"Input file not found: {config.input_path}")
            trips, self.ingest = parse_trips(config.input_path, get_schema(config.schema))
        with _stage("filter"):
            self.kept = filter_trips(trips, config.filter_policy)
            self.filtered = filter_report(trips, self.kept)
            logger.info(f"Filter kept {len(self.kept)} of {len(trips)} trips")

    def _run_analyses(self):
        config = self.config
        pairs = [(vehicle, mode) for vehicle in config.vehicles for mode in config.modes]
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                return list(executor.map(lambda pair: analyze_dataset(self.kept, *pair, config), pairs))
        return [analyze_dataset(self.kept, vehicle, mode, config) for vehicle, mode in pairs]

    def _write_files(self, staging):
        files = []
        for result in self.results:
            files += _emit_analysis(result, staging)
        return files

    def _manifest(self, files):
        config = self.config
        return {
            "seed": config.seed,
            "config_hash": config.config_hash(),
            "config": config.to_dict(),
            "ingest": self.ingest.to_dict(),
            "filter": self.filtered.to_dict(),
            "trips_after_filter": len(self.kept),
            "analyses": [
                {
                    "vehicle": r.vehicle_type.value,
                    "mode": r.mode.value,
                    "granularity": r.granularity.value,
                    "k": r.k,
                    "k_source": "fixed" if r.curve is None else "consensus",
                    "points": r.n_points,
                    "trips": r.n_trips,
                    "converged": r.model.converged,
                    "outer_iterations": r.model.outer_iterations_used,
                }
                for r in self.results
            ],
            "files": sorted(files),
        }

    def _publish(self, staging, files):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        for name in files:
            shutil.move(str(staging / name), str(self.output_dir / name))


def run_pipeline(config):
    return UsageReportGenerator(config).generate_report()
