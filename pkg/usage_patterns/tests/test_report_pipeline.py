import json
import tempfile
import time
from pathlib import Path

import pandas as pd
from django.test import SimpleTestCase, tag
from lxml import etree

from usage_patterns.exceptions import PipelineStageError
from usage_patterns.services.config import load_analysis_config
from usage_patterns.services.consensus import ConsensusCurve, relative_deltas
from usage_patterns.services.report import (
    UsageReportGenerator,
    emit_consensus_curve,
    emit_period_coloring,
    run_pipeline,
)
from usage_patterns.services.svg import SVG_NS, cluster_color
from usage_patterns.services.synthetic import generate_trip_frame, write_synthetic_trips

SMALL_CONSENSUS = {
    "k_max": "3",
    "resamples": "3",
    "consensus_max_points": "120",
}


def svg_elements(path, tag):
    return etree.parse(str(path)).getroot().iter(f"{{{SVG_NS}}}{tag}")


class EmitterTests(SimpleTestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.directory = Path(tmp.name)

    def test_period_coloring_files(self):
        coloring = {0: 1, 1: 0, 2: 0, 6: 1}
        means = {0: 2.1, 1: 3.0, 2: 3.1, 6: 2.2}
        csv_path, svg_path = emit_period_coloring(coloring, "day_of_week", means, self.directory, "coloring")

        frame = pd.read_csv(csv_path)
        self.assertEqual(list(frame.columns), ["period_index", "cluster_id", "mean_speed"])
        self.assertEqual(frame["period_index"].tolist(), [0, 1, 2, 6])
        bands = list(svg_elements(svg_path, "rect"))
        self.assertEqual(len(bands), 4)
        self.assertEqual([b.get("fill") for b in bands], [cluster_color(c) for c in (1, 0, 0, 1)])
        labels = [t.text for t in svg_elements(svg_path, "text")]
        self.assertEqual(labels, ["Sun", "Mon", "Tue", "Sat"])

    def test_single_cluster_coloring_has_one_fill(self):
        coloring = {hour: 0 for hour in range(24)}
        _, svg_path = emit_period_coloring(coloring, "time_of_day", {}, self.directory, "flat")

        self.assertEqual({b.get("fill") for b in svg_elements(svg_path, "rect")}, {cluster_color(0)})

    def test_consensus_curve_files(self):
        areas = {2: 0.9, 3: 0.95, 4: 0.96, 5: 0.96, 6: 0.97}
        deltas = relative_deltas(areas)
        curve = ConsensusCurve(ks=(2, 3, 4, 5, 6), areas=areas, deltas=deltas, chosen_k=3)
        csv_path, svg_path = emit_consensus_curve(curve, self.directory, "consensus")

        frame = pd.read_csv(csv_path)
        self.assertEqual(list(frame.columns), ["k", "area", "delta", "chosen"])
        self.assertEqual(len(frame), 5)
        self.assertEqual(frame["chosen"].tolist(), [0, 1, 0, 0, 0])
        self.assertEqual(frame["area"].tolist(), [areas[k] for k in curve.ks])
        (marker,) = [c for c in svg_elements(svg_path, "circle") if c.get("id") == "chosen-k"]
        self.assertEqual(marker.get("data-k"), "3")
        (line,) = svg_elements(svg_path, "polyline")
        self.assertEqual(len(line.get("points").split()), 5)

    def test_flat_curve_is_a_horizontal_line(self):
        areas = {k: 0.8 for k in range(2, 7)}
        curve = ConsensusCurve(ks=(2, 3, 4, 5, 6), areas=areas, deltas=relative_deltas(areas), chosen_k=2)
        _, svg_path = emit_consensus_curve(curve, self.directory, "flat")

        (line,) = svg_elements(svg_path, "polyline")
        heights = {point.split(",")[1] for point in line.get("points").split()}
        self.assertEqual(len(heights), 1)


class RunPipelineTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.fixture = cls.root / "trips.csv"
        write_synthetic_trips(cls.fixture, rows=2000, seed=5)
        cls.first = run_pipeline(cls.config(cls.root / "first"))
        cls.second = run_pipeline(cls.config(cls.root / "second"))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    @classmethod
    def config(cls, out, **overrides):
        values = {"input": str(cls.fixture), "out": str(out), "seed": "3", **SMALL_CONSENSUS, **overrides}
        return load_analysis_config(None, values, environ={})

    def test_every_declared_file_is_written(self):
        expected = {"manifest.json"}
        for vehicle in ("bicycle", "scooter"):
            for mode in ("day_of_week", "time_of_day"):
                stem = f"{vehicle}_{mode}"
                expected |= {
                    f"clusters_{stem}.csv",
                    f"coloring_{stem}.csv",
                    f"coloring_{stem}.svg",
                    f"consensus_{stem}.csv",
                    f"consensus_{stem}.svg",
                    f"ranksum_{stem}.json",
                }
        self.assertEqual({p.name for p in (self.root / "first").iterdir()}, expected)
        self.assertEqual(set(self.first.files), expected)
        self.assertEqual(len(self.first.analyses), 4)

    def test_rerun_is_byte_identical(self):
        for name in self.first.files:
            with self.subTest(file=name):
                self.assertEqual(
                    (self.root / "first" / name).read_bytes(),
                    (self.root / "second" / name).read_bytes(),
                )

    def test_no_staging_directories_left_behind(self):
        self.assertEqual(sorted(p.name for p in self.root.iterdir()), ["first", "second", "trips.csv"])

    def test_manifest_describes_the_run(self):
        manifest = json.loads((self.root / "first" / "manifest.json").read_text(encoding="utf-8"))

        self.assertEqual(manifest["seed"], 3)
        self.assertEqual(manifest["config_hash"], self.config(self.root / "elsewhere").config_hash())
        self.assertEqual(manifest["ingest"]["rows_read"], 2000)
        self.assertEqual(
            manifest["ingest"]["rows_parsed"] + manifest["ingest"]["rows_rejected"], manifest["ingest"]["rows_read"]
        )
        self.assertEqual(len(manifest["analyses"]), 4)
        self.assertTrue(all(a["k_source"] == "consensus" for a in manifest["analyses"]))
        self.assertNotIn("manifest.json", manifest["files"])

    def test_cluster_tables(self):
        for result in self.first.analyses:
            frame = pd.read_csv(self.root / "first" / f"clusters_{result.stem}.csv")
            self.assertEqual(frame["size"].sum(), result.n_points)
            self.assertEqual(frame["weight"].sum(), result.n_trips)
            self.assertEqual(frame["cluster_id"].tolist(), list(range(result.k)))
            means = frame["mean_mps"].dropna().tolist()
            self.assertEqual(means, sorted(means))
            self.assertTrue(frame["purity"].between(0, 1).all())

    def test_colorings_cover_present_periods(self):
        for result in self.first.analyses:
            frame = pd.read_csv(self.root / "first" / f"coloring_{result.stem}.csv")
            self.assertEqual(len(frame), len(result.period_means))
            self.assertTrue(frame["cluster_id"].between(0, result.k - 1).all())

    def test_consensus_csv_matches_curve(self):
        for result in self.first.analyses:
            frame = pd.read_csv(self.root / "first" / f"consensus_{result.stem}.csv")
            self.assertEqual(frame["k"].tolist(), [2, 3])
            self.assertEqual(frame["chosen"].sum(), 1)
            self.assertEqual(int(frame.loc[frame["chosen"] == 1, "k"].iloc[0]), result.k)
            self.assertEqual(frame["area"].tolist(), [result.curve.areas[k] for k in (2, 3)])

    def test_ranksum_results(self):
        for result in self.first.analyses:
            payload = json.loads((self.root / "first" / f"ranksum_{result.stem}.json").read_text(encoding="utf-8"))
            self.assertEqual(len(payload["comparisons"]), len(result.comparisons))
            for comparison in payload["comparisons"]:
                self.assertTrue(0 < comparison["p"] <= 1)
                self.assertIn(comparison["method"], ("exact", "normal_approx"))

    def test_svgs_are_well_formed(self):
        for name in self.first.files:
            if name.endswith(".svg"):
                root = etree.parse(str(self.root / "first" / name)).getroot()
                self.assertEqual(root.tag, f"{{{SVG_NS}}}svg")


class PipelineFailureTests(SimpleTestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)

    def test_missing_input_fails_at_ingest(self):
        config = load_analysis_config(
            None, {"input": str(self.root / "absent.csv"), "out": str(self.root / "out"), "k": "2"}, environ={}
        )
        with self.assertRaises(PipelineStageError) as raised:
            run_pipeline(config)

        self.assertEqual(raised.exception.stage, "ingest")
        self.assertEqual(list(self.root.iterdir()), [])

    def test_failed_analysis_leaves_no_partial_outputs(self):
        fixture = self.root / "scooters.csv"
        generate_trip_frame(rows=500, seed=2, scooter_share=1.0).to_csv(fixture, index=False)
        config = load_analysis_config(
            None, {"input": str(fixture), "out": str(self.root / "out"), "k": "2"}, environ={}
        )
        with self.assertRaises(PipelineStageError) as raised:
            run_pipeline(config)

        self.assertEqual(raised.exception.stage, "profile")
        self.assertEqual([p.name for p in self.root.iterdir()], ["scooters.csv"])



class UsageReportGeneratorTests(SimpleTestCase):
    def test_generator_keeps_stage_results(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        root = Path(tmp.name)
        fixture = root / "trips.csv"
        write_synthetic_trips(fixture, rows=1500, seed=2)
        config = load_analysis_config(
            None, {"input": str(fixture), "out": str(root / "out"), "k": "2", "modes": "day-of-week"}, environ={}
        )

        generator = UsageReportGenerator(config)
        bundle = generator.generate_report()

        self.assertEqual(generator.ingest.rows_read, 1500)
        self.assertEqual(len(generator.kept), bundle.metadata["trips_after_filter"])
        self.assertEqual(len(generator.results), len(bundle.analyses))
        self.assertTrue(all(ours is emitted for ours, emitted in zip(generator.results, bundle.analyses)))
        self.assertEqual(sum(generator.filtered.kept.values()), len(generator.kept))


@tag("slow")
class FixtureRuntimeTests(SimpleTestCase):
    def test_ten_thousand_rows_with_default_settings(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        root = Path(tmp.name)
        fixture = root / "trips.csv"
        write_synthetic_trips(fixture, rows=10_000, seed=7)
        config = load_analysis_config(None, {"input": str(fixture), "out": str(root / "out"), "seed": "42"}, environ={})

        started = time.perf_counter()
        bundle = run_pipeline(config)
        elapsed = time.perf_counter() - started

        self.assertEqual(len(bundle.analyses), 4)
        self.assertTrue(all(a.curve is not None for a in bundle.analyses))
        self.assertLess(elapsed, 10.0)
