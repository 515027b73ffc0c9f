import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from usage_patterns.exceptions import AnalysisError
from usage_patterns.services.ca_cluster import ClusterConfig
from usage_patterns.services.consensus import ConsensusConfig, run_consensus
from usage_patterns.services.profile_builder import read_dataset
from usage_patterns.services.report import emit_consensus_curve, write_json

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Select the number of clusters of a dataset CSV by consensus clustering"

    def add_arguments(self, parser):
        parser.add_argument("--in", dest="input", required=True, help="Dataset CSV (feature,label,period,weight)")
        parser.add_argument("--k-min", type=int, default=2)
        parser.add_argument("--k-max", type=int, default=6)
        parser.add_argument("--resamples", type=int, default=50)
        parser.add_argument("--fraction", type=float, default=0.8)
        parser.add_argument("--seed", type=int, default=42)
        parser.add_argument("--flatness-threshold", type=float, default=0.025)
        parser.add_argument("--max-points", type=int, default=1000, help="0 disables the pre-sampling cap")
        parser.add_argument("--quota", default="balanced", choices=["balanced", "unbounded_cap", "unbounded-cap"])
        parser.add_argument("--workers", type=int, default=1)
        parser.add_argument("--out", required=True, help="Output prefix: writes <out>.csv, <out>.json and <out>.svg")
        parser.add_argument("--run-log", help="Per-run assignments as JSON lines")

    def handle(self, *args, **options):
        run_log = [] if options["run_log"] else None
        try:
            dataset = read_dataset(options["input"])
            config = ConsensusConfig(
                k_min=options["k_min"],
                k_max=options["k_max"],
                resamples=options["resamples"],
                subsample_fraction=options["fraction"],
                seed=options["seed"],
                flatness_threshold=options["flatness_threshold"],
                max_points=options["max_points"] or None,
                workers=options["workers"],
            )
            template = ClusterConfig(quota_policy=options["quota"], seed=options["seed"])
            _, curve = run_consensus(dataset, template, config, run_log=run_log)

            out = Path(options["out"])
            out.parent.mkdir(parents=True, exist_ok=True)
            emit_consensus_curve(curve, out.parent, out.name)
            write_json(curve.to_dict(), out.parent / f"{out.name}.json")
            if run_log is not None:
                with open(options["run_log"], "w", encoding="utf-8", newline="\n") as f:
                    for record in run_log:
                        f.write(json.dumps(record, sort_keys=True))
                        f.write("\n")
        except (AnalysisError, OSError) as e:
            logger.error(f"Consensus failed: {str(e)}")
            raise CommandError(f"consensus: {e}") from e

        self.stdout.write(self.style.SUCCESS(f"Chosen k={curve.chosen_k}"))
