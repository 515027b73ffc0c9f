import logging

from django.core.management.base import BaseCommand, CommandError

from usage_patterns.exceptions import AnalysisError
from usage_patterns.services.ca_cluster import ClusterConfig, fit, majority_period_coloring
from usage_patterns.services.profile_builder import read_dataset
from usage_patterns.services.report import write_json

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Fit the college-admission clustering to a dataset CSV and export the model as JSON"

    def add_arguments(self, parser):
        parser.add_argument("--in", dest="input", required=True, help="Dataset CSV (feature,label,period,weight)")
        parser.add_argument("--k", type=int, default=2)
        parser.add_argument("--quota", default="balanced", choices=["balanced", "unbounded_cap", "unbounded-cap"])
        parser.add_argument("--seed", type=int, default=42)
        parser.add_argument("--max-outer-iters", type=int, default=100)
        parser.add_argument("--distance", default="squared_euclidean", choices=["squared_euclidean", "absolute"])
        parser.add_argument("--out", required=True, help="Model JSON")

    def handle(self, *args, **options):
        try:
            dataset = read_dataset(options["input"])
            config = ClusterConfig(
                k=options["k"],
                quota_policy=options["quota"],
                max_outer_iters=options["max_outer_iters"],
                seed=options["seed"],
                distance=options["distance"],
            )
            model = fit(dataset, config).canonicalized()
            payload = model.to_dict()
            payload["mode"] = dataset.mode.value
            payload["coloring"] = {str(p): c for p, c in majority_period_coloring(model, dataset).items()}
            write_json(payload, options["out"])
        except (AnalysisError, OSError) as e:
            logger.error(f"Cluster failed: {str(e)}")
            raise CommandError(f"cluster: {e}") from e

        means = ", ".join(f"{c.mean:.3f}" for c in model.clusters)
        self.stdout.write(self.style.SUCCESS(f"k={config.k}, cluster means {means} m/s, converged={model.converged}"))
