import logging

from django.core.management.base import BaseCommand, CommandError

from usage_patterns.exceptions import AnalysisError, PipelineStageError
from usage_patterns.services.config import load_analysis_config
from usage_patterns.services.report import UsageReportGenerator

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Run the full usage pattern analysis and write the report bundle"

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Flat key=value config file")
        parser.add_argument("--input", help="Trip export CSV")
        parser.add_argument("--vehicle", nargs="+", choices=["bicycle", "scooter"])
        parser.add_argument("--mode", nargs="+", choices=["day-of-week", "time-of-day", "day_of_week", "time_of_day"])
        parser.add_argument("--granularity", choices=["auto", "per-trip", "per-period"])
        parser.add_argument("--k", help="'auto' for consensus selection or a fixed number of clusters")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--workers", type=int)
        parser.add_argument("--out", help="Output directory")

    def handle(self, *args, **options):
        overrides = {
            "input": options["input"],
            "vehicles": options["vehicle"],
            "modes": options["mode"],
            "granularity": options["granularity"],
            "k": options["k"],
            "seed": options["seed"],
            "workers": options["workers"],
            "out": options["out"],
        }
        try:
            config = load_analysis_config(options["config"], overrides)
            generator = UsageReportGenerator(config)
            bundle = generator.generate_report()
        except PipelineStageError as e:
            raise CommandError(f"analyze failed at stage '{e.stage}': {e.cause}") from e
        except AnalysisError as e:
            logger.error(f"Analysis configuration rejected: {str(e)}")
            raise CommandError(f"analyze: {e}") from e

        for result in bundle.analyses:
            means = ", ".join(f"{c.mean:.2f}" for c in result.model.clusters)
            self.stdout.write(f"{result.vehicle_type.value} {result.mode.value}: k={result.k}, means {means} m/s")
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(bundle.files)} files to {config.output_dir}"))
