import logging

from django.core.management.base import BaseCommand, CommandError

from usage_patterns.exceptions import AnalysisError
from usage_patterns.services.profile_builder import (
    DaytimeWindow,
    build_dataset,
    parse_granularity,
    parse_mode,
    period_summary,
    write_dataset,
)
from usage_patterns.services.report import write_csv
from usage_patterns.services.trip_ingest import FilterPolicy, filter_trips, get_schema, parse_trips, parse_vehicle_type

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Build a labeled average-speed dataset for one vehicle type and mode"

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True, help="Trip CSV (normalized by default)")
        parser.add_argument("--schema", default="normalized", help="Header preset of the input")
        parser.add_argument("--filter-defaults", action="store_true", help="Apply the default trip filter first")
        parser.add_argument("--mode", required=True, choices=["day-of-week", "time-of-day"])
        parser.add_argument("--vehicle", required=True, choices=["bicycle", "scooter"])
        parser.add_argument("--granularity", choices=["per-trip", "per-period"], help="Defaults depend on the mode")
        parser.add_argument("--daytime-start", type=int, default=6)
        parser.add_argument("--daytime-end", type=int, default=18)
        parser.add_argument("--out", required=True, help="Dataset CSV (feature,label,period,weight)")
        parser.add_argument("--summary", help="Optional per-period mean/std/count CSV")

    def handle(self, *args, **options):
        try:
            trips, _ = parse_trips(options["input"], get_schema(options["schema"]))
            if options["filter_defaults"]:
                trips = filter_trips(trips, FilterPolicy())
            granularity = parse_granularity(options["granularity"]) if options["granularity"] else None
            dataset = build_dataset(
                trips,
                parse_vehicle_type(options["vehicle"]),
                parse_mode(options["mode"]),
                granularity,
                DaytimeWindow(options["daytime_start"], options["daytime_end"]),
            )
            write_dataset(dataset, options["out"])
            if options["summary"]:
                write_csv(
                    [(s.period_index, s.mean, s.std, s.count, s.weight) for s in period_summary(dataset)],
                    ["period_index", "mean", "std", "count", "weight"],
                    options["summary"],
                )
        except (AnalysisError, OSError) as e:
            logger.error(f"Profile failed: {str(e)}")
            raise CommandError(f"profile: {e}") from e

        self.stdout.write(self.style.SUCCESS(f"Wrote {len(dataset)} {dataset.granularity.value} points"))
