import logging

from django.core.management.base import BaseCommand, CommandError

from usage_patterns.exceptions import AnalysisError
from usage_patterns.services.report import write_json
from usage_patterns.services.trip_ingest import (
    FilterPolicy,
    filter_report,
    filter_trips,
    get_schema,
    parse_trips,
    write_normalized,
)

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Parse a dockless trip export, optionally filter it, and write the normalized trip CSV"

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True, help="Trip export CSV")
        parser.add_argument("--schema", default="austin", help="Header preset (austin, normalized)")
        parser.add_argument("--filter-defaults", action="store_true", help="Apply the default distance/duration filter")
        parser.add_argument("--out", required=True, help="Normalized trip CSV to write")
        parser.add_argument("--report", help="Ingest report JSON to write")

    def handle(self, *args, **options):
        try:
            trips, report = parse_trips(options["input"], get_schema(options["schema"]))
            kept = filter_trips(trips, FilterPolicy()) if options["filter_defaults"] else trips
            write_normalized(kept, options["out"])
            if options["report"]:
                payload = {"ingest": report.to_dict()}
                if options["filter_defaults"]:
                    payload["filter"] = filter_report(trips, kept).to_dict()
                write_json(payload, options["report"])
        except (AnalysisError, OSError) as e:
            logger.error(f"Ingest failed: {str(e)}")
            raise CommandError(f"ingest: {e}") from e

        self.stdout.write(
            self.style.SUCCESS(f"Read {report.rows_read} rows, parsed {report.rows_parsed}, wrote {len(kept)} trips")
        )
