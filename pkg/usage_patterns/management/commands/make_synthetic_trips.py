from django.core.management.base import BaseCommand, CommandError

from usage_patterns.services.synthetic import write_synthetic_trips


class Command(BaseCommand):
    help = "Write a seeded synthetic trip export in the Austin layout"

    def add_arguments(self, parser):
        parser.add_argument("--rows", type=int, default=10_000)
        parser.add_argument("--seed", type=int, default=7)
        parser.add_argument("--out", required=True)

    def handle(self, *args, **options):
        if options["rows"] < 1:
            raise CommandError("--rows must be positive")
        try:
            write_synthetic_trips(options["out"], rows=options["rows"], seed=options["seed"])
        except OSError as e:
            raise CommandError(f"make_synthetic_trips: {e}") from e
        self.stdout.write(self.style.SUCCESS(f"Wrote {options['rows']} rows to {options['out']}"))
