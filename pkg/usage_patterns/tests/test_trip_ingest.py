import io
import tempfile
from datetime import datetime
from pathlib import Path

from django.test import SimpleTestCase

from usage_patterns.exceptions import ConfigurationError, DomainError
from usage_patterns.services.synthetic import write_synthetic_trips
from usage_patterns.services.trip_ingest import (
    AUSTIN_SCHEMA,
    FilterPolicy,
    VehicleType,
    filter_report,
    filter_trips,
    parse_trips,
    read_normalized,
    trip_speed,
    write_normalized,
)

from .helpers import austin_csv, make_trip

MONDAY_ROW = {
    "trip_id": "t1",
    "vehicle_type": "scooter",
    "duration": "300",
    "distance": "900",
    "start_time": "2019-01-07 08:15:00",
}


class ParseTripsTests(SimpleTestCase):
    def test_maps_fields_and_decomposes_start_time(self):
        trips, report = parse_trips(austin_csv([MONDAY_ROW]))

        self.assertEqual(len(trips), 1)
        trip = trips[0]
        self.assertIs(trip.vehicle_type, VehicleType.SCOOTER)
        self.assertEqual(trip.duration_s, 300.0)
        self.assertEqual(trip.distance_m, 900.0)
        self.assertEqual(trip.day_of_week, 1)
        self.assertEqual(trip.hour, 8)
        self.assertEqual((trip.month, trip.year), (1, 2019))
        self.assertEqual(report.rows_read, 1)
        self.assertEqual(report.rows_parsed, 1)

    def test_unparseable_distance_is_counted_not_fatal(self):
        rows = [MONDAY_ROW, {**MONDAY_ROW, "trip_id": "t2", "distance": "abc"}]
        trips, report = parse_trips(austin_csv(rows))

        self.assertEqual([t.trip_id for t in trips], ["t1"])
        self.assertEqual(report.rows_rejected_by_reason, {"unparseable_distance": 1})
        self.assertEqual(report.rows_read, report.rows_parsed + report.rows_rejected)

    def test_invalid_utf8_row_is_counted_not_fatal(self):
        rows = [MONDAY_ROW, {**MONDAY_ROW, "trip_id": "t2", "distance": "9X0"}, {**MONDAY_ROW, "trip_id": "t3"}]
        source = austin_csv(rows).replace(b"9X0", b"9\xff0")
        trips, report = parse_trips(source)

        self.assertEqual([t.trip_id for t in trips], ["t1", "t3"])
        self.assertEqual(report.rows_rejected_by_reason, {"invalid_encoding": 1})
        self.assertEqual(report.rows_read, 3)

    def test_invalid_utf8_in_unmapped_column(self):
        header, row = austin_csv([MONDAY_ROW]).decode("utf-8").splitlines()
        source = f"{header},Operator Note\n{row},caf".encode("utf-8") + b"\xe9\n"
        trips, report = parse_trips(source)

        self.assertEqual(trips, ())
        self.assertEqual(report.rows_rejected_by_reason, {"invalid_encoding": 1})

    def test_rejection_reasons(self):
        rows = [
            {**MONDAY_ROW, "vehicle_type": "skateboard"},
            {**MONDAY_ROW, "duration": ""},
            {**MONDAY_ROW, "start_time": "yesterday"},
            {**MONDAY_ROW, "duration": "-5"},
            {**MONDAY_ROW, "distance": "-1"},
        ]
        _, report = parse_trips(austin_csv(rows))

        self.assertEqual(
            report.rows_rejected_by_reason,
            {
                "unknown_vehicle_type": 1,
                "unparseable_duration": 1,
                "unparseable_start_time": 1,
                "negative_duration": 1,
                "negative_distance": 1,
            },
        )
        self.assertEqual(report.rows_parsed, 0)

    def test_vehicle_aliases(self):
        rows = [{**MONDAY_ROW, "vehicle_type": "Bicycle"}, {**MONDAY_ROW, "vehicle_type": "e-scooter"}]
        trips, report = parse_trips(austin_csv(rows))

        self.assertEqual([t.vehicle_type for t in trips], [VehicleType.BICYCLE, VehicleType.SCOOTER])
        self.assertEqual(report.vehicle_counts, {"bicycle": 1, "scooter": 1})

    def test_start_time_wins_over_calendar_columns(self):
        row = {**MONDAY_ROW, "day_of_week": "3", "hour": "8"}
        trips, report = parse_trips(austin_csv([row]))

        self.assertEqual(trips[0].day_of_week, 1)
        self.assertEqual(report.calendar_conflicts, {"day_of_week": 1})

    def test_missing_required_header_names_it(self):
        source = b"Vehicle Type,Trip Duration,Start Time\nscooter,300,2019-01-07 08:15:00\n"
        with self.assertRaisesRegex(ConfigurationError, "Trip Distance"):
            parse_trips(source)

    def test_empty_file_gives_empty_result(self):
        trips, report = parse_trips(io.BytesIO(b""))

        self.assertEqual(trips, ())
        self.assertEqual(report.rows_read, 0)

    def test_small_chunks_keep_file_order(self):
        rows = [{**MONDAY_ROW, "trip_id": f"t{i}", "distance": str(200 + i)} for i in range(7)]
        trips, report = parse_trips(austin_csv(rows), chunksize=2)

        self.assertEqual([t.trip_id for t in trips], [f"t{i}" for i in range(7)])
        self.assertEqual(report.rows_read, 7)

    def test_custom_header_mapping(self):
        source = b"kind,secs,meters,began\nbike,100,600,2019-01-06 23:00:00\n"
        mapping = {"kind": "vehicle_type", "secs": "duration", "meters": "distance", "began": "start_time"}
        trips, _ = parse_trips(source, mapping)

        self.assertIs(trips[0].vehicle_type, VehicleType.BICYCLE)
        self.assertEqual(trips[0].day_of_week, 0)
        self.assertTrue(trips[0].trip_id.startswith("row-"))

    def test_synthetic_fixture_accounts_for_every_row(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "trips.csv"
            write_synthetic_trips(path, rows=3000, seed=11)
            with open(path, encoding="utf-8") as f:
                line_count = sum(1 for _ in f) - 1
            trips, report = parse_trips(path, AUSTIN_SCHEMA)

        self.assertEqual(report.rows_read, line_count)
        self.assertEqual(report.rows_parsed + report.rows_rejected, 3000)
        self.assertGreater(report.rows_rejected, 0)
        self.assertEqual(report.calendar_conflicts, {})
        kept = filter_trips(trips)
        max_speed = FilterPolicy().max_distance_m / FilterPolicy().min_duration_s
        self.assertTrue(all(0 < trip_speed(t) < max_speed for t in kept))


class FilterTripsTests(SimpleTestCase):
    def test_boundaries(self):
        kept_min_distance = make_trip("a", distance_m=160.9344, duration_s=600)
        kept_long = make_trip("b", distance_m=5000, duration_s=86399)
        below_min = make_trip("c", distance_m=160.9343, duration_s=600)
        at_max_distance = make_trip("d", distance_m=804672.0, duration_s=600)
        at_max_duration = make_trip("e", distance_m=5000, duration_s=86400)
        short = make_trip("f", distance_m=100, duration_s=600)
        zero_duration = make_trip("g", distance_m=500, duration_s=0)

        kept = filter_trips([kept_min_distance, kept_long, below_min, at_max_distance, at_max_duration, short, zero_duration])

        self.assertEqual([t.trip_id for t in kept], ["a", "b"])

    def test_idempotent(self):
        trips = [make_trip(str(i), distance_m=50 * i, duration_s=10 * i) for i in range(10)]
        once = filter_trips(trips)
        self.assertEqual(filter_trips(once), once)

    def test_filter_report_counts_per_vehicle(self):
        trips = [make_trip("a"), make_trip("b", distance_m=10), make_trip("c", vehicle="bicycle")]
        report = filter_report(trips, filter_trips(trips))

        self.assertEqual(report.kept, {"scooter": 1, "bicycle": 1})
        self.assertEqual(report.dropped, {"scooter": 1, "bicycle": 0})

    def test_policy_validation(self):
        with self.assertRaises(ConfigurationError):
            FilterPolicy(min_distance_m=10, max_distance_m=5)
        with self.assertRaises(ConfigurationError):
            FilterPolicy(min_duration_s=0)
        with self.assertRaises(ConfigurationError):
            FilterPolicy(min_distance_m=0)


class TripSpeedTests(SimpleTestCase):
    def test_speed(self):
        self.assertEqual(trip_speed(make_trip("a", distance_m=600, duration_s=200)), 3.0)
        self.assertEqual(trip_speed(make_trip("b", distance_m=0, duration_s=100)), 0.0)

    def test_zero_duration_is_a_domain_error(self):
        with self.assertRaises(DomainError):
            trip_speed(make_trip("a", duration_s=0))

    def test_record_validation(self):
        with self.assertRaises(DomainError):
            make_trip("a", distance_m=-1)


class NormalizedFormatTests(SimpleTestCase):
    def test_round_trip_keeps_retained_fields(self):
        trips = [
            make_trip("a", distance_m=912.5, duration_s=301, start=datetime(2019, 3, 2, 23, 59, 1)),
            make_trip("b", vehicle="bicycle", distance_m=1234.0, duration_s=456, start=datetime(2019, 1, 7, 0, 0)),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "normalized.csv"
            write_normalized(trips, path)
            header = path.read_text(encoding="utf-8").splitlines()[0]
            parsed, report = read_normalized(path)

        self.assertEqual(
            header, "trip_id,vehicle_type,distance_m,duration_s,speed_mps,start_time,day_of_week,hour"
        )
        self.assertEqual(report.rows_parsed, 2)
        for original, again in zip(trips, parsed):
            self.assertEqual(again.trip_id, original.trip_id)
            self.assertIs(again.vehicle_type, original.vehicle_type)
            self.assertEqual(again.distance_m, original.distance_m)
            self.assertEqual(again.duration_s, original.duration_s)
            self.assertEqual(again.start_time, original.start_time)
            self.assertEqual((again.day_of_week, again.hour), (original.day_of_week, original.hour))
