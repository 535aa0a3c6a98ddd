import json
import statistics
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctindex.errors import CtIndexError
from ctindex.ingest import (
    DuplicateSeriesUid,
    MalformedFile,
    MalformedRecord,
    MockCalibration,
    SchemaViolation,
    SeriesMismatch,
    UnknownLabel,
    load_manifest,
    mock_segment,
    parse_statistics,
    serialize_statistics,
)

from conftest import make_series, mock_corpus, stats_file_bytes


class TestParseStatistics:
    def test_two_structure_fixture_field_by_field(self):
        series = make_series()
        stats = parse_statistics(stats_file_bytes(), series)
        assert stats.series_uid == "series-001"
        assert stats.segmenter_name == "mock-segmenter"
        assert stats.segmenter_version == "1.0.0"
        assert stats.label_set_id == "v1_104"
        assert len(stats.structures) == 2
        by_label = {s.label: s for s in stats.structures}
        assert by_label["liver"].volume_mm3 == 1_420_000.0
        assert by_label["liver"].mean_intensity == 62.0
        assert by_label["spleen"].volume_mm3 == 210_000.0
        assert by_label["spleen"].mean_intensity == 55.5

    def test_empty_structures_is_valid(self):
        stats = parse_statistics(stats_file_bytes(structures={}), make_series())
        assert stats.structures == ()

    def test_duplicate_label_rejected(self):
        raw = (
            b'{"series_uid": "series-001", "segmenter_name": "x",'
            b' "segmenter_version": "1", "label_set_id": "v1_104", "structures":'
            b' {"liver": {"volume_mm3": 1, "mean_intensity": 2},'
            b'  "liver": {"volume_mm3": 3, "mean_intensity": 4}}}'
        )
        with pytest.raises(SchemaViolation):
            parse_statistics(raw, make_series())

    def test_negative_volume_rejected(self):
        raw = stats_file_bytes(
            structures={"liver": {"volume_mm3": -5, "mean_intensity": 60.0}}
        )
        with pytest.raises(SchemaViolation):
            parse_statistics(raw, make_series())

    def test_zero_volume_retained(self):
        raw = stats_file_bytes(
            structures={"spleen": {"volume_mm3": 0, "mean_intensity": 0.0}}
        )
        stats = parse_statistics(raw, make_series())
        assert stats.structures[0].volume_mm3 == 0.0

    def test_garbage_is_malformed(self):
        with pytest.raises(MalformedFile):
            parse_statistics(b"not json at all {", make_series())

    def test_non_utf8_is_malformed(self):
        with pytest.raises(MalformedFile):
            parse_statistics(b"\xff\xfe\x00", make_series())

    def test_unknown_label(self):
        raw = stats_file_bytes(
            structures={"warp_core": {"volume_mm3": 1.0, "mean_intensity": 1.0}}
        )
        with pytest.raises(UnknownLabel):
            parse_statistics(raw, make_series())

    def test_missing_header_field(self):
        payload = json.loads(stats_file_bytes())
        del payload["label_set_id"]
        with pytest.raises(SchemaViolation):
            parse_statistics(json.dumps(payload).encode(), make_series())

    def test_unknown_label_set(self):
        raw = stats_file_bytes(label_set_id="v7_200")
        with pytest.raises(SchemaViolation):
            parse_statistics(raw, make_series())

    def test_series_mismatch(self):
        with pytest.raises(SeriesMismatch):
            parse_statistics(stats_file_bytes(series_uid="other"), make_series())

    def test_nan_intensity_rejected(self):
        raw = stats_file_bytes().replace(b"62.0", b"NaN")
        with pytest.raises(SchemaViolation):
            parse_statistics(raw, make_series())

    def test_round_trip(self):
        series = make_series()
        stats = parse_statistics(stats_file_bytes(), series)
        again = parse_statistics(serialize_statistics(stats), series)
        assert again == stats

    def test_round_trip_over_mocked_corpus(self):
        for series, stats in mock_corpus(25):
            again = parse_statistics(serialize_statistics(stats), series)
            assert again == stats

    @settings(max_examples=300, deadline=None)
    @given(raw=st.binary(max_size=400))
    def test_fuzz_never_crashes(self, raw):
        try:
            parse_statistics(raw, make_series())
        except CtIndexError:
            pass

    @settings(max_examples=150, deadline=None)
    @given(
        volume=st.floats(allow_nan=True, allow_infinity=True),
        intensity=st.floats(allow_nan=True, allow_infinity=True),
    )
    def test_fuzz_numeric_fields(self, volume, intensity):
        raw = json.dumps(
            {
                "series_uid": "series-001",
                "segmenter_name": "x",
                "segmenter_version": "1",
                "label_set_id": "v1_104",
                "structures": {
                    "liver": {"volume_mm3": volume, "mean_intensity": intensity}
                },
            }
        ).encode()
        try:
            stats = parse_statistics(raw, make_series())
        except CtIndexError:
            return
        assert stats.structures[0].volume_mm3 >= 0


class TestManifest:
    def test_three_line_order_preserved(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text(
            "# comment\n"
            "s3|st1|p1|2019-05-01|CT|legacy\n"
            "s1|st1|p1|2003-01-02|CT|legacy\n"
            "\n"
            "s2|st2|p2|2011-07-20|MR|daily\n"
        )
        rows = load_manifest(path)
        assert [r.series_uid for r in rows] == ["s3", "s1", "s2"]
        assert rows[0].acquisition_date == date(2019, 5, 1)
        assert rows[2].modality == "MR"

    def test_duplicate_uid(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text(
            "s1|st1|p1|2019-05-01|CT|daily\ns1|st1|p1|2019-05-02|CT|daily\n"
        )
        with pytest.raises(DuplicateSeriesUid):
            load_manifest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("")
        assert load_manifest(path) == []

    def test_malformed_record_carries_line_number(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("s1|st1|p1|2019-05-01|CT|daily\nbroken line\n")
        with pytest.raises(MalformedRecord) as exc:
            load_manifest(path)
        assert exc.value.line_no == 2

    def test_bad_date(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("s1|st1|p1|05/01/2019|CT|daily\n")
        with pytest.raises(MalformedRecord):
            load_manifest(path)

    def test_future_date_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("s1|st1|p1|2031-01-01|CT|daily\n")
        with pytest.raises(MalformedRecord):
            load_manifest(path, now=date(2025, 1, 1))

    def test_bad_source(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("s1|st1|p1|2019-05-01|CT|weekly\n")
        with pytest.raises(MalformedRecord):
            load_manifest(path)


class TestMockSegment:
    def test_deterministic(self):
        series = make_series()
        calibration = MockCalibration("v1_104", 37.0)
        first = mock_segment(series, 99, calibration)
        second = mock_segment(series, 99, calibration)
        assert serialize_statistics(first) == serialize_statistics(second)

    def test_different_seed_differs(self):
        series = make_series()
        calibration = MockCalibration("v1_104", 37.0)
        assert mock_segment(series, 1, calibration) != mock_segment(series, 2, calibration)

    def test_labels_in_catalog_and_volumes_positive(self, catalog_v1):
        for _, stats in mock_corpus(50):
            for s in stats.structures:
                assert s.label in catalog_v1
                assert s.volume_mm3 > 0

    def test_emits_contiguous_anatomical_band(self, catalog_v1):
        ordered = [e.name for e in catalog_v1.by_station()]
        positions = {name: i for i, name in enumerate(ordered)}
        for _, stats in mock_corpus(50):
            idx = sorted(positions[s.label] for s in stats.structures)
            assert idx == list(range(idx[0], idx[0] + len(idx)))

    def test_count_calibration_within_ten_percent(self):
        counts = [len(stats.structures) for _, stats in mock_corpus(2_000, mean=37.0)]
        assert 37.0 * 0.9 <= statistics.mean(counts) <= 37.0 * 1.1

    def test_saturation_emits_whole_catalog(self, catalog_v1):
        stats = mock_segment(make_series(), 5, MockCalibration("v1_104", 104))
        assert sorted(s.label for s in stats.structures) == sorted(catalog_v1.labels)

    def test_region_window_restricts_labels(self, catalog_v1):
        calibration = MockCalibration.for_region("v1_104", 10.0, "chest")
        lo, hi = calibration.region
        stations = {e.name: e.station for e in catalog_v1.entries}
        for i in range(30):
            series = make_series(uid=f"chest-{i}")
            stats = mock_segment(series, 3, calibration)
            for s in stats.structures:
                assert lo <= stations[s.label] <= hi
