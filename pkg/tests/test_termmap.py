import pytest

from ctindex.catalogs import load_catalog
from ctindex.termmap import (
    NOT_MAPPED,
    BadEquivalenceDegree,
    CatalogMismatch,
    DuplicateLabel,
    MalformedRow,
    MappingEntry,
    MappingTable,
    UnknownLabel,
    coverage_report,
    load_mapping,
    lookup,
    serialize_mapping,
)

HEADER = "label,snomed_code,snomed_display,radlex_id,equivalence_degree,notes"


def table_text(rows: list[str], map_version="0.1.0", target="v1_104") -> str:
    return (
        f"# map_version={map_version}\n# target_label_set={target}\n"
        + HEADER
        + "\n"
        + "\n".join(rows)
        + "\n"
    )


def write_table(tmp_path, rows, **kwargs):
    path = tmp_path / "table.csv"
    path.write_text(table_text(rows, **kwargs), encoding="utf-8")
    return path


class TestBundledTable:
    def test_covers_whole_v1_catalog(self, bundled_table, catalog_v1):
        assert len(bundled_table) == 104
        report = coverage_report(bundled_table, catalog_v1)
        assert report.mapped_fraction == 1.0
        assert report.unmapped_labels == ()

    def test_liver_lookup(self, bundled_table):
        entry = lookup(bundled_table, "liver")
        assert entry.snomed_code == "10200004"
        assert entry.snomed_display == "Liver structure"
        assert entry.radlex_id == "RID58"
        assert entry.equivalence_degree == 1

    def test_degrees_all_in_scale(self, bundled_table):
        assert all(e.equivalence_degree in (1, 2, 3, 4, 5) for e in bundled_table.entries.values())

    def test_snomed_codes_are_numeric(self, bundled_table):
        assert all(e.snomed_code.isdigit() for e in bundled_table.entries.values())

    def test_round_trip(self, bundled_table, tmp_path):
        path = tmp_path / "round.csv"
        path.write_text(serialize_mapping(bundled_table), encoding="utf-8")
        assert load_mapping(path) == bundled_table


class TestLoadMapping:
    def test_minimal_table(self, tmp_path):
        path = write_table(tmp_path, ["liver,10200004,Liver structure,RID58,1,"])
        table = load_mapping(path)
        assert table.map_version == "0.1.0"
        assert table.target_label_set_id == "v1_104"
        assert len(table) == 1

    def test_duplicate_label(self, tmp_path):
        path = write_table(
            tmp_path,
            [
                "liver,10200004,Liver structure,,1,",
                "liver,10200004,Liver structure,,1,",
            ],
        )
        with pytest.raises(DuplicateLabel):
            load_mapping(path)

    def test_degree_zero(self, tmp_path):
        path = write_table(tmp_path, ["liver,10200004,Liver structure,,0,"])
        with pytest.raises(BadEquivalenceDegree):
            load_mapping(path)

    def test_degree_not_integer(self, tmp_path):
        path = write_table(tmp_path, ["liver,10200004,Liver structure,,high,"])
        with pytest.raises(BadEquivalenceDegree):
            load_mapping(path)

    def test_label_outside_catalog(self, tmp_path):
        path = write_table(tmp_path, ["dilithium_chamber,10200004,X,,1,"])
        with pytest.raises(UnknownLabel):
            load_mapping(path)

    def test_degree5_requires_sentinel(self, tmp_path):
        path = write_table(tmp_path, ["liver,10200004,Liver structure,,5,"])
        with pytest.raises(MalformedRow):
            load_mapping(path)

    def test_degree5_with_sentinel_loads(self, tmp_path):
        path = write_table(tmp_path, ["liver,NOMAP,,,5,no equivalent"])
        table = load_mapping(path)
        assert table.entries["liver"].is_nomap

    def test_bad_snomed_code(self, tmp_path):
        path = write_table(tmp_path, ["liver,12ab,Liver structure,,1,"])
        with pytest.raises(MalformedRow):
            load_mapping(path)

    def test_bad_radlex_id(self, tmp_path):
        path = write_table(tmp_path, ["liver,10200004,Liver structure,58,1,"])
        with pytest.raises(MalformedRow):
            load_mapping(path)

    def test_missing_metadata(self, tmp_path):
        path = tmp_path / "table.csv"
        path.write_text(HEADER + "\nliver,10200004,Liver structure,,1,\n")
        with pytest.raises(MalformedRow):
            load_mapping(path)

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "table.csv"
        path.write_text(
            "# map_version=1\n# target_label_set=v1_104\nlabel,code\nliver,1\n"
        )
        with pytest.raises(MalformedRow):
            load_mapping(path)


class TestLookup:
    def test_missing_label_is_not_mapped(self, bundled_table):
        assert lookup(bundled_table, "nonexistent_xyz") is NOT_MAPPED

    def test_degree5_is_not_mapped(self):
        table = MappingTable(
            map_version="0.0.1",
            target_label_set_id="v1_104",
            entries={
                "liver": MappingEntry("liver", "NOMAP", "", None, 5),
            },
        )
        assert lookup(table, "liver") is NOT_MAPPED

    def test_lookup_is_pure(self, bundled_table):
        assert lookup(bundled_table, "spleen") == lookup(bundled_table, "spleen")


class TestCoverage:
    def test_partial_coverage_arithmetic(self, bundled_table, catalog_v1):
        # Drop 4 entries: mapped fraction must be exactly 100/104.
        dropped = list(bundled_table.entries)[:4]
        entries = {
            k: v for k, v in bundled_table.entries.items() if k not in dropped
        }
        partial = MappingTable(
            map_version="0.1.0", target_label_set_id="v1_104", entries=entries
        )
        report = coverage_report(partial, catalog_v1)
        assert report.mapped == 100
        assert report.mapped_fraction == pytest.approx(100 / 104)
        assert sorted(report.unmapped_labels) == sorted(dropped)

    def test_catalog_mismatch(self, bundled_table):
        with pytest.raises(CatalogMismatch):
            coverage_report(bundled_table, load_catalog("v2_117"))

    def test_histogram_sums_to_entry_count(self, bundled_table, catalog_v1):
        report = coverage_report(bundled_table, catalog_v1)
        assert sum(report.degree_histogram.values()) == len(bundled_table)

    def test_mapped_and_unmapped_disjoint(self, bundled_table, catalog_v1):
        report = coverage_report(bundled_table, catalog_v1)
        mapped_labels = {
            label
            for label in catalog_v1.labels
            if lookup(bundled_table, label) is not NOT_MAPPED
        }
        assert not mapped_labels.intersection(report.unmapped_labels)
        assert len(mapped_labels) == report.mapped
