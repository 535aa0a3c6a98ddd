import json
from datetime import date
from pathlib import Path

import pytest

from ctindex.annotate import annotate
from ctindex.fhir import (
    RESOURCE_TYPES,
    DeviceIdentity,
    EmptyAnnotationSet,
    InvalidCounts,
    build_resources,
    parse_bundle,
    serialize_bundle,
    serialize_resource,
    to_transaction_bundle,
    unique_resource_count,
)
from ctindex.ingest import SeriesMismatch

from conftest import make_annotation_set, make_series, mock_corpus

GOLDEN = Path(__file__).parent / "data" / "two_series_bundle.fhir-bundle.json"

DEVICE = DeviceIdentity(
    indexer_name="ctindex",
    indexer_version="1.0.0",
    segmenter_name="mock-segmenter",
    segmenter_version="1.0.0",
    mapping_version="1.0.0",
)


def two_series_fixture():
    ann_a = make_annotation_set(uid="series-a")
    ann_b = make_annotation_set(
        uid="series-b", codes=(("liver", "10200004", 1_000_000.0, 58.0),)
    )
    series_a = make_series(uid="series-a", study="study-1", patient="patient-1")
    series_b = make_series(
        uid="series-b", study="study-1", patient="patient-1", acquired=date(2023, 7, 1)
    )
    return [
        build_resources(ann_a, series_a, DEVICE),
        build_resources(ann_b, series_b, DEVICE),
    ]


class TestBuildResources:
    def test_exactly_five_resources_with_exact_types(self):
        rs = build_resources(make_annotation_set(), make_series(), DEVICE)
        resources = rs.resources()
        assert len(resources) == 5
        assert tuple(r["resourceType"] for r in resources) == RESOURCE_TYPES

    def test_codings_match_annotations(self):
        rs = build_resources(make_annotation_set(), make_series(), DEVICE)
        codings = rs.body_structure["includedStructure"]
        assert len(codings) == 2
        codes = [c["structure"]["coding"][0]["code"] for c in codings]
        assert codes == ["10200004", "78961009"]
        assert all(
            c["structure"]["coding"][0]["system"] == "http://snomed.info/sct"
            for c in codings
        )

    def test_saturated_set_still_five_resources(self, bundled_table, catalog_v1):
        from ctindex.ingest import SegmentationStatistics, StructureStat

        stats = SegmentationStatistics(
            series_uid="series-001",
            segmenter_name="mock-segmenter",
            segmenter_version="1.0.0",
            label_set_id="v1_104",
            structures=tuple(
                StructureStat(label, 1_000.0, 50.0) for label in catalog_v1.labels
            ),
        )
        ann = annotate(stats, bundled_table, indexer_version="1.0.0")
        rs = build_resources(ann, make_series(), DEVICE)
        assert len(rs.resources()) == 5
        assert len(rs.body_structure["includedStructure"]) == 104

    def test_empty_annotation_set_rejected(self):
        empty = make_annotation_set(codes=())
        with pytest.raises(EmptyAnnotationSet):
            build_resources(empty, make_series(), DEVICE)

    def test_series_mismatch(self):
        with pytest.raises(SeriesMismatch):
            build_resources(
                make_annotation_set(uid="other"), make_series(uid="series-001"), DEVICE
            )

    def test_cross_references_resolve_within_set(self):
        rs = build_resources(make_annotation_set(), make_series(), DEVICE)
        patient_ref = f"Patient/{rs.patient['id']}"
        assert rs.imaging_study["subject"]["reference"] == patient_ref
        assert rs.body_structure["patient"]["reference"] == patient_ref
        assert rs.provenance["target"][0]["reference"] == (
            f"BodyStructure/{rs.body_structure['id']}"
        )
        assert rs.provenance["agent"][0]["who"]["reference"] == (
            f"Device/{rs.device['id']}"
        )

    def test_provenance_records_creation_time(self):
        ann = make_annotation_set()
        rs = build_resources(ann, make_series(), DEVICE)
        assert rs.provenance["recorded"] == ann.created_at.isoformat()

    def test_profiles_declared(self):
        rs = build_resources(make_annotation_set(), make_series(), DEVICE)
        for resource in rs.resources():
            assert resource["meta"]["profile"], resource["resourceType"]

    def test_ids_are_deterministic_and_valid(self):
        first = build_resources(make_annotation_set(), make_series(), DEVICE)
        second = build_resources(make_annotation_set(), make_series(), DEVICE)
        for a, b in zip(first.resources(), second.resources()):
            assert a["id"] == b["id"]
            assert len(a["id"]) == 32
            assert all(ch in "0123456789abcdef" for ch in a["id"])

    def test_device_versions_cover_whole_stack(self):
        rs = build_resources(make_annotation_set(), make_series(), DEVICE)
        versions = {v["type"]["text"]: v["value"] for v in rs.device["version"]}
        assert versions["indexer"] == "1.0.0"
        assert versions["segmenter:mock-segmenter"] == "1.0.0"
        assert versions["mapping"] == "1.0.0"


class TestTransactionBundle:
    def test_single_series_has_five_entries(self):
        bundle = to_transaction_bundle(two_series_fixture()[:1])
        assert len(bundle["entry"]) == 5

    def test_two_series_one_patient_one_device_dedupes_to_eight(self):
        bundle = to_transaction_bundle(two_series_fixture())
        assert len(bundle["entry"]) == 8

    def test_two_series_two_patients_one_device_is_nine(self):
        sets = [
            build_resources(
                make_annotation_set(uid=f"series-{i}"),
                make_series(uid=f"series-{i}", patient=f"patient-{i}"),
                DEVICE,
            )
            for i in range(2)
        ]
        bundle = to_transaction_bundle(sets)
        assert len(bundle["entry"]) == 9

    def test_entry_order_patients_devices_then_triples(self):
        bundle = to_transaction_bundle(two_series_fixture())
        types = [e["resource"]["resourceType"] for e in bundle["entry"]]
        assert types == [
            "Patient",
            "Device",
            "ImagingStudy",
            "BodyStructure",
            "Provenance",
            "ImagingStudy",
            "BodyStructure",
            "Provenance",
        ]

    def test_conditional_creates_only_on_patient_and_device(self):
        bundle = to_transaction_bundle(two_series_fixture())
        for entry in bundle["entry"]:
            rtype = entry["resource"]["resourceType"]
            request = entry["request"]
            assert request["method"] == "POST"
            if rtype in ("Patient", "Device"):
                identifier = entry["resource"]["identifier"][0]
                assert request["ifNoneExist"] == (
                    f"identifier={identifier['system']}|{identifier['value']}"
                )
            else:
                assert "ifNoneExist" not in request

    def test_empty_input_rejected(self):
        with pytest.raises(EmptyAnnotationSet):
            to_transaction_bundle([])


class TestUniqueResourceCount:
    def test_production_scale_figure(self):
        assert unique_resource_count(230_000, 60_000, 600) == 750_600

    def test_single_series(self):
        assert unique_resource_count(1, 1, 1) == 5

    def test_zero(self):
        assert unique_resource_count(0, 0, 0) == 0

    def test_negative_rejected(self):
        with pytest.raises(InvalidCounts):
            unique_resource_count(-1, 0, 0)

    def test_more_patients_than_series_rejected(self):
        with pytest.raises(InvalidCounts):
            unique_resource_count(2, 3, 1)

    def test_matches_brute_force_dedup_on_synthetic_corpus(self, bundled_table):
        corpus = mock_corpus(60)
        sets = []
        for series, stats in corpus:
            ann = annotate(
                stats, bundled_table, indexer_version="1.0.0",
                created_at=make_annotation_set().created_at,
            )
            sets.append(build_resources(ann, series, DEVICE))
        distinct = {serialize_resource(r) for rs in sets for r in rs.resources()}
        patients = len({series.patient_pseudonym for series, _ in corpus})
        assert len(distinct) == unique_resource_count(len(corpus), patients, 1)


class TestSerialization:
    def test_round_trip(self):
        bundle = to_transaction_bundle(two_series_fixture())
        assert parse_bundle(serialize_bundle(bundle)) == bundle

    def test_byte_identical_serialization(self):
        bundle = to_transaction_bundle(two_series_fixture())
        assert serialize_bundle(bundle) == serialize_bundle(bundle)

    def test_identical_inputs_identical_bytes(self):
        first = serialize_bundle(to_transaction_bundle(two_series_fixture()))
        second = serialize_bundle(to_transaction_bundle(two_series_fixture()))
        assert first == second

    def test_golden_two_series_bundle(self):
        raw = serialize_bundle(to_transaction_bundle(two_series_fixture()))
        assert raw == GOLDEN.read_bytes()

    def test_golden_is_valid_json(self):
        payload = json.loads(GOLDEN.read_text())
        assert payload["resourceType"] == "Bundle"
        assert payload["type"] == "transaction"


def test_bundle_is_self_contained():
    bundle = to_transaction_bundle(two_series_fixture())
    present = {
        (e["resource"]["resourceType"], e["resource"]["id"]) for e in bundle["entry"]
    }

    def walk(node):
        if isinstance(node, dict):
            for key, value in node.items():
                if key == "reference" and isinstance(value, str):
                    rtype, _, rid = value.partition("/")
                    assert (rtype, rid) in present, f"dangling reference {value}"
                else:
                    walk(value)
        elif isinstance(node, list):
            for item in node:
                walk(item)

    walk(bundle)
