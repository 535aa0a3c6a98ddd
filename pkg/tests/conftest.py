from __future__ import annotations

import json
from datetime import date, datetime, timezone

import pytest

from ctindex.annotate import Annotation, AnnotationSet
from ctindex.catalogs import load_catalog
from ctindex.ingest import MockCalibration, SeriesDescriptor, mock_segment
from ctindex.termmap import load_bundled_mapping


@pytest.fixture(scope="session")
def catalog_v1():
    return load_catalog("v1_104")


@pytest.fixture(scope="session")
def bundled_table():
    return load_bundled_mapping()


def make_series(
    uid: str = "series-001",
    study: str = "study-001",
    patient: str = "patient-01",
    acquired: date = date(2023, 6, 15),
    modality: str = "CT",
    source: str = "daily",
) -> SeriesDescriptor:
    return SeriesDescriptor(
        series_uid=uid,
        study_uid=study,
        patient_pseudonym=patient,
        acquisition_date=acquired,
        modality=modality,
        source=source,
    )


def make_annotation_set(
    uid: str = "series-001",
    codes: tuple[tuple[str, str, float, float], ...] = (
        ("liver", "10200004", 1_420_000.0, 62.0),
        ("spleen", "78961009", 210_000.0, 55.5),
    ),
    created_at: datetime = datetime(2024, 3, 1, 8, 0, tzinfo=timezone.utc),
) -> AnnotationSet:
    annotations = tuple(
        Annotation(
            label=label,
            snomed_code=code,
            snomed_display=f"{label} structure",
            radlex_id=None,
            volume_mm3=volume,
            mean_intensity=intensity,
        )
        for label, code, volume, intensity in codes
    )
    return AnnotationSet(
        series_uid=uid,
        annotations=annotations,
        unmapped_labels=(),
        indexer_version="1.0.0",
        mapping_version="1.0.0",
        created_at=created_at,
    )


def stats_file_bytes(
    series_uid: str = "series-001",
    structures: dict | None = None,
    label_set_id: str = "v1_104",
) -> bytes:
    if structures is None:
        structures = {
            "liver": {"volume_mm3": 1_420_000.0, "mean_intensity": 62.0},
            "spleen": {"volume_mm3": 210_000.0, "mean_intensity": 55.5},
        }
    payload = {
        "series_uid": series_uid,
        "segmenter_name": "mock-segmenter",
        "segmenter_version": "1.0.0",
        "label_set_id": label_set_id,
        "structures": structures,
    }
    return json.dumps(payload).encode("utf-8")


def mock_corpus(n: int, seed: int = 11, mean: float = 37.0):
    """n (descriptor, statistics) pairs from the mock backend."""
    calibration = MockCalibration(label_set_id="v1_104", mean_structures=mean)
    out = []
    for i in range(n):
        series = make_series(
            uid=f"series-{i:05d}",
            study=f"study-{i // 3:05d}",
            patient=f"patient-{i // 5:05d}",
            acquired=date(2010 + (i % 14), 1 + (i % 12), 1 + (i % 28)),
        )
        out.append((series, mock_segment(series, seed, calibration)))
    return out
