"""Per-task processing pipeline and the on-disk layout of its outputs.

One task flows through: statistics acquisition (mock backend or a directory
of statistics files), annotation against the mapping table, search-index
insertion, and FHIR resource construction. The pipeline is deliberately
clock-injected: under a virtual clock every timestamp it stamps is simulated
time, which makes whole runs reproducible byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable

from .annotate import (
    AnnotationPolicy,
    AnnotationSet,
    annotate,
    annotation_set_from_dict,
    annotation_set_to_dict,
)
from .errors import CtIndexError
from .fhir import (
    DeviceIdentity,
    ExportProfile,
    DEFAULT_PROFILE,
    ResourceSet,
    build_resources,
    serialize_bundle,
    to_transaction_bundle,
)
from .ingest import (
    MOCK_SEGMENTER_NAME,
    MOCK_SEGMENTER_VERSION,
    MockCalibration,
    SegmentationStatistics,
    SeriesDescriptor,
    mock_segment,
    parse_statistics,
)
from .scheduler import Failure, IndexTask, Outcome, Success
from .search import SearchIndex, document_from_annotation_set
from .termmap import MappingTable

INDEXER_NAME = "ctindex"
INDEXER_VERSION = "1.0.0"

STATS_SUFFIX = ".segstats.json"
BUNDLE_SUFFIX = ".fhir-bundle.json"


@dataclass(frozen=True)
class PipelineConfig:
    label_set_id: str = "v1_104"
    mock_seed: int = 7
    mock_mean_structures: float = 37.0
    mock_region: tuple[float, float] = (0.0, 1.0)
    policy: AnnotationPolicy = field(default_factory=AnnotationPolicy)
    # Declared service time per task; drives the virtual clock.
    service_time: timedelta = timedelta(minutes=2.4)
    # When set, statistics are read from <dir>/<series_uid>.segstats.json
    # instead of being mocked.
    statistics_dir: Path | None = None


@dataclass(frozen=True)
class SeriesRecord:
    """Everything the stores keep per finished series."""

    series: SeriesDescriptor
    annotation_set: AnnotationSet


class IndexingPipeline:
    """Task-processing function plus the in-memory result stores."""

    def __init__(
        self,
        mapping: MappingTable,
        index: SearchIndex,
        config: PipelineConfig | None = None,
        clock: Callable[[], datetime] | None = None,
        profile: ExportProfile = DEFAULT_PROFILE,
    ):
        self.mapping = mapping
        self.index = index
        self.config = config or PipelineConfig()
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.profile = profile
        self.records: dict[str, SeriesRecord] = {}

    def device_identity(self) -> DeviceIdentity:
        return DeviceIdentity(
            indexer_name=INDEXER_NAME,
            indexer_version=INDEXER_VERSION,
            segmenter_name=MOCK_SEGMENTER_NAME,
            segmenter_version=MOCK_SEGMENTER_VERSION,
            mapping_version=self.mapping.map_version,
        )

    def _statistics_for(self, series: SeriesDescriptor) -> SegmentationStatistics:
        if self.config.statistics_dir is not None:
            path = self.config.statistics_dir / f"{series.series_uid}{STATS_SUFFIX}"
            return parse_statistics(path.read_bytes(), series)
        calibration = MockCalibration(
            label_set_id=self.config.label_set_id,
            mean_structures=self.config.mock_mean_structures,
            region=self.config.mock_region,
        )
        return mock_segment(series, self.config.mock_seed, calibration)

    def process(self, task: IndexTask) -> Outcome:
        """Run one task end to end; exceptions become task failures."""
        duration = self.config.service_time
        try:
            stats = self._statistics_for(task.series)
            ann = annotate(
                stats,
                self.mapping,
                self.config.policy,
                indexer_version=INDEXER_VERSION,
                created_at=self.clock(),
            )
            if not ann.annotations:
                return Failure(
                    reason="no annotatable structures in series", duration=duration
                )
            self.index.index_document(
                document_from_annotation_set(ann, task.series)
            )
            self.records[ann.series_uid] = SeriesRecord(
                series=task.series, annotation_set=ann
            )
            return Success(duration=duration)
        except CtIndexError as exc:
            return Failure(reason=f"{exc.code}: {exc.message}", duration=duration)
        except OSError as exc:
            return Failure(reason=f"io_error: {exc}", duration=duration)

    def resource_set_for(self, series_uid: str) -> ResourceSet | None:
        record = self.records.get(series_uid)
        if record is None:
            return None
        return build_resources(
            record.annotation_set,
            record.series,
            self.device_identity(),
            self.profile,
        )


# ---------------------------------------------------------------------------
# On-disk stores (data directory layout)
# ---------------------------------------------------------------------------

ANNOTATIONS_DIR = "annotations"
INDEX_SNAPSHOT = "index.snapshot"
TASKS_FILE = "tasks.json"


def record_to_dict(record: SeriesRecord) -> dict:
    series = record.series
    return {
        "series": {
            "series_uid": series.series_uid,
            "study_uid": series.study_uid,
            "patient_pseudonym": series.patient_pseudonym,
            "acquisition_date": series.acquisition_date.isoformat(),
            "modality": series.modality,
            "source": series.source,
            "body_region_hint": series.body_region_hint,
        },
        "annotation_set": annotation_set_to_dict(record.annotation_set),
    }


def record_from_dict(payload: dict) -> SeriesRecord:
    from datetime import date

    raw = payload["series"]
    series = SeriesDescriptor(
        series_uid=raw["series_uid"],
        study_uid=raw["study_uid"],
        patient_pseudonym=raw["patient_pseudonym"],
        acquisition_date=date.fromisoformat(raw["acquisition_date"]),
        modality=raw["modality"],
        source=raw["source"],
        body_region_hint=raw.get("body_region_hint"),
    )
    return SeriesRecord(
        series=series,
        annotation_set=annotation_set_from_dict(payload["annotation_set"]),
    )


def save_records(records: dict[str, SeriesRecord], data_dir: Path) -> None:
    out = data_dir / ANNOTATIONS_DIR
    out.mkdir(parents=True, exist_ok=True)
    for uid, record in records.items():
        path = out / f"{uid}.json"
        path.write_text(
            json.dumps(record_to_dict(record), sort_keys=True, ensure_ascii=False)
            + "\n",
            encoding="utf-8",
        )


def load_records(data_dir: Path) -> dict[str, SeriesRecord]:
    records: dict[str, SeriesRecord] = {}
    directory = data_dir / ANNOTATIONS_DIR
    if not directory.is_dir():
        return records
    for path in sorted(directory.glob("*.json")):
        record = record_from_dict(json.loads(path.read_text(encoding="utf-8")))
        records[record.series.series_uid] = record
    return records


def export_annotations(records: dict[str, SeriesRecord]) -> bytes:
    """Audit export: canonical annotation-set lines, uid-sorted."""
    from .annotate import serialize_annotation_set

    return b"".join(
        serialize_annotation_set(records[uid].annotation_set) for uid in sorted(records)
    )


def export_resources_ndjson(
    records: dict[str, SeriesRecord],
    device: DeviceIdentity,
    out_path: Path,
    profile: ExportProfile = DEFAULT_PROFILE,
) -> int:
    """Bulk-load form: deduplicated resources, one per line, sorted.

    Returns the number of distinct resources written (3S + P + D).
    """
    from .fhir import serialize_resource

    distinct: set[bytes] = set()
    for uid in sorted(records):
        record = records[uid]
        resource_set = build_resources(
            record.annotation_set, record.series, device, profile
        )
        for resource in resource_set.resources():
            distinct.add(serialize_resource(resource))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(b"".join(sorted(distinct)))
    return len(distinct)


def export_bundles(
    records: dict[str, SeriesRecord],
    device: DeviceIdentity,
    out_dir: Path,
    bundle_size: int = 100,
    profile: ExportProfile = DEFAULT_PROFILE,
) -> list[Path]:
    """Write transaction bundles covering all records, bundle_size series each.

    Series are processed in uid order so the export is deterministic no
    matter in which order the pipeline finished them.
    """
    if bundle_size < 1:
        raise CtIndexError("bundle_size must be >= 1")
    out_dir.mkdir(parents=True, exist_ok=True)
    uids = sorted(records)
    paths: list[Path] = []
    for chunk_no, start in enumerate(range(0, len(uids), bundle_size)):
        chunk = uids[start : start + bundle_size]
        sets = [
            build_resources(
                records[uid].annotation_set, records[uid].series, device, profile
            )
            for uid in chunk
        ]
        bundle = to_transaction_bundle(sets, profile)
        path = out_dir / f"bundle-{chunk_no:05d}{BUNDLE_SUFFIX}"
        path.write_bytes(serialize_bundle(bundle))
        paths.append(path)
    return paths
