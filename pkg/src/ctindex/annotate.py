"""Combine segmentation statistics with the mapping table into coded annotations."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import CtIndexError
from .ingest import SegmentationStatistics
from .termmap import NOT_MAPPED, MappingTable, lookup


class LabelSetMismatch(CtIndexError):
    code = "label_set_mismatch"


class UnmappedLabel(CtIndexError):
    code = "unmapped_label"


@dataclass(frozen=True)
class AnnotationPolicy:
    """How to treat marginal structures and curation gaps.

    ``min_volume_mm3`` is the noise floor: structures must exceed it to be
    annotated (0 means any strictly positive volume passes). Under ``strict``
    an above-threshold structure without a mapping aborts the series instead
    of being recorded as unmapped.
    """

    min_volume_mm3: float = 0.0
    strict: bool = False


@dataclass(frozen=True)
class Annotation:
    label: str
    snomed_code: str
    snomed_display: str
    radlex_id: str | None
    volume_mm3: float
    mean_intensity: float


@dataclass(frozen=True)
class AnnotationSet:
    """The semantically enhanced form of one series."""

    series_uid: str
    annotations: tuple[Annotation, ...]
    unmapped_labels: tuple[str, ...]
    indexer_version: str
    mapping_version: str
    created_at: datetime


def annotate(
    stats: SegmentationStatistics,
    table: MappingTable,
    policy: AnnotationPolicy | None = None,
    *,
    indexer_version: str,
    created_at: datetime | None = None,
) -> AnnotationSet:
    """Produce the annotation set for one series.

    Every structure above the volume threshold with a usable mapping yields
    exactly one annotation; unmapped above-threshold structures are listed in
    ``unmapped_labels`` (or abort under the strict policy); zero and
    below-threshold volumes are dropped silently. Annotations are emitted in
    canonical label order.
    """
    policy = policy or AnnotationPolicy()
    if table.target_label_set_id != stats.label_set_id:
        raise LabelSetMismatch(
            f"statistics use label set {stats.label_set_id}, "
            f"table targets {table.target_label_set_id}"
        )
    annotations: list[Annotation] = []
    unmapped: list[str] = []
    for structure in stats.structures:
        if structure.volume_mm3 <= policy.min_volume_mm3:
            continue
        entry = lookup(table, structure.label)
        if entry is NOT_MAPPED:
            if policy.strict:
                raise UnmappedLabel(
                    f"series {stats.series_uid}: no mapping for {structure.label!r}"
                )
            unmapped.append(structure.label)
            continue
        annotations.append(
            Annotation(
                label=structure.label,
                snomed_code=entry.snomed_code,
                snomed_display=entry.snomed_display,
                radlex_id=entry.radlex_id,
                volume_mm3=structure.volume_mm3,
                mean_intensity=structure.mean_intensity,
            )
        )
    annotations.sort(key=lambda a: a.label)
    unmapped.sort()
    return AnnotationSet(
        series_uid=stats.series_uid,
        annotations=tuple(annotations),
        unmapped_labels=tuple(unmapped),
        indexer_version=indexer_version,
        mapping_version=table.map_version,
        created_at=created_at or datetime.now(timezone.utc),
    )


@dataclass(frozen=True)
class CorpusAnnotationStats:
    total: int
    mean_per_series: float


def annotation_count(corpus: list[AnnotationSet]) -> CorpusAnnotationStats:
    """Total and per-series mean annotation counts over a corpus."""
    total = sum(len(s.annotations) for s in corpus)
    mean = total / len(corpus) if corpus else 0.0
    return CorpusAnnotationStats(total=total, mean_per_series=mean)


# ---------------------------------------------------------------------------
# Canonical serialization (search-index document source and audit export)
# ---------------------------------------------------------------------------


def annotation_set_to_dict(ann: AnnotationSet) -> dict:
    return {
        "series_uid": ann.series_uid,
        "annotations": [
            {
                "label": a.label,
                "snomed_code": a.snomed_code,
                "snomed_display": a.snomed_display,
                "radlex_id": a.radlex_id,
                "volume_mm3": a.volume_mm3,
                "mean_intensity": a.mean_intensity,
            }
            for a in ann.annotations
        ],
        "unmapped_labels": list(ann.unmapped_labels),
        "indexer_version": ann.indexer_version,
        "mapping_version": ann.mapping_version,
        "created_at": ann.created_at.isoformat(),
    }


def annotation_set_from_dict(payload: dict) -> AnnotationSet:
    return AnnotationSet(
        series_uid=payload["series_uid"],
        annotations=tuple(
            Annotation(
                label=a["label"],
                snomed_code=a["snomed_code"],
                snomed_display=a["snomed_display"],
                radlex_id=a.get("radlex_id"),
                volume_mm3=float(a["volume_mm3"]),
                mean_intensity=float(a["mean_intensity"]),
            )
            for a in payload["annotations"]
        ),
        unmapped_labels=tuple(payload["unmapped_labels"]),
        indexer_version=payload["indexer_version"],
        mapping_version=payload["mapping_version"],
        created_at=datetime.fromisoformat(payload["created_at"]),
    )


def serialize_annotation_set(ann: AnnotationSet) -> bytes:
    """Canonical UTF-8 serialization: sorted keys, stable float formatting."""
    return (
        json.dumps(annotation_set_to_dict(ann), sort_keys=True, ensure_ascii=False)
        + "\n"
    ).encode("utf-8")


def parse_annotation_set(raw: bytes) -> AnnotationSet:
    return annotation_set_from_dict(json.loads(raw.decode("utf-8")))
