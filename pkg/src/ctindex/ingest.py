"""Series manifests, segmentation statistics files, and the mock segmentation backend.

The statistics file is the contract between the segmentation step and the rest
of the pipeline: a UTF-8 JSON object with an identity header and one entry per
segmented structure (volume in mm^3 plus mean grayscale intensity). The mock
backend produces statistically calibrated statistics files without running any
network, so corpora of arbitrary size can be generated deterministically.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .catalogs import LABEL_RE, UnknownLabelSet, load_catalog
from .errors import CtIndexError

MODALITY_RE = re.compile(r"^[A-Z]{2,8}$")
SOURCES = ("daily", "legacy")

MOCK_SEGMENTER_NAME = "mock-segmenter"
MOCK_SEGMENTER_VERSION = "1.0.0"


class MalformedFile(CtIndexError):
    code = "malformed_file"


class SchemaViolation(CtIndexError):
    code = "schema_violation"


class UnknownLabel(CtIndexError):
    code = "unknown_label"


class SeriesMismatch(CtIndexError):
    code = "series_mismatch"


class MalformedRecord(CtIndexError):
    code = "malformed_record"

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateSeriesUid(CtIndexError):
    code = "duplicate_series_uid"


@dataclass(frozen=True)
class SeriesDescriptor:
    """Identity metadata for one imaging series."""

    series_uid: str
    study_uid: str
    patient_pseudonym: str
    acquisition_date: date
    modality: str
    source: str
    body_region_hint: str | None = None

    def validate(self, now: date | None = None) -> None:
        if not self.series_uid:
            raise SchemaViolation("series_uid must be non-empty")
        if not self.study_uid or not self.patient_pseudonym:
            raise SchemaViolation("study_uid and patient_pseudonym must be non-empty")
        if not MODALITY_RE.match(self.modality):
            raise SchemaViolation(f"invalid modality token {self.modality!r}")
        if self.source not in SOURCES:
            raise SchemaViolation(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.acquisition_date > (now or date.today()):
            raise SchemaViolation(
                f"acquisition_date {self.acquisition_date} lies in the future"
            )


@dataclass(frozen=True)
class StructureStat:
    label: str
    volume_mm3: float
    mean_intensity: float


@dataclass(frozen=True)
class SegmentationStatistics:
    """Validated content of one statistics file."""

    series_uid: str
    segmenter_name: str
    segmenter_version: str
    label_set_id: str
    structures: tuple[StructureStat, ...]


def _reject_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise SchemaViolation(f"duplicate key {key!r}")
        seen.add(key)
    return dict(pairs)


def _require_str(obj: dict, key: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise SchemaViolation(f"field {key!r} missing or not a non-empty string")
    return value


def parse_statistics(
    raw_bytes: bytes, expected_series: SeriesDescriptor
) -> SegmentationStatistics:
    """Parse and validate a statistics file for the given series.

    Structures are kept in file order; zero-volume entries are retained (the
    annotation step decides what to drop). Raises ``MalformedFile`` when the
    bytes are not a JSON document, ``SchemaViolation`` for structural problems,
    ``UnknownLabel`` for labels outside the declared catalog, and
    ``SeriesMismatch`` when the header names a different series.
    """
    try:
        text = raw_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFile(f"not UTF-8 text: {exc}") from exc
    try:
        payload = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"not a JSON document: {exc}") from exc
    if not isinstance(payload, dict):
        raise SchemaViolation("top-level value must be an object")

    series_uid = _require_str(payload, "series_uid")
    segmenter_name = _require_str(payload, "segmenter_name")
    segmenter_version = _require_str(payload, "segmenter_version")
    label_set_id = _require_str(payload, "label_set_id")
    try:
        catalog = load_catalog(label_set_id)
    except UnknownLabelSet as exc:
        raise SchemaViolation(str(exc)) from exc

    raw_structures = payload.get("structures")
    if not isinstance(raw_structures, dict):
        raise SchemaViolation("field 'structures' missing or not an object")

    structures: list[StructureStat] = []
    for label, entry in raw_structures.items():
        if not LABEL_RE.match(label):
            raise SchemaViolation(f"label {label!r} is not a valid label identifier")
        if label not in catalog:
            raise UnknownLabel(f"label {label!r} not in catalog {label_set_id}")
        if not isinstance(entry, dict):
            raise SchemaViolation(f"structure {label!r} must be an object")
        try:
            volume = float(entry["volume_mm3"])
            intensity = float(entry["mean_intensity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"structure {label!r}: {exc}") from exc
        if isinstance(entry["volume_mm3"], bool) or isinstance(entry["mean_intensity"], bool):
            raise SchemaViolation(f"structure {label!r}: boolean is not a number")
        if math.isnan(volume) or math.isinf(volume) or volume < 0:
            raise SchemaViolation(f"structure {label!r}: volume_mm3 must be finite and >= 0")
        if math.isnan(intensity) or math.isinf(intensity):
            raise SchemaViolation(f"structure {label!r}: mean_intensity must be finite")
        structures.append(StructureStat(label, volume, intensity))

    if series_uid != expected_series.series_uid:
        raise SeriesMismatch(
            f"file is for series {series_uid!r}, expected {expected_series.series_uid!r}"
        )
    return SegmentationStatistics(
        series_uid=series_uid,
        segmenter_name=segmenter_name,
        segmenter_version=segmenter_version,
        label_set_id=label_set_id,
        structures=tuple(structures),
    )


def serialize_statistics(stats: SegmentationStatistics) -> bytes:
    """Serialize statistics back to the on-disk form (round-trips with parse)."""
    payload = {
        "series_uid": stats.series_uid,
        "segmenter_name": stats.segmenter_name,
        "segmenter_version": stats.segmenter_version,
        "label_set_id": stats.label_set_id,
        "structures": {
            s.label: {"volume_mm3": s.volume_mm3, "mean_intensity": s.mean_intensity}
            for s in stats.structures
        },
    }
    return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Manifest files
# ---------------------------------------------------------------------------

MANIFEST_FIELDS = 6


def _parse_manifest_line(line: str, line_no: int, now: date) -> SeriesDescriptor:
    fields = line.split("|")
    if len(fields) != MANIFEST_FIELDS:
        raise MalformedRecord(
            f"expected {MANIFEST_FIELDS} pipe-separated fields, got {len(fields)}",
            line_no,
        )
    series_uid, study_uid, pseudonym, date_text, modality, source = (
        f.strip() for f in fields
    )
    try:
        acquisition = date.fromisoformat(date_text)
    except ValueError as exc:
        raise MalformedRecord(f"bad acquisition_date {date_text!r}", line_no) from exc
    descriptor = SeriesDescriptor(
        series_uid=series_uid,
        study_uid=study_uid,
        patient_pseudonym=pseudonym,
        acquisition_date=acquisition,
        modality=modality,
        source=source,
    )
    try:
        descriptor.validate(now=now)
    except SchemaViolation as exc:
        raise MalformedRecord(exc.message, line_no) from exc
    return descriptor


def load_manifest(path: str | Path, now: date | None = None) -> list[SeriesDescriptor]:
    """Read a pipe-delimited series manifest, preserving file order.

    Blank lines and ``#`` comments are skipped. Raises ``MalformedRecord``
    (with the line number) or ``DuplicateSeriesUid``.
    """
    now = now or date.today()
    descriptors: list[SeriesDescriptor] = []
    seen: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        descriptor = _parse_manifest_line(stripped, line_no, now)
        if descriptor.series_uid in seen:
            raise DuplicateSeriesUid(
                f"line {line_no}: series {descriptor.series_uid!r} appears twice"
            )
        seen.add(descriptor.series_uid)
        descriptors.append(descriptor)
    return descriptors


# ---------------------------------------------------------------------------
# Mock segmentation backend
# ---------------------------------------------------------------------------

#: Named axial windows (head-to-thigh, normalized) for common protocols.
REGION_WINDOWS = {
    "whole_body": (0.0, 1.0),
    "head_neck": (0.0, 0.18),
    "chest": (0.12, 0.42),
    "abdomen": (0.35, 0.62),
    "abdomen_pelvis": (0.35, 0.80),
    "pelvis": (0.50, 0.80),
}


@dataclass(frozen=True)
class MockCalibration:
    """Tuning knobs for the mock backend.

    ``mean_structures`` is the expected number of structures per series over a
    large corpus; ``region`` restricts sampled windows to an axial band.
    """

    label_set_id: str
    mean_structures: float
    region: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def for_region(cls, label_set_id: str, mean_structures: float, region_name: str) -> MockCalibration:
        return cls(label_set_id, mean_structures, REGION_WINDOWS[region_name])


_BONE_PREFIXES = (
    "rib_", "vertebrae_", "femur_", "humerus_", "scapula_", "clavicula_",
    "hip_", "sacrum", "skull", "sternum", "patella_", "tibia_", "costal_",
)

# (volume base mm^3, intensity base HU); whatever the prefix rules miss falls
# back to hash-derived soft tissue.
_TISSUE_BASES = {
    "liver": (1_500_000.0, 60.0),
    "spleen": (200_000.0, 52.0),
    "stomach": (350_000.0, 30.0),
    "brain": (1_300_000.0, 35.0),
    "colon": (700_000.0, 10.0),
    "small_bowel": (900_000.0, 15.0),
    "urinary_bladder": (250_000.0, 12.0),
    "heart": (650_000.0, 45.0),
    "aorta": (180_000.0, 120.0),
    "pancreas": (90_000.0, 42.0),
}


def _tissue_base(label: str) -> tuple[float, float]:
    if label in _TISSUE_BASES:
        return _TISSUE_BASES[label]
    if any(label.startswith(p) for p in _BONE_PREFIXES):
        volume = 25_000.0 if label.startswith("vertebrae_") else 12_000.0
        return volume, 320.0
    if label.startswith("lung_"):
        return 600_000.0, -720.0
    if label.startswith(("kidney_", "adrenal_")):
        return (160_000.0, 32.0) if label.startswith("kidney_") else (6_000.0, 28.0)
    if label.startswith(("gluteus_", "autochthon_", "iliopsoas_")):
        return 300_000.0, 48.0
    if "vein" in label or "artery" in label or "vena" in label:
        return 40_000.0, 110.0
    # Hash-derived soft-tissue default keeps unknown labels deterministic.
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    scale = 20_000.0 + (int.from_bytes(digest[:4], "little") % 380_000)
    return float(scale), 45.0


def _rng_for(seed: int, series_uid: str) -> np.random.Generator:
    # Counter-based generator keyed on (seed, series hash): reproducible and
    # independent across series regardless of call order.
    digest = hashlib.sha256(series_uid.encode("utf-8")).digest()
    uid_word = struct.unpack("<Q", digest[:8])[0]
    key = np.array([seed % 2**64, uid_word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def mock_segment(
    series: SeriesDescriptor, seed: int, calibration: MockCalibration
) -> SegmentationStatistics:
    """Produce deterministic synthetic statistics for one series.

    Emits a contiguous anatomical band of structures (ordered by axial
    station) whose count is calibrated so the corpus mean matches
    ``calibration.mean_structures``. All volumes are strictly positive.
    """
    catalog = load_catalog(calibration.label_set_id)
    lo, hi = calibration.region
    eligible = [e for e in catalog.by_station() if lo <= e.station <= hi]
    if not eligible:
        raise SchemaViolation(f"region window {calibration.region} matches no labels")

    rng = _rng_for(seed, series.series_uid)
    n = len(eligible)
    mean = calibration.mean_structures
    if mean >= n:
        count = n
    else:
        draw = rng.normal(loc=mean, scale=max(mean / 6.0, 1.0))
        count = int(min(max(round(draw), 1), n))
    start = int(rng.integers(0, n - count + 1))
    window = eligible[start : start + count]

    structures = []
    for entry in window:
        base_volume, base_intensity = _tissue_base(entry.name)
        volume = base_volume * float(rng.lognormal(mean=0.0, sigma=0.25))
        intensity = base_intensity + float(rng.normal(0.0, 8.0))
        structures.append(
            StructureStat(
                label=entry.name,
                volume_mm3=round(max(volume, 1.0), 1),
                mean_intensity=round(intensity, 2),
            )
        )
    structures.sort(key=lambda s: s.label)
    return SegmentationStatistics(
        series_uid=series.series_uid,
        segmenter_name=MOCK_SEGMENTER_NAME,
        segmenter_version=MOCK_SEGMENTER_VERSION,
        label_set_id=calibration.label_set_id,
        structures=tuple(structures),
    )
