"""Embedded inverted index over annotation documents.

Postings map each structure code to the series carrying it, together with the
per-series measurements, so code presence and code-scoped range predicates
resolve without touching the document store. Query evaluation is pure set
algebra over those postings; results are ordered (acquisition date desc,
series uid asc) so paging is stable.

Writes are serialized through one lock and a search never observes a
half-applied document. Snapshots are single binary files with a checksummed
JSON payload.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .annotate import AnnotationSet
from .errors import CtIndexError
from .ingest import SeriesDescriptor
from . import query as q

SNAPSHOT_MAGIC = b"CTIDXSNAP"
SNAPSHOT_VERSION = 1
MAX_PAGE_LIMIT = 10_000


class InvalidDocument(CtIndexError):
    code = "invalid_document"


class CorruptSnapshot(CtIndexError):
    code = "corrupt_snapshot"


@dataclass(frozen=True)
class IndexedAnnotation:
    snomed_code: str
    radlex_id: str | None
    volume_mm3: float
    mean_intensity: float


@dataclass(frozen=True)
class IndexDocument:
    series_uid: str
    patient_pseudonym: str
    acquisition_date: date
    annotations: tuple[IndexedAnnotation, ...]
    indexer_version: str
    mapping_version: str

    def validate(self) -> None:
        if not self.series_uid:
            raise InvalidDocument("series_uid must be non-empty")
        if not self.annotations:
            raise InvalidDocument(
                f"document {self.series_uid} carries no annotations"
            )


def document_from_annotation_set(
    ann: AnnotationSet, series: SeriesDescriptor
) -> IndexDocument:
    """Project an annotation set into its index document."""
    return IndexDocument(
        series_uid=ann.series_uid,
        patient_pseudonym=series.patient_pseudonym,
        acquisition_date=series.acquisition_date,
        annotations=tuple(
            IndexedAnnotation(
                snomed_code=a.snomed_code,
                radlex_id=a.radlex_id,
                volume_mm3=a.volume_mm3,
                mean_intensity=a.mean_intensity,
            )
            for a in ann.annotations
        ),
        indexer_version=ann.indexer_version,
        mapping_version=ann.mapping_version,
    )


@dataclass(frozen=True)
class SearchResult:
    total: int
    hits: tuple[str, ...]


def search_rows(index: SearchIndex, hits: tuple[str, ...]) -> list[dict]:
    """Presentation rows for a hit page: uid, date, patient, structure count."""
    rows = []
    for uid in hits:
        doc = index.get(uid)
        if doc is None:
            continue
        rows.append(
            {
                "series_uid": uid,
                "acquisition_date": doc.acquisition_date.isoformat(),
                "patient_pseudonym": doc.patient_pseudonym,
                "annotation_count": len(doc.annotations),
            }
        )
    return rows


class SearchIndex:
    """In-process index; many readers, single-writer commit point."""

    def __init__(self):
        self._lock = threading.RLock()
        self._docs: dict[str, IndexDocument] = {}
        # code -> series_uid -> [(volume, intensity), ...]
        self._postings: dict[str, dict[str, list[tuple[float, float]]]] = {}
        self._patients: dict[str, set[str]] = {}
        self._by_date: list[tuple[date, str]] = []
        self._by_date_dirty = False

    def __len__(self) -> int:
        with self._lock:
            return len(self._docs)

    # -- writes -----------------------------------------------------------

    def index_document(self, doc: IndexDocument) -> None:
        """Insert or fully replace the document for doc.series_uid."""
        doc.validate()
        with self._lock:
            if doc.series_uid in self._docs:
                self._remove_postings(self._docs[doc.series_uid])
            self._docs[doc.series_uid] = doc
            for ann in doc.annotations:
                per_code = self._postings.setdefault(ann.snomed_code, {})
                per_code.setdefault(doc.series_uid, []).append(
                    (ann.volume_mm3, ann.mean_intensity)
                )
            self._patients.setdefault(doc.patient_pseudonym, set()).add(doc.series_uid)
            self._by_date_dirty = True

    def _remove_postings(self, doc: IndexDocument) -> None:
        for ann in doc.annotations:
            per_code = self._postings.get(ann.snomed_code)
            if per_code is not None:
                per_code.pop(doc.series_uid, None)
                if not per_code:
                    del self._postings[ann.snomed_code]
        uids = self._patients.get(doc.patient_pseudonym)
        if uids is not None:
            uids.discard(doc.series_uid)
            if not uids:
                del self._patients[doc.patient_pseudonym]

    # -- reads ------------------------------------------------------------

    def get(self, series_uid: str) -> IndexDocument | None:
        with self._lock:
            return self._docs.get(series_uid)

    def _date_order(self) -> list[tuple[date, str]]:
        if self._by_date_dirty:
            self._by_date = sorted(
                (doc.acquisition_date, uid) for uid, doc in self._docs.items()
            )
            self._by_date_dirty = False
        return self._by_date

    def _evaluate(self, node: q.Query) -> set[str]:
        if isinstance(node, q.MatchAll):
            return set(self._docs)
        if isinstance(node, q.HasCode):
            return set(self._postings.get(node.code, ()))
        if isinstance(node, q.PatientIs):
            return set(self._patients.get(node.pseudonym, ()))
        if isinstance(node, q.DateInRange):
            order = self._date_order()
            lo = 0
            hi = len(order)
            if node.min is not None:
                lo = bisect_left(order, (node.min, ""))
            if node.max is not None:
                hi = bisect_right(order, (node.max, "￿"))
            return {uid for _, uid in order[lo:hi]}
        if isinstance(node, (q.VolumeInRange, q.IntensityInRange)):
            select = 0 if isinstance(node, q.VolumeInRange) else 1
            hits = set()
            for uid, values in self._postings.get(node.code, {}).items():
                for pair in values:
                    value = pair[select]
                    if node.min is not None and value < node.min:
                        continue
                    if node.max is not None and value > node.max:
                        continue
                    hits.add(uid)
                    break
            return hits
        if isinstance(node, q.And):
            sets = [self._evaluate(c) for c in node.children]
            sets.sort(key=len)
            out = sets[0]
            for other in sets[1:]:
                out = out & other
            return out
        if isinstance(node, q.Or):
            out: set[str] = set()
            for child in node.children:
                out |= self._evaluate(child)
            return out
        if isinstance(node, q.Not):
            return set(self._docs) - self._evaluate(node.child)
        raise q.MalformedQuery(f"unknown query node {type(node).__name__}")

    def search(self, node: q.Query, offset: int = 0, limit: int = 100) -> SearchResult:
        """Evaluate a query; exact total plus one deterministic page of hits."""
        if offset < 0 or limit < 0:
            raise q.MalformedQuery("offset and limit must be non-negative")
        if limit > MAX_PAGE_LIMIT:
            raise q.MalformedQuery(f"limit exceeds {MAX_PAGE_LIMIT}")
        q.validate_query(node)
        with self._lock:
            matched = self._evaluate(node)
            ordered = sorted(
                matched,
                key=lambda uid: (
                    -self._docs[uid].acquisition_date.toordinal(),
                    uid,
                ),
            )
        return SearchResult(
            total=len(ordered), hits=tuple(ordered[offset : offset + limit])
        )

    def search_text(self, text: str, offset: int = 0, limit: int = 100) -> SearchResult:
        return self.search(q.parse_query(text), offset=offset, limit=limit)

    # -- persistence ------------------------------------------------------

    def _payload(self) -> bytes:
        docs = [
            {
                "series_uid": doc.series_uid,
                "patient_pseudonym": doc.patient_pseudonym,
                "acquisition_date": doc.acquisition_date.isoformat(),
                "annotations": [
                    {
                        "snomed_code": a.snomed_code,
                        "radlex_id": a.radlex_id,
                        "volume_mm3": a.volume_mm3,
                        "mean_intensity": a.mean_intensity,
                    }
                    for a in doc.annotations
                ],
                "indexer_version": doc.indexer_version,
                "mapping_version": doc.mapping_version,
            }
            for _, doc in sorted(self._docs.items())
        ]
        return json.dumps({"documents": docs}, sort_keys=True).encode("utf-8")

    def persist(self, path: str | Path) -> None:
        """Write the index to a single checksummed snapshot file."""
        with self._lock:
            payload = self._payload()
        checksum = hashlib.sha256(payload).digest()
        header = SNAPSHOT_MAGIC + struct.pack("<I", SNAPSHOT_VERSION)
        blob = header + checksum + struct.pack("<Q", len(payload)) + payload
        Path(path).write_bytes(blob)

    @classmethod
    def restore(cls, path: str | Path) -> SearchIndex:
        """Load a snapshot; raises CorruptSnapshot on any integrity failure."""
        blob = Path(path).read_bytes()
        header_len = len(SNAPSHOT_MAGIC) + 4 + 32 + 8
        if len(blob) < header_len or not blob.startswith(SNAPSHOT_MAGIC):
            raise CorruptSnapshot(f"{path}: not an index snapshot")
        offset = len(SNAPSHOT_MAGIC)
        (version,) = struct.unpack_from("<I", blob, offset)
        if version != SNAPSHOT_VERSION:
            raise CorruptSnapshot(f"{path}: unsupported snapshot version {version}")
        offset += 4
        checksum = blob[offset : offset + 32]
        offset += 32
        (length,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        payload = blob[offset:]
        if len(payload) != length or hashlib.sha256(payload).digest() != checksum:
            raise CorruptSnapshot(f"{path}: checksum mismatch or truncated payload")
        try:
            data = json.loads(payload.decode("utf-8"))
            index = cls()
            for raw in data["documents"]:
                index.index_document(
                    IndexDocument(
                        series_uid=raw["series_uid"],
                        patient_pseudonym=raw["patient_pseudonym"],
                        acquisition_date=date.fromisoformat(raw["acquisition_date"]),
                        annotations=tuple(
                            IndexedAnnotation(
                                snomed_code=a["snomed_code"],
                                radlex_id=a.get("radlex_id"),
                                volume_mm3=float(a["volume_mm3"]),
                                mean_intensity=float(a["mean_intensity"]),
                            )
                            for a in raw["annotations"]
                        ),
                        indexer_version=raw["indexer_version"],
                        mapping_version=raw["mapping_version"],
                    )
                )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise CorruptSnapshot(f"{path}: malformed payload: {exc}") from exc
        return index
