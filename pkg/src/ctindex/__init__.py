"""Semantic indexing for CT imaging series.

Turns per-series anatomical segmentation statistics into SNOMED CT / RadLex
annotations, standardized FHIR R5 transaction bundles, and a queryable
anatomy index, scheduled through a two-lane priority worker pool (daily
arrivals first, legacy backfill in chronological order).
"""

from .annotate import (
    Annotation,
    AnnotationPolicy,
    AnnotationSet,
    annotate,
    annotation_count,
)
from .catalogs import LabelCatalog, load_catalog, load_catalog_file
from .errors import CtIndexError
from .fhir import (
    DeviceIdentity,
    ExportProfile,
    ResourceSet,
    build_resources,
    serialize_bundle,
    to_transaction_bundle,
    unique_resource_count,
)
from .ingest import (
    MockCalibration,
    SegmentationStatistics,
    SeriesDescriptor,
    StructureStat,
    load_manifest,
    mock_segment,
    parse_statistics,
    serialize_statistics,
)
from .pipeline import IndexingPipeline, PipelineConfig
from .query import parse_query, to_text
from .scheduler import (
    Failure,
    IndexTask,
    PoolConfig,
    Success,
    TaskQueue,
    ThroughputReport,
    VirtualClock,
    run_pool,
)
from .search import IndexDocument, SearchIndex, document_from_annotation_set
from .termmap import (
    CoverageReport,
    MappingEntry,
    MappingTable,
    NOT_MAPPED,
    coverage_report,
    load_bundled_mapping,
    load_mapping,
    lookup,
)

__version__ = "1.0.0"

__all__ = [
    "Annotation",
    "AnnotationPolicy",
    "AnnotationSet",
    "CoverageReport",
    "CtIndexError",
    "DeviceIdentity",
    "ExportProfile",
    "Failure",
    "IndexDocument",
    "IndexTask",
    "IndexingPipeline",
    "LabelCatalog",
    "MappingEntry",
    "MappingTable",
    "MockCalibration",
    "NOT_MAPPED",
    "PipelineConfig",
    "PoolConfig",
    "ResourceSet",
    "SearchIndex",
    "SegmentationStatistics",
    "SeriesDescriptor",
    "StructureStat",
    "Success",
    "TaskQueue",
    "ThroughputReport",
    "VirtualClock",
    "annotate",
    "annotation_count",
    "build_resources",
    "coverage_report",
    "document_from_annotation_set",
    "load_bundled_mapping",
    "load_catalog",
    "load_catalog_file",
    "load_manifest",
    "load_mapping",
    "lookup",
    "mock_segment",
    "parse_query",
    "parse_statistics",
    "run_pool",
    "serialize_bundle",
    "serialize_statistics",
    "to_text",
    "to_transaction_bundle",
    "unique_resource_count",
]
