"""From segmenter labels to coded annotations.

The bundled mapping table assigns each of the 104 v1 labels a SNOMED CT
concept (and, where curated, a RadLex id) with a 1-5 degree of equivalence.
Annotation joins a statistics file with that table.

Run: python demos/02_mapping_and_annotation.py
"""

from datetime import date

from ctindex import (
    AnnotationPolicy,
    MockCalibration,
    SeriesDescriptor,
    annotate,
    coverage_report,
    load_bundled_mapping,
    load_catalog,
    lookup,
    mock_segment,
)

table = load_bundled_mapping()
catalog = load_catalog("v1_104")

print(f"mapping table v{table.map_version} -> {table.target_label_set_id}")
for label in ("liver", "kidney_left", "vertebrae_l4", "portal_vein_and_splenic_vein"):
    entry = lookup(table, label)
    radlex = entry.radlex_id or "-"
    print(
        f"  {label:30s} -> {entry.snomed_code:>9s} ({entry.snomed_display})"
        f" radlex={radlex} degree={entry.equivalence_degree}"
    )

report = coverage_report(table, catalog)
print(
    f"\ncoverage: {report.mapped}/{report.catalog_size} labels"
    f" ({report.mapped_fraction:.0%}), degree histogram {report.degree_histogram}"
)

series = SeriesDescriptor(
    "demo-series-2", "demo-study", "patient-007", date(2023, 6, 15), "CT", "daily"
)
stats = mock_segment(series, 7, MockCalibration("v1_104", 37.0))
annotation_set = annotate(
    stats, table, AnnotationPolicy(min_volume_mm3=0.0), indexer_version="1.0.0"
)
print(
    f"\nannotated {series.series_uid}: {len(annotation_set.annotations)} coded"
    f" structures, {len(annotation_set.unmapped_labels)} unmapped"
)
for a in annotation_set.annotations[:5]:
    print(f"  {a.label:24s} {a.snomed_code:>9s} {a.volume_mm3:>12,.1f} mm^3")
print(
    f"versions: indexer {annotation_set.indexer_version},"
    f" mapping {annotation_set.mapping_version}"
)
