"""Cohort discovery against the embedded anatomy index.

Index a mocked corpus and answer research-style questions: code presence,
code-scoped volume/intensity ranges, date windows, and boolean combinations,
all expressible in the compact query text used by the API and CLI.

Run: python demos/05_search_queries.py
"""

from datetime import date

from ctindex import (
    MockCalibration,
    SearchIndex,
    SeriesDescriptor,
    annotate,
    document_from_annotation_set,
    load_bundled_mapping,
    lookup,
    mock_segment,
)

table = load_bundled_mapping()
index = SearchIndex()

for i in range(1_000):
    series = SeriesDescriptor(
        f"corpus-{i:04d}",
        f"study-{i // 3:04d}",
        f"patient-{i // 5:04d}",
        date(2010 + i % 14, 1 + i % 12, 1 + i % 28),
        "CT",
        "legacy",
    )
    stats = mock_segment(series, 11, MockCalibration("v1_104", 37.0))
    annotation_set = annotate(stats, table, indexer_version="1.0.0")
    index.index_document(document_from_annotation_set(annotation_set, series))

liver = lookup(table, "liver").snomed_code
spleen = lookup(table, "spleen").snomed_code

queries = [
    f"code:{liver}",
    f"and(code:{liver}, vol:{liver}:[1500000,])",
    f"and(code:{liver}, not(code:{spleen}))",
    f"and(code:{liver}, date:[2019-01-01,2021-12-31])",
    f"or(int:{liver}:[,40], vol:{spleen}:[300000,])",
    f"and(code:{liver}, not(code:{liver}))",
]

print(f"indexed {len(index)} series; running {len(queries)} queries:\n")
for text in queries:
    result = index.search_text(text, limit=5)
    shown = ", ".join(result.hits[:3]) + (" ..." if result.total > 3 else "")
    print(f"  {text}\n    -> {result.total} hits: {shown or '(none)'}")

print("\nresults are ordered acquisition-date desc, series uid asc; paging is stable")
