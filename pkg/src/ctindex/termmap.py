"""Curated mapping from segmenter labels to SNOMED CT and RadLex codes.

Tables live in a curation-friendly delimited text format: leading ``#``
metadata lines (map version, target label set), a mandatory header row, then
one row per label. Each row carries a degree-of-equivalence category on the
standard 1-5 scale (1 = equivalent meaning, 5 = no map possible); degree-5
rows use the ``NOMAP`` sentinel instead of a concept id.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

from .catalogs import LabelCatalog, load_catalog
from .errors import CtIndexError

SNOMED_SYSTEM = "http://snomed.info/sct"
RADLEX_SYSTEM = "http://radlex.org"

NOMAP = "NOMAP"
SNOMED_CODE_RE = re.compile(r"^\d{6,18}$")
RADLEX_ID_RE = re.compile(r"^RID\d+$")

COLUMNS = ["label", "snomed_code", "snomed_display", "radlex_id", "equivalence_degree", "notes"]

BUNDLED_TABLE = "snomed_radlex_v1.csv"


class MalformedRow(CtIndexError):
    code = "malformed_row"

    def __init__(self, message: str, row_no: int):
        super().__init__(f"row {row_no}: {message}")
        self.row_no = row_no


class DuplicateLabel(CtIndexError):
    code = "duplicate_label"


class UnknownLabel(CtIndexError):
    code = "unknown_label"


class BadEquivalenceDegree(CtIndexError):
    code = "bad_equivalence_degree"


class CatalogMismatch(CtIndexError):
    code = "catalog_mismatch"


@dataclass(frozen=True)
class MappingEntry:
    label: str
    snomed_code: str
    snomed_display: str
    radlex_id: str | None
    equivalence_degree: int
    notes: str = ""

    @property
    def is_nomap(self) -> bool:
        return self.equivalence_degree == 5


class NotMapped:
    """Sentinel returned by lookup when a label has no usable mapping."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NotMapped"

    def __bool__(self):
        return False


NOT_MAPPED = NotMapped()


@dataclass(frozen=True)
class MappingTable:
    map_version: str
    target_label_set_id: str
    entries: dict[str, MappingEntry] = field(repr=False)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class CoverageReport:
    label_set_id: str
    catalog_size: int
    mapped: int
    unmapped_labels: tuple[str, ...]
    degree_histogram: dict[int, int]

    @property
    def mapped_fraction(self) -> float:
        return self.mapped / self.catalog_size if self.catalog_size else 0.0


def _parse_entry(row: dict[str, str], row_no: int) -> MappingEntry:
    label = (row.get("label") or "").strip()
    if not label:
        raise MalformedRow("empty label", row_no)
    degree_text = (row.get("equivalence_degree") or "").strip()
    try:
        degree = int(degree_text)
    except ValueError:
        raise BadEquivalenceDegree(
            f"row {row_no}: equivalence_degree {degree_text!r} is not an integer"
        ) from None
    if degree not in (1, 2, 3, 4, 5):
        raise BadEquivalenceDegree(
            f"row {row_no}: equivalence_degree must be 1-5, got {degree}"
        )
    code = (row.get("snomed_code") or "").strip()
    if degree == 5:
        if code != NOMAP:
            raise MalformedRow(
                f"degree-5 rows must use the {NOMAP} sentinel, got {code!r}", row_no
            )
    elif not SNOMED_CODE_RE.match(code):
        raise MalformedRow(f"snomed_code {code!r} is not a concept id", row_no)
    radlex = (row.get("radlex_id") or "").strip() or None
    if radlex is not None and not RADLEX_ID_RE.match(radlex):
        raise MalformedRow(f"radlex_id {radlex!r} does not match RID pattern", row_no)
    return MappingEntry(
        label=label,
        snomed_code=code,
        snomed_display=(row.get("snomed_display") or "").strip(),
        radlex_id=radlex,
        equivalence_degree=degree,
        notes=(row.get("notes") or "").strip(),
    )


def _load_mapping_text(text: str, source: str) -> MappingTable:
    meta: dict[str, str] = {}
    data_lines: list[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        data_lines.append(line)

    map_version = meta.get("map_version")
    target = meta.get("target_label_set")
    if not map_version or not target:
        raise MalformedRow(
            "missing '# map_version=...' or '# target_label_set=...' metadata", 0
        )
    catalog = load_catalog(target)

    reader = csv.DictReader(io.StringIO("\n".join(data_lines)))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != COLUMNS:
        raise MalformedRow(
            f"header row must be exactly {','.join(COLUMNS)}", 1
        )

    entries: dict[str, MappingEntry] = {}
    for row_no, row in enumerate(reader, start=2):
        if row.get(None):
            raise MalformedRow("too many columns", row_no)
        entry = _parse_entry(row, row_no)
        if entry.label in entries:
            raise DuplicateLabel(f"label {entry.label!r} appears more than once in {source}")
        if entry.label not in catalog:
            raise UnknownLabel(
                f"label {entry.label!r} is not in catalog {target}"
            )
        entries[entry.label] = entry
    return MappingTable(map_version=map_version, target_label_set_id=target, entries=entries)


def load_mapping(source: str | Path) -> MappingTable:
    """Load and fully validate a mapping table file (all-or-nothing)."""
    text = Path(source).read_text(encoding="utf-8")
    return _load_mapping_text(text, str(source))


def load_bundled_mapping() -> MappingTable:
    """Load the table shipped with the package (v1 label set)."""
    from importlib import resources

    ref = resources.files("ctindex").joinpath("data", "mapping", BUNDLED_TABLE)
    return _load_mapping_text(ref.read_text(encoding="utf-8"), BUNDLED_TABLE)


def serialize_mapping(table: MappingTable) -> str:
    """Write a table back to its file format (round-trips with load)."""
    buf = io.StringIO()
    buf.write(f"# map_version={table.map_version}\n")
    buf.write(f"# target_label_set={table.target_label_set_id}\n")
    writer = csv.writer(buf)
    writer.writerow(COLUMNS)
    for entry in table.entries.values():
        writer.writerow(
            [
                entry.label,
                entry.snomed_code,
                entry.snomed_display,
                entry.radlex_id or "",
                str(entry.equivalence_degree),
                entry.notes,
            ]
        )
    return buf.getvalue()


def lookup(table: MappingTable, label: str) -> MappingEntry | NotMapped:
    """Return the entry for a label, or NOT_MAPPED when absent or degree 5."""
    entry = table.entries.get(label)
    if entry is None or entry.is_nomap:
        return NOT_MAPPED
    return entry


def coverage_report(table: MappingTable, catalog: LabelCatalog) -> CoverageReport:
    """Curation QA: how much of the catalog the table maps, and how well."""
    if catalog.label_set_id != table.target_label_set_id:
        raise CatalogMismatch(
            f"table targets {table.target_label_set_id}, catalog is {catalog.label_set_id}"
        )
    unmapped = tuple(
        label
        for label in catalog.labels
        if lookup(table, label) is NOT_MAPPED
    )
    histogram: dict[int, int] = {}
    for entry in table.entries.values():
        histogram[entry.equivalence_degree] = histogram.get(entry.equivalence_degree, 0) + 1
    return CoverageReport(
        label_set_id=catalog.label_set_id,
        catalog_size=len(catalog),
        mapped=len(catalog) - len(unmapped),
        unmapped_labels=unmapped,
        degree_histogram=histogram,
    )
