"""Label-set catalogs for the supported segmenter versions.

A catalog is the closed set of anatomical labels a given segmenter version can
emit. The bundled catalogs (104, 117 and 124 labels) ship as JSON data files;
custom catalogs can be loaded from a path. Each entry carries a normalized
head-to-thigh ``station`` coordinate used by the mock backend to sample
anatomically contiguous regions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import CtIndexError

LABEL_RE = re.compile(r"^[a-z0-9_]+$")

#: Bundled label-set ids and their expected sizes.
BUNDLED_LABEL_SETS = {"v1_104": 104, "v2_117": 117, "v2plus_124": 124}


class UnknownLabelSet(CtIndexError):
    code = "unknown_label_set"


class CatalogInvalid(CtIndexError):
    code = "catalog_invalid"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    station: float


@dataclass(frozen=True)
class LabelCatalog:
    """Immutable, validated label catalog."""

    label_set_id: str
    entries: tuple[CatalogEntry, ...]
    _names: frozenset[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise CatalogInvalid(f"catalog {self.label_set_id} has duplicate labels")
        for name in names:
            if not LABEL_RE.match(name):
                raise CatalogInvalid(f"label {name!r} is not a valid label identifier")
        object.__setattr__(self, "_names", frozenset(names))

    def __contains__(self, label: str) -> bool:
        return label in self._names

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def by_station(self) -> list[CatalogEntry]:
        """Entries ordered head to thigh, ties broken by name."""
        return sorted(self.entries, key=lambda e: (e.station, e.name))


def _parse_catalog(payload: dict) -> LabelCatalog:
    try:
        entries = tuple(
            CatalogEntry(name=e["name"], station=float(e["station"]))
            for e in payload["labels"]
        )
        return LabelCatalog(label_set_id=payload["label_set_id"], entries=entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogInvalid(f"malformed catalog file: {exc}") from exc


def load_catalog_file(path: str | Path) -> LabelCatalog:
    """Load a catalog from an explicit JSON file."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CatalogInvalid(f"cannot read catalog {path}: {exc}") from exc
    return _parse_catalog(payload)


@lru_cache(maxsize=None)
def load_catalog(label_set_id: str) -> LabelCatalog:
    """Load one of the bundled catalogs by label-set id."""
    if label_set_id not in BUNDLED_LABEL_SETS:
        raise UnknownLabelSet(
            f"unknown label set {label_set_id!r}; expected one of "
            f"{sorted(BUNDLED_LABEL_SETS)}"
        )
    ref = resources.files("ctindex").joinpath("data", "labelsets", f"{label_set_id}.json")
    catalog = _parse_catalog(json.loads(ref.read_text(encoding="utf-8")))
    expected = BUNDLED_LABEL_SETS[label_set_id]
    if len(catalog) != expected:
        raise CatalogInvalid(
            f"bundled catalog {label_set_id} has {len(catalog)} labels, expected {expected}"
        )
    return catalog
