import json

import pytest

from ctindex.catalogs import (
    BUNDLED_LABEL_SETS,
    LABEL_RE,
    CatalogInvalid,
    UnknownLabelSet,
    load_catalog,
    load_catalog_file,
)


@pytest.mark.parametrize("label_set_id,size", sorted(BUNDLED_LABEL_SETS.items()))
def test_bundled_catalog_sizes(label_set_id, size):
    catalog = load_catalog(label_set_id)
    assert len(catalog) == size
    assert len(set(catalog.labels)) == size


def test_labels_are_valid_identifiers(catalog_v1):
    for label in catalog_v1.labels:
        assert LABEL_RE.match(label), label


def test_unknown_label_set():
    with pytest.raises(UnknownLabelSet):
        load_catalog("v9_999")


def test_contains(catalog_v1):
    assert "liver" in catalog_v1
    assert "flux_capacitor" not in catalog_v1


def test_by_station_is_sorted(catalog_v1):
    stations = [(e.station, e.name) for e in catalog_v1.by_station()]
    assert stations == sorted(stations)


def test_load_catalog_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(
        json.dumps(
            {
                "label_set_id": "tiny",
                "labels": [
                    {"name": "liver", "station": 0.4},
                    {"name": "spleen", "station": 0.41},
                ],
            }
        )
    )
    catalog = load_catalog_file(path)
    assert catalog.labels == ("liver", "spleen")


def test_load_catalog_file_rejects_duplicates(tmp_path):
    path = tmp_path / "dup.json"
    path.write_text(
        json.dumps(
            {
                "label_set_id": "dup",
                "labels": [
                    {"name": "liver", "station": 0.4},
                    {"name": "liver", "station": 0.5},
                ],
            }
        )
    )
    with pytest.raises(CatalogInvalid):
        load_catalog_file(path)


def test_load_catalog_file_rejects_bad_label(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps(
            {
                "label_set_id": "bad",
                "labels": [{"name": "Liver!", "station": 0.4}],
            }
        )
    )
    with pytest.raises(CatalogInvalid):
        load_catalog_file(path)
