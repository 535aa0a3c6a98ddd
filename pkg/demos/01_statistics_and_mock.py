"""Statistics files and the mock segmentation backend.

Every indexed series starts life as a statistics file: one JSON object with
an identity header and a volume + mean intensity entry per anatomical
structure. This demo parses a hand-written file, then generates a calibrated
synthetic corpus with the mock backend.

Run: python demos/01_statistics_and_mock.py
"""

import statistics
from datetime import date

from ctindex import (
    MockCalibration,
    SeriesDescriptor,
    mock_segment,
    parse_statistics,
    serialize_statistics,
)

series = SeriesDescriptor(
    series_uid="demo-series-1",
    study_uid="demo-study-1",
    patient_pseudonym="patient-007",
    acquisition_date=date(2023, 6, 15),
    modality="CT",
    source="daily",
)

raw = b"""
{
  "series_uid": "demo-series-1",
  "segmenter_name": "mock-segmenter",
  "segmenter_version": "1.0.0",
  "label_set_id": "v1_104",
  "structures": {
    "liver":  {"volume_mm3": 1420000.0, "mean_intensity": 62.0},
    "spleen": {"volume_mm3": 210000.0,  "mean_intensity": 55.5},
    "colon":  {"volume_mm3": 0.0,       "mean_intensity": 0.0}
  }
}
"""

stats = parse_statistics(raw, series)
print(f"parsed {len(stats.structures)} structures from a statistics file:")
for s in stats.structures:
    print(f"  {s.label:8s} {s.volume_mm3:>12,.0f} mm^3 @ {s.mean_intensity:+.1f} HU")
print("(zero-volume structures are kept by the parser; annotation drops them)\n")

# The mock backend is deterministic per (series_uid, seed) and emits an
# anatomically contiguous band of structures.
calibration = MockCalibration(label_set_id="v1_104", mean_structures=37.0)
mocked = mock_segment(series, seed=42, calibration=calibration)
again = mock_segment(series, seed=42, calibration=calibration)
assert serialize_statistics(mocked) == serialize_statistics(again)
print(f"mock backend: {len(mocked.structures)} structures, e.g.")
for s in mocked.structures[:5]:
    print(f"  {s.label:24s} {s.volume_mm3:>12,.1f} mm^3 @ {s.mean_intensity:+.1f} HU")

# Calibration: the corpus mean tracks mean_structures.
counts = []
for i in range(2_000):
    d = SeriesDescriptor(
        f"corpus-{i:05d}", "study", "p", date(2020, 1, 1), "CT", "legacy"
    )
    counts.append(len(mock_segment(d, 1, calibration).structures))
print(f"\ncorpus of {len(counts)} mocked series:")
print(f"  mean structures/series = {statistics.mean(counts):.2f} (target 37.0)")
print(f"  min/max                = {min(counts)}/{max(counts)}")

# Restricting the axial window models protocol-specific scans.
chest = MockCalibration.for_region("v1_104", 12.0, "chest")
chest_stats = mock_segment(series, 42, chest)
print(f"\nchest-window mock: {sorted(s.label for s in chest_stats.structures)[:6]} ...")
