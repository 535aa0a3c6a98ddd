"""The whole pipeline in one process: manifest -> annotations -> index -> FHIR.

Equivalent to `ctindex ingest && ctindex run --virtual-clock && ctindex
export-fhir`, but driven through the library so each stage is visible.

Run: python demos/06_full_pipeline.py
"""

import tempfile
from datetime import timedelta
from pathlib import Path

from ctindex import (
    IndexingPipeline,
    PipelineConfig,
    PoolConfig,
    SearchIndex,
    TaskQueue,
    VirtualClock,
    load_bundled_mapping,
    load_manifest,
    run_pool,
)
from ctindex.pipeline import export_bundles

workdir = Path(tempfile.mkdtemp(prefix="ctindex-demo-"))
manifest_path = workdir / "manifest.txt"
manifest_path.write_text(
    "\n".join(
        f"pipe-{i:03d}|study-{i // 4:03d}|patient-{i // 6:02d}"
        f"|20{12 + i % 12}-0{1 + i % 9}-11|CT|daily"
        for i in range(40)
    )
    + "\n"
)

queue = TaskQueue()
for series in load_manifest(manifest_path):
    queue.enqueue_daily(series)

clock = VirtualClock()
pipeline = IndexingPipeline(
    mapping=load_bundled_mapping(),
    index=SearchIndex(),
    config=PipelineConfig(service_time=timedelta(minutes=2.4)),
    clock=clock.now,
)
report = run_pool(
    queue,
    PoolConfig(worker_count=8, clock="virtual"),
    pipeline.process,
    clock=clock,
)
print(
    f"processed {report.completed} series in"
    f" {report.window_end - report.window_start} of simulated time"
    f" ({report.series_per_hour:.0f} series/hour)"
)

hits = pipeline.index.search_text("all", limit=10)
print(f"index now answers queries: total={hits.total}, first hits={hits.hits[:3]}")

out_dir = workdir / "bundles"
paths = export_bundles(
    pipeline.records, pipeline.device_identity(), out_dir, bundle_size=25
)
print(f"exported {len(paths)} transaction bundle(s):")
for path in paths:
    print(f"  {path} ({path.stat().st_size:,} bytes)")
print(f"\nartifacts left under {workdir} for inspection")
