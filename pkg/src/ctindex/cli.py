"""Command-line interface.

State lives in a data directory (``--data-dir``, default ``./data``):
``tasks.json`` for the queue, ``index.snapshot`` for the search index, and
``annotations/`` for per-series results. ``ingest``/``backfill`` enqueue
work, ``run`` drains it, ``query``/``export-fhir`` read the results, and
``serve`` exposes the whole thing over HTTP.

Exit codes: 0 success, 1 domain error (validation failure, malformed input,
unknown series), 2 usage error.
"""

from __future__ import annotations

import json
import sys
from datetime import timedelta
from pathlib import Path

import click

from .annotate import AnnotationPolicy
from .catalogs import load_catalog
from .errors import CtIndexError
from .ingest import load_manifest
from .pipeline import (
    INDEX_SNAPSHOT,
    TASKS_FILE,
    IndexingPipeline,
    PipelineConfig,
    export_annotations,
    export_bundles,
    export_resources_ndjson,
    load_records,
    save_records,
)
from .scheduler import PoolConfig, TaskQueue, VirtualClock, run_pool
from .search import SearchIndex, search_rows
from .termmap import coverage_report, load_bundled_mapping, load_mapping
from .service import load_config


def _fail(exc: CtIndexError) -> None:
    click.echo(f"error [{exc.code}]: {exc.message}", err=True)
    sys.exit(1)


def _load_queue(data_dir: Path, max_attempts: int = 3) -> TaskQueue:
    path = data_dir / TASKS_FILE
    if path.is_file():
        return TaskQueue.from_snapshot(json.loads(path.read_text(encoding="utf-8")))
    return TaskQueue(max_attempts=max_attempts)


def _save_queue(queue: TaskQueue, data_dir: Path) -> None:
    data_dir.mkdir(parents=True, exist_ok=True)
    (data_dir / TASKS_FILE).write_text(
        json.dumps(queue.to_snapshot(), indent=2) + "\n", encoding="utf-8"
    )


def _load_table(table: Path | None):
    return load_mapping(table) if table is not None else load_bundled_mapping()


data_dir_option = click.option(
    "--data-dir",
    type=click.Path(path_type=Path),
    default=Path("data"),
    show_default=True,
    help="Directory holding queue state, index snapshot and annotations.",
)


@click.group()
def main():
    """Semantic indexing pipeline for CT series."""


@main.command()
@click.argument("manifest", type=click.Path(exists=True, path_type=Path))
@data_dir_option
def ingest(manifest: Path, data_dir: Path):
    """Enqueue MANIFEST series on the daily (priority) lane."""
    try:
        descriptors = load_manifest(manifest)
        queue = _load_queue(data_dir)
        enqueued = 0
        for series in descriptors:
            try:
                queue.enqueue_daily(series)
                enqueued += 1
            except CtIndexError as exc:
                click.echo(f"skipped {series.series_uid}: {exc.message}", err=True)
        _save_queue(queue, data_dir)
    except CtIndexError as exc:
        _fail(exc)
    click.echo(f"enqueued {enqueued} daily task(s) from {manifest}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True, path_type=Path))
@data_dir_option
def backfill(manifest: Path, data_dir: Path):
    """Enqueue MANIFEST series on the legacy lane (chronological order)."""
    try:
        descriptors = load_manifest(manifest)
        queue = _load_queue(data_dir)
        result = queue.enqueue_legacy(descriptors)
        _save_queue(queue, data_dir)
    except CtIndexError as exc:
        _fail(exc)
    for uid, _, reason in result.rejections:
        click.echo(f"skipped {uid}: {reason}", err=True)
    click.echo(f"enqueued {result.enqueued} legacy task(s) from {manifest}")


@main.command()
@data_dir_option
@click.option("--workers", default=8, show_default=True, help="Worker count.")
@click.option("--virtual-clock", is_flag=True, help="Simulate instead of running on wall time.")
@click.option("--window-hours", type=float, default=None, help="Stop after this many (virtual) hours.")
@click.option("--manifest", type=click.Path(exists=True, path_type=Path), default=None,
              help="Enqueue this manifest on the daily lane before running.")
@click.option("--label-set", default="v1_104", show_default=True)
@click.option("--table", type=click.Path(exists=True, path_type=Path), default=None,
              help="Mapping table (defaults to the bundled one).")
@click.option("--seed", default=7, show_default=True, help="Mock backend seed.")
@click.option("--mean-structures", default=37.0, show_default=True)
@click.option("--statistics-dir", type=click.Path(path_type=Path), default=None,
              help="Read real statistics files instead of mocking.")
@click.option("--service-minutes", default=2.4, show_default=True,
              help="Declared per-task service time for the virtual clock.")
def run(data_dir, workers, virtual_clock, window_hours, manifest, label_set, table,
        seed, mean_structures, statistics_dir, service_minutes):
    """Process queued tasks until drained, then persist all outputs."""
    try:
        queue = _load_queue(data_dir)
        if manifest is not None:
            for series in load_manifest(manifest):
                queue.enqueue_daily(series)
        mapping = _load_table(table)
        index = SearchIndex()
        snapshot = data_dir / INDEX_SNAPSHOT
        if snapshot.is_file():
            index = SearchIndex.restore(snapshot)
        clock = VirtualClock() if virtual_clock else None
        pipeline = IndexingPipeline(
            mapping=mapping,
            index=index,
            config=PipelineConfig(
                label_set_id=label_set,
                mock_seed=seed,
                mock_mean_structures=mean_structures,
                policy=AnnotationPolicy(),
                service_time=timedelta(minutes=service_minutes),
                statistics_dir=statistics_dir,
            ),
            clock=clock.now if clock else None,
        )
        pipeline.records.update(load_records(data_dir))
        config = PoolConfig(
            worker_count=workers, clock="virtual" if virtual_clock else "real"
        )
        window = timedelta(hours=window_hours) if window_hours else None
        report = run_pool(queue, config, pipeline.process, window=window, clock=clock)
        _save_queue(queue, data_dir)
        index.persist(snapshot)
        save_records(pipeline.records, data_dir)
    except CtIndexError as exc:
        _fail(exc)
    counts = queue.counts()
    click.echo(f"completed {report.completed}")
    click.echo(f"failed {report.failed}")
    click.echo(f"dead {counts['dead']}")
    click.echo(f"series_per_hour {report.series_per_hour:.2f}")
    click.echo(f"busy_time_per_worker_seconds {report.busy_time_per_worker.total_seconds():.1f}")


@main.group()
def mapping():
    """Validate and inspect label-to-code mapping tables."""


@mapping.command()
@click.option("--table", type=click.Path(exists=True, path_type=Path), default=None)
def validate(table: Path | None):
    """Fully validate a mapping table (bundled one by default)."""
    try:
        loaded = _load_table(table)
    except CtIndexError as exc:
        _fail(exc)
    click.echo(
        f"OK: {len(loaded)} entries, map_version {loaded.map_version}, "
        f"target {loaded.target_label_set_id}"
    )


@mapping.command()
@click.option("--table", type=click.Path(exists=True, path_type=Path), default=None)
def coverage(table: Path | None):
    """Report catalog coverage of a mapping table as JSON."""
    try:
        loaded = _load_table(table)
        report = coverage_report(loaded, load_catalog(loaded.target_label_set_id))
    except CtIndexError as exc:
        _fail(exc)
    click.echo(
        json.dumps(
            {
                "label_set_id": report.label_set_id,
                "catalog_size": report.catalog_size,
                "mapped": report.mapped,
                "mapped_fraction": report.mapped_fraction,
                "unmapped_labels": list(report.unmapped_labels),
                "degree_histogram": {str(k): v for k, v in sorted(report.degree_histogram.items())},
            },
            indent=2,
        )
    )


@main.command("export-fhir")
@click.argument("out_dir", type=click.Path(path_type=Path))
@data_dir_option
@click.option("--bundle-size", default=100, show_default=True,
              help="Series per transaction bundle.")
@click.option("--ndjson", is_flag=True,
              help="Also write resources.ndjson (deduplicated, one per line).")
@click.option("--table", type=click.Path(exists=True, path_type=Path), default=None)
def export_fhir(out_dir: Path, data_dir: Path, bundle_size: int, ndjson: bool,
                table: Path | None):
    """Write transaction bundles for every indexed series to OUT_DIR."""
    try:
        mapping_table = _load_table(table)
        records = load_records(data_dir)
        if not records:
            raise CtIndexError(f"no annotated series found under {data_dir}")
        pipeline = IndexingPipeline(mapping=mapping_table, index=SearchIndex())
        paths = export_bundles(
            records, pipeline.device_identity(), out_dir, bundle_size=bundle_size
        )
        if ndjson:
            count = export_resources_ndjson(
                records, pipeline.device_identity(), out_dir / "resources.ndjson"
            )
            click.echo(f"wrote {count} distinct resources to resources.ndjson")
    except CtIndexError as exc:
        _fail(exc)
    click.echo(f"wrote {len(paths)} bundle(s) covering {len(records)} series to {out_dir}")


@main.group()
def annotations():
    """Inspect and export per-series annotation sets."""


@annotations.command("export")
@data_dir_option
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Output file (default: stdout).")
def annotations_export(data_dir: Path, out: Path | None):
    """Audit export: canonical annotation-set JSON, one series per line."""
    try:
        records = load_records(data_dir)
        if not records:
            raise CtIndexError(f"no annotated series found under {data_dir}")
        payload = export_annotations(records)
    except CtIndexError as exc:
        _fail(exc)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(payload)
        click.echo(f"wrote {len(records)} annotation set(s) to {out}", err=True)
    else:
        click.echo(payload.decode("utf-8"), nl=False)


@main.command()
@click.argument("query_text")
@data_dir_option
@click.option("--offset", default=0, show_default=True)
@click.option("--limit", default=100, show_default=True)
def query(query_text: str, data_dir: Path, offset: int, limit: int):
    """Run a query against the persisted index; prints JSON results."""
    snapshot = data_dir / INDEX_SNAPSHOT
    try:
        index = SearchIndex.restore(snapshot) if snapshot.is_file() else SearchIndex()
        result = index.search_text(query_text, offset=offset, limit=limit)
    except CtIndexError as exc:
        _fail(exc)
    click.echo(
        json.dumps(
            {
                "total": result.total,
                "hits": list(result.hits),
                "rows": search_rows(index, result.hits),
                "offset": offset,
                "limit": limit,
            }
        )
    )


@main.command()
@click.option("--config", "config_file", type=click.Path(exists=True, path_type=Path),
              default=None, help="JSON config file (env vars and flags override it).")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@data_dir_option
@click.option("--workers", type=int, default=None)
@click.option("--auth-token", default=None)
def serve(config_file, host, port, data_dir, workers, auth_token):
    """Start the HTTP API (workers run in-process)."""
    import uvicorn

    from .service import Service, create_app

    try:
        config = load_config(
            config_file,
            overrides={
                "host": host,
                "port": port,
                "data_dir": data_dir,
                "worker_count": workers,
                "auth_token": auth_token,
            },
        )
        service = Service(config)
    except CtIndexError as exc:
        _fail(exc)
    uvicorn.run(create_app(service), host=config.host, port=config.port)


if __name__ == "__main__":
    main()
