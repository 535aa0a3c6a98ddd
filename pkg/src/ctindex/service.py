"""HTTP API tying the pipeline together.

All endpoints speak UTF-8 JSON except ``/metrics`` (plain text key/value
lines). Errors always carry a machine-readable code and a human message:
``{"error": {"code": ..., "message": ...}}``. Malformed client input never
produces a 5xx. Configuration precedence is flags > environment > config
file > defaults.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Literal, Mapping

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .annotate import AnnotationPolicy, annotation_set_to_dict
from .catalogs import load_catalog
from .errors import CtIndexError
from .fhir import to_transaction_bundle
from .ingest import SeriesDescriptor
from .pipeline import (
    INDEX_SNAPSHOT,
    TASKS_FILE,
    IndexingPipeline,
    PipelineConfig,
    load_records,
    save_records,
)
from .query import MalformedQuery
from .scheduler import Success, TaskQueue
from .search import SearchIndex, search_rows
from .termmap import coverage_report, load_bundled_mapping, load_mapping

ENV_PREFIX = "CTINDEX_"

#: CtIndexError codes that map to something other than 400.
_STATUS_BY_CODE = {
    "unknown_task": 404,
    "not_indexed": 404,
    "duplicate_active_task": 409,
    "duplicate_series_uid": 409,
    "unauthorized": 401,
}


class NotIndexed(CtIndexError):
    code = "not_indexed"


class Unauthorized(CtIndexError):
    code = "unauthorized"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: Path = Path("data")
    mapping_path: Path | None = None  # None = bundled table
    label_set_id: str = "v1_104"
    worker_count: int = 8
    max_attempts: int = 3
    min_volume_mm3: float = 0.0
    strict_policy: bool = False
    bundle_size: int = 100
    auth_token: str | None = None
    mock_seed: int = 7
    mock_mean_structures: float = 37.0
    default_page_limit: int = 100
    max_page_limit: int = 1000


_BOOL_TRUE = {"1", "true", "yes", "on"}


def _coerce(name: str, kind: type, value):
    if kind is Path:
        return Path(value)
    if kind is bool:
        return str(value).strip().lower() in _BOOL_TRUE if not isinstance(value, bool) else value
    return kind(value)


_FIELD_TYPES = {
    "host": str, "port": int, "data_dir": Path, "mapping_path": Path,
    "label_set_id": str, "worker_count": int, "max_attempts": int,
    "min_volume_mm3": float, "strict_policy": bool, "bundle_size": int,
    "auth_token": str, "mock_seed": int, "mock_mean_structures": float,
    "default_page_limit": int, "max_page_limit": int,
}


def load_config(
    config_file: Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, object] | None = None,
) -> ServiceConfig:
    """Assemble configuration honoring flags > env > file > defaults."""
    env = os.environ if env is None else env
    values: dict[str, object] = {}
    if config_file is not None:
        raw = json.loads(Path(config_file).read_text(encoding="utf-8"))
        for key, value in raw.items():
            if key not in _FIELD_TYPES:
                raise CtIndexError(f"unknown config key {key!r} in {config_file}")
            values[key] = _coerce(key, _FIELD_TYPES[key], value)
    for key, kind in _FIELD_TYPES.items():
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            values[key] = _coerce(key, kind, env[env_key])
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, _FIELD_TYPES[key], value)
    return ServiceConfig(**values)


class Service:
    """Process-wide state: queue, index, pipeline, and worker threads."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.mapping = (
            load_mapping(config.mapping_path)
            if config.mapping_path is not None
            else load_bundled_mapping()
        )
        self.catalog = load_catalog(config.label_set_id)
        self.queue = self._load_queue()
        self.index = self._load_index()
        self.pipeline = IndexingPipeline(
            mapping=self.mapping,
            index=self.index,
            config=PipelineConfig(
                label_set_id=config.label_set_id,
                mock_seed=config.mock_seed,
                mock_mean_structures=config.mock_mean_structures,
                policy=AnnotationPolicy(
                    min_volume_mm3=config.min_volume_mm3, strict=config.strict_policy
                ),
            ),
        )
        self.pipeline.records.update(load_records(config.data_dir))
        self.started_at = datetime.now(timezone.utc)
        self.completed = 0
        self.failed = 0
        self.busy = timedelta(0)
        self._counter_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def _load_queue(self) -> TaskQueue:
        path = self.config.data_dir / TASKS_FILE
        if path.is_file():
            return TaskQueue.from_snapshot(
                json.loads(path.read_text(encoding="utf-8"))
            )
        return TaskQueue(max_attempts=self.config.max_attempts)

    def _load_index(self) -> SearchIndex:
        path = self.config.data_dir / INDEX_SNAPSHOT
        if path.is_file():
            return SearchIndex.restore(path)
        return SearchIndex()

    # -- worker lifecycle -------------------------------------------------

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            task = self.queue.next_task()
            if task is None:
                self._stop.wait(0.02)
                continue
            began = datetime.now(timezone.utc)
            outcome = self.pipeline.process(task)
            self.queue.complete(task.task_id, outcome)
            with self._counter_lock:
                self.busy += datetime.now(timezone.utc) - began
                if isinstance(outcome, Success):
                    self.completed += 1
                else:
                    self.failed += 1

    def start_workers(self) -> None:
        self._stop.clear()
        self._threads = [
            threading.Thread(
                target=self._worker_loop, name=f"ctindex-api-worker-{i}", daemon=True
            )
            for i in range(self.config.worker_count)
        ]
        for thread in self._threads:
            thread.start()

    def stop_workers(self) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout=5)
        self._threads = []

    def save(self) -> None:
        data_dir = self.config.data_dir
        data_dir.mkdir(parents=True, exist_ok=True)
        (data_dir / TASKS_FILE).write_text(
            json.dumps(self.queue.to_snapshot(), indent=2) + "\n", encoding="utf-8"
        )
        self.index.persist(data_dir / INDEX_SNAPSHOT)
        save_records(self.pipeline.records, data_dir)

    # -- metrics ----------------------------------------------------------

    def metrics_text(self) -> str:
        counts = self.queue.counts()
        uptime = (datetime.now(timezone.utc) - self.started_at).total_seconds()
        hours = uptime / 3600.0
        with self._counter_lock:
            completed, failed = self.completed, self.failed
            busy_seconds = self.busy.total_seconds()
        lines = [
            f"queued_daily {counts['queued_daily']}",
            f"queued_legacy {counts['queued_legacy']}",
            f"running {counts['running']}",
            f"done {counts['done']}",
            f"dead {counts['dead']}",
            f"tasks_total {counts['total']}",
            f"completed {completed}",
            f"failed {failed}",
            f"series_per_hour {completed / hours if hours > 0 else 0.0:.2f}",
            f"busy_seconds_total {busy_seconds:.3f}",
            f"uptime_seconds {uptime:.1f}",
            f"workers {self.config.worker_count}",
            f"indexed_documents {len(self.index)}",
        ]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Request/response models
# ---------------------------------------------------------------------------


class SeriesIn(BaseModel):
    series_uid: str
    study_uid: str
    patient_pseudonym: str
    acquisition_date: date
    modality: str
    source: Literal["daily", "legacy"] = "daily"
    body_region_hint: str | None = None

    def to_descriptor(self) -> SeriesDescriptor:
        descriptor = SeriesDescriptor(
            series_uid=self.series_uid,
            study_uid=self.study_uid,
            patient_pseudonym=self.patient_pseudonym,
            acquisition_date=self.acquisition_date,
            modality=self.modality,
            source=self.source,
            body_region_hint=self.body_region_hint,
        )
        descriptor.validate()
        return descriptor


class TaskIn(BaseModel):
    series: SeriesIn
    lane: Literal["daily", "legacy"] = "daily"


def _task_snapshot(task) -> dict:
    return {
        "task_id": task.task_id,
        "series_uid": task.series.series_uid,
        "lane": task.lane,
        "state": task.state,
        "attempts": task.attempts,
        "enqueued_at": task.enqueued_at.isoformat(),
        "last_error": task.last_error,
    }


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def create_app(service: Service) -> FastAPI:
    """Build the HTTP application around an initialized service."""

    async def lifespan(app: FastAPI):
        service.start_workers()
        yield
        service.stop_workers()
        service.save()

    app = FastAPI(title="ctindex", version="1.0.0", lifespan=lifespan)
    app.state.service = service

    def require_auth(request: Request) -> None:
        token = service.config.auth_token
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise Unauthorized("missing or invalid bearer token")

    auth = Depends(require_auth)

    @app.exception_handler(CtIndexError)
    async def on_ctindex_error(request: Request, exc: CtIndexError):
        return _error_response(_STATUS_BY_CODE.get(exc.code, 400), exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error_response(400, "invalid_request", str(exc.errors()[:3]))

    @app.post("/tasks", status_code=202, dependencies=[auth])
    def submit_task(body: TaskIn):
        descriptor = body.series.to_descriptor()
        if body.lane == "daily":
            task = service.queue.enqueue_daily(descriptor)
        else:
            result = service.queue.enqueue_legacy([descriptor])
            if result.rejections:
                _, code, message = result.rejections[0]
                return _error_response(_STATUS_BY_CODE.get(code, 400), code, message)
            task = service.queue.get_by_series(descriptor.series_uid)
        return {"task_id": task.task_id, "state": task.state, "lane": task.lane}

    @app.get("/tasks/{task_id}", dependencies=[auth])
    def task_state(task_id: str):
        return _task_snapshot(service.queue.get(task_id))

    @app.get("/search", dependencies=[auth])
    def search(q: str, offset: int = 0, limit: int | None = None):
        if limit is None:
            limit = service.config.default_page_limit
        if limit > service.config.max_page_limit:
            raise MalformedQuery(
                f"limit exceeds the configured maximum of {service.config.max_page_limit}"
            )
        result = service.index.search_text(q, offset=offset, limit=limit)
        return {
            "total": result.total,
            "hits": list(result.hits),
            "rows": search_rows(service.index, result.hits),
            "offset": offset,
            "limit": limit,
        }

    @app.get("/series/{series_uid}/annotations", dependencies=[auth])
    def series_annotations(series_uid: str):
        record = service.pipeline.records.get(series_uid)
        if record is None:
            raise NotIndexed(f"series {series_uid!r} is not indexed")
        return annotation_set_to_dict(record.annotation_set)

    @app.get("/series/{series_uid}/fhir", dependencies=[auth])
    def series_fhir(series_uid: str):
        resource_set = service.pipeline.resource_set_for(series_uid)
        if resource_set is None:
            raise NotIndexed(f"series {series_uid!r} is not indexed")
        return to_transaction_bundle([resource_set], service.pipeline.profile)

    @app.get("/metrics", dependencies=[auth])
    def metrics() -> PlainTextResponse:
        return PlainTextResponse(service.metrics_text())

    @app.get("/mapping/coverage", dependencies=[auth])
    def mapping_coverage():
        report = coverage_report(service.mapping, service.catalog)
        return {
            "label_set_id": report.label_set_id,
            "catalog_size": report.catalog_size,
            "mapped": report.mapped,
            "mapped_fraction": report.mapped_fraction,
            "unmapped_labels": list(report.unmapped_labels),
            "degree_histogram": {str(k): v for k, v in sorted(report.degree_histogram.items())},
        }

    @app.get("/mapping/entries", dependencies=[auth])
    def mapping_entries():
        return [
            {
                "label": e.label,
                "snomed_code": e.snomed_code,
                "snomed_display": e.snomed_display,
                "radlex_id": e.radlex_id,
                "equivalence_degree": e.equivalence_degree,
            }
            for e in sorted(service.mapping.entries.values(), key=lambda e: e.label)
        ]

    return app
