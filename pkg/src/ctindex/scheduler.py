"""Two-lane priority task queue and worker pool.

Daily arrivals always dequeue before legacy backfill work; the legacy lane is
processed oldest acquisition first. Priority is a dequeue-ordering guarantee,
not preemption: a running legacy task is never interrupted. The pool runs
either on the real clock (threads) or on a virtual clock (discrete-event
simulation in a single thread), which lets multi-day throughput scenarios
execute in milliseconds.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Callable, Iterable

from .errors import CtIndexError
from .ingest import SeriesDescriptor

LANES = ("daily", "legacy")

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"
DEAD = "dead"


class RejectedModality(CtIndexError):
    code = "rejected_modality"


class DuplicateActiveTask(CtIndexError):
    code = "duplicate_active_task"


class UnknownTask(CtIndexError):
    code = "unknown_task"


class InvalidState(CtIndexError):
    code = "invalid_state"


class ConfigInvalid(CtIndexError):
    code = "config_invalid"


@dataclass
class IndexTask:
    task_id: str
    series: SeriesDescriptor
    lane: str
    enqueued_at: datetime
    state: str = QUEUED
    attempts: int = 0
    last_error: str | None = None
    # FIFO sequence assigned at first enqueue; retries keep it so a task
    # never loses its place in the lane ordering.
    seq: int = 0


@dataclass(frozen=True)
class Success:
    duration: timedelta | None = None


@dataclass(frozen=True)
class Failure:
    reason: str
    duration: timedelta | None = None


Outcome = Success | Failure


@dataclass(frozen=True)
class PoolConfig:
    worker_count: int = 8
    max_attempts: int = 3
    retry_backoff: tuple[float, ...] = ()
    clock: str = "real"

    def validate(self) -> None:
        if self.worker_count < 1:
            raise ConfigInvalid("worker_count must be >= 1")
        if self.max_attempts < 1:
            raise ConfigInvalid("max_attempts must be >= 1")
        if self.clock not in ("real", "virtual"):
            raise ConfigInvalid(f"clock must be 'real' or 'virtual', got {self.clock!r}")


@dataclass(frozen=True)
class ThroughputReport:
    window_start: datetime
    window_end: datetime
    completed: int
    failed: int
    busy_time_per_worker: timedelta

    @property
    def window_hours(self) -> float:
        return (self.window_end - self.window_start).total_seconds() / 3600.0

    @property
    def series_per_hour(self) -> float:
        hours = self.window_hours
        return self.completed / hours if hours > 0 else 0.0


@dataclass(frozen=True)
class DequeueEvent:
    """One entry of the dequeue trace, for ordering audits."""

    task_id: str
    lane: str
    acquisition_date: date
    daily_queued_before: int


@dataclass(frozen=True)
class LegacyEnqueueResult:
    enqueued: int
    rejections: tuple[tuple[str, str, str], ...]  # (series_uid, error code, reason)


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class TaskQueue:
    """Thread-safe two-lane queue with retry bookkeeping.

    Dequeue-and-mark-running is atomic; all mutation happens under one lock.
    When ``record_trace`` is set, every dequeue appends a :class:`DequeueEvent`
    to ``trace`` so ordering invariants can be replayed after the fact.
    """

    def __init__(self, max_attempts: int = 3, retry_backoff: tuple[float, ...] = (),
                 record_trace: bool = False):
        if max_attempts < 1:
            raise ConfigInvalid("max_attempts must be >= 1")
        self.max_attempts = max_attempts
        self.retry_backoff = tuple(retry_backoff)
        self._lock = threading.Condition()
        self._tasks: dict[str, IndexTask] = {}
        self._daily: list[tuple[int, str]] = []  # (seq, task_id)
        self._legacy: list[tuple[date, str, str]] = []  # (acq_date, series_uid, task_id)
        self._delayed: list[tuple[datetime, int, str]] = []  # (not_before, seq, task_id)
        self._active_series: set[str] = set()
        self._seq = itertools.count(1)
        self.record_trace = record_trace
        self.trace: list[DequeueEvent] = []

    # -- enqueue ----------------------------------------------------------

    def _admit(self, series: SeriesDescriptor, lane: str, now: datetime) -> IndexTask:
        if series.modality != "CT":
            raise RejectedModality(
                f"series {series.series_uid}: modality {series.modality} not indexed (CT only)"
            )
        if series.series_uid in self._active_series:
            raise DuplicateActiveTask(
                f"series {series.series_uid} already queued or running"
            )
        seq = next(self._seq)
        task = IndexTask(
            task_id=f"t-{seq:08d}",
            series=series,
            lane=lane,
            enqueued_at=now,
            seq=seq,
        )
        self._tasks[task.task_id] = task
        self._active_series.add(series.series_uid)
        self._push(task)
        self._lock.notify_all()
        return task

    def _push(self, task: IndexTask) -> None:
        if task.lane == "daily":
            heapq.heappush(self._daily, (task.seq, task.task_id))
        else:
            heapq.heappush(
                self._legacy,
                (task.series.acquisition_date, task.series.series_uid, task.task_id),
            )

    def enqueue_daily(self, series: SeriesDescriptor, now: datetime | None = None) -> IndexTask:
        with self._lock:
            return self._admit(series, "daily", now or _utcnow())

    def enqueue_legacy(
        self, batch: Iterable[SeriesDescriptor], now: datetime | None = None
    ) -> LegacyEnqueueResult:
        """Enqueue a legacy batch; per-item rejections do not abort the rest."""
        now = now or _utcnow()
        enqueued = 0
        rejections: list[tuple[str, str, str]] = []
        with self._lock:
            for series in batch:
                try:
                    self._admit(series, "legacy", now)
                    enqueued += 1
                except (RejectedModality, DuplicateActiveTask) as exc:
                    rejections.append((series.series_uid, exc.code, exc.message))
        return LegacyEnqueueResult(enqueued=enqueued, rejections=tuple(rejections))

    # -- dequeue ----------------------------------------------------------

    def _mature_delayed(self, now: datetime) -> None:
        while self._delayed and self._delayed[0][0] <= now:
            _, _, task_id = heapq.heappop(self._delayed)
            self._push(self._tasks[task_id])

    def _pop_queued(self, heap: list) -> IndexTask | None:
        # Heap entries may be stale (task moved on); skip them lazily.
        while heap:
            entry = heapq.heappop(heap)
            task = self._tasks.get(entry[-1])
            if task is not None and task.state == QUEUED:
                return task
        return None

    def next_task(self, now: datetime | None = None) -> IndexTask | None:
        """Atomically dequeue the highest-priority task and mark it running.

        Returns None when nothing is ready. Daily work always wins; the
        legacy lane is served oldest acquisition date first.
        """
        now = now or _utcnow()
        with self._lock:
            self._mature_delayed(now)
            daily_depth = 0
            if self.record_trace:
                daily_depth = sum(
                    1 for _, tid in self._daily if self._tasks[tid].state == QUEUED
                )
            task = self._pop_queued(self._daily)
            if task is None:
                task = self._pop_queued(self._legacy)
            if task is None:
                return None
            task.state = RUNNING
            if self.record_trace:
                self.trace.append(
                    DequeueEvent(
                        task_id=task.task_id,
                        lane=task.lane,
                        acquisition_date=task.series.acquisition_date,
                        daily_queued_before=daily_depth,
                    )
                )
            return task

    def complete(self, task_id: str, outcome: Outcome, now: datetime | None = None) -> IndexTask:
        """Finish a running task: done on success, retry or dead on failure."""
        now = now or _utcnow()
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTask(f"unknown task {task_id!r}")
            if task.state != RUNNING:
                raise InvalidState(
                    f"task {task_id} is {task.state}, expected {RUNNING}"
                )
            task.attempts += 1
            if isinstance(outcome, Success):
                task.state = DONE
                self._active_series.discard(task.series.series_uid)
            else:
                task.last_error = outcome.reason
                if task.attempts >= self.max_attempts:
                    task.state = DEAD
                    self._active_series.discard(task.series.series_uid)
                else:
                    # Re-queue under the original ordering key, optionally
                    # after a backoff delay.
                    task.state = QUEUED
                    delay_idx = task.attempts - 1
                    if delay_idx < len(self.retry_backoff):
                        not_before = now + timedelta(seconds=self.retry_backoff[delay_idx])
                        heapq.heappush(self._delayed, (not_before, task.seq, task.task_id))
                    else:
                        self._push(task)
            self._lock.notify_all()
            return task

    # -- introspection ----------------------------------------------------

    def get(self, task_id: str) -> IndexTask:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTask(f"unknown task {task_id!r}")
            return task

    def get_by_series(self, series_uid: str) -> IndexTask:
        """Most recently enqueued task for a series."""
        with self._lock:
            candidates = [
                t for t in self._tasks.values() if t.series.series_uid == series_uid
            ]
            if not candidates:
                raise UnknownTask(f"no task for series {series_uid!r}")
            return max(candidates, key=lambda t: t.seq)

    def counts(self) -> dict[str, int]:
        with self._lock:
            out = {state: 0 for state in (QUEUED, RUNNING, DONE, FAILED, DEAD)}
            lanes = {f"queued_{lane}": 0 for lane in LANES}
            for task in self._tasks.values():
                out[task.state] += 1
                if task.state == QUEUED:
                    lanes[f"queued_{task.lane}"] += 1
            out.update(lanes)
            out["total"] = len(self._tasks)
            return out

    def tasks(self) -> list[IndexTask]:
        with self._lock:
            return list(self._tasks.values())

    def has_pending(self) -> bool:
        """True while any task is queued, delayed, or running."""
        with self._lock:
            return any(
                t.state in (QUEUED, RUNNING) for t in self._tasks.values()
            )

    def earliest_delayed(self) -> datetime | None:
        """Maturity time of the next backoff-delayed retry, if any."""
        with self._lock:
            return self._delayed[0][0] if self._delayed else None

    # -- persistence ------------------------------------------------------

    def to_snapshot(self) -> dict:
        with self._lock:
            return {
                "max_attempts": self.max_attempts,
                "retry_backoff": list(self.retry_backoff),
                "next_seq": max((t.seq for t in self._tasks.values()), default=0) + 1,
                "tasks": [
                    {
                        "task_id": t.task_id,
                        "series": {
                            "series_uid": t.series.series_uid,
                            "study_uid": t.series.study_uid,
                            "patient_pseudonym": t.series.patient_pseudonym,
                            "acquisition_date": t.series.acquisition_date.isoformat(),
                            "modality": t.series.modality,
                            "source": t.series.source,
                            "body_region_hint": t.series.body_region_hint,
                        },
                        "lane": t.lane,
                        "enqueued_at": t.enqueued_at.isoformat(),
                        "state": t.state,
                        "attempts": t.attempts,
                        "last_error": t.last_error,
                        "seq": t.seq,
                    }
                    for t in sorted(self._tasks.values(), key=lambda t: t.seq)
                ],
            }

    @classmethod
    def from_snapshot(cls, payload: dict, record_trace: bool = False) -> TaskQueue:
        queue = cls(
            max_attempts=payload["max_attempts"],
            retry_backoff=tuple(payload.get("retry_backoff", ())),
            record_trace=record_trace,
        )
        for raw in payload["tasks"]:
            series = SeriesDescriptor(
                series_uid=raw["series"]["series_uid"],
                study_uid=raw["series"]["study_uid"],
                patient_pseudonym=raw["series"]["patient_pseudonym"],
                acquisition_date=date.fromisoformat(raw["series"]["acquisition_date"]),
                modality=raw["series"]["modality"],
                source=raw["series"]["source"],
                body_region_hint=raw["series"].get("body_region_hint"),
            )
            task = IndexTask(
                task_id=raw["task_id"],
                series=series,
                lane=raw["lane"],
                enqueued_at=datetime.fromisoformat(raw["enqueued_at"]),
                state=raw["state"],
                attempts=raw["attempts"],
                last_error=raw.get("last_error"),
                seq=raw["seq"],
            )
            # Interrupted runs resume: running tasks were never completed.
            if task.state == RUNNING:
                task.state = QUEUED
            queue._tasks[task.task_id] = task
            if task.state == QUEUED:
                queue._push(task)
            if task.state in (QUEUED, RUNNING):
                queue._active_series.add(series.series_uid)
        queue._seq = itertools.count(payload.get("next_seq", len(payload["tasks"]) + 1))
        return queue


# ---------------------------------------------------------------------------
# Worker pool
# ---------------------------------------------------------------------------

#: Fixed origin for virtual-clock runs, so simulated timestamps are stable.
VIRTUAL_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


class VirtualClock:
    """Simulation clock; time moves only when the event loop advances it."""

    def __init__(self, start: datetime = VIRTUAL_EPOCH):
        self._now = start

    def now(self) -> datetime:
        return self._now

    def advance_to(self, when: datetime) -> None:
        if when < self._now:
            raise ConfigInvalid(f"virtual clock cannot move backwards to {when}")
        self._now = when


Pipeline = Callable[[IndexTask], Outcome]


def run_pool(
    queue: TaskQueue,
    config: PoolConfig,
    pipeline: Pipeline,
    *,
    window: timedelta | None = None,
    stop_event: threading.Event | None = None,
    clock: VirtualClock | None = None,
) -> ThroughputReport:
    """Process queued tasks with ``worker_count`` workers until drained.

    With ``config.clock == "virtual"`` the pool is simulated: pipeline calls
    execute immediately and the clock advances by each outcome's declared
    ``duration``. ``window`` caps the (virtual or real) run length; without it
    the pool drains the queue and stops.
    """
    config.validate()
    if config.clock == "virtual":
        return _run_pool_virtual(queue, config, pipeline, window=window, clock=clock)
    return _run_pool_real(queue, config, pipeline, window=window, stop_event=stop_event)


def _run_pool_virtual(
    queue: TaskQueue,
    config: PoolConfig,
    pipeline: Pipeline,
    *,
    window: timedelta | None,
    clock: VirtualClock | None,
) -> ThroughputReport:
    clock = clock or VirtualClock()
    start = clock.now()
    end = start + window if window is not None else None

    completed = 0
    failed = 0
    busy = timedelta(0)
    counter = itertools.count()
    # Event heap entries: (time, tiebreak, worker, completion).
    # completion is None for a dequeue attempt, else (task_id, outcome).
    events: list[tuple[datetime, int, int, tuple | None]] = []
    idle: set[int] = set()
    for worker in range(config.worker_count):
        heapq.heappush(events, (start, next(counter), worker, None))

    while events:
        when, _, worker, completion = heapq.heappop(events)
        if end is not None and when > end:
            break
        clock.advance_to(when)

        if completion is not None:
            task_id, outcome = completion
            queue.complete(task_id, outcome, now=when)
            if isinstance(outcome, Success):
                completed += 1
            else:
                failed += 1
            # New work may have materialized (retries); wake idle workers.
            for idler in sorted(idle):
                heapq.heappush(events, (when, next(counter), idler, None))
            idle.clear()

        if end is not None and when >= end:
            continue
        task = queue.next_task(now=when)
        if task is None:
            idle.add(worker)
            if not events:
                # Only backoff-delayed retries can still mature; jump there.
                wake_at = queue.earliest_delayed()
                if wake_at is not None and (end is None or wake_at <= end):
                    heapq.heappush(events, (wake_at, next(counter), idle.pop(), None))
            continue
        outcome = pipeline(task)
        if outcome.duration is None:
            raise ConfigInvalid(
                "virtual-clock pipelines must declare a duration on every outcome"
            )
        busy += outcome.duration
        heapq.heappush(
            events,
            (when + outcome.duration, next(counter), worker, (task.task_id, outcome)),
        )

    window_end = end if end is not None else clock.now()
    return ThroughputReport(
        window_start=start,
        window_end=window_end,
        completed=completed,
        failed=failed,
        busy_time_per_worker=busy / config.worker_count,
    )


def _run_pool_real(
    queue: TaskQueue,
    config: PoolConfig,
    pipeline: Pipeline,
    *,
    window: timedelta | None,
    stop_event: threading.Event | None,
) -> ThroughputReport:
    stop = stop_event or threading.Event()
    start = _utcnow()
    deadline = start + window if window is not None else None
    lock = threading.Lock()
    completed = 0
    failed = 0
    busy = timedelta(0)

    def worker_loop() -> None:
        nonlocal completed, failed, busy
        while not stop.is_set():
            if deadline is not None and _utcnow() >= deadline:
                return
            task = queue.next_task()
            if task is None:
                if not queue.has_pending():
                    return
                stop.wait(0.005)
                continue
            began = _utcnow()
            try:
                outcome = pipeline(task)
            except Exception as exc:  # pipeline bugs become task failures
                outcome = Failure(reason=f"{type(exc).__name__}: {exc}")
            elapsed = _utcnow() - began
            queue.complete(task.task_id, outcome)
            with lock:
                busy += elapsed
                if isinstance(outcome, Success):
                    completed += 1
                else:
                    failed += 1

    threads = [
        threading.Thread(target=worker_loop, name=f"ctindex-worker-{i}", daemon=True)
        for i in range(config.worker_count)
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    end = _utcnow()
    return ThroughputReport(
        window_start=start,
        window_end=end,
        completed=completed,
        failed=failed,
        busy_time_per_worker=busy / config.worker_count,
    )
