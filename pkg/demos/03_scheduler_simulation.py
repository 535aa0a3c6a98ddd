"""Two-lane scheduling and a 24-hour throughput simulation.

Daily arrivals always dequeue before legacy backfill; legacy work drains in
chronological order. The virtual clock lets a full day of 8-worker operation
simulate in milliseconds.

Run: python demos/03_scheduler_simulation.py
"""

from datetime import date, timedelta

from ctindex import PoolConfig, SeriesDescriptor, Success, TaskQueue, run_pool


def series(uid, acquired, source="legacy"):
    return SeriesDescriptor(uid, "study", "p", acquired, "CT", source)


# Lane priority: the daily task jumps ahead of older legacy work.
queue = TaskQueue()
queue.enqueue_legacy(
    [
        series("legacy-2019", date(2019, 3, 1)),
        series("legacy-2003", date(2003, 7, 9)),
        series("legacy-2011", date(2011, 11, 30)),
    ]
)
queue.enqueue_daily(series("daily-today", date(2024, 2, 29), source="daily"))

print("dequeue order (daily first, then oldest legacy):")
while (task := queue.next_task()) is not None:
    print(f"  {task.lane:6s} {task.series.series_uid}")
    queue.complete(task.task_id, Success())

# Throughput: 8 workers, 2.4 minutes per series, saturated queue, 24 hours.
sim_queue = TaskQueue()
for i in range(6_000):
    sim_queue.enqueue_daily(series(f"sim-{i:05d}", date(2024, 1, 1), source="daily"))

report = run_pool(
    sim_queue,
    PoolConfig(worker_count=8, clock="virtual"),
    lambda task: Success(duration=timedelta(minutes=2.4)),
    window=timedelta(hours=24),
)
print(
    f"\n24 simulated hours on 8 workers @ 2.4 min/series:"
    f"\n  completed        {report.completed}"
    f"\n  series per hour  {report.series_per_hour:.1f}"
    f"\n  busy per worker  {report.busy_time_per_worker}"
)

# Failures retry up to max_attempts, then park as dead.
flaky_queue = TaskQueue(max_attempts=3)
for i in range(5):
    flaky_queue.enqueue_daily(series(f"flaky-{i}", date(2024, 1, 1), source="daily"))
from ctindex import Failure  # noqa: E402

run_pool(
    flaky_queue,
    PoolConfig(worker_count=2, clock="virtual"),
    lambda task: Failure("segmentation crashed", duration=timedelta(minutes=1)),
)
counts = flaky_queue.counts()
print(f"\nalways-failing pipeline: dead={counts['dead']} (after 3 attempts each)")
