"""Independent oracles: brute-force query evaluation, randomized query ASTs,
and a shadow-model replay of the task queue's ordering rules.

Nothing here shares evaluation code with the engines under test.
"""

from __future__ import annotations

import random
from datetime import date, timedelta

import ctindex.query as q
from ctindex.ingest import SeriesDescriptor
from ctindex.scheduler import Success, TaskQueue
from ctindex.search import IndexDocument, IndexedAnnotation


def doc_matches(node: q.Query, doc: IndexDocument) -> bool:
    if isinstance(node, q.MatchAll):
        return True
    if isinstance(node, q.HasCode):
        return any(a.snomed_code == node.code for a in doc.annotations)
    if isinstance(node, q.PatientIs):
        return doc.patient_pseudonym == node.pseudonym
    if isinstance(node, q.DateInRange):
        if node.min is not None and doc.acquisition_date < node.min:
            return False
        if node.max is not None and doc.acquisition_date > node.max:
            return False
        return True
    if isinstance(node, q.VolumeInRange):
        for a in doc.annotations:
            if a.snomed_code != node.code:
                continue
            if node.min is not None and a.volume_mm3 < node.min:
                continue
            if node.max is not None and a.volume_mm3 > node.max:
                continue
            return True
        return False
    if isinstance(node, q.IntensityInRange):
        for a in doc.annotations:
            if a.snomed_code != node.code:
                continue
            if node.min is not None and a.mean_intensity < node.min:
                continue
            if node.max is not None and a.mean_intensity > node.max:
                continue
            return True
        return False
    if isinstance(node, q.And):
        return all(doc_matches(c, doc) for c in node.children)
    if isinstance(node, q.Or):
        return any(doc_matches(c, doc) for c in node.children)
    if isinstance(node, q.Not):
        return not doc_matches(node.child, doc)
    raise AssertionError(f"unhandled node {node!r}")


def brute_force_search(node: q.Query, docs: list[IndexDocument]) -> list[str]:
    """Linear scan; ordered (acquisition date desc, series uid asc)."""
    hits = [d for d in docs if doc_matches(node, d)]
    hits.sort(key=lambda d: (-d.acquisition_date.toordinal(), d.series_uid))
    return [d.series_uid for d in hits]


def random_documents(rng: random.Random, n: int, code_pool: list[str]) -> list[IndexDocument]:
    docs = []
    for i in range(n):
        count = rng.randint(1, 8)
        annotations = tuple(
            IndexedAnnotation(
                snomed_code=rng.choice(code_pool),
                radlex_id=None,
                volume_mm3=round(rng.uniform(100.0, 2_000_000.0), 1),
                mean_intensity=round(rng.uniform(-800.0, 500.0), 2),
            )
            for _ in range(count)
        )
        docs.append(
            IndexDocument(
                series_uid=f"doc-{i:05d}",
                patient_pseudonym=f"patient-{rng.randint(0, n // 4 + 1):04d}",
                acquisition_date=date(2005, 1, 1) + timedelta(days=rng.randint(0, 7000)),
                annotations=annotations,
                indexer_version="1.0.0",
                mapping_version="1.0.0",
            )
        )
    return docs


def random_query(rng: random.Random, code_pool: list[str], patients: list[str],
                 max_depth: int = 6) -> q.Query:
    if max_depth <= 1:
        choice = rng.randint(0, 5)
        if choice == 0:
            return q.MatchAll()
        if choice == 1:
            return q.HasCode(rng.choice(code_pool))
        if choice == 2:
            return q.PatientIs(rng.choice(patients))
        if choice == 3:
            start = date(2005, 1, 1) + timedelta(days=rng.randint(0, 6000))
            span = timedelta(days=rng.randint(0, 2000))
            bounds = rng.randint(0, 2)
            return q.DateInRange(
                min=start if bounds != 1 else None,
                max=start + span if bounds != 2 else None,
            )
        lo = rng.uniform(0.0, 1_500_000.0)
        hi = lo + rng.uniform(0.0, 1_000_000.0)
        bounds = rng.randint(0, 2)
        cls = q.VolumeInRange if choice == 4 else q.IntensityInRange
        if cls is q.IntensityInRange:
            lo = rng.uniform(-800.0, 300.0)
            hi = lo + rng.uniform(0.0, 500.0)
        return cls(
            code=rng.choice(code_pool),
            min=round(lo, 1) if bounds != 1 else None,
            max=round(hi, 1) if bounds != 2 else None,
        )
    choice = rng.randint(0, 3)
    if choice == 0:
        return random_query(rng, code_pool, patients, 1)
    if choice == 1:
        return q.Not(random_query(rng, code_pool, patients, max_depth - 1))
    cls = q.And if choice == 2 else q.Or
    width = rng.randint(1, 3)
    return cls(
        children=tuple(
            random_query(rng, code_pool, patients, max_depth - 1) for _ in range(width)
        )
    )


def replay_scheduler_against_shadow_model(rng: random.Random, steps: int) -> int:
    """Drive a TaskQueue with random interleavings; predict every dequeue.

    The shadow model re-implements the ordering contract from scratch: FIFO
    within the daily lane, (acquisition date, series uid) within legacy, and
    absolute daily-over-legacy priority. Returns the number of dequeue events
    checked; raises AssertionError on the first divergence.
    """
    queue = TaskQueue(record_trace=True)
    shadow_daily: list[str] = []  # uids, FIFO
    shadow_legacy: set[tuple[date, str]] = set()
    running: list = []
    next_uid = 0
    dequeues = 0

    for _ in range(steps):
        roll = rng.random()
        if roll < 0.40:
            next_uid += 1
            acquired = date(2000 + rng.randint(0, 23), 1 + rng.randint(0, 11), 1)
            if rng.random() < 0.4:
                uid = f"d{next_uid:06d}"
                queue.enqueue_daily(
                    SeriesDescriptor(uid, "st", "p", acquired, "CT", "daily")
                )
                shadow_daily.append(uid)
            else:
                uid = f"l{next_uid:06d}"
                queue.enqueue_legacy(
                    [SeriesDescriptor(uid, "st", "p", acquired, "CT", "legacy")]
                )
                shadow_legacy.add((acquired, uid))
        elif roll < 0.80:
            task = queue.next_task()
            if shadow_daily:
                expected_lane, expected_uid = "daily", shadow_daily.pop(0)
            elif shadow_legacy:
                entry = min(shadow_legacy)
                shadow_legacy.discard(entry)
                expected_lane, expected_uid = "legacy", entry[1]
            else:
                assert task is None, f"queue returned {task} but shadow is empty"
                continue
            assert task is not None, "queue empty but shadow model has work"
            assert (task.lane, task.series.series_uid) == (expected_lane, expected_uid)
            running.append(task)
            dequeues += 1
        elif running:
            task = running.pop(rng.randrange(len(running)))
            queue.complete(task.task_id, Success())
    return dequeues
