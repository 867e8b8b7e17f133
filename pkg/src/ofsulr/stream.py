"""Micro-batch stream evaluation of a frozen model bundle.

A producer thread replays a table in fixed-size batches into a bounded queue;
the consumer scores batches strictly in ``batch_id`` order and keeps both
per-batch and cumulative metrics.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .bundle import ModelBundle
from .classifiers import threshold_of
from .errors import DataError, UsageError
from .ingest import Table, load_csv
from .metrics import Confusion, EvalReport, evaluate, report_from_confusion

DEFAULT_BATCH_SIZE = 1000


@dataclass
class StreamBatch:
    batch_id: int
    rows: Table
    arrival_time: float


@dataclass
class RunningMetrics:
    cumulative: Confusion = field(default_factory=Confusion)
    batches: list[EvalReport] = field(default_factory=list)
    batch_sizes: list[int] = field(default_factory=list)
    prefix: list[Confusion] = field(default_factory=list)
    predictions: list[np.ndarray] = field(default_factory=list, repr=False)

    def update(self, report: EvalReport, size: int, preds: np.ndarray | None = None) -> None:
        self.cumulative = self.cumulative + report.confusion
        self.batches.append(report)
        self.batch_sizes.append(size)
        self.prefix.append(self.cumulative)
        if preds is not None:
            self.predictions.append(preds)

    def final(self) -> EvalReport:
        """Metrics of the cumulative confusion (the headline numbers)."""
        return report_from_confusion(self.cumulative, sum(b.wall_time for b in self.batches))

    def batch_average(self) -> dict:
        """Unweighted mean of per-batch Ac/Fm/Pr/Re."""
        if not self.batches:
            return {"accuracy": 0.0, "f1": 0.0, "precision": 0.0, "recall": 0.0}
        return {
            k: float(np.mean([getattr(b, k) for b in self.batches]))
            for k in ("accuracy", "f1", "precision", "recall")
        }

    def to_dict(self) -> dict:
        fin = self.final()
        return {
            "n_batches": len(self.batches),
            "n_rows": sum(self.batch_sizes),
            "cumulative": fin.to_dict(),
            "batch_average": self.batch_average(),
        }


def iter_batches(table: Table, batch_size: int = DEFAULT_BATCH_SIZE, interval: float = 0.0) -> Iterator[StreamBatch]:
    """Slice ``table`` into ordered batches, optionally sleeping ``interval`` seconds between them."""
    if batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {batch_size}")
    for bid, start in enumerate(range(0, table.row_count, batch_size)):
        if bid and interval > 0:
            time.sleep(interval)
        yield StreamBatch(bid, table.slice(start, start + batch_size), time.monotonic())


def stream_source(
    path,
    batch_size: int = DEFAULT_BATCH_SIZE,
    interval: float | None = None,
    kind_hints=None,
) -> Iterator[StreamBatch]:
    """Replay a CSV file (or an in-memory :class:`Table`) as micro-batches, in row order."""
    table = path if isinstance(path, Table) else load_csv(path, kind_hints=kind_hints)
    return iter_batches(table, batch_size, interval or 0.0)


_DONE = object()


def _produce(source: Iterable[StreamBatch], q: queue.Queue, stop: threading.Event) -> None:
    def put(item) -> bool:
        # blocks while the queue is full (backpressure) unless the consumer gave up
        while not stop.is_set():
            try:
                q.put(item, timeout=0.05)
                return True
            except queue.Full:
                continue
        return False

    try:
        for batch in source:
            if not put(batch):
                return
        put(_DONE)
    except BaseException as exc:  # handed to the consumer
        put(exc)


def stream_evaluate(
    bundle: ModelBundle,
    source: Iterable[StreamBatch],
    queue_size: int = 4,
    threaded: bool = True,
    on_batch: Callable[[int, EvalReport], None] | None = None,
    keep_predictions: bool = False,
) -> RunningMetrics:
    """Score every batch with the frozen bundle; nothing is refit while streaming."""
    metrics = RunningMetrics()
    expected = 0

    def consume(batch: StreamBatch):
        nonlocal expected
        if batch.batch_id != expected:
            raise DataError(f"batch {batch.batch_id} arrived out of order (expected {expected})")
        expected += 1
        missing = [c for c in bundle.input_columns + [bundle.label_column] if c not in batch.rows]
        if missing:
            raise DataError(f"batch {batch.batch_id} schema mismatch: missing columns {missing}")
        t0 = time.perf_counter()
        X = bundle.features(batch.rows)
        scores = bundle.classifier.score(X)
        preds = (scores >= threshold_of(bundle.classifier)).astype(int)
        y = bundle.labels(batch.rows)
        rep = evaluate(y, preds, scores, wall_time=time.perf_counter() - t0)
        metrics.update(rep, batch.rows.row_count, preds if keep_predictions else None)
        if on_batch is not None:
            on_batch(batch.batch_id, rep)

    if not threaded:
        for batch in source:
            consume(batch)
        return metrics

    q: queue.Queue = queue.Queue(maxsize=max(1, queue_size))
    stop = threading.Event()
    producer = threading.Thread(target=_produce, args=(source, q, stop), daemon=True)
    producer.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                break
            if isinstance(item, BaseException):
                raise item
            consume(item)
    finally:
        stop.set()
        producer.join(timeout=5)
    return metrics


def jsonl_writer(path: str | Path):
    """``on_batch`` callback appending one JSON line per batch report to ``path``."""
    path = Path(path)

    def write(batch_id: int, report: EvalReport) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"batch_id": batch_id, **report.to_dict()}, sort_keys=True) + "\n")

    return write
