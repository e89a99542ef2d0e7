"""Throughput benchmarks for the queue and the result maps.

Each metric is reported as one ``name value`` line so the output can be
diffed or scraped.
"""

from __future__ import annotations

import threading
import time
import zlib
from typing import Optional

import numpy as np

from .containers import Flavor, HtMap
from .events import EventKind, EventSpec, encode_batch
from .queue import DEFAULT_BUFFER_BYTES, QueueConfig, create

# kinds used by the mixed-size stream, with their full-spec word counts 1..3
_MIXED_KINDS = np.array(
    [EventKind.LOAD, EventKind.STORE, EventKind.PTR_CREATE, EventKind.HEAP_ALLOC,
     EventKind.HEAP_FREE, EventKind.FN_ENTER, EventKind.LOOP_ITER],
    dtype=np.int64,
)


def mixed_stream(num_events: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Encoded ``(words, starts)`` of ``num_events`` random events plus StreamEnd."""
    rng = np.random.default_rng(seed)
    spec = EventSpec.full()
    kinds = np.append(rng.choice(_MIXED_KINDS, size=num_events), 0)
    n = len(kinds)
    sizes = np.where(np.isin(kinds, [EventKind.LOAD, EventKind.STORE, EventKind.HEAP_ALLOC]),
                     rng.integers(1, 9, size=n), 0).astype(np.uint64)
    sizes[-1] = 0
    return encode_batch(
        kinds,
        rng.integers(0, 1 << 32, size=n, dtype=np.uint64),
        rng.integers(0, 1 << 63, size=n, dtype=np.uint64),
        rng.integers(0, 1 << 63, size=n, dtype=np.uint64),
        sizes,
        rng.integers(0, 1 << 16, size=n, dtype=np.uint64),
        spec,
    )


def checksum(words: np.ndarray, crc: int = 0) -> int:
    return zlib.crc32(np.ascontiguousarray(words).view(np.uint8), crc)


def stream_through_spmc(words, starts, num_consumers=1, buffer_bytes=DEFAULT_BUFFER_BYTES,
                        batch_events=1 << 16, work="checksum"):
    """Push a pre-encoded stream through the queue.

    ``work`` is what each consumer does per chunk: "checksum" reads every
    word, "touch" reads only its first and last word, which isolates the
    cost of the queue itself. Returns ``(seconds, per-consumer (crc, word
    count))``; crc is 0 in touch mode.
    """
    if work not in ("checksum", "touch"):
        raise ValueError(f"unknown consumer work {work!r}")
    producer, consumers = create(QueueConfig(buffer_bytes, num_consumers))
    results: list = [None] * num_consumers

    def consume(i):
        crc = n = 0
        for chunk in consumers[i]:
            if work == "checksum":
                crc = checksum(chunk, crc)
            elif len(chunk):
                crc ^= int(chunk[0]) ^ int(chunk[-1])
            n += len(chunk)
        results[i] = (crc if work == "checksum" else 0, n)

    threads = [threading.Thread(target=consume, args=(i,)) for i in range(num_consumers)]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    for lo in range(0, len(starts), batch_events):
        hi = min(len(starts), lo + batch_events)
        w_lo = int(starts[lo])
        w_hi = int(starts[hi]) if hi < len(starts) else len(words)
        producer.produce(words[w_lo:w_hi], starts[lo:hi] - w_lo)
    producer.close()
    for t in threads:
        t.join()
    return time.perf_counter() - t0, results


class LockedQueue:
    """Naive broadcast queue: one lock and one hand-off per event."""

    def __init__(self, num_consumers: int = 1, capacity: int = 1 << 16):
        self.cond = threading.Condition()
        self.items: list = []
        self.base = 0  # index of items[0] in the stream
        self.read = [0] * num_consumers
        self.capacity = capacity
        self.closed = False

    def put(self, event) -> None:
        with self.cond:
            while len(self.items) >= self.capacity:
                self._trim()
                if len(self.items) >= self.capacity:
                    self.cond.wait()
            self.items.append(event)
            self.cond.notify_all()

    def _trim(self) -> None:
        low = min(self.read) - self.base
        if low > 0:
            del self.items[:low]
            self.base += low

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()

    def get(self, i: int):
        with self.cond:
            pos = self.read[i] - self.base
            while pos >= len(self.items):
                if self.closed:
                    return None
                self.cond.wait()
                pos = self.read[i] - self.base
            self.read[i] += 1
            self.cond.notify_all()
            return self.items[pos]


def stream_through_locked(words, starts, num_consumers=1):
    q = LockedQueue(num_consumers)
    results: list = [None] * num_consumers
    bounds = np.append(starts, len(words)).tolist()

    def consume(i):
        n = 0
        while (ev := q.get(i)) is not None:
            n += len(ev)
        results[i] = n

    threads = [threading.Thread(target=consume, args=(i,)) for i in range(num_consumers)]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    for a, b in zip(bounds, bounds[1:]):
        q.put(words[a:b])
    q.close()
    for t in threads:
        t.join()
    return time.perf_counter() - t0, results


def bench_queue(num_events: int = 10_000_000, consumers=(1, 8), buffer_bytes: int = DEFAULT_BUFFER_BYTES,
                baseline_events: Optional[int] = None, seed: int = 0) -> dict[str, float]:
    """Events/second for the SPMC queue (both consumer work modes) and the locked baseline."""
    words, starts = mixed_stream(num_events, seed)
    n_events = len(starts)
    out = {}
    for work in ("touch", "checksum"):
        for c in consumers:
            secs, _ = stream_through_spmc(words, starts, c, buffer_bytes, work=work)
            out[f"spmc_{work}_events_per_sec_c{c}"] = n_events / secs
    base_n = min(n_events, baseline_events or n_events)
    bw, bs = mixed_stream(base_n - 1, seed)
    for c in consumers:
        secs, _ = stream_through_locked(bw, bs, c)
        out[f"locked_events_per_sec_c{c}"] = len(bs) / secs
    return out


def bench_map(num_inserts: int = 10_000_000, reducers=(1, 2, 4, 8), capacity: int = 1 << 16,
              num_keys: int = 1 << 12, seed: int = 0) -> dict[str, float]:
    """Insert throughput of the count map for several reducer counts and a plain Counter."""
    keys = np.random.default_rng(seed).integers(0, num_keys, size=num_inserts).tolist()
    out = {}
    for r in reducers:
        m = HtMap(Flavor.COUNT, capacity=capacity, reducers=r)
        t0 = time.perf_counter()
        insert = m.insert
        for k in keys:
            insert(k)
        m.snapshot()
        out[f"htcount_ops_per_sec_r{r}"] = num_inserts / (time.perf_counter() - t0)
    naive: dict = {}
    t0 = time.perf_counter()
    for k in keys:
        naive[k] = naive.get(k, 0) + 1
    out["naive_ops_per_sec"] = num_inserts / (time.perf_counter() - t0)
    return out


def format_metrics(metrics: dict[str, float]) -> str:
    return "".join(f"{k} {v:.1f}\n" for k, v in metrics.items())


__all__ = [
    "mixed_stream", "checksum", "stream_through_spmc", "stream_through_locked",
    "LockedQueue", "bench_queue", "bench_map", "format_metrics",
]
