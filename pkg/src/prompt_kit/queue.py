"""Broadcast single-producer / multiple-consumer queue with two ping-pong buffers.

The producer fills one buffer without talking to anyone. When the next run
of events does not fit, the buffer is sealed and handed to every consumer,
and the producer moves to the other buffer as soon as all consumers have
released it. Consumers receive a whole sealed buffer per ``next_chunk`` call,
so producer and consumers synchronise only at buffer boundaries.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

DEFAULT_BUFFER_BYTES = 2 << 20
MIN_BUFFER_BYTES = 4096
MAX_CONSUMERS = 64


class QueueError(RuntimeError):
    """Protocol misuse: bad config, oversized event, double close, ..."""


class QueueClosed(QueueError):
    """The queue was closed or aborted underneath the caller."""


@dataclass(frozen=True)
class QueueConfig:
    buffer_bytes: int = DEFAULT_BUFFER_BYTES
    num_consumers: int = 1

    def __post_init__(self):
        if self.buffer_bytes % 8:
            raise QueueError(f"buffer_bytes={self.buffer_bytes} is not a multiple of 8")
        if self.buffer_bytes < MIN_BUFFER_BYTES:
            raise QueueError(f"buffer_bytes={self.buffer_bytes} is below {MIN_BUFFER_BYTES}")
        if not 1 <= self.num_consumers <= MAX_CONSUMERS:
            raise QueueError(f"num_consumers={self.num_consumers} outside 1..{MAX_CONSUMERS}")

    @property
    def buffer_words(self) -> int:
        return self.buffer_bytes // 8


class _State:
    def __init__(self, cfg: QueueConfig):
        self.cfg = cfg
        self.buffers = [np.empty(cfg.buffer_words, dtype=np.uint64) for _ in range(2)]
        lock = threading.Lock()
        self.sealed = threading.Condition(lock)  # consumers wait here
        self.freed = threading.Condition(lock)  # the producer waits here
        self.sealed_seq = [-1, -1]
        self.length = [0, 0]
        self.pending = [0, 0]  # bitmask of consumers that have not released the buffer
        self.final_seq: Optional[int] = None
        self.aborted = False
        self.all_mask = (1 << cfg.num_consumers) - 1

    def abort(self):
        with self.sealed:
            self.aborted = True
            self.sealed.notify_all()
            self.freed.notify_all()


class Producer:
    def __init__(self, state: _State):
        self._s = state
        self._cap = state.cfg.buffer_words
        self._active = 0
        self._pos = 0
        self._seq = 0
        self.ended = False
        self.closed = False
        self.seals = 0
        self.syncs = 0
        self.words_produced = 0

    def produce(self, words, starts=None) -> None:
        """Append a run of whole encoded events.

        ``starts`` (optional) holds the offset of every event header in the
        run; with it a long run is split at event boundaries so buffers fill
        completely. Without it the run is placed as one unit.
        """
        if self.closed or self._s.aborted:
            raise QueueClosed("produce on a closed queue")
        if self.ended:
            raise QueueError("produce after StreamEnd")
        words = np.asarray(words, dtype=np.uint64)
        n = len(words)
        if not n:
            return
        if starts is None:
            if n > self._cap:
                raise QueueError(f"run of {n} words exceeds buffer of {self._cap} words")
            if n > self._cap - self._pos:
                self._seal_and_swap()
            self._write(words)
            if n == 1 and words[0] == 0:
                self.ended = True
            return
        starts = np.asarray(starts, dtype=np.int64)
        off = 0
        while off < n:
            space = self._cap - self._pos
            if n - off <= space:
                self._write(words[off:])
                break
            # largest prefix of whole events that fits
            idx = int(np.searchsorted(starts, off + space, side="right")) - 1
            cut = int(starts[idx]) if idx >= 0 else off
            if cut > off:
                self._write(words[off:cut])
                off = cut
            nxt = int(starts[idx + 1]) if idx + 1 < len(starts) else n
            if nxt - off > self._cap:
                raise QueueError(f"event of {nxt - off} words exceeds buffer of {self._cap} words")
            self._seal_and_swap()
        last = int(starts[-1]) if len(starts) else 0
        if last == n - 1 and words[last] == 0:
            self.ended = True

    def _write(self, run: np.ndarray) -> None:
        k = len(run)
        self._s.buffers[self._active][self._pos:self._pos + k] = run
        self._pos += k
        self.words_produced += k

    def _seal(self, final: bool) -> None:
        s = self._s
        b = self._active
        s.sealed_seq[b] = self._seq
        s.length[b] = self._pos
        s.pending[b] = s.all_mask
        if final:
            s.final_seq = self._seq
        self._seq += 1
        self.seals += 1
        s.sealed.notify_all()

    def _seal_and_swap(self) -> None:
        s = self._s
        with s.freed:
            self.syncs += 1
            self._seal(final=False)
            other = 1 - self._active
            while s.pending[other] and not s.aborted:
                s.freed.wait()
            if s.aborted:
                raise QueueClosed("queue aborted while waiting for a free buffer")
        self._active = other
        self._pos = 0

    def close(self) -> None:
        """Seal the active buffer as the last one. StreamEnd must already be produced."""
        if self.closed:
            raise QueueError("double close")
        if not self.ended:
            raise QueueError("close before StreamEnd was produced")
        with self._s.sealed:
            self.syncs += 1
            self._seal(final=True)
        self.closed = True

    def abort(self) -> None:
        self._s.abort()


class Consumer:
    def __init__(self, state: _State, index: int):
        self._s = state
        self.index = index
        self._bit = 1 << index
        self._held: Optional[int] = None
        self._next = 0
        self.syncs = 0
        self.done = False

    def next_chunk(self) -> Optional[np.ndarray]:
        """Return the next sealed buffer (read-only view), or None at end of stream."""
        s = self._s
        with s.sealed:
            self.syncs += 1
            if self._held is not None:
                b = self._held
                s.pending[b] &= ~self._bit
                if not s.pending[b]:
                    s.freed.notify()
                self._held = None
            if self.done:
                return None
            b = self._next & 1
            while s.sealed_seq[b] != self._next:
                if s.aborted:
                    raise QueueClosed("queue aborted")
                if s.final_seq is not None and self._next > s.final_seq:
                    self.done = True
                    return None
                s.sealed.wait()
            n = s.length[b]
            self._held = b
            self._next += 1
        view = s.buffers[b][:n].view()
        view.flags.writeable = False
        return view

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            chunk = self.next_chunk()
            if chunk is None:
                return
            yield chunk

    def abort(self) -> None:
        self._s.abort()


def create(cfg: QueueConfig) -> tuple[Producer, list[Consumer]]:
    state = _State(cfg)
    return Producer(state), [Consumer(state, i) for i in range(cfg.num_consumers)]
