"""File-backed variant of the broadcast queue for separate processes.

The file holds a block of control words followed by the two buffers. Every
control word has exactly one writer, so no atomic read-modify-write is
needed:

* the producer writes ``seq+1`` and the length of each sealed buffer, the
  final sequence number, and the abort flag
* consumer ``i`` writes only ``done[i]``, the number of buffers it has
  released

A buffer holding sequence ``s`` is free again once every ``done[i] > s``.
Waiting is a bounded spin followed by short sleeps.
"""

from __future__ import annotations

import os
import time
from typing import Iterator, Optional

import numpy as np

from .queue import Producer, QueueClosed, QueueConfig, QueueError

MAGIC = 0x51554555_50524F4D
# control word layout
_MAGIC, _WORDS, _CONSUMERS, _FINAL, _ABORT = 0, 1, 2, 3, 4
_SEQ = 5  # 2 words: seq+1 sealed in buffer b, 0 if never
_LEN = 7  # 2 words
_DONE = 9  # MAX 64 words, one per consumer
HEADER_WORDS = 9 + 64

SPIN = 200
SLEEP = 50e-6


def _wait(cond, aborted) -> None:
    spins = 0
    while not cond():
        if aborted():
            raise QueueClosed("shared queue aborted")
        spins += 1
        if spins > SPIN:
            time.sleep(SLEEP)


class _FileState:
    def __init__(self, path: str, cfg: Optional[QueueConfig], create: bool):
        if create:
            assert cfg is not None
            total = HEADER_WORDS + 2 * cfg.buffer_words
            with open(path, "wb") as fh:
                fh.truncate(total * 8)
            self.mem = np.memmap(path, dtype=np.uint64, mode="r+", shape=(total,))
            self.mem[:HEADER_WORDS] = 0
            self.mem[_WORDS] = cfg.buffer_words
            self.mem[_CONSUMERS] = cfg.num_consumers
            self.mem[_MAGIC] = MAGIC  # published last
        else:
            self.mem = np.memmap(path, dtype=np.uint64, mode="r+")
            if len(self.mem) < HEADER_WORDS or int(self.mem[_MAGIC]) != MAGIC:
                raise QueueError(f"{path} is not a shared queue file")
            cfg = QueueConfig(int(self.mem[_WORDS]) * 8, int(self.mem[_CONSUMERS]))
        self.cfg = cfg
        self.ctl = self.mem[:HEADER_WORDS]
        w = cfg.buffer_words
        self.buffers = [self.mem[HEADER_WORDS:HEADER_WORDS + w], self.mem[HEADER_WORDS + w:HEADER_WORDS + 2 * w]]

    @property
    def aborted(self) -> bool:
        return bool(self.ctl[_ABORT])

    def abort(self) -> None:
        self.ctl[_ABORT] = 1
        self.mem.flush()


class SharedFileProducer(Producer):
    """Producer side; same ``produce``/``close`` contract as the in-process queue."""

    def __init__(self, path: str, cfg: QueueConfig):
        super().__init__(_FileState(path, cfg, create=True))
        self.path = path

    def _released(self, seq: int) -> bool:
        ctl = self._s.ctl
        n = self._s.cfg.num_consumers
        return bool((ctl[_DONE:_DONE + n] > seq).all())

    def _seal(self, final: bool) -> None:
        ctl = self._s.ctl
        b = self._active
        ctl[_LEN + b] = self._pos
        if final:
            ctl[_FINAL] = self._seq + 1
        ctl[_SEQ + b] = self._seq + 1  # publishes the buffer
        self._seq += 1
        self.seals += 1

    def _seal_and_swap(self) -> None:
        self.syncs += 1
        self._seal(final=False)
        other = 1 - self._active
        pending = int(self._s.ctl[_SEQ + other]) - 1
        if pending >= 0:
            _wait(lambda: self._released(pending), lambda: self._s.aborted)
        self._active = other
        self._pos = 0

    def close(self) -> None:
        if self.closed:
            raise QueueError("double close")
        if not self.ended:
            raise QueueError("close before StreamEnd was produced")
        self.syncs += 1
        self._seal(final=True)
        self._s.mem.flush()
        self.closed = True

    def wait_drained(self, timeout: Optional[float] = None) -> bool:
        """Block until every consumer released every sealed buffer."""
        deadline = None if timeout is None else time.monotonic() + timeout
        last = self._seq - 1
        while not self._released(last):
            if self._s.aborted:
                return False
            if deadline is not None and time.monotonic() > deadline:
                return False
            time.sleep(SLEEP)
        return True

    def unlink(self) -> None:
        del self._s
        os.unlink(self.path)


class SharedFileConsumer:
    def __init__(self, path: str, index: int):
        _wait(lambda: os.path.exists(path) and os.path.getsize(path) >= HEADER_WORDS * 8, lambda: False)
        self._s = _FileState(path, None, create=False)
        if not 0 <= index < self._s.cfg.num_consumers:
            raise QueueError(f"consumer index {index} outside 0..{self._s.cfg.num_consumers - 1}")
        self.index = index
        self._next = 0
        self._holding = False
        self.syncs = 0
        self.done = False

    def next_chunk(self) -> Optional[np.ndarray]:
        s = self._s
        ctl = s.ctl
        self.syncs += 1
        if self._holding:
            ctl[_DONE + self.index] = self._next
            self._holding = False
        if self.done:
            return None
        b = self._next & 1
        want = self._next + 1

        def ready():
            if int(ctl[_SEQ + b]) == want:
                return True
            final = int(ctl[_FINAL])
            return final and self._next >= final

        _wait(ready, lambda: s.aborted)
        if int(ctl[_SEQ + b]) != want:
            self.done = True
            return None
        n = int(ctl[_LEN + b])
        self._holding = True
        self._next += 1
        view = s.buffers[b][:n].view(np.ndarray)
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
