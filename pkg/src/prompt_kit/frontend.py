"""Trace-replay frontend: the stand-in for compiler instrumentation.

A trace is a text file with one event per line, mirroring the event table
one-to-one::

    prog_start <pid>            prog_end <pid>
    fn_enter <fid>              fn_exit <fid>
    loop_invoke <lid>           loop_iter <lid>          loop_exit <lid>
    load <iid> <addr> <val> <size>
    store <iid> <addr> <val> <size>
    ptr_create <iid> <addr> <type>
    heap_alloc <iid> <addr> <size>      heap_free <iid> <addr>
    stack_alloc <iid> <addr> <size>     stack_free <iid> <addr>
    global_init <oid> <addr> <size>

Addresses and values are hex without ``0x``; ids, sizes and type tags are
decimal. ``#`` starts a comment.
"""

from __future__ import annotations

import logging
from typing import Iterable, Iterator, Optional, TextIO, Union

import numpy as np

from .events import (
    MAX_SIZE,
    VALID_ARGS,
    Event,
    EventKind,
    EventSpec,
    KIND_BY_MNEMONIC,
    SIZED_KINDS,
)

log = logging.getLogger(__name__)

# Field order on a trace line after the primary id; "h" fields are hex.
_LINE_FIELDS: dict[EventKind, tuple[tuple[str, str], ...]] = {
    EventKind.LOAD: (("address", "h"), ("value", "h"), ("size", "d")),
    EventKind.STORE: (("address", "h"), ("value", "h"), ("size", "d")),
    EventKind.PTR_CREATE: (("address", "h"), ("type_id", "d")),
    EventKind.HEAP_ALLOC: (("address", "h"), ("size", "d")),
    EventKind.HEAP_FREE: (("address", "h"),),
    EventKind.STACK_ALLOC: (("address", "h"), ("size", "d")),
    EventKind.STACK_FREE: (("address", "h"),),
    EventKind.GLOBAL_INIT: (("address", "h"), ("size", "d")),
}
_ACCESS_SIZES = frozenset({1, 2, 4, 8})
_ALLOC_KINDS = frozenset({EventKind.HEAP_ALLOC, EventKind.STACK_ALLOC, EventKind.GLOBAL_INIT})


class TraceError(ValueError):
    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


def parse_line(line: str, lineno: Optional[int] = None) -> Optional[Event]:
    """Parse one trace line; returns None for blank and comment lines."""
    text = line.split("#", 1)[0].split()
    if not text:
        return None
    kind = KIND_BY_MNEMONIC.get(text[0])
    if kind is None:
        raise TraceError(f"unknown event {text[0]!r}", lineno)
    fields = _LINE_FIELDS.get(kind, ())
    if len(text) != 2 + len(fields):
        raise TraceError(f"{text[0]} takes {1 + len(fields)} fields, got {len(text) - 1}", lineno)
    try:
        pid = int(text[1], 10)
    except ValueError:
        raise TraceError(f"malformed id {text[1]!r}", lineno) from None
    if not 0 <= pid <= 0xFFFFFFFF:
        raise TraceError(f"id {pid} does not fit in 32 bits", lineno)
    args = {}
    for (name, base), tok in zip(fields, text[2:]):
        try:
            val = int(tok, 16 if base == "h" else 10)
        except ValueError:
            kind_name = "hex" if base == "h" else "decimal"
            raise TraceError(f"malformed {kind_name} {name} {tok!r}", lineno) from None
        if tok.startswith(("+", "-", "0x", "0X")) or val < 0 or val >> 64:
            raise TraceError(f"{name} {tok!r} out of range", lineno)
        args[name] = val
    ev = Event(kind, pid, **args)
    if kind in (EventKind.LOAD, EventKind.STORE) and ev.size not in _ACCESS_SIZES:
        raise TraceError(f"access size must be 1, 2, 4 or 8, got {ev.size}", lineno)
    if kind in _ALLOC_KINDS and not 1 <= ev.size <= MAX_SIZE:
        raise TraceError(f"allocation size {ev.size} outside 1..{MAX_SIZE}", lineno)
    if kind is EventKind.PTR_CREATE and ev.type_id > 0xFFFF:
        raise TraceError(f"type tag {ev.type_id} does not fit in 16 bits", lineno)
    return ev


def iter_trace(reader: Union[TextIO, Iterable[str]]) -> Iterator[Event]:
    """Parse and validate lazily, one event per non-comment line."""
    started = ended = False
    lineno = 0
    for lineno, line in enumerate(reader, 1):
        ev = parse_line(line, lineno)
        if ev is None:
            continue
        if ended:
            raise TraceError("event after prog_end", lineno)
        if not started:
            if ev.kind is not EventKind.PROG_START:
                raise TraceError("trace must begin with prog_start", lineno)
            started = True
        elif ev.kind is EventKind.PROG_START:
            raise TraceError("duplicate prog_start", lineno)
        if ev.kind is EventKind.PROG_END:
            ended = True
        yield ev
    if not started:
        raise TraceError("prog_start missing (empty trace)")
    if not ended:
        raise TraceError("prog_end missing", lineno)


def parse_trace(reader: Union[str, TextIO, Iterable[str]]) -> list[Event]:
    if isinstance(reader, str):
        reader = reader.splitlines()
    return list(iter_trace(reader))


def format_event(ev: Event) -> str:
    parts = [ev.kind.mnemonic, str(ev.primary_id)]
    for name, base in _LINE_FIELDS.get(ev.kind, ()):
        val = getattr(ev, name)
        parts.append(f"{val:x}" if base == "h" else str(val))
    return " ".join(parts)


def format_trace(events: Iterable[Event]) -> str:
    return "".join(format_event(ev) + "\n" for ev in events if ev.kind is not EventKind.STREAM_END)


def specialize(ev: Event, spec: EventSpec) -> Optional[Event]:
    """Drop the event if its kind is unwanted, else zero its unwanted arguments."""
    args = spec.wanted.get(ev.kind)
    if args is None:
        return None
    changes = {}
    for name in VALID_ARGS[ev.kind]:
        if name == "size" or name in args:
            continue
        if getattr(ev, name):
            changes[name] = 0
    return ev._replace(**changes) if changes else ev


class ReplayStats(tuple):
    """``(emitted, dropped)`` event counts, StreamEnd excluded."""

    def __new__(cls, emitted: int, dropped: int, words: int = 0):
        self = super().__new__(cls, (emitted, dropped))
        self.words = words
        return self

    @property
    def emitted(self) -> int:
        return self[0]

    @property
    def dropped(self) -> int:
        return self[1]


def replay(events: Iterable[Event], spec: EventSpec, producer, batch_words: int = 1 << 15) -> ReplayStats:
    """Encode every wanted event, push it through ``producer``, end the stream.

    Events are encoded into runs of about ``batch_words`` words; the queue
    splits a run only at event boundaries.
    """
    layouts = {k: spec.payload_args(k) for k in spec.wanted if k is not EventKind.STREAM_END}
    buf: list[int] = []
    starts: list[int] = []
    emitted = dropped = total = 0
    for ev in events:
        kind = ev.kind
        if kind is EventKind.STREAM_END:
            break
        args = layouts.get(kind)
        if args is None:
            dropped += 1
            continue
        starts.append(len(buf))
        size = ev.size if kind in SIZED_KINDS else 0
        buf.append(int(kind) | (size << 8) | (ev.primary_id << 32))
        for a in args:
            buf.append(getattr(ev, a))
        emitted += 1
        if len(buf) >= batch_words:
            total += len(buf)
            producer.produce(np.array(buf, dtype=np.uint64), np.array(starts, dtype=np.int64))
            buf.clear()
            starts.clear()
    starts.append(len(buf))
    buf.append(0)
    total += len(buf)
    producer.produce(np.array(buf, dtype=np.uint64), np.array(starts, dtype=np.int64))
    log.debug("replay %s: emitted=%d dropped=%d words=%d", spec.module_name, emitted, dropped, total)
    return ReplayStats(emitted, dropped, total)
