"""Event taxonomy, event specifications, and the 64-bit word wire codec.

Every event travels as a header word followed by zero or more argument
words::

    bits  0..7   kind code
    bits  8..31  size in bytes (24 bits)
    bits 32..63  primary id (instruction / function / loop / object / process)

The argument words that follow are exactly the ones the consuming module
asked for, in the order it listed them. ``size`` lives in the header and
never costs an extra word. ``StreamEnd`` is the lone word ``0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF
MAX_SIZE = (1 << 24) - 1


class SpecError(ValueError):
    """Malformed event specification document."""


class CodecError(ValueError):
    """A word sequence that cannot be encoded or decoded under a spec."""


class EventKind(enum.IntEnum):
    STREAM_END = 0
    LOAD = 1
    STORE = 2
    PTR_CREATE = 3
    HEAP_ALLOC = 4
    HEAP_FREE = 5
    STACK_ALLOC = 6
    STACK_FREE = 7
    GLOBAL_INIT = 8
    FN_ENTER = 9
    FN_EXIT = 10
    LOOP_INVOKE = 11
    LOOP_ITER = 12
    LOOP_EXIT = 13
    PROG_START = 14
    PROG_END = 15

    @property
    def mnemonic(self) -> str:
        return _MNEMONICS[self]


_MNEMONICS = {
    EventKind.STREAM_END: "stream_end",
    EventKind.LOAD: "load",
    EventKind.STORE: "store",
    EventKind.PTR_CREATE: "ptr_create",
    EventKind.HEAP_ALLOC: "heap_alloc",
    EventKind.HEAP_FREE: "heap_free",
    EventKind.STACK_ALLOC: "stack_alloc",
    EventKind.STACK_FREE: "stack_free",
    EventKind.GLOBAL_INIT: "global_init",
    EventKind.FN_ENTER: "fn_enter",
    EventKind.FN_EXIT: "fn_exit",
    EventKind.LOOP_INVOKE: "loop_invoke",
    EventKind.LOOP_ITER: "loop_iter",
    EventKind.LOOP_EXIT: "loop_exit",
    EventKind.PROG_START: "prog_start",
    EventKind.PROG_END: "prog_end",
}
KIND_BY_MNEMONIC = {m: k for k, m in _MNEMONICS.items() if k is not EventKind.STREAM_END}

ARGUMENTS = ("address", "value", "size", "type_id")

# Arguments each kind may carry, besides the always-present primary id.
VALID_ARGS: dict[EventKind, tuple[str, ...]] = {
    EventKind.LOAD: ("address", "value", "size"),
    EventKind.STORE: ("address", "value", "size"),
    EventKind.PTR_CREATE: ("address", "type_id"),
    EventKind.HEAP_ALLOC: ("address", "size"),
    EventKind.HEAP_FREE: ("address",),
    EventKind.STACK_ALLOC: ("address", "size"),
    EventKind.STACK_FREE: ("address",),
    EventKind.GLOBAL_INIT: ("address", "size"),
}
for _k in EventKind:
    VALID_ARGS.setdefault(_k, ())

CONTEXT_KINDS = frozenset(
    {
        EventKind.FN_ENTER,
        EventKind.FN_EXIT,
        EventKind.LOOP_INVOKE,
        EventKind.LOOP_ITER,
        EventKind.LOOP_EXIT,
    }
)
TERMINAL_KINDS = frozenset({EventKind.PROG_START, EventKind.PROG_END})
IMPLICIT_KINDS = frozenset({EventKind.STREAM_END, EventKind.PROG_START, EventKind.PROG_END})
SIZED_KINDS = frozenset(k for k, args in VALID_ARGS.items() if "size" in args)


class Event(NamedTuple):
    kind: EventKind
    primary_id: int = 0
    address: int = 0
    value: int = 0
    size: int = 0
    type_id: int = 0

    def __repr__(self) -> str:
        parts = [f"{self.kind.name}{{{self.primary_id}"]
        for name in VALID_ARGS[self.kind]:
            parts.append(f"{name}={getattr(self, name):#x}")
        return ", ".join(parts) + "}"


STREAM_END = Event(EventKind.STREAM_END)


@dataclass(frozen=True)
class EventSpec:
    """Which event kinds a module consumes, and which arguments of each.

    ``wanted`` maps a kind to its ordered argument list. The implicit kinds
    (program start/end and the stream terminator) are always present.
    """

    module_name: str
    wanted: Mapping[EventKind, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        wanted = {EventKind(k): tuple(v) for k, v in self.wanted.items()}
        for kind in IMPLICIT_KINDS:
            wanted.setdefault(kind, ())
        for kind, args in wanted.items():
            _check_args(kind, args)
        object.__setattr__(self, "wanted", wanted)
        object.__setattr__(self, "_layout", _build_layout(wanted))

    @classmethod
    def full(cls, module_name: str = "all") -> "EventSpec":
        return cls(module_name, {k: VALID_ARGS[k] for k in EventKind})

    def wants(self, kind: EventKind) -> bool:
        return kind in self.wanted

    def word_count(self, kind: EventKind) -> int:
        """Words one event of ``kind`` occupies on the wire."""
        return 1 + len(self._layout[kind])

    def payload_args(self, kind: EventKind) -> tuple[str, ...]:
        """Argument names that occupy a word after the header, in order."""
        return self._layout[kind]

    def keeps(self, kind: EventKind, arg: str) -> bool:
        if arg == "size":
            return kind in self.wanted
        return arg in self.wanted.get(kind, ())

    def covers(self, other: "EventSpec") -> bool:
        """True when every kind/argument ``other`` wants is also wanted here."""
        for kind, args in other.wanted.items():
            if kind not in self.wanted:
                return False
            if not set(args) <= set(self.wanted[kind]) | {"size"}:
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, EventSpec):
            return NotImplemented
        return self.module_name == other.module_name and self.wanted == other.wanted

    def __hash__(self):
        return hash((self.module_name, tuple(sorted((int(k), v) for k, v in self.wanted.items()))))

    def to_text(self) -> str:
        lines = [f"module: {self.module_name}"]
        for kind in sorted(self.wanted):
            if kind is EventKind.STREAM_END:
                continue
            args = self.wanted[kind]
            lines.append(f"event {kind.mnemonic}:" + (" " + ", ".join(args) if args else ""))
        return "\n".join(lines) + "\n"


def _check_args(kind: EventKind, args: Sequence[str]) -> None:
    seen = set()
    for arg in args:
        if arg not in ARGUMENTS:
            raise SpecError(f"unknown argument {arg!r} for {kind.mnemonic}")
        if arg not in VALID_ARGS[kind]:
            raise SpecError(f"argument {arg!r} is not valid for {kind.mnemonic}")
        if arg in seen:
            raise SpecError(f"duplicate argument {arg!r} for {kind.mnemonic}")
        seen.add(arg)


def _build_layout(wanted: Mapping[EventKind, tuple[str, ...]]) -> dict[EventKind, tuple[str, ...]]:
    return {k: tuple(a for a in args if a != "size") for k, args in wanted.items()}


def parse_event_spec(text: str) -> EventSpec:
    """Parse the line-based spec document.

    ``module: <name>`` once, then ``event <kind>[: <arg>[, <arg>]*]`` lines.
    ``#`` starts a comment.
    """
    module_name = None
    wanted: dict[EventKind, tuple[str, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("module:"):
            if module_name is not None:
                raise SpecError(f"line {lineno}: duplicate module declaration")
            module_name = line[len("module:"):].strip()
            if not module_name:
                raise SpecError(f"line {lineno}: empty module name")
            continue
        head, _, rest = line.partition(" ")
        if head != "event":
            raise SpecError(f"line {lineno}: expected 'module:' or 'event', got {head!r}")
        name, colon, arglist = rest.partition(":")
        name = name.strip()
        kind = KIND_BY_MNEMONIC.get(name)
        if kind is None:
            raise SpecError(f"line {lineno}: unknown event {name!r}")
        if kind in wanted:
            raise SpecError(f"line {lineno}: duplicate event {name!r}")
        args = tuple(a.strip() for a in arglist.split(",")) if arglist.strip() else ()
        if any(not a for a in args):
            raise SpecError(f"line {lineno}: empty argument name")
        try:
            _check_args(kind, args)
        except SpecError as exc:
            raise SpecError(f"line {lineno}: {exc}") from None
        wanted[kind] = args
    if module_name is None:
        raise SpecError("missing 'module:' declaration")
    return EventSpec(module_name, wanted)


def encode_event(ev: Event, spec: EventSpec) -> list[int]:
    """Encode one event as a list of 64-bit words."""
    kind = ev.kind
    if kind is EventKind.STREAM_END:
        return [0]
    if kind not in spec.wanted:
        raise CodecError(f"{kind.mnemonic} is not wanted by spec {spec.module_name!r}")
    size = ev.size if kind in SIZED_KINDS else 0
    if not 0 <= size <= MAX_SIZE:
        raise CodecError(f"size {size} does not fit in 24 bits")
    words = [int(kind) | (size << 8) | ((ev.primary_id & MASK32) << 32)]
    for arg in spec.payload_args(kind):
        words.append(getattr(ev, arg) & MASK64)
    return words


def decode_event(words: Sequence[int], spec: EventSpec, pos: int = 0) -> tuple[Event, int]:
    """Decode the event whose header is at ``words[pos]``.

    Returns the event and the number of words it occupied.
    """
    if pos >= len(words):
        raise CodecError("truncated word sequence: no header")
    header = int(words[pos])
    code = header & 0xFF
    try:
        kind = EventKind(code)
    except ValueError:
        raise CodecError(f"unknown kind code {code}") from None
    if kind is EventKind.STREAM_END:
        if header:
            raise CodecError(f"malformed stream-end word {header:#x}")
        return STREAM_END, 1
    if kind not in spec.wanted:
        raise CodecError(f"{kind.mnemonic} is not wanted by spec {spec.module_name!r}")
    args = spec.payload_args(kind)
    end = pos + 1 + len(args)
    if end > len(words):
        raise CodecError(f"truncated word sequence for {kind.mnemonic}")
    fields = {a: int(words[pos + 1 + i]) for i, a in enumerate(args)}
    ev = Event(kind, header >> 32, size=(header >> 8) & MAX_SIZE, **fields)
    return ev, end - pos


def encoded_length(events: Iterable[Event], spec: EventSpec) -> int:
    """Total words the wanted subset of ``events`` occupies."""
    total = 0
    for ev in events:
        if ev.kind is EventKind.STREAM_END:
            total += 1
        elif ev.kind in spec.wanted:
            total += spec.word_count(ev.kind)
    return total


# Vectorised paths used by the queue benchmarks and the backend chunk decoder.

_ARG_COLUMN = {"address": 0, "value": 1, "type_id": 2}


def _tables(spec: EventSpec):
    cached = getattr(spec, "_np_tables", None)
    if cached is not None:
        return cached
    lengths = np.zeros(256, dtype=np.int64)
    # offsets[col, kind] = word offset of that argument after the header, 0 if absent
    offsets = np.zeros((3, 256), dtype=np.int64)
    for kind in spec.wanted:
        lengths[kind] = spec.word_count(kind)
        for i, arg in enumerate(spec.payload_args(kind)):
            offsets[_ARG_COLUMN[arg], kind] = i + 1
    tables = (lengths, offsets, lengths.tolist())
    object.__setattr__(spec, "_np_tables", tables)
    return tables


def encode_batch(
    kinds: np.ndarray,
    primary_ids: np.ndarray,
    addresses: np.ndarray,
    values: np.ndarray,
    sizes: np.ndarray,
    type_ids: np.ndarray,
    spec: EventSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Encode columns of events at once.

    Every kind must be wanted by ``spec``. Returns ``(words, starts)`` where
    ``starts[i]`` is the word offset of event ``i``'s header.
    """
    lengths, offsets, _ = _tables(spec)
    kinds = np.asarray(kinds, dtype=np.int64)
    if kinds.size and (lengths[kinds] == 0).any():
        raise CodecError("batch contains kinds the spec does not want")
    sizes = np.asarray(sizes, dtype=np.uint64)
    if sizes.size and int(sizes.max()) > MAX_SIZE:
        raise CodecError("size does not fit in 24 bits")
    ev_len = lengths[kinds]
    ev_len = np.where(kinds == 0, 1, ev_len)
    starts = np.zeros(len(kinds), dtype=np.int64)
    if len(kinds) > 1:
        np.cumsum(ev_len[:-1], out=starts[1:])
    total = int(starts[-1] + ev_len[-1]) if len(kinds) else 0
    words = np.zeros(total, dtype=np.uint64)
    pid = np.asarray(primary_ids, dtype=np.uint64) & np.uint64(MASK32)
    header = kinds.astype(np.uint64) | (sizes << np.uint64(8)) | (pid << np.uint64(32))
    words[starts] = np.where(kinds == 0, np.uint64(0), header)
    for col, data in enumerate((addresses, values, type_ids)):
        off = offsets[col, kinds]
        has = off > 0
        if has.any():
            words[starts[has] + off[has]] = np.asarray(data, dtype=np.uint64)[has]
    return words, starts


class DecodedChunk(NamedTuple):
    """Column view of every event in a word run."""

    kinds: np.ndarray
    primary_ids: np.ndarray
    addresses: np.ndarray
    values: np.ndarray
    sizes: np.ndarray
    type_ids: np.ndarray


def event_starts(words: np.ndarray, spec: EventSpec) -> np.ndarray:
    """Offsets of every header in ``words``; raises on unknown or truncated events."""
    _, _, length_list = _tables(spec)
    lst = words.tolist()
    n = len(lst)
    starts = []
    append = starts.append
    i = 0
    while i < n:
        append(i)
        h = lst[i]
        step = length_list[h & 0xFF]
        if not step:
            if h == 0:
                step = 1
            else:
                raise CodecError(f"unknown or unwanted kind code {h & 0xFF} at word {i}")
        i += step
    if i != n:
        raise CodecError("truncated word sequence at end of run")
    return np.array(starts, dtype=np.int64)


def decode_chunk(words: np.ndarray, spec: EventSpec) -> DecodedChunk:
    """Decode a run of whole events into columns."""
    _, offsets, _ = _tables(spec)
    starts = event_starts(words, spec)
    header = words[starts]
    kinds = (header & np.uint64(0xFF)).astype(np.int64)
    cols = []
    for col in range(3):
        off = offsets[col, kinds]
        vals = np.zeros(len(starts), dtype=np.uint64)
        has = off > 0
        if has.any():
            vals[has] = words[starts[has] + off[has]]
        cols.append(vals)
    return DecodedChunk(
        kinds,
        header >> np.uint64(32),
        cols[0],
        cols[1],
        (header >> np.uint64(8)) & np.uint64(MAX_SIZE),
        cols[2],
    )
