"""Backend driver, data-parallel sharding, and the profile writer.

One worker thread per queue consumer. Each worker owns a module instance and
its own context manager, decodes every chunk, applies every context event,
and forwards keyed events only when it owns the key. After the stream ends
the worker modules are merged into worker 0, whose ``finalize`` produces the
profile records.
"""

from __future__ import annotations

import logging
import threading
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from .context import ContextManager
from .events import (
    CONTEXT_KINDS,
    MASK64,
    EventKind,
    EventSpec,
    decode_chunk,
)
from .queue import Consumer

log = logging.getLogger(__name__)

GOLDEN = 0x9E3779B97F4A7C15
GRANULE_SHIFT = 6
PROFILE_MAGIC = "# prompt-profile v1"


class BackendError(RuntimeError):
    pass


def owner_of(key: int, num_workers: int) -> int:
    """Worker that owns ``key``: a Fibonacci hash of the key, reduced mod workers."""
    return (((key * GOLDEN) & MASK64) >> 32) % num_workers


def owners_of(keys: np.ndarray, num_workers: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return ((keys * np.uint64(GOLDEN)) >> np.uint64(32)) % np.uint64(num_workers)


def granule_owner(addr: int, num_workers: int, shift: int = GRANULE_SHIFT) -> int:
    return owner_of(addr >> shift, num_workers)


class ProfilingModule:
    """Base class for profiling modules.

    Subclasses set ``name``, expose their event spec as ``spec``, and
    implement one callback per wanted memory/allocation event, named after
    the trace mnemonic (``load``, ``store``, ``heap_alloc``, ...) and taking
    ``(primary_id, address, value, size, type_id)``. ``shard`` declares how
    each callback's events are split between workers:

    * ``"id"``: by primary id
    * ``"addr"``: by the granule holding the address
    * ``"range"``: by every granule the access touches; the callback must
      restrict itself to owned bytes (``owned_spans``)

    Kinds missing from ``shard`` reach every worker.
    """

    name = "module"
    shard: dict = {}
    granule_shift = GRANULE_SHIFT

    def __init__(self, num_workers: int = 1, tid: int = 0):
        self.num_workers = num_workers
        self.tid = tid
        self.ctx = ContextManager()

    # data parallelism helpers

    def mine(self, key: int) -> bool:
        return self.num_workers == 1 or owner_of(key, self.num_workers) == self.tid

    def mine_addr(self, addr: int) -> bool:
        return self.num_workers == 1 or owner_of(addr >> self.granule_shift, self.num_workers) == self.tid

    def execute_if_mine(self, key: int, fn: Callable[[], Any]) -> None:
        if self.mine(key):
            fn()

    def owned_spans(self, addr: int, size: int):
        """Sub-ranges ``(start, length)`` of ``[addr, addr+size)`` in owned granules."""
        if self.num_workers == 1:
            return ((addr, size),)
        shift = self.granule_shift
        end = addr + size
        spans = []
        while addr < end:
            nxt = min(end, ((addr >> shift) + 1) << shift)
            if owner_of(addr >> shift, self.num_workers) == self.tid:
                spans.append((addr, nxt - addr))
            addr = nxt
        return spans

    def owned_granules(self, addr: int, size: int) -> np.ndarray:
        g = np.arange(addr >> self.granule_shift, ((addr + size - 1) >> self.granule_shift) + 1, dtype=np.uint64)
        if self.num_workers == 1:
            return g
        return g[owners_of(g, self.num_workers) == self.tid]

    # module contract

    @property
    def spec(self) -> EventSpec:
        raise NotImplementedError

    def shared(self) -> Any:
        """State shared by every worker of one run (e.g. the shadow memory)."""
        return None

    def on_context(self, kind: int, id: int) -> None:
        pass

    def prog_start(self, pid: int) -> None:
        pass

    def prog_end(self, pid: int) -> None:
        pass

    def merge(self, other: "ProfilingModule") -> None:
        raise NotImplementedError(f"{type(self).__name__} does not support merging")

    def finalize(self) -> list[str]:
        raise NotImplementedError

    @classmethod
    def supports_merge(cls) -> bool:
        return cls.merge is not ProfilingModule.merge


def format_profile(module_name: str, records: Iterable[str]) -> str:
    lines = sorted(records)
    return "".join([f"{PROFILE_MAGIC} module={module_name}\n", *(r + "\n" for r in lines), "# end\n"])


def parse_profile(text: str) -> tuple[str, list[str]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(PROFILE_MAGIC + " module=") or lines[-1] != "# end":
        raise ValueError("not a prompt profile")
    return lines[0].split("module=", 1)[1], lines[1:-1]


class _ChunkCache:
    """Decodes each sealed buffer once for all workers.

    Workers see the same buffers in the same order, so the n-th chunk of
    every consumer is identical; the first worker to reach it decodes it and
    computes the owner of every key, the last one to use it evicts it.
    """

    def __init__(self, spec: EventSpec, module: ProfilingModule, num_workers: int, users: Optional[int] = None):
        self.spec = spec
        self.num_workers = num_workers
        self.users = num_workers if users is None else users
        self.policies = {int(k): how for k, how in module.shard.items()} if num_workers > 1 else {}
        self.shift = np.uint64(module.granule_shift)
        self._entries: dict[int, list] = {}
        self._lock = threading.Lock()

    def get(self, seq: int, chunk: np.ndarray):
        with self._lock:
            entry = self._entries.get(seq)
            if entry is None:
                entry = self._entries[seq] = [self._build(chunk), self.users]
            entry[1] -= 1
            if not entry[1]:
                del self._entries[seq]
            return entry[0]

    def _build(self, chunk):
        d = decode_chunk(chunk, self.spec)
        owners = {}
        n = self.num_workers
        for kind, how in self.policies.items():
            is_k = d.kinds == kind
            if not is_k.any():
                continue
            if how == "id":
                owners[kind] = (is_k, owners_of(d.primary_ids, n), None)
            elif how == "addr":
                owners[kind] = (is_k, owners_of(d.addresses >> self.shift, n), None)
            elif how == "range":
                last = d.addresses + np.maximum(d.sizes, np.uint64(1)) - np.uint64(1)
                owners[kind] = (is_k, owners_of(d.addresses >> self.shift, n), owners_of(last >> self.shift, n))
            else:
                raise BackendError(f"unknown shard policy {how!r}")
        return d, owners


def _selection(d, owners, tid: int) -> Optional[np.ndarray]:
    """Indices of events worker ``tid`` must see; None means all of them."""
    if not owners:
        return None
    me = np.uint64(tid)
    keep = np.ones(len(d.kinds), dtype=bool)
    for is_k, first, last in owners.values():
        mine = first == me
        if last is not None:
            mine |= last == me
        keep &= ~is_k | mine
    return np.flatnonzero(keep)


def _dispatch_table(module: ProfilingModule, spec: EventSpec) -> list:
    cm = module.ctx
    table: list = [None] * 256
    for kind in spec.wanted:
        if kind in CONTEXT_KINDS:
            table[kind] = _context_handler(cm, module, int(kind))
        elif kind is EventKind.PROG_START:
            table[kind] = lambda p, a, v, s, t: module.prog_start(p)
        elif kind is EventKind.PROG_END:
            table[kind] = lambda p, a, v, s, t: module.prog_end(p)
        elif kind is not EventKind.STREAM_END:
            table[kind] = getattr(module, kind.mnemonic, None)
    return table


def _context_handler(cm: ContextManager, module: ProfilingModule, kind: int):
    on_event, encode, hook = cm.on_event, cm.encode, module.on_context

    def handle(p, a, v, s, t):
        on_event(kind, p)
        # encode eagerly so every worker hands out identical context ids
        encode()
        hook(kind, p)

    return handle


def run_worker(module: ProfilingModule, consumer: Consumer, spec: EventSpec, cache: Optional[_ChunkCache] = None) -> int:
    """Drain ``consumer`` into ``module``; returns the number of events dispatched."""
    table = _dispatch_table(module, spec)
    if cache is None:
        cache = _ChunkCache(spec, module, module.num_workers, users=1)
    dispatched = 0
    for seq, chunk in enumerate(consumer):
        d, owners = cache.get(seq, chunk)
        sel = _selection(d, owners, module.tid)
        cols = d if sel is None else [c[sel] for c in d]
        for k, p, a, v, s, t in zip(*(c.tolist() for c in cols)):
            h = table[k]
            if h is not None:
                h(p, a, v, s, t)
        dispatched += len(cols[0])
    return dispatched


def run_backend(
    spec: EventSpec,
    module_factory: Callable[..., ProfilingModule],
    num_workers: int,
    consumers: Sequence[Consumer],
) -> str:
    """Run ``num_workers`` module instances over the queue and return the profile text.

    ``module_factory(num_workers=, tid=, shared=)`` builds one worker's
    module; ``shared`` is None for worker 0 and worker 0's ``shared()``
    afterwards.
    """
    if num_workers < 1:
        raise BackendError("num_workers must be >= 1")
    if len(consumers) != num_workers:
        raise BackendError(f"{num_workers} workers but {len(consumers)} consumer handles")
    first = module_factory(num_workers=num_workers, tid=0, shared=None)
    if not spec.covers(first.spec):
        raise BackendError(f"stream spec {spec.module_name!r} does not carry what module {first.name!r} needs")
    if num_workers > 1 and not type(first).supports_merge():
        raise BackendError(f"module {first.name!r} cannot merge, so it cannot run on {num_workers} workers")
    shared = first.shared()
    modules = [first] + [
        module_factory(num_workers=num_workers, tid=i, shared=shared) for i in range(1, num_workers)
    ]
    errors: list[BaseException] = []
    cache = _ChunkCache(spec, first, num_workers)

    def work(i):
        try:
            n = run_worker(modules[i], consumers[i], spec, cache)
            log.debug("worker %d dispatched %d events", i, n)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)
            consumers[i].abort()

    threads = [threading.Thread(target=work, args=(i,), name=f"backend-{i}") for i in range(1, num_workers)]
    for t in threads:
        t.start()
    work(0)
    for t in threads:
        t.join()
    if errors:
        from .queue import QueueClosed

        root = [e for e in errors if not isinstance(e, QueueClosed)]
        raise (root or errors)[0]
    for other in modules[1:]:
        first.merge(other)
    return format_profile(first.name, first.finalize())
