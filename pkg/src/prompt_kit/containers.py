"""High-throughput result maps whose insert is a reducible operation.

Inserts are appended to a fixed-capacity buffer. A full buffer is cut into
``reducers`` slices and handed to a persistent thread pool; each reduction
worker folds its slice into its own local store while the caller keeps
inserting into a fresh buffer. Local stores are folded into the global
store only when something other than ``insert`` is called.

Because every flavor's insert commutes and associates, the observable state
never depends on buffer capacity, reducer count, or merge order.
"""

from __future__ import annotations

import enum
import os
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Hashable, Iterable, Optional

from .events import MASK64

DEFAULT_CAPACITY = 1 << 16


class Flavor(str, enum.Enum):
    CONSTANT = "constant"
    COUNT = "count"
    SUM = "sum"
    MIN = "min"
    MAX = "max"
    SET = "set"


_MIXED = object()  # constant flavor: key has seen two different values
_ABSENT = object()

_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def _pool(workers: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = _pools[workers] = ThreadPoolExecutor(workers, thread_name_prefix="htmap-reduce")
        return pool


def default_reducers(backend_workers: int = 1) -> int:
    return max(1, (os.cpu_count() or 1) // max(1, backend_workers))


# Per-flavor reduce/fold kernels. A store is a dict unless noted.

def _reduce_constant(d, keys, vals):
    get = d.get
    for k, v in zip(keys, vals):
        old = get(k, _ABSENT)
        if old is _ABSENT:
            d[k] = v
        elif old is not _MIXED and old != v:
            d[k] = _MIXED


def _fold_constant(d, src):
    for k, v in src.items():
        if k not in d:
            d[k] = v
        else:
            old = d[k]
            if old is not _MIXED and (v is _MIXED or old != v):
                d[k] = _MIXED


def _reduce_count(d, keys, vals):
    d.update(keys)


def _fold_count(d, src):
    d.update(src)


def _reduce_sum(d, keys, vals):
    get = d.get
    for k, v in zip(keys, vals):
        d[k] = (get(k, 0) + v) & MASK64


def _fold_sum(d, src):
    get = d.get
    for k, v in src.items():
        d[k] = (get(k, 0) + v) & MASK64


def _reduce_min(d, keys, vals):
    get = d.get
    for k, v in zip(keys, vals):
        old = get(k)
        if old is None or v < old:
            d[k] = v


def _reduce_max(d, keys, vals):
    get = d.get
    for k, v in zip(keys, vals):
        old = get(k)
        if old is None or v > old:
            d[k] = v


class _SetStore:
    """key -> set of at most ``limit`` values (the smallest seen) plus saturation flags."""

    __slots__ = ("members", "saturated", "limit")

    def __init__(self, limit):
        self.members: dict[Hashable, set] = {}
        self.saturated: set = set()
        self.limit = limit

    def add(self, k, v):
        s = self.members.get(k)
        if s is None:
            s = self.members[k] = set()
        if v in s:
            return
        s.add(v)
        if self.limit is not None and len(s) > self.limit:
            s.remove(max(s))
            self.saturated.add(k)

    def items(self):
        return self.members.items()


def _reduce_set(store, keys, vals):
    add = store.add
    for k, v in zip(keys, vals):
        add(k, v)


def _fold_set(store, src):
    for k, s in src.members.items():
        for v in s:
            store.add(k, v)
    store.saturated |= src.saturated


_KERNELS = {
    Flavor.CONSTANT: (_reduce_constant, _fold_constant),
    Flavor.COUNT: (_reduce_count, _fold_count),
    Flavor.SUM: (_reduce_sum, _fold_sum),
    Flavor.MIN: (_reduce_min, lambda d, s: _reduce_min(d, s.keys(), s.values())),
    Flavor.MAX: (_reduce_max, lambda d, s: _reduce_max(d, s.keys(), s.values())),
    Flavor.SET: (_reduce_set, _fold_set),
}


class HtMap:
    """Buffered map with built-in insertion logic.

    Snapshot aggregates per flavor:

    * constant: ``(value, True)`` while every insert agreed, else ``(None, False)``
    * count: number of inserts
    * sum: wrapping 64-bit sum; min / max: extrema
    * set: ``(sorted tuple of values, saturated)``; at most ``limit`` values
      are kept (the smallest ones) and ``saturated`` turns on once more
      distinct values than that were inserted
    """

    def __init__(
        self,
        flavor: Flavor | str,
        *,
        limit: Optional[int] = None,
        capacity: int = DEFAULT_CAPACITY,
        reducers: Optional[int] = None,
    ):
        self.flavor = Flavor(flavor)
        if self.flavor is not Flavor.SET and limit is not None:
            raise ValueError("limit only applies to the set flavor")
        if limit is not None and limit < 1:
            raise ValueError("set limit must be >= 1")
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.limit = limit
        self.capacity = capacity
        self.reducers = reducers if reducers is not None else default_reducers()
        if self.reducers < 1:
            raise ValueError("reducers must be >= 1")
        self._reduce, self._fold = _KERNELS[self.flavor]
        self._keys: list = []
        self._vals: list = []
        self._locals = [self._new_store() for _ in range(self.reducers)]
        self._global = self._new_store()
        self._pending: list = []
        self.flushes = 0

    def _new_store(self):
        if self.flavor is Flavor.SET:
            return _SetStore(self.limit)
        if self.flavor is Flavor.COUNT:
            return Counter()
        return {}

    # insertion

    def insert(self, key: Hashable, value: Any = 0) -> None:
        self._keys.append(key)
        self._vals.append(value)
        if len(self._keys) >= self.capacity:
            self._flush()

    def insert_many(self, keys: Iterable[Hashable], values: Optional[Iterable[Any]] = None) -> None:
        keys = list(keys)
        values = [0] * len(keys) if values is None else list(values)
        if len(values) != len(keys):
            raise ValueError("keys and values differ in length")
        pos = 0
        while pos < len(keys):
            room = self.capacity - len(self._keys)
            self._keys.extend(keys[pos:pos + room])
            self._vals.extend(values[pos:pos + room])
            pos += room
            if len(self._keys) >= self.capacity:
                self._flush()

    def _join(self) -> None:
        for fut in self._pending:
            fut.result()
        self._pending = []

    def _flush(self) -> None:
        keys, vals = self._keys, self._vals
        self._keys, self._vals = [], []
        # the previous buffer's reductions own the local stores until they finish
        self._join()
        if not keys:
            return
        self.flushes += 1
        n = len(keys)
        r = self.reducers
        pool = _pool(r)
        step = -(-n // r)
        for i in range(r):
            lo = i * step
            if lo >= n:
                break
            hi = min(n, lo + step)
            self._pending.append(pool.submit(self._reduce, self._locals[i], keys[lo:hi], vals[lo:hi]))

    def _sync(self) -> None:
        self._flush()
        self._join()
        for i, local in enumerate(self._locals):
            if local if self.flavor is not Flavor.SET else local.members:
                self._fold(self._global, local)
                self._locals[i] = self._new_store()

    # everything below synchronises first

    def snapshot(self) -> list[tuple[Hashable, Any]]:
        self._sync()
        g = self._global
        if self.flavor is Flavor.CONSTANT:
            items = [(k, (None, False) if v is _MIXED else (v, True)) for k, v in g.items()]
        elif self.flavor is Flavor.SET:
            items = [(k, (tuple(sorted(s)), k in g.saturated)) for k, s in g.items()]
        else:
            items = list(g.items())
        items.sort(key=lambda kv: kv[0])
        return items

    def get(self, key: Hashable, default=None):
        for k, v in self.snapshot():
            if k == key:
                return v
        return default

    def __len__(self) -> int:
        self._sync()
        return len(self._global.members if self.flavor is Flavor.SET else self._global)

    def merge(self, other: "HtMap") -> None:
        """Fold ``other`` into this map; ``other`` is left empty."""
        if other.flavor is not self.flavor or other.limit != self.limit:
            raise ValueError(f"cannot merge {other.flavor.value} map into {self.flavor.value} map")
        if other is self:
            raise ValueError("cannot merge a map into itself")
        self._sync()
        other._sync()
        self._fold(self._global, other._global)
        other._global = other._new_store()


class HtSet:
    """Drop-in set on top of the set flavor: insert, contains, merge, snapshot."""

    def __init__(self, *, capacity: int = DEFAULT_CAPACITY, reducers: Optional[int] = None):
        self._map = HtMap(Flavor.SET, capacity=capacity, reducers=reducers)

    def insert(self, value: Hashable) -> None:
        self._map.insert(value, ())

    def insert_many(self, values: Iterable[Hashable]) -> None:
        values = list(values)
        self._map.insert_many(values, [()] * len(values))

    def __contains__(self, value: Hashable) -> bool:
        self._map._sync()
        return value in self._map._global.members

    def __len__(self) -> int:
        return len(self._map)

    def snapshot(self) -> list:
        return [k for k, _ in self._map.snapshot()]

    def merge(self, other: "HtSet") -> None:
        self._map.merge(other._map)
