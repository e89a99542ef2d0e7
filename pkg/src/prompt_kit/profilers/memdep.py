"""Memory dependence profiler and its configurable variants.

Per byte, shadow memory remembers the last store and the last load
(instruction and a context snapshot). A load whose byte was stored records
a flow dependence; with ``all_types`` a store also records anti (after a
load) and output (after a store) dependences. Every byte counts as one
manifestation.

Loop attribution, when enabled, looks for the loop invocation both endpoints
share: the innermost one for ``target_loops="all"``, otherwise every listed
loop. Same iteration is loop-independent (LI), a different one is
loop-carried (LC) with distance ``dst_iter - src_iter``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import FrozenSet, Optional, Union

from ..backend import ProfilingModule
from ..containers import Flavor, HtMap, default_reducers
from ..events import CONTEXT_KINDS, EventKind, EventSpec
from ..shadow import ShadowMemory

FLOW, ANTI, OUTPUT = 0, 1, 2
DEP_NAMES = ("flow", "anti", "output")
LI, LC = 0, 1
CARRIED_NAMES = ("LI", "LC")
NONE = -1
META_BYTES = 16  # (store instr, store snapshot, load instr, load snapshot) as uint32

ALL_LOOPS = "all"


@dataclass(frozen=True)
class DepConfig:
    count: bool = False
    all_types: bool = False
    distance: bool = False
    context: bool = False
    # None: no loop attribution; "all": innermost shared loop; set: those loop ids
    target_loops: Union[None, str, FrozenSet[int]] = ALL_LOOPS

    def __post_init__(self):
        tl = self.target_loops
        if tl is not None and tl != ALL_LOOPS:
            object.__setattr__(self, "target_loops", frozenset(int(x) for x in tl))
        if self.distance and self.target_loops is None:
            raise ValueError("dependence distance needs loop tracking (target_loops)")

    @classmethod
    def from_flags(cls, flags: str = "", target_loops=ALL_LOOPS) -> "DepConfig":
        names = {f.strip().replace("-", "_") for f in flags.split(",") if f.strip()}
        unknown = names - {"count", "all_types", "distance", "context"}
        if unknown:
            raise ValueError(f"unknown memdep flag(s): {', '.join(sorted(unknown))}")
        return cls(**{n: True for n in names}, target_loops=target_loops)


def attribute(src_chain, dst_chain, target_loops) -> list[tuple[int, int, Optional[int]]]:
    """``(loop, carried, distance)`` entries for a dependence between two loop chains."""
    if target_loops is None:
        return [(NONE, NONE, None)]
    src_iters = {serial: it for _, serial, it in src_chain}
    if target_loops == ALL_LOOPS:
        for lid, serial, it in reversed(dst_chain):
            s_it = src_iters.get(serial)
            if s_it is not None:
                return [(lid, LI if it == s_it else LC, it - s_it)]
        return [(NONE, NONE, None)]
    out = []
    for lid, serial, it in dst_chain:
        if lid in target_loops:
            s_it = src_iters.get(serial)
            if s_it is not None:
                out.append((lid, LI if it == s_it else LC, it - s_it))
    return out or [(NONE, NONE, None)]


def format_dep(key, cfg: DepConfig, count, dmin, dmax) -> str:
    dtype, src, dst, loop, carried, sctx, dctx = key
    fields = [
        "dep",
        DEP_NAMES[dtype],
        str(src),
        str(dst),
        "-" if loop == NONE else str(loop),
        "-" if carried == NONE else CARRIED_NAMES[carried],
        str(count) if cfg.count else "-",
        "-" if dmin is None else str(dmin),
        "-" if dmax is None else str(dmax),
    ]
    if cfg.context:
        fields += [str(sctx), str(dctx)]
    return " ".join(fields)


class MemDepModule(ProfilingModule):
    name = "memdep"
    shard = {EventKind.LOAD: "range", EventKind.STORE: "range"}

    def __init__(self, config: Optional[DepConfig] = None, num_workers=1, tid=0, shared=None, reducers=None):
        super().__init__(num_workers, tid)
        self.config = config or DepConfig()
        self.shadow = shared if shared is not None else ShadowMemory(META_BYTES)
        r = reducers or default_reducers(num_workers)
        # summed byte counts; one insert per (source, snapshot) group of an access
        self.counts = HtMap(Flavor.SUM, reducers=r)
        self.dmin = HtMap(Flavor.MIN, reducers=r)
        self.dmax = HtMap(Flavor.MAX, reducers=r)
        # snapshot 0 means "never accessed"
        self._snaps: list = [None]
        self._snap_version = -1
        self._snap = 0
        self._attr_memo: dict = {}
        self._targets = self.config.target_loops
        self._ctx_on = self.config.context
        self._dist_on = self.config.distance
        self._all_types = self.config.all_types

    @staticmethod
    def event_spec(config=None) -> EventSpec:
        wanted = {EventKind.LOAD: ("address",), EventKind.STORE: ("address",), EventKind.PROG_END: ()}
        wanted.update((k, ()) for k in CONTEXT_KINDS)
        return EventSpec(MemDepModule.name, wanted)

    @property
    def spec(self) -> EventSpec:
        return self.event_spec(self.config)

    def shared(self):
        return self.shadow

    def _current_snap(self) -> int:
        cm = self.ctx
        if cm.version != self._snap_version:
            self._snaps.append((cm.encode(), cm.loop_chain))
            self._snap = len(self._snaps) - 1
            self._snap_version = cm.version
        return self._snap

    def _record(self, dtype, src, src_snap, dst, dst_snap, n=1):
        memo_key = (src_snap, dst_snap)
        suffixes = self._attr_memo.get(memo_key)
        if suffixes is None:
            sctx, schain = self._snaps[src_snap]
            dctx, dchain = self._snaps[dst_snap]
            if not self._ctx_on:
                sctx = dctx = NONE
            suffixes = [
                (loop, carried, dist, sctx, dctx)
                for loop, carried, dist in attribute(schain, dchain, self._targets)
            ]
            if len(self._attr_memo) > 1 << 16:
                self._attr_memo.clear()
            self._attr_memo[memo_key] = suffixes
        for loop, carried, dist, sctx, dctx in suffixes:
            key = (dtype, src, dst, loop, carried, sctx, dctx)
            self.counts.insert(key, n)
            if self._dist_on and dist is not None:
                self.dmin.insert(key, dist)
                self.dmax.insert(key, dist)

    def load(self, instr, addr, value, size, type_id):
        snap = self._current_snap()
        sm = self.shadow
        shift, mask = sm.page_shift, sm.page_mask
        hits: dict = {}
        get = hits.get
        for start, n in self.owned_spans(addr, size):
            end = start + n
            while start < end:
                mv = sm.words32(start >> shift)
                stop = min(end, (start | mask) + 1)
                for o in range((start & mask) << 2, ((stop - 1) & mask) + 1 << 2, 4):
                    s_snap = mv[o + 1]
                    if s_snap:
                        k = (FLOW, mv[o], s_snap)
                        hits[k] = get(k, 0) + 1
                    mv[o + 2] = instr
                    mv[o + 3] = snap
                start = stop
        for (dtype, src, src_snap), n in hits.items():
            self._record(dtype, src, src_snap, instr, snap, n)

    def store(self, instr, addr, value, size, type_id):
        snap = self._current_snap()
        sm = self.shadow
        shift, mask = sm.page_shift, sm.page_mask
        all_types = self._all_types
        hits: dict = {}
        get = hits.get
        for start, n in self.owned_spans(addr, size):
            end = start + n
            while start < end:
                mv = sm.words32(start >> shift)
                stop = min(end, (start | mask) + 1)
                for o in range((start & mask) << 2, ((stop - 1) & mask) + 1 << 2, 4):
                    if all_types:
                        l_snap = mv[o + 3]
                        if l_snap:
                            k = (ANTI, mv[o + 2], l_snap)
                            hits[k] = get(k, 0) + 1
                        s_snap = mv[o + 1]
                        if s_snap:
                            k = (OUTPUT, mv[o], s_snap)
                            hits[k] = get(k, 0) + 1
                    mv[o] = instr
                    mv[o + 1] = snap
                start = stop
        for (dtype, src, src_snap), n in hits.items():
            self._record(dtype, src, src_snap, instr, snap, n)

    def merge(self, other: "MemDepModule") -> None:
        self.counts.merge(other.counts)
        self.dmin.merge(other.dmin)
        self.dmax.merge(other.dmax)

    def finalize(self) -> list[str]:
        dmin = dict(self.dmin.snapshot())
        dmax = dict(self.dmax.snapshot())
        return [
            format_dep(key, self.config, count, dmin.get(key), dmax.get(key))
            for key, count in self.counts.snapshot()
        ]


def pack_cell(store_instr=0, store_snap=0, load_instr=0, load_snap=0) -> bytes:
    return struct.pack("<4I", store_instr, store_snap, load_instr, load_snap)
