"""Points-to profiler.

Allocations and frees reach every worker; each worker writes the object's
static id into the shadow granules it owns, so a pointer creation, routed to
the owner of its address granule, finds the object with a single lookup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..backend import ProfilingModule
from ..containers import Flavor, HtMap, default_reducers
from ..events import CONTEXT_KINDS, EventKind, EventSpec
from ..shadow import ShadowMemory

UNKNOWN = 1 << 64  # sorts after every packed (instr, ctx) object
META_BYTES = 16  # (alloc instr, alloc ctx, live flag, unused) as uint32


@dataclass(frozen=True)
class PointsToConfig:
    limit: Optional[int] = None

    def __post_init__(self):
        if self.limit is not None and self.limit < 1:
            raise ValueError("points-to set limit must be >= 1")


def object_name(obj: int) -> str:
    if obj == UNKNOWN:
        return "UNKNOWN"
    return f"{obj >> 32}:{obj & 0xFFFFFFFF}"


def format_pointsto(instr: int, objs, saturated: bool) -> str:
    names = ",".join(sorted(object_name(o) for o in objs))
    return f"ptsto {instr} {names}" + (" sat" if saturated else "")


class PointsToModule(ProfilingModule):
    name = "pointsto"
    shard = {EventKind.PTR_CREATE: "addr"}

    def __init__(self, config: Optional[PointsToConfig] = None, num_workers=1, tid=0, shared=None, reducers=None):
        super().__init__(num_workers, tid)
        self.config = config or PointsToConfig()
        self.shadow = shared if shared is not None else ShadowMemory(META_BYTES)
        self.targets = HtMap(
            Flavor.SET, limit=self.config.limit, reducers=reducers or default_reducers(num_workers)
        )
        self.live: dict[int, int] = {}

    @staticmethod
    def event_spec(config=None) -> EventSpec:
        wanted = {
            EventKind.HEAP_ALLOC: ("address",),
            EventKind.STACK_ALLOC: ("address",),
            EventKind.GLOBAL_INIT: ("address",),
            EventKind.HEAP_FREE: ("address",),
            EventKind.STACK_FREE: ("address",),
            EventKind.PTR_CREATE: ("address",),
            EventKind.PROG_END: (),
        }
        wanted.update((k, ()) for k in CONTEXT_KINDS)
        return EventSpec(PointsToModule.name, wanted)

    @property
    def spec(self) -> EventSpec:
        return self.event_spec(self.config)

    def shared(self):
        return self.shadow

    def _alloc(self, instr, addr, value, size, type_id):
        if size < 1:
            return
        self.live[addr] = size
        meta = (instr | (self.ctx.encode() << 32) | (1 << 64)).to_bytes(META_BYTES, "little")
        write = self.shadow.write
        for start, n in self.owned_spans(addr, size):
            write(start, n, meta)

    def _free(self, instr, addr, value, size, type_id):
        size = self.live.pop(addr, None)
        if size is not None:
            clear = self.shadow.clear
            for start, n in self.owned_spans(addr, size):
                clear(start, n)

    heap_alloc = stack_alloc = global_init = _alloc
    heap_free = stack_free = _free

    def ptr_create(self, instr, addr, value, size, type_id):
        sm = self.shadow
        mv = sm.words32(addr >> sm.page_shift)
        o = (addr & sm.page_mask) << 2
        obj = (mv[o] << 32) | mv[o + 1] if mv[o + 2] else UNKNOWN
        self.targets.insert(instr, obj)

    def merge(self, other: "PointsToModule") -> None:
        self.targets.merge(other.targets)

    def finalize(self) -> list[str]:
        return [format_pointsto(instr, objs, sat) for instr, (objs, sat) in self.targets.snapshot()]
