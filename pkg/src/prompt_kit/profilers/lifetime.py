"""Object lifetime profiler.

Each allocation remembers its static id ``(alloc instr, context id)`` and
the coordinates ``(invocation serial, iteration)`` of the innermost target
loop active at allocation time. The matching free classifies the instance:

* iter-local: freed in the same iteration of that invocation
* inv-local: freed in a later iteration of that invocation
* escaping: freed after the invocation ended, allocated outside every
  target loop, or never freed

A static id reports the weakest class over all its instances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import FrozenSet, Optional, Union

from ..backend import ProfilingModule
from ..containers import Flavor, HtMap, default_reducers
from ..events import CONTEXT_KINDS, EventKind, EventSpec

log = logging.getLogger(__name__)

ITER_LOCAL, INV_LOCAL, ESCAPING = 0, 1, 2
CLASS_NAMES = ("iter-local", "inv-local", "escaping")
ALL_LOOPS = "all"


@dataclass(frozen=True)
class LifetimeConfig:
    target_loops: Union[str, FrozenSet[int]] = ALL_LOOPS

    def __post_init__(self):
        tl = self.target_loops
        if tl is None:
            object.__setattr__(self, "target_loops", ALL_LOOPS)
        elif tl != ALL_LOOPS:
            object.__setattr__(self, "target_loops", frozenset(int(x) for x in tl))


def innermost_target(chain, target_loops) -> Optional[tuple[int, int]]:
    """``(serial, iteration)`` of the innermost active target loop, if any."""
    for lid, serial, it in reversed(chain):
        if target_loops == ALL_LOOPS or lid in target_loops:
            return serial, it
    return None


def classify(coords, chain) -> int:
    if coords is None:
        return ESCAPING
    serial, it = coords
    for _, s, cur in chain:
        if s == serial:
            return ITER_LOCAL if cur == it else INV_LOCAL
    return ESCAPING


class LifetimeModule(ProfilingModule):
    name = "lifetime"
    shard = {
        EventKind.HEAP_ALLOC: "addr",
        EventKind.HEAP_FREE: "addr",
        EventKind.STACK_ALLOC: "addr",
        EventKind.STACK_FREE: "addr",
    }

    def __init__(self, config: Optional[LifetimeConfig] = None, num_workers=1, tid=0, shared=None, reducers=None):
        super().__init__(num_workers, tid)
        self.config = config or LifetimeConfig()
        self.classes = HtMap(Flavor.MAX, reducers=reducers or default_reducers(num_workers))
        self.live: dict[int, tuple] = {}
        self.unknown_frees = 0

    @staticmethod
    def event_spec(config=None) -> EventSpec:
        wanted = {
            EventKind.HEAP_ALLOC: ("address",),
            EventKind.HEAP_FREE: ("address",),
            EventKind.STACK_ALLOC: ("address",),
            EventKind.STACK_FREE: ("address",),
            EventKind.PROG_END: (),
        }
        wanted.update((k, ()) for k in CONTEXT_KINDS)
        return EventSpec(LifetimeModule.name, wanted)

    @property
    def spec(self) -> EventSpec:
        return self.event_spec(self.config)

    def _alloc(self, instr, addr, value, size, type_id):
        old = self.live.get(addr)
        if old is not None:
            # base reused without a free: the old instance outlived its scope
            self.classes.insert(old[:2], ESCAPING)
        cm = self.ctx
        self.live[addr] = (instr, cm.encode(), innermost_target(cm.loop_chain, self.config.target_loops))

    def _free(self, instr, addr, value, size, type_id):
        inst = self.live.pop(addr, None)
        if inst is None:
            self.unknown_frees += 1
            log.debug("free of unknown address %#x by instruction %d", addr, instr)
            return
        self.classes.insert(inst[:2], classify(inst[2], self.ctx.loop_chain))

    heap_alloc = stack_alloc = _alloc
    heap_free = stack_free = _free

    def _retire_live(self):
        for inst in self.live.values():
            self.classes.insert(inst[:2], ESCAPING)
        self.live.clear()

    def prog_end(self, pid):
        self._retire_live()

    def merge(self, other: "LifetimeModule") -> None:
        other._retire_live()
        self.classes.merge(other.classes)
        self.unknown_frees += other.unknown_frees

    def finalize(self) -> list[str]:
        self._retire_live()
        if self.unknown_frees:
            log.info("%d free(s) of unknown addresses ignored", self.unknown_frees)
        return [f"objlife {instr} {ctx} {CLASS_NAMES[c]}" for (instr, ctx), c in self.classes.snapshot()]
