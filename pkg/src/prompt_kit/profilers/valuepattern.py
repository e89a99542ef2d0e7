"""Constant-load value pattern profiler."""

from __future__ import annotations

from ..backend import ProfilingModule
from ..containers import Flavor, HtMap, default_reducers
from ..events import CONTEXT_KINDS, EventKind, EventSpec


class ValuePatternModule(ProfilingModule):
    """Reports every load instruction whose loaded values were all equal."""

    name = "valuepattern"
    shard = {EventKind.LOAD: "id"}

    def __init__(self, config=None, num_workers=1, tid=0, shared=None, reducers=None):
        super().__init__(num_workers, tid)
        self.constmap = HtMap(
            Flavor.CONSTANT, reducers=reducers or default_reducers(num_workers)
        )

    @staticmethod
    def event_spec(config=None) -> EventSpec:
        wanted = {EventKind.LOAD: ("value",), EventKind.PROG_END: ()}
        wanted.update((k, ()) for k in CONTEXT_KINDS)
        return EventSpec(ValuePatternModule.name, wanted)

    @property
    def spec(self) -> EventSpec:
        return self.event_spec()

    def load(self, instr, addr, value, size, type_id):
        self.constmap.insert(instr, value)

    def merge(self, other: "ValuePatternModule") -> None:
        self.constmap.merge(other.constmap)

    def finalize(self) -> list[str]:
        return [f"constload {instr} {value:x}" for instr, (value, const) in self.constmap.snapshot() if const]
