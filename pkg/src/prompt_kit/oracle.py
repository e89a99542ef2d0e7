"""Sequential brute-force reference profiles.

Everything is computed from first principles over the whole trace: full
per-byte access histories for dependences, every loaded value for value
patterns, loop invocation/iteration spans for lifetimes, and live-object
intervals for points-to. No shadow memory, sharding or buffering is
involved, so it is slow (quadratic in places) and meant for traces of at
most ``MAX_ORACLE_EVENTS`` events.

Output uses the same profile text format as the backend.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Optional, Sequence

from .events import Event, EventKind

K = EventKind
MAX_ORACLE_EVENTS = 1_000_000
HEADER = "# prompt-profile v1 module={}"
FOOTER = "# end"


class OracleError(ValueError):
    pass


class _Walker:
    """Replays context events and numbers every event position."""

    def __init__(self):
        self.frames: list[tuple[str, int]] = []  # F(fn) / I(invocation) / T(iteration) frames
        self.invocations: list[list] = []  # active [loop_id, serial, iter_events]
        self.serials = 0
        self.ctx_ids: dict[tuple, int] = {(): 0}
        self.ctx = 0

    def apply(self, ev: Event) -> bool:
        k, i = ev.kind, ev.primary_id
        if k == K.FN_ENTER:
            self.frames.append(("F", i))
        elif k == K.FN_EXIT:
            if not self.frames or self.frames[-1] != ("F", i):
                raise OracleError(f"fn_exit {i} does not match the open frame")
            self.frames.pop()
        elif k == K.LOOP_INVOKE:
            self.frames.append(("I", i))
            self.invocations.append([i, self.serials, 0])
            self.serials += 1
        elif k == K.LOOP_ITER:
            if not self.invocations or self.invocations[-1][0] != i or self.frames[-1][1] != i or self.frames[-1][0] == "F":
                raise OracleError(f"loop_iter {i} outside its loop")
            inv = self.invocations[-1]
            inv[2] += 1
            if inv[2] == 1:
                self.frames.append(("T", i))
        elif k == K.LOOP_EXIT:
            if self.frames and self.frames[-1] == ("T", i):
                self.frames.pop()
            if not self.frames or self.frames[-1] != ("I", i):
                raise OracleError(f"loop_exit {i} does not match the open loop")
            self.frames.pop()
            self.invocations.pop()
        else:
            return False
        key = tuple(self.frames)
        if key not in self.ctx_ids:
            self.ctx_ids[key] = len(self.ctx_ids)
        self.ctx = self.ctx_ids[key]
        return True

    def loops(self) -> tuple:
        """``(loop_id, serial, iteration)`` per active invocation, outermost first."""
        return tuple((lid, serial, max(0, n - 1)) for lid, serial, n in self.invocations)


def _check(trace: Sequence[Event]) -> None:
    if len(trace) > MAX_ORACLE_EVENTS:
        raise OracleError(f"trace has {len(trace)} events; the oracle handles at most {MAX_ORACLE_EVENTS}")


def _render(module: str, records: Iterable[str]) -> str:
    return "\n".join([HEADER.format(module), *sorted(records), FOOTER]) + "\n"


# memory dependences

def _shared_loops(src_loops, dst_loops, targets):
    src = {serial: it for _, serial, it in src_loops}
    shared = [(lid, it - src[serial]) for lid, serial, it in dst_loops if serial in src]
    if targets is None:
        return [None]
    if targets == "all":
        return shared[-1:] or [None]
    picked = [s for s in shared if s[0] in targets]
    return picked or [None]


def memdep_profile(trace: Sequence[Event], count=False, all_types=False, distance=False, context=False,
                   target_loops="all") -> str:
    _check(trace)
    if target_loops is not None and target_loops != "all":
        target_loops = frozenset(target_loops)
    if distance and target_loops is None:
        raise OracleError("distance needs loop tracking")
    history: dict[int, list] = defaultdict(list)
    found: dict[tuple, list] = {}
    w = _Walker()

    def note(dtype, src, dst):
        _, s_instr, s_ctx, s_loops = src
        _, d_instr, d_ctx, d_loops = dst
        for shared in _shared_loops(s_loops, d_loops, target_loops):
            loop = carried = "-"
            dist = None
            if shared is not None:
                loop = str(shared[0])
                dist = shared[1]
                carried = "LI" if dist == 0 else "LC"
            key = (dtype, s_instr, d_instr, loop, carried) + ((s_ctx, d_ctx) if context else ())
            entry = found.setdefault(key, [0, []])
            entry[0] += 1
            if dist is not None:
                entry[1].append(dist)

    for ev in trace:
        if w.apply(ev) or ev.kind not in (K.LOAD, K.STORE):
            continue
        me = (ev.kind == K.STORE, ev.primary_id, w.ctx, w.loops())
        for b in range(ev.address, ev.address + ev.size):
            h = history[b]
            last_store = next((a for a in reversed(h) if a[0]), None)
            last_load = next((a for a in reversed(h) if not a[0]), None)
            if ev.kind == K.LOAD:
                if last_store is not None:
                    note("flow", last_store, me)
            elif all_types:
                if last_load is not None:
                    note("anti", last_load, me)
                if last_store is not None:
                    note("output", last_store, me)
            h.append(me)

    records = []
    for key, (n, dists) in found.items():
        dtype, src, dst, loop, carried = key[:5]
        fields = ["dep", dtype, str(src), str(dst), loop, carried, str(n) if count else "-"]
        if distance and dists:
            fields += [str(min(dists)), str(max(dists))]
        else:
            fields += ["-", "-"]
        if context:
            fields += [str(key[5]), str(key[6])]
        records.append(" ".join(fields))
    return _render("memdep", records)


# value pattern

def valuepattern_profile(trace: Sequence[Event]) -> str:
    _check(trace)
    seen: dict[int, set] = defaultdict(set)
    for ev in trace:
        if ev.kind == K.LOAD:
            seen[ev.primary_id].add(ev.value)
    return _render("valuepattern", (f"constload {i} {next(iter(v)):x}" for i, v in seen.items() if len(v) == 1))


# object lifetime

def _loop_spans(trace: Sequence[Event]):
    """Per trace position, the active invocations as ``(loop_id, serial)``; plus
    per serial the end position and the start position of each iteration."""
    w = _Walker()
    active_at = []
    ends: dict[int, int] = {}
    iter_starts: dict[int, list[int]] = defaultdict(list)
    for pos, ev in enumerate(trace):
        before = {s for _, s, _ in w.invocations}
        w.apply(ev)
        after = w.invocations
        for lid, serial, n in after:
            if serial not in before:
                iter_starts[serial].append(pos)  # iteration 0 opens at the invoke
            elif ev.kind == K.LOOP_ITER and serial == after[-1][1] and n > 1:
                iter_starts[serial].append(pos)
        for s in before - {s for _, s, _ in after}:
            ends[s] = pos
        active_at.append(tuple((lid, serial) for lid, serial, _ in after))
    return active_at, ends, iter_starts, w


def _iteration_at(starts: list[int], pos: int) -> int:
    return sum(1 for s in starts if s <= pos) - 1


def lifetime_profile(trace: Sequence[Event], target_loops="all") -> str:
    _check(trace)
    if target_loops is None:
        target_loops = "all"
    elif target_loops != "all":
        target_loops = frozenset(target_loops)
    active_at, ends, iter_starts, _ = _loop_spans(trace)
    w = _Walker()
    objects: list[dict] = []
    live: dict[int, dict] = {}
    for pos, ev in enumerate(trace):
        w.apply(ev)
        if ev.kind in (K.HEAP_ALLOC, K.STACK_ALLOC):
            if ev.address in live:
                live.pop(ev.address)["free"] = None
            obj = {"site": (ev.primary_id, w.ctx), "alloc": pos, "free": None}
            live[ev.address] = obj
            objects.append(obj)
        elif ev.kind in (K.HEAP_FREE, K.STACK_FREE):
            obj = live.pop(ev.address, None)
            if obj is not None:
                obj["free"] = pos

    worst: dict[tuple, int] = {}
    for obj in objects:
        a, f = obj["alloc"], obj["free"]
        loops = [(lid, s) for lid, s in active_at[a] if target_loops == "all" or lid in target_loops]
        cls = 2
        if f is not None and loops:
            serial = loops[-1][1]
            if ends.get(serial, len(trace)) > f:
                starts = iter_starts[serial]
                cls = 0 if _iteration_at(starts, a) == _iteration_at(starts, f) else 1
        worst[obj["site"]] = max(worst.get(obj["site"], 0), cls)
    names = ("iter-local", "inv-local", "escaping")
    return _render("lifetime", (f"objlife {i} {c} {names[v]}" for (i, c), v in worst.items()))


# points-to

def pointsto_profile(trace: Sequence[Event], limit: Optional[int] = None) -> str:
    _check(trace)
    w = _Walker()
    instances: list[dict] = []
    live: dict[int, dict] = {}
    queries: list[tuple[int, int, int]] = []
    for pos, ev in enumerate(trace):
        w.apply(ev)
        if ev.kind in (K.HEAP_ALLOC, K.STACK_ALLOC, K.GLOBAL_INIT) and ev.size > 0:
            inst = {"lo": ev.address, "hi": ev.address + ev.size, "obj": (ev.primary_id, w.ctx), "from": pos, "to": None}
            instances.append(inst)
            live[ev.address] = inst
        elif ev.kind in (K.HEAP_FREE, K.STACK_FREE):
            inst = live.pop(ev.address, None)
            if inst is not None:
                inst["to"] = pos
        elif ev.kind == K.PTR_CREATE:
            queries.append((pos, ev.primary_id, ev.address))

    found: dict[int, set] = defaultdict(set)
    for pos, instr, addr in queries:
        covering = [
            inst for inst in instances
            if inst["from"] < pos and (inst["to"] is None or inst["to"] > pos) and inst["lo"] <= addr < inst["hi"]
        ]
        # the newest allocation owns the byte
        found[instr].add(max(covering, key=lambda x: x["from"])["obj"] if covering else None)

    records = []
    for instr, objs in found.items():
        ordered = sorted(objs, key=lambda o: (1, 0, 0) if o is None else (0, *o))
        sat = limit is not None and len(ordered) > limit
        if sat:
            ordered = ordered[:limit]
        names = sorted("UNKNOWN" if o is None else f"{o[0]}:{o[1]}" for o in ordered)
        records.append(f"ptsto {instr} {','.join(names)}" + (" sat" if sat else ""))
    return _render("pointsto", records)


def oracle_profile(trace: Sequence[Event], module: str, **config) -> str:
    """Reference profile of ``trace`` for ``module``; ``config`` as the module's options."""
    fn = {
        "memdep": memdep_profile,
        "valuepattern": valuepattern_profile,
        "lifetime": lifetime_profile,
        "pointsto": pointsto_profile,
    }.get(module)
    if fn is None:
        raise OracleError(f"unknown module {module!r}")
    return fn(trace, **config)
