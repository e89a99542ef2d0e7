"""Synthetic workloads and randomized traces.

The three named workloads are built so that each profiler has something to
find: ``stride-loop`` produces flow dependences inside a loop,
``pointer-chase`` links heap objects from several allocation sites through
pointer creations, and ``alloc-churn`` allocates and frees objects inside
loop iterations. ``random_trace`` mixes every event kind for differential
testing against the oracle.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .events import Event, EventKind

K = EventKind
WORKLOADS = ("stride-loop", "pointer-chase", "alloc-churn")

STRIDE_BASE = 0x10000
HEAP_BASE = 0x100000
CHURN_BASE = 0x200000
DEFERRED_BASE = 0x300000


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticWorkload:
    name: str
    iters: int = 1000
    footprint: int = 4096
    stride: int = 8
    seed: int = 0


def _access_size(stride: int) -> int:
    size = 8
    while size > stride:
        size >>= 1
    return size


def generate_synthetic(
    name: str, iters: int = 1000, footprint: int = 4096, stride: int = 8, seed: int = 0
) -> list[Event]:
    """Deterministic, well-formed trace for one of ``WORKLOADS``."""
    if name not in WORKLOADS:
        raise WorkloadError(f"unknown workload {name!r}; choose from {', '.join(WORKLOADS)}")
    if iters < 1:
        raise WorkloadError("iterations must be >= 1")
    if stride < 1 or footprint < 1:
        raise WorkloadError("stride and footprint must be >= 1")
    rng = random.Random(seed)
    body = {"stride-loop": _stride_loop, "pointer-chase": _pointer_chase, "alloc-churn": _alloc_churn}[name]
    return [Event(K.PROG_START, 1), *body(rng, iters, footprint, stride), Event(K.PROG_END, 1)]


def _stride_loop(rng, iters, footprint, stride):
    size = _access_size(stride)
    footprint = max(footprint, size)
    out = [Event(K.LOOP_INVOKE, 1)]
    for i in range(iters):
        off = (i * stride) % footprint
        if off + size > footprint:
            off = 0
        addr = STRIDE_BASE + off
        out.append(Event(K.LOOP_ITER, 1))
        if i and off == 0:
            # wrapped around: the loop re-derives its base pointer
            out.append(Event(K.PTR_CREATE, 3, STRIDE_BASE, type_id=1))
        val = rng.getrandbits(8 * size)
        out.append(Event(K.STORE, 1, addr, val, size))
        out.append(Event(K.LOAD, 2, addr, val, size))
    out.append(Event(K.LOOP_EXIT, 1))
    return out


def _pointer_chase(rng, iters, footprint, stride):
    node = max(8, stride)
    n = max(3, footprint // node)
    order = list(range(n))
    rng.shuffle(order)
    bases = [HEAP_BASE + k * node for k in order]
    succ = {bases[k]: bases[(k + 1) % n] for k in range(n)}
    out = [Event(K.FN_ENTER, 1)]
    for k, b in enumerate(bases):
        out.append(Event(K.HEAP_ALLOC, 10 + k % 3, b, size=node))
    for b in bases:
        out.append(Event(K.PTR_CREATE, 21, succ[b], type_id=2))
        out.append(Event(K.STORE, 20, b, succ[b], 8))
    out.append(Event(K.LOOP_INVOKE, 2))
    cur = bases[0]
    for _ in range(iters):
        out.append(Event(K.LOOP_ITER, 2))
        nxt = succ[cur]
        out.append(Event(K.LOAD, 22, cur, nxt, 8))
        out.append(Event(K.PTR_CREATE, 23, nxt, type_id=2))
        cur = nxt
    out.append(Event(K.LOOP_EXIT, 2))
    for b in bases:
        out.append(Event(K.HEAP_FREE, 30, b))
    out.append(Event(K.FN_EXIT, 1))
    return out


def _alloc_churn(rng, iters, footprint, stride):
    size = max(8, min(footprint, max(stride, 8)))
    out = [Event(K.LOOP_INVOKE, 3)]
    deferred = None
    for i in range(iters):
        out.append(Event(K.LOOP_ITER, 3))
        if deferred is not None:
            out.append(Event(K.HEAP_FREE, 45, deferred))
            deferred = None
        base = CHURN_BASE + rng.randrange(4) * 0x1000
        out.append(Event(K.HEAP_ALLOC, 40, base, size=size))
        val = rng.getrandbits(64)
        out.append(Event(K.STORE, 41, base, val, 8))
        out.append(Event(K.LOAD, 42, base, val, 8))
        out.append(Event(K.HEAP_FREE, 44, base))
        if i % 4 == 3:
            # survives into the next iteration
            deferred = DEFERRED_BASE
            out.append(Event(K.HEAP_ALLOC, 43, deferred, size=size))
    if deferred is not None:
        out.append(Event(K.HEAP_FREE, 45, deferred))
    out.append(Event(K.LOOP_EXIT, 3))
    return out


# randomized traces for differential testing

def address_pool(rng: random.Random, count: int = 64) -> list[int]:
    """Distinct addresses clustered around 64-byte granule boundaries."""
    pool: set[int] = set()
    while len(pool) < count:
        boundary = 0x4000 + rng.randrange(48) * 64
        pool.add(boundary + rng.randrange(-8, 8))
    return sorted(pool)


def random_trace(seed: int, max_events: int = 10_000, num_addresses: int = 64, max_loop_depth: int = 3) -> list[Event]:
    """A well-formed random trace of at most ``max_events`` events."""
    if max_events < 2:
        raise WorkloadError("max_events must be >= 2")
    rng = random.Random(seed)
    pool = address_pool(rng, num_addresses)
    target = rng.randrange(max(2, max_events // 4), max_events + 1)
    out = [Event(K.PROG_START, 0)]
    frames: list[tuple[str, int]] = []  # ("fn" | "loop", id)
    live: dict[int, tuple[int, EventKind]] = {}  # base -> (size, free kind)
    loop_depth = 0

    def room(extra: int) -> bool:
        # keep space for closing every frame, freeing nothing, and prog_end
        return len(out) + extra + len(frames) + 1 <= target

    def overlaps(base, size):
        return any(base < b + s and b < base + size for b, (s, _) in live.items())

    for _ in range(rng.randrange(3)):
        base, size = rng.choice(pool), rng.choice((8, 16, 64))
        if room(1) and not overlaps(base, size):
            out.append(Event(K.GLOBAL_INIT, 600 + rng.randrange(2), base, size=size))
            live[base] = (size, None)

    while room(3):
        r = rng.random()
        top = frames[-1] if frames else None
        if r < 0.05 and len(frames) < 8:
            out.append(Event(K.FN_ENTER, rng.randrange(1, 4)))
            frames.append(("fn", out[-1].primary_id))
        elif r < 0.09 and top and top[0] == "fn":
            out.append(Event(K.FN_EXIT, top[1]))
            frames.pop()
        elif r < 0.13 and loop_depth < max_loop_depth:
            active = {f[1] for f in frames if f[0] == "loop"}
            lid = rng.choice([x for x in range(1, 6) if x not in active])
            out.append(Event(K.LOOP_INVOKE, lid))
            frames.append(("loop", lid))
            loop_depth += 1
            if rng.random() < 0.8:
                out.append(Event(K.LOOP_ITER, lid))
        elif r < 0.25 and top and top[0] == "loop":
            out.append(Event(K.LOOP_ITER, top[1]))
        elif r < 0.28 and top and top[0] == "loop":
            out.append(Event(K.LOOP_EXIT, top[1]))
            frames.pop()
            loop_depth -= 1
        elif r < 0.50:
            size = rng.choice((1, 2, 4, 8))
            out.append(Event(K.LOAD, 100 + rng.randrange(12), rng.choice(pool), rng.randrange(4), size))
        elif r < 0.72:
            size = rng.choice((1, 2, 4, 8))
            out.append(Event(K.STORE, 200 + rng.randrange(12), rng.choice(pool), rng.randrange(4), size))
        elif r < 0.80:
            addr = rng.choice(pool) + rng.randrange(4)
            out.append(Event(K.PTR_CREATE, 300 + rng.randrange(6), addr, type_id=rng.randrange(3)))
        elif r < 0.88:
            base, size = rng.choice(pool), rng.choice((4, 8, 16, 32, 64, 128))
            if base not in live and not overlaps(base, size):
                heap = rng.random() < 0.6
                kind = K.HEAP_ALLOC if heap else K.STACK_ALLOC
                out.append(Event(kind, 400 + rng.randrange(6), base, size=size))
                live[base] = (size, K.HEAP_FREE if heap else K.STACK_FREE)
        elif r < 0.96:
            freeable = [b for b, (_, fk) in live.items() if fk is not None]
            if freeable and rng.random() < 0.93:
                base = rng.choice(freeable)
                out.append(Event(live.pop(base)[1], 500 + rng.randrange(3), base))
            else:
                out.append(Event(K.HEAP_FREE, 509, rng.choice(pool) + 1))

    for kind, fid in reversed(frames):
        out.append(Event(K.FN_EXIT if kind == "fn" else K.LOOP_EXIT, fid))
    out.append(Event(K.PROG_END, 0))
    return out


def synthetic_from(w: SyntheticWorkload) -> list[Event]:
    return generate_synthetic(w.name, w.iters, w.footprint, w.stride, w.seed)


def events_for_target(name: str, events: int, seed: int = 0, footprint: Optional[int] = None) -> list[Event]:
    """Synthetic workload scaled to roughly ``events`` events."""
    per_iter = {"stride-loop": 3, "pointer-chase": 3, "alloc-churn": 5}[name]
    return generate_synthetic(name, max(1, events // per_iter), footprint or 4096, 8, seed)
