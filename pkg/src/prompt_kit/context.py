"""Per-worker context manager: the active function/loop frame stack.

A stack is identified by its frames with iteration counters stripped, and
each distinct stack gets the next integer id the first time it is encoded
(0 is the empty stack). Loop iteration counters are tracked separately in
``loop_chain``, one ``(loop_id, invocation_serial, iteration)`` entry per
active loop, outermost first.

Iteration numbering: a loop invocation starts in iteration 0, the first
``loop_iter`` keeps it at 0 and each further ``loop_iter`` increments it.
"""

from __future__ import annotations

import enum
from typing import NamedTuple

from .events import EventKind

MAX_CONTEXTS = 0xFFFFFFFF


class ContextError(ValueError):
    pass


class FrameType(enum.IntEnum):
    FUNCTION = 0
    LOOP_INVOCATION = 1
    LOOP_ITERATION = 2


class ContextFrame(NamedTuple):
    frame_type: FrameType
    id: int
    iteration: int = 0


class ContextManager:
    def __init__(self):
        self._keys: list[tuple[int, int]] = []
        self._iters: list[int] = []
        self._serials: list[int] = []
        self._next_serial = 0
        self._ids: dict[tuple, int] = {(): 0}
        self._stacks: list[tuple] = [()]
        self._memo_version = -1
        self._memo_id = 0
        self.version = 0
        self.loop_chain: tuple[tuple[int, int, int], ...] = ()

    # transforms

    def push(self, frame_type: FrameType, id: int) -> None:
        keys = self._keys
        if frame_type == FrameType.LOOP_ITERATION:
            top = keys[-1] if keys else None
            if top == (FrameType.LOOP_ITERATION, id):
                self._iters[-1] += 1
            elif top == (FrameType.LOOP_INVOCATION, id):
                keys.append((FrameType.LOOP_ITERATION, id))
                self._iters.append(0)
                self._serials.append(-1)
            else:
                raise ContextError(f"loop_iter {id} without enclosing loop_invoke {id} on top")
            # the iterated loop is always the innermost one
            lid, serial, _ = self.loop_chain[-1]
            self.loop_chain = self.loop_chain[:-1] + ((lid, serial, self._iters[-1]),)
        else:
            keys.append((int(frame_type), id))
            self._iters.append(0)
            if frame_type == FrameType.LOOP_INVOCATION:
                self._serials.append(self._next_serial)
                self.loop_chain = self.loop_chain + ((id, self._next_serial, 0),)
                self._next_serial += 1
            else:
                self._serials.append(-1)
        self.version += 1

    def pop(self, frame_type: FrameType, id: int) -> None:
        keys = self._keys
        if frame_type == FrameType.LOOP_INVOCATION and keys and keys[-1] == (FrameType.LOOP_ITERATION, id):
            self._drop()
        want = (int(frame_type), id)
        if not keys or keys[-1] != want:
            top = ContextFrame(FrameType(keys[-1][0]), keys[-1][1]) if keys else None
            raise ContextError(f"pop {FrameType(frame_type).name}({id}) does not match top frame {top}")
        self._drop()
        if frame_type == FrameType.LOOP_INVOCATION:
            self.loop_chain = self.loop_chain[:-1]
        self.version += 1

    def _drop(self):
        self._keys.pop()
        self._iters.pop()
        self._serials.pop()

    def on_event(self, kind: int, id: int) -> None:
        """Apply a context event from the stream."""
        if kind == EventKind.FN_ENTER:
            self.push(FrameType.FUNCTION, id)
        elif kind == EventKind.FN_EXIT:
            self.pop(FrameType.FUNCTION, id)
        elif kind == EventKind.LOOP_INVOKE:
            self.push(FrameType.LOOP_INVOCATION, id)
        elif kind == EventKind.LOOP_ITER:
            self.push(FrameType.LOOP_ITERATION, id)
        elif kind == EventKind.LOOP_EXIT:
            self.pop(FrameType.LOOP_INVOCATION, id)
        else:
            raise ContextError(f"not a context event: {kind}")

    # queries

    @property
    def depth(self) -> int:
        return len(self._keys)

    def frames(self) -> list[ContextFrame]:
        return [ContextFrame(FrameType(t), i, it) for (t, i), it in zip(self._keys, self._iters)]

    def iteration(self, loop_id: int) -> int:
        """Iteration counter of the innermost active invocation of ``loop_id``."""
        for fid, _, it in reversed(self.loop_chain):
            if fid == loop_id:
                return it
        raise ContextError(f"loop {loop_id} is not active")

    # encoding

    def encode(self) -> int:
        """Id of the current stack; repeated calls without a transform are O(1)."""
        if self._memo_version == self.version:
            return self._memo_id
        key = tuple(self._keys)
        cid = self._ids.get(key)
        if cid is None:
            cid = len(self._stacks)
            if cid > MAX_CONTEXTS:
                raise ContextError("more than 2^32-1 distinct contexts")
            self._ids[key] = cid
            self._stacks.append(key)
        self._memo_version = self.version
        self._memo_id = cid
        return cid

    def decode(self, cid: int) -> list[ContextFrame]:
        if not 0 <= cid < len(self._stacks):
            raise ContextError(f"unknown context id {cid}")
        return [ContextFrame(FrameType(t), i) for t, i in self._stacks[cid]]

    @property
    def num_contexts(self) -> int:
        return len(self._stacks)
