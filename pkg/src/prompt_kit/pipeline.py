"""Frontend -> queue -> backend in one call."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Optional

from .backend import run_backend
from .events import Event
from .frontend import ReplayStats, replay
from .profilers import DepConfig, LifetimeConfig, PointsToConfig, get_module, module_factory
from .profilers.memdep import ALL_LOOPS
from .queue import DEFAULT_BUFFER_BYTES, QueueClosed, QueueConfig, create

log = logging.getLogger(__name__)

BUFFER_ENV = "PROMPT_KIT_BUFFER_BYTES"


@dataclass
class RunResult:
    profile: str
    stats: ReplayStats
    seconds: float


def buffer_bytes_from_env(default: int = DEFAULT_BUFFER_BYTES) -> int:
    raw = os.environ.get(BUFFER_ENV)
    if not raw:
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise ValueError(f"{BUFFER_ENV}={raw!r} is not an integer") from None


def parse_loops(text: Optional[str]):
    """``None``/"all" -> all loops, "none" -> no loop tracking, "1,3" -> those ids."""
    if text is None or text == ALL_LOOPS:
        return ALL_LOOPS
    if text == "none":
        return None
    try:
        return frozenset(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ValueError(f"bad loop list {text!r}") from None


def make_config(module: str, flags: str = "", loops=ALL_LOOPS, limit: Optional[int] = None):
    get_module(module)
    if module != "memdep" and flags:
        raise ValueError(f"--flags only applies to memdep, not {module}")
    if module != "pointsto" and limit is not None:
        raise ValueError("--limit only applies to pointsto")
    if module == "memdep":
        return DepConfig.from_flags(flags, loops)
    if module == "lifetime":
        if loops is None:
            raise ValueError("lifetime needs loop tracking")
        return LifetimeConfig(loops)
    if module == "pointsto":
        return PointsToConfig(limit)
    return None


def profile_events(
    events: Iterable[Event],
    module: str,
    config=None,
    workers: int = 1,
    buffer_bytes: Optional[int] = None,
    reducers: Optional[int] = None,
) -> RunResult:
    """Replay ``events`` specialized for ``module`` and return its profile."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    cls = get_module(module)
    spec = cls.event_spec(config)
    producer, consumers = create(QueueConfig(buffer_bytes or buffer_bytes_from_env(), workers))
    out: dict = {}

    def produce():
        try:
            out["stats"] = replay(events, spec, producer)
            producer.close()
        except BaseException as exc:
            out["error"] = exc
            producer.abort()

    t0 = time.perf_counter()
    feeder = threading.Thread(target=produce, name="frontend")
    feeder.start()
    try:
        text = run_backend(spec, module_factory(module, config, reducers), workers, consumers)
    except QueueClosed:
        feeder.join()
        if "error" in out and not isinstance(out["error"], QueueClosed):
            raise out["error"]
        raise
    except BaseException:
        producer.abort()
        feeder.join()
        raise
    feeder.join()
    if "error" in out:
        raise out["error"]
    return RunResult(text, out["stats"], time.perf_counter() - t0)
