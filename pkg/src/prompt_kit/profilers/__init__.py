"""Reference profiling modules and their registry."""

from __future__ import annotations

import functools

from .lifetime import LifetimeConfig, LifetimeModule
from .memdep import DepConfig, MemDepModule
from .pointsto import PointsToConfig, PointsToModule
from .valuepattern import ValuePatternModule

MODULES = {
    "memdep": MemDepModule,
    "valuepattern": ValuePatternModule,
    "lifetime": LifetimeModule,
    "pointsto": PointsToModule,
}


def get_module(name: str):
    try:
        return MODULES[name]
    except KeyError:
        raise ValueError(f"unknown module {name!r}; choose from {', '.join(sorted(MODULES))}") from None


def module_factory(name: str, config=None, reducers=None):
    """Factory for ``run_backend``: ``factory(num_workers=, tid=, shared=)``."""
    return functools.partial(get_module(name), config, reducers=reducers)


__all__ = [
    "MODULES", "get_module", "module_factory",
    "DepConfig", "MemDepModule", "ValuePatternModule",
    "LifetimeConfig", "LifetimeModule", "PointsToConfig", "PointsToModule",
]
