"""Plain sequential reference for every map flavor."""

from __future__ import annotations

from collections import defaultdict


def naive_snapshot(flavor: str, pairs, limit=None):
    groups = defaultdict(list)
    for k, v in pairs:
        groups[k].append(v)
    out = []
    for k in sorted(groups):
        vs = groups[k]
        if flavor == "constant":
            agg = (vs[0], True) if len(set(vs)) == 1 else (None, False)
        elif flavor == "count":
            agg = len(vs)
        elif flavor == "sum":
            agg = sum(vs) % 2**64
        elif flavor == "min":
            agg = min(vs)
        elif flavor == "max":
            agg = max(vs)
        else:
            distinct = sorted(set(vs))
            if limit is not None and len(distinct) > limit:
                agg = (tuple(distinct[:limit]), True)
            else:
                agg = (tuple(distinct), False)
        out.append((k, agg))
    return out
