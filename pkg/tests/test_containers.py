from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from naive import naive_snapshot
from prompt_kit.containers import Flavor, HtMap, HtSet

FLAVORS = ["constant", "count", "sum", "min", "max", "set"]

pairs = st.lists(st.tuples(st.integers(0, 20), st.integers(0, 2**64 - 1) | st.integers(0, 3)), max_size=300)


def fresh(flavor, limit=None, **kw):
    return HtMap(flavor, limit=limit if flavor == "set" else None, **kw)


def test_count_example():
    m = HtMap("count", capacity=2, reducers=2)
    for _ in range(3):
        m.insert("k", 1)
    assert m.snapshot() == [("k", 3)]


def test_constant_example():
    m = HtMap("constant")
    m.insert(5, 42)
    m.insert(5, 42)
    assert m.get(5) == (42, True)
    m.insert(5, 43)
    assert m.get(5) == (None, False)


def test_empty_and_idempotent_snapshot():
    m = HtMap("sum")
    assert m.snapshot() == []
    m.insert_many([1, 2, 1], [5, 6, 7])
    assert m.snapshot() == m.snapshot() == [(1, 12), (2, 6)]


def test_set_limit_and_saturation():
    m = HtMap("set", limit=2, capacity=3, reducers=2)
    m.insert_many(["a"] * 4, [9, 3, 7, 3])
    assert m.get("a") == ((3, 7), True)
    with pytest.raises(ValueError):
        HtMap("count", limit=2)


@pytest.mark.parametrize("flavor", FLAVORS)
@given(pairs, st.sampled_from([1, 2, 7, 64]), st.sampled_from([1, 2, 4, 8]), st.sampled_from([None, 1, 3]))
def test_matches_naive_map(flavor, data, capacity, reducers, limit):
    m = fresh(flavor, limit, capacity=capacity, reducers=reducers)
    half = len(data) // 2
    for k, v in data[:half]:
        m.insert(k, v)
    lim = limit if flavor == "set" else None
    assert m.snapshot() == naive_snapshot(flavor, data[:half], lim)
    m.insert_many([k for k, _ in data[half:]], [v for _, v in data[half:]])
    assert m.snapshot() == naive_snapshot(flavor, data, lim)
    assert len(m) == len({k for k, _ in data})


@pytest.mark.parametrize("flavor", FLAVORS)
@given(pairs, pairs, pairs)
def test_merge_laws(flavor, a, b, c):
    def build(data):
        m = fresh(flavor, 2, capacity=5, reducers=3)
        m.insert_many([k for k, _ in data], [v for _, v in data])
        return m

    left = build(a)
    bc = build(b)
    bc.merge(build(c))
    left.merge(bc)
    right = build(a)
    right.merge(build(b))
    right.merge(build(c))
    swapped = build(c)
    swapped.merge(build(a))
    swapped.merge(build(b))
    want = naive_snapshot(flavor, a + b + c, 2 if flavor == "set" else None)
    assert left.snapshot() == right.snapshot() == swapped.snapshot() == want
    ident = build(a)
    ident.merge(fresh(flavor, 2))
    assert ident.snapshot() == naive_snapshot(flavor, a, 2 if flavor == "set" else None)


def test_merge_examples_and_errors():
    x, y = HtMap("count"), HtMap("count")
    x.insert_many(["k", "k"])
    y.insert_many(["k"] * 3)
    x.merge(y)
    assert x.snapshot() == [("k", 5)] and y.snapshot() == []
    p, q = HtMap("constant"), HtMap("constant")
    p.insert("k", 1)
    q.insert("k", 2)
    p.merge(q)
    assert p.get("k") == (None, False)
    with pytest.raises(ValueError):
        HtMap("count").merge(HtMap("sum"))
    with pytest.raises(ValueError):
        HtMap("set", limit=1).merge(HtMap("set", limit=2))


def test_set_saturation_is_monotone():
    rng = random.Random(1)
    m = HtMap("set", limit=4, capacity=3, reducers=2)
    was = False
    for _ in range(200):
        m.insert(0, rng.randrange(10))
        members, sat = m.get(0)
        assert len(members) <= 4
        assert sat or not was
        was = sat


def test_htset():
    s, t = HtSet(capacity=2), HtSet()
    s.insert_many([3, 1, 3])
    t.insert(7)
    assert 3 in s and 7 not in s
    s.merge(t)
    assert s.snapshot() == [1, 3, 7] and len(s) == 3


def test_flavor_enum_accepts_strings():
    assert HtMap("max").flavor is Flavor.MAX
    with pytest.raises(ValueError):
        HtMap("median")
