from __future__ import annotations

import multiprocessing as mp
import random
import threading
import time

import numpy as np
import pytest

from prompt_kit.bench import checksum, mixed_stream
from prompt_kit.queue import QueueClosed, QueueConfig, QueueError, create
from prompt_kit.shmqueue import SharedFileConsumer, SharedFileProducer


def _collect(consumers, delay=0.0):
    got = [[] for _ in consumers]

    def run(i):
        for chunk in consumers[i]:
            got[i].append(np.array(chunk))
            if delay:
                time.sleep(delay)

    threads = [threading.Thread(target=run, args=(i,)) for i in range(len(consumers))]
    for t in threads:
        t.start()
    return got, threads


def _one_word_events(n):
    # header-only events (fn_enter, id i) followed by the terminator
    words = np.array([(i << 32) | 9 for i in range(n)] + [0], dtype=np.uint64)
    return words, np.arange(n + 1)


def test_create_shapes_and_validation():
    p, cs = create(QueueConfig(2 << 20, 8))
    assert len(cs) == 8
    p, cs = create(QueueConfig(4096, 1))
    assert len(cs) == 1
    with pytest.raises(QueueError, match="multiple of 8"):
        QueueConfig(100, 1)
    with pytest.raises(QueueError):
        QueueConfig(2048, 1)
    with pytest.raises(QueueError):
        QueueConfig(4096, 65)
    with pytest.raises(QueueError):
        QueueConfig(4096, 0)


def test_small_produce_does_not_swap():
    p, (c,) = create(QueueConfig(2 << 20, 1))
    p.produce(np.array([(1 << 32) | 9, (2 << 32) | 9, (3 << 32) | 9], dtype=np.uint64))
    assert p.seals == 0 and p.syncs == 0


def test_no_straddle_forces_exactly_one_swap():
    p, (c,) = create(QueueConfig(4096, 1))
    got, threads = _collect([c])
    # fill 511 of 512 words, leaving 8 bytes, then a two-word event
    words, starts = _one_word_events(511)
    p.produce(words[:-1], starts[:-1])
    assert p.seals == 0
    p.produce(np.array([(7 << 32) | 0x401, 0x2A], dtype=np.uint64))
    assert p.seals == 1
    p.produce(np.array([0], dtype=np.uint64))
    p.close()
    for t in threads:
        t.join()
    assert [len(x) for x in got[0]] == [511, 3]


def test_oversized_event_rejected():
    p, _ = create(QueueConfig(4096, 1))
    with pytest.raises(QueueError):
        p.produce(np.zeros(513, dtype=np.uint64) + 9)


def test_close_rules():
    p, (c,) = create(QueueConfig(4096, 1))
    with pytest.raises(QueueError, match="StreamEnd"):
        p.close()
    p.produce(np.array([0], dtype=np.uint64))
    with pytest.raises(QueueError, match="after StreamEnd"):
        p.produce(np.array([9], dtype=np.uint64))
    p.close()
    with pytest.raises(QueueError, match="double close"):
        p.close()
    with pytest.raises(QueueClosed):
        p.produce(np.array([9], dtype=np.uint64))
    assert list(c) and c.next_chunk() is None


@pytest.mark.parametrize("consumers", [1, 3, 8])
def test_broadcast_integrity_and_sync_bound(consumers):
    words, starts = mixed_stream(50_000, seed=consumers)
    p, cs = create(QueueConfig(8192, consumers))
    got, threads = _collect(cs)
    for lo in range(0, len(starts), 1000):
        hi = min(len(starts), lo + 1000)
        w_hi = int(starts[hi]) if hi < len(starts) else len(words)
        p.produce(words[int(starts[lo]):w_hi], starts[lo:hi] - starts[lo])
    p.close()
    for t in threads:
        t.join()
    for chunks in got:
        assert np.array_equal(np.concatenate(chunks), words)
        assert all(len(ch) <= 1024 for ch in chunks)
    # identical chunk boundaries for every consumer
    assert len({tuple(len(ch) for ch in chunks) for chunks in got}) == 1
    assert p.syncs <= 2 * p.seals + 2
    for c in cs:
        assert c.syncs <= p.seals + 2


def test_delayed_consumers_drain_after_close():
    words, starts = _one_word_events(3000)
    p, cs = create(QueueConfig(4096, 3))
    got, threads = _collect(cs, delay=0.002)
    p.produce(words, starts)
    p.close()
    for t in threads:
        t.join(timeout=30)
        assert not t.is_alive()
    for chunks in got:
        assert np.array_equal(np.concatenate(chunks), words)


def test_randomized_interleavings():
    rng = random.Random(11)
    for trial in range(10_000):
        n_cons = rng.randint(1, 3)
        n = rng.randint(1, 1500)
        words, starts = _one_word_events(n)
        p, cs = create(QueueConfig(4096, n_cons))
        got = [[] for _ in cs]
        yield_every = rng.choice([0, 1, 7])

        def run(i, c):
            for k, chunk in enumerate(c):
                got[i].append(np.array(chunk))
                if yield_every and k % yield_every == 0:
                    time.sleep(0)

        threads = [threading.Thread(target=run, args=(i, c)) for i, c in enumerate(cs)]
        for t in threads:
            t.start()
        pos = 0
        while pos < len(starts):
            step = rng.randint(1, 700)
            hi = min(len(starts), pos + step)
            w_hi = int(starts[hi]) if hi < len(starts) else len(words)
            p.produce(words[int(starts[pos]):w_hi], starts[pos:hi] - starts[pos])
            pos = hi
        p.close()
        for t in threads:
            t.join()
        for chunks in got:
            assert np.array_equal(np.concatenate(chunks), words), f"trial {trial}"


def test_abort_unblocks_producer():
    p, (c,) = create(QueueConfig(4096, 1))
    words, starts = _one_word_events(5000)
    err = []

    def produce():
        try:
            p.produce(words, starts)
        except QueueClosed as exc:
            err.append(exc)

    t = threading.Thread(target=produce)
    t.start()
    time.sleep(0.05)
    c.abort()
    t.join(timeout=10)
    assert not t.is_alive() and err


def _shm_consumer(path, index, out):
    c = SharedFileConsumer(path, index)
    crc = n = 0
    for chunk in c:
        crc = checksum(chunk, crc)
        n += len(chunk)
    c.next_chunk()  # releases the last buffer
    out.put((index, crc, n))


def test_shared_file_queue_across_processes(tmp_path):
    path = str(tmp_path / "q.bin")
    words, starts = mixed_stream(200_000, seed=5)
    p = SharedFileProducer(path, QueueConfig(1 << 16, 3))
    ctx = mp.get_context("fork")
    out = ctx.Queue()
    procs = [ctx.Process(target=_shm_consumer, args=(path, i, out)) for i in range(3)]
    for pr in procs:
        pr.start()
    for lo in range(0, len(starts), 10_000):
        hi = min(len(starts), lo + 10_000)
        w_hi = int(starts[hi]) if hi < len(starts) else len(words)
        p.produce(words[int(starts[lo]):w_hi], starts[lo:hi] - starts[lo])
    p.close()
    results = sorted(out.get(timeout=60) for _ in procs)
    for pr in procs:
        pr.join(timeout=30)
    assert p.seals > 2
    assert results == [(i, checksum(words), len(words)) for i in range(3)]
    assert p.wait_drained(timeout=10)


def test_shared_file_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk"
    path.write_bytes(b"\0" * 4096)
    with pytest.raises(QueueError):
        SharedFileConsumer(str(path), 0)
