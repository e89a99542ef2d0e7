"""Paged shadow memory: ``meta_bytes`` bytes of metadata per profiled byte.

Lookup is a shift and a mask: ``addr >> page_shift`` selects a page in the
directory, ``addr & page_mask`` the cell inside it. Pages are allocated
zero-filled on first write, so unwritten addresses read as all-zero records.
"""

from __future__ import annotations

import sys

import numpy as np

VALID_META_BYTES = (1, 2, 4, 8, 16)


class ShadowMemory:
    def __init__(self, meta_bytes: int = 8, page_shift: int = 16):
        if meta_bytes not in VALID_META_BYTES:
            raise ValueError(f"meta_bytes must be one of {VALID_META_BYTES}, got {meta_bytes}")
        if not 6 <= page_shift <= 30:
            raise ValueError(f"page_shift {page_shift} outside 6..30")
        self.meta_bytes = meta_bytes
        self.page_shift = page_shift
        self.page_size = 1 << page_shift
        self.page_mask = self.page_size - 1
        self._zero = bytes(meta_bytes)
        self.pages: dict[int, np.ndarray] = {}
        self._words: dict[int, memoryview] = {}

    # page access

    def page(self, index: int, create: bool = True):
        """The uint8 array backing page ``index``; None if absent and not ``create``."""
        pg = self.pages.get(index)
        if pg is None and create:
            # setdefault keeps concurrent first-touches from racing on the directory
            pg = self.pages.setdefault(index, np.zeros(self.page_size * self.meta_bytes, dtype=np.uint8))
        return pg

    def words32(self, index: int) -> memoryview:
        """Page ``index`` as a flat uint32 memoryview (creates the page).

        With ``meta_bytes`` = 4k, byte ``off`` owns words ``k*off .. k*off+k-1``.
        Cheap per-element access for hot loops.
        """
        mv = self._words.get(index)
        if mv is None:
            mv = memoryview(self.page(index)).cast("I")
            mv = self._words.setdefault(index, mv)
        return mv

    def _spans(self, addr: int, length: int):
        end = addr + length
        while addr < end:
            idx = addr >> self.page_shift
            off = addr & self.page_mask
            n = min(end - addr, self.page_size - off)
            yield idx, off, n
            addr += n

    # record-level API

    def write(self, addr: int, length: int, meta: bytes) -> None:
        if length < 1:
            raise ValueError("length must be >= 1")
        meta = bytes(meta)
        if len(meta) != self.meta_bytes:
            raise ValueError(f"metadata record must be {self.meta_bytes} bytes")
        P = self.meta_bytes
        rec = np.frombuffer(meta, dtype=np.uint8)
        for idx, off, n in self._spans(addr, length):
            pg = self.page(idx)
            pg[off * P:(off + n) * P].reshape(n, P)[:] = rec

    def read(self, addr: int) -> bytes:
        pg = self.pages.get(addr >> self.page_shift)
        if pg is None:
            return self._zero
        off = (addr & self.page_mask) * self.meta_bytes
        return pg[off:off + self.meta_bytes].tobytes()

    def read_range(self, addr: int, length: int) -> list[bytes]:
        return [self.read(a) for a in range(addr, addr + length)]

    def clear(self, addr: int, length: int) -> None:
        """Reset ``[addr, addr+length)`` to zero records; never allocates pages."""
        P = self.meta_bytes
        for idx, off, n in self._spans(addr, length):
            pg = self.pages.get(idx)
            if pg is not None:
                pg[off * P:(off + n) * P] = 0

    def write_granules(self, granules: np.ndarray, lo: int, hi: int, meta: bytes, granule_shift: int = 6) -> None:
        """Write ``meta`` over the parts of ``[lo, hi)`` covered by the given granules.

        Used by sharded workers to touch only the granules they own.
        """
        for g in _runs(granules):
            a = max(lo, g[0] << granule_shift)
            b = min(hi, (g[1] + 1) << granule_shift)
            if b > a:
                self.write(a, b - a, meta)

    def clear_granules(self, granules: np.ndarray, lo: int, hi: int, granule_shift: int = 6) -> None:
        for g in _runs(granules):
            a = max(lo, g[0] << granule_shift)
            b = min(hi, (g[1] + 1) << granule_shift)
            if b > a:
                self.clear(a, b - a)

    # accounting

    @property
    def resident_bytes(self) -> int:
        return sum(pg.nbytes for pg in self.pages.values())

    @property
    def directory_bytes(self) -> int:
        return sys.getsizeof(self.pages) + sys.getsizeof(self._words)

    def __len__(self) -> int:
        return len(self.pages)


def _runs(sorted_ids: np.ndarray):
    """Collapse sorted integer ids into inclusive ``(first, last)`` runs."""
    ids = np.asarray(sorted_ids, dtype=np.int64)
    if not len(ids):
        return []
    breaks = np.flatnonzero(np.diff(ids) != 1)
    firsts = np.concatenate(([ids[0]], ids[breaks + 1]))
    lasts = np.concatenate((ids[breaks], [ids[-1]]))
    return list(zip(firsts.tolist(), lasts.tolist()))
