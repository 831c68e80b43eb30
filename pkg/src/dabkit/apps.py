"""Block-partitioned applications of the daB-tree.

Both applications cut the array into ``n / r`` blocks of ``r`` symbols, keep
one daB-tree per block (all sharing one ``DabTables``), and host the blocks'
root VMs in a single :class:`ChunkStore`.

* :class:`FidState` is a dynamic bit vector with rank/select.  Block one
  counts also live in a balanced sum tree used to route rank and select.
* :class:`AcState` is a dynamic array over a small constant alphabet with
  per-block occurrence-count labels.

Space reports are exact integers except for the information-theoretic
benchmark, which is ``log2`` of an exact big integer.
"""

from __future__ import annotations

import math
import struct

from dabkit import dabtree
from dabkit.dabtree import (
    PositionNavigator,
    RankNavigator,
    SelectNavigator,
    UpdateStats,
    count_vector_params,
    popcount_params,
)
from dabkit.vmem import ChunkStore


def _log2_int(x: int) -> float:
    """``log2`` of a positive big integer without float overflow."""
    if x < 1:
        raise ValueError("log of a non-positive integer")
    shift = max(0, x.bit_length() - 64)
    return math.log2(x >> shift) + shift


def multinomial(counts) -> int:
    out, total = 1, 0
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


class SumTree:
    """Balanced aggregate tree over per-block counts.

    Every node keeps the sum of its leaves in a ``counter_bits``-wide
    register; the tree has ``2 * leaves - 1`` nodes with ``leaves`` the
    block count rounded up to a power of two.
    """

    def __init__(self, size: int, counter_bits: int):
        self.size = size
        self.leaves = 1 << max(0, (size - 1).bit_length())
        self.counter_bits = counter_bits
        self.sums = [0] * (2 * self.leaves)
        self.touches = 0

    def set(self, i: int, value: int) -> None:
        x = i + self.leaves
        self.sums[x] = value
        x //= 2
        self.touches = 1
        while x:
            self.sums[x] = self.sums[2 * x] + self.sums[2 * x + 1]
            self.touches += 1
            x //= 2

    def get(self, i: int) -> int:
        return self.sums[i + self.leaves]

    def total(self) -> int:
        return self.sums[1]

    def prefix(self, count: int) -> int:
        """Sum over blocks ``[0, count)``."""
        acc = 0
        lo, hi = self.leaves, self.leaves + count
        while lo < hi:
            if lo & 1:
                acc += self.sums[lo]
                lo += 1
            if hi & 1:
                hi -= 1
                acc += self.sums[hi]
            lo //= 2
            hi //= 2
        return acc

    def search(self, k: int) -> tuple:
        """Block holding the ``k``-th unit and the units before it."""
        x, before = 1, 0
        while x < self.leaves:
            left = self.sums[2 * x]
            if k <= left:
                x = 2 * x
            else:
                k -= left
                before += left
                x = 2 * x + 1
        return x - self.leaves, before

    def space_bits(self) -> int:
        return (2 * self.leaves - 1) * self.counter_bits


class _BlockApp:
    """Shared block management for the two applications."""

    magic = b""

    def __init__(self, n: int, r: int, w: int, params, cap_bits: int):
        if r < 1 or r & (r - 1):
            raise ValueError("block size r must be a power of two")
        if n < r or n % r:
            raise ValueError(f"n = {n} must be a positive multiple of r = {r}")
        self.n, self.r, self.w = n, r, w
        self.block_count = n // r
        self.tables = dabtree.build_tables(params)
        self.block_cap_bits = w * -(-cap_bits // w)
        self.store = ChunkStore(self.block_count, self.block_cap_bits, w)
        self.blocks = []
        self.instrumentation = {"updates": 0, "relocations": 0, "max_relocations": 0,
                                "allocations": 0, "releases": 0, "word_reads": 0,
                                "word_writes": 0, "inter_tree_touches": 0}

    def _fill(self, arr) -> None:
        r = self.r
        self.blocks = []
        for b in range(self.block_count):
            st = dabtree.encode(self.tables, list(arr[b * r:(b + 1) * r]), vm=self.store.vm(b))
            self.blocks.append(st)

    def _locate(self, i: int) -> tuple:
        if not 1 <= i <= self.n:
            raise IndexError(f"index {i} outside [1, {self.n}]")
        b, off = divmod(i - 1, self.r)
        return b, off + 1

    def _record(self, stats: UpdateStats) -> None:
        ins = self.instrumentation
        ins["updates"] += 1
        ins["relocations"] += stats.relocations
        ins["max_relocations"] = max(ins["max_relocations"], stats.relocations)
        ins["allocations"] += stats.allocations
        ins["releases"] += stats.releases
        ins["word_reads"] += stats.word_reads
        ins["word_writes"] += stats.word_writes

    def block_array(self, b: int) -> list:
        return dabtree.decode_all(self.blocks[b])

    def to_list(self) -> list:
        out = []
        for b in range(self.block_count):
            out.extend(self.block_array(b))
        return out

    def register_bits(self) -> int:
        """Per block: root label index and ``total_bits_M``, one word each."""
        return self.block_count * 2 * self.w

    def block_bits(self) -> list:
        return [st.total_bits_M for st in self.blocks]

    # snapshots --------------------------------------------------------------

    def _header(self) -> bytes:
        raise NotImplementedError

    def to_bytes(self) -> bytes:
        p = self.tables.params
        regs = []
        for st in self.blocks:
            regs.append(struct.pack("<II", p.label_index[st.root_label], st.total_bits_M))
        return self.magic + self._header() + b"".join(regs) + self.store.to_bytes()

    def _load_blocks(self, data: bytes, pos: int) -> None:
        p = self.tables.params
        labels = []
        for b in range(self.block_count):
            idx, total = struct.unpack_from("<II", data, pos)
            pos += 8
            labels.append((p.labels[idx], total))
        self.store = ChunkStore.from_bytes(data[pos:])
        if self.store.B != self.block_count or self.store.w != self.w:
            raise ValueError("snapshot store does not match the header")
        self.blocks = []
        for b, (label, total) in enumerate(labels):
            st = dabtree.DabState(self.tables, self.store.vm(b))
            st.root_label, st.total_bits_M = label, total
            self.blocks.append(st)


class FidState(_BlockApp):
    """Dynamic bit vector of length ``n`` with rank and select."""

    magic = b"DABFID1"

    def __init__(self, n: int, r: int = 64, w: int = 16, bits=None, slack_C: int = 100):
        super().__init__(n, r, w, popcount_params(r, w, slack_C), r + 3)
        self.slack_C = slack_C
        self.inter = SumTree(self.block_count, max(1, n.bit_length()))
        self._fill([0] * n if bits is None else [1 if x else 0 for x in bits])
        self._sync_inter()

    def _sync_inter(self) -> None:
        for b, st in enumerate(self.blocks):
            self.inter.set(b, st.root_label)

    @property
    def ones(self) -> int:
        return self.inter.total()

    def get(self, k: int) -> int:
        b, off = self._locate(k)
        return dabtree.query(self.blocks[b], PositionNavigator(off))

    def rank(self, k: int) -> int:
        if not 0 <= k <= self.n:
            raise IndexError(f"rank position {k} outside [0, {self.n}]")
        if k == 0:
            return 0
        b, off = divmod(k - 1, self.r)
        return self.inter.prefix(b) + dabtree.query(self.blocks[b], RankNavigator(off + 1))

    def select(self, k: int) -> int:
        if not 1 <= k <= self.ones:
            raise IndexError(f"select index {k} outside [1, {self.ones}]")
        b, before = self.inter.search(k)
        return b * self.r + dabtree.query(self.blocks[b], SelectNavigator(k - before))

    def update(self, k: int, bit: int) -> UpdateStats:
        b, off = self._locate(k)
        stats = dabtree.update(self.blocks[b], off, 1 if bit else 0)
        self._record(stats)
        if self.inter.get(b) != self.blocks[b].root_label:
            self.inter.set(b, self.blocks[b].root_label)
            self.instrumentation["inter_tree_touches"] += self.inter.touches
        return stats

    def payload_bits(self) -> float:
        return _log2_int(math.comb(self.n, self.ones))

    def space_report(self) -> dict:
        chunk = self.store.space_breakdown()
        inter = self.inter.space_bits()
        regs = self.register_bits()
        total = sum(chunk.values()) + inter + regs
        payload = self.payload_bits()
        return {
            "payload_bits": payload,
            "redundancy_bits": total - payload,
            "overhead_breakdown": {**chunk, "inter_tree": inter, "block_registers": regs},
            "total_bits": total,
        }

    def _header(self) -> bytes:
        return struct.pack("<5I", self.n, self.r, self.w, self.slack_C, 0)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FidState":
        if data[:7] != cls.magic:
            raise ValueError("not a DABFID1 snapshot")
        n, r, w, slack, _ = struct.unpack_from("<5I", data, 7)
        state = cls(n, r, w, slack_C=slack)
        state._load_blocks(data, 7 + 20)
        state._sync_inter()
        return state


class AcState(_BlockApp):
    """Dynamic array over ``0..sigma-1`` stored near its empirical entropy."""

    magic = b"DABAC1"

    def __init__(self, n: int, r: int = 16, sigma: int = 3, w: int = 16, symbols=None,
                 slack_C: int = 100):
        if sigma < 2:
            raise ValueError("alphabet needs at least two symbols")
        cap = math.ceil(r * math.log2(sigma)) + 3
        super().__init__(n, r, w, count_vector_params(r, sigma, w, slack_C), cap)
        self.sigma = sigma
        self.slack_C = slack_C
        arr = [0] * n if symbols is None else list(symbols)
        for s in arr:
            if not 0 <= s < sigma:
                raise ValueError(f"symbol {s} outside [0, {sigma})")
        self._fill(arr)
        self.frequencies = [0] * sigma
        for st in self.blocks:
            for s, c in enumerate(st.root_label):
                self.frequencies[s] += c

    def get(self, i: int) -> int:
        b, off = self._locate(i)
        return dabtree.query(self.blocks[b], PositionNavigator(off))

    def set(self, i: int, symbol: int) -> UpdateStats:
        if not 0 <= symbol < self.sigma:
            raise ValueError(f"symbol {symbol} outside [0, {self.sigma})")
        b, off = self._locate(i)
        before = self.blocks[b].root_label
        stats = dabtree.update(self.blocks[b], off, symbol)
        after = self.blocks[b].root_label
        for s in range(self.sigma):
            self.frequencies[s] += after[s] - before[s]
        self._record(stats)
        return stats

    def payload_bits(self) -> float:
        return _log2_int(multinomial(self.frequencies))

    def space_report(self) -> dict:
        chunk = self.store.space_breakdown()
        regs = self.register_bits()
        total = sum(chunk.values()) + regs
        payload = self.payload_bits()
        return {
            "payload_bits": payload,
            "redundancy_bits": total - payload,
            "overhead_breakdown": {**chunk, "block_registers": regs},
            "total_bits": total,
        }

    def _header(self) -> bytes:
        return struct.pack("<5I", self.n, self.r, self.w, self.slack_C, self.sigma)

    @classmethod
    def from_bytes(cls, data: bytes) -> "AcState":
        if data[:6] != cls.magic:
            raise ValueError("not a DABAC1 snapshot")
        n, r, w, slack, sigma = struct.unpack_from("<5I", data, 6)
        state = cls(n, r, sigma, w, slack_C=slack)
        state._load_blocks(data, 6 + 20)
        state.frequencies = [0] * sigma
        for st in state.blocks:
            for s, c in enumerate(st.root_label):
                state.frequencies[s] += c
        return state


def block_layout_bits(store: ChunkStore, block_bits) -> dict:
    """Chunk-store space recomputed from block sizes and layout constants alone."""
    w, s = store.w, store.s
    words_per_chunk = s // w
    slots = sum(-(-(-(-bits // w)) // words_per_chunk) for bits in block_bits)
    return {
        "payload_slots": slots * s,
        "slot_maps": store.B * (-(-store.L // s)) * store.universe.bit_length(),
        "free_list": (store.universe + 1) * store.universe.bit_length(),
        "length_registers": store.B * w,
    }


def fid_overhead_formula(state: FidState) -> int:
    """Total bits of a FID from its block sizes alone; compare with the report."""
    layout = block_layout_bits(state.store, state.block_bits())
    leaves = 1 << max(0, (state.block_count - 1).bit_length())
    inter = (2 * leaves - 1) * max(1, state.n.bit_length())
    return sum(layout.values()) + inter + state.block_count * 2 * state.w


def ac_overhead_formula(state: AcState) -> int:
    layout = block_layout_bits(state.store, state.block_bits())
    return sum(layout.values()) + state.block_count * 2 * state.w


# functional aliases


def fid_new(n: int, r: int = 64, w: int = 16, bits=None) -> FidState:
    return FidState(n, r, w, bits)


def fid_rank(state: FidState, k: int) -> int:
    return state.rank(k)


def fid_select(state: FidState, k: int) -> int:
    return state.select(k)


def fid_update(state: FidState, k: int, bit: int) -> UpdateStats:
    return state.update(k, bit)


def fid_space_report(state: FidState) -> dict:
    return state.space_report()


def ac_new(n: int, r: int = 16, alphabet: int = 3, w: int = 16, symbols=None) -> AcState:
    return AcState(n, r, alphabet, w, symbols)


def ac_get(state: AcState, i: int) -> int:
    return state.get(i)


def ac_set(state: AcState, i: int, symbol: int) -> UpdateStats:
    return state.set(i, symbol)


def ac_space_report(state: AcState) -> dict:
    return state.space_report()


# Frozen constants of the FID redundancy envelope
#   3 n / r + C1 (n / r) sqrt(r * cap) + C2 (n / r) w,
# with ``cap`` a block's VM cap in bits: C1 covers the partly used last
# chunk of each block (a chunk is about sqrt(cap * w) bits), C2 the per-block
# registers, slot-map entries, free-list share and sum-tree counters, which
# measure about 8.6 words per block at n = 2^16, r = 64, w = 16.
FID_C1 = 1.0
FID_C2 = 10.0


def fid_redundancy_envelope(state: FidState) -> float:
    blocks = state.block_count
    return (3 * blocks + FID_C1 * blocks * math.sqrt(state.r * state.block_cap_bits)
            + FID_C2 * blocks * state.w)
