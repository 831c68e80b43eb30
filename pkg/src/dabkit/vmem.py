"""Virtual memories and the chunked physical store.

A virtual memory (VM) is a tape of ``w``-bit words used as a prefix
``[1, L]``: words are read and written by 1-based address, and the tape
grows or shrinks by one word at the tail.  ``ChunkStore`` packs many VMs
into one slot region: every VM is cut into chunks of ``s`` bits, each chunk
sits in an arbitrary slot, and a fixed-capacity slot map per VM translates
addresses.  Slot placement depends on the operation history; VM contents
do not.
"""

from __future__ import annotations

import math
import struct


class AddressError(IndexError):
    pass


class WidthError(ValueError):
    pass


class CapacityError(RuntimeError):
    pass


class VirtualMemory:
    """A plain growable VM backed by a Python list."""

    def __init__(self, word_size_w: int):
        if not 8 <= word_size_w <= 64:
            raise ValueError("word size must be within [8, 64]")
        self.w = word_size_w
        self._words: list[int] = []

    @property
    def word_size_w(self) -> int:
        return self.w

    def __len__(self) -> int:
        return len(self._words)

    @property
    def length_L(self) -> int:
        return len(self._words)

    def read(self, addr: int) -> int:
        if not 1 <= addr <= len(self._words):
            raise AddressError(f"address {addr} outside [1, {len(self._words)}]")
        return self._words[addr - 1]

    def write(self, addr: int, value: int) -> None:
        if not 1 <= addr <= len(self._words):
            raise AddressError(f"address {addr} outside [1, {len(self._words)}]")
        if not 0 <= value < (1 << self.w):
            raise WidthError(f"value {value} does not fit in {self.w} bits")
        self._words[addr - 1] = value

    def resize(self, delta: int) -> None:
        if delta == 1:
            self._words.append(0)
        elif delta == -1:
            if not self._words:
                raise AddressError("release on an empty VM")
            self._words.pop()
        else:
            raise ValueError("resize delta must be +1 or -1")

    def words(self) -> list[int]:
        return list(self._words)


def vm_read(vm, addr: int) -> int:
    return vm.read(addr)


def vm_write(vm, addr: int, value: int) -> None:
    vm.write(addr, value)


def vm_resize(vm, delta: int) -> None:
    vm.resize(delta)


SNAPSHOT_MAGIC = b"DABVM1"


class ChunkStore:
    """``B`` word-granular VMs packed into slots of ``s`` bits.

    Layout constants used by :meth:`space_bits`:

    * ``pointer_bits`` = bit length of the slot universe size; a slot map
      entry or a free-list entry takes one pointer, the universe size itself
      serves as the null pointer.
    * every VM owns ``map_capacity = ceil(L / s)`` slot-map entries.
    * the free list is a stack of ``universe`` entries plus one pointer-wide
      top-of-stack counter.
    * every VM length is a ``w``-bit register.
    * only occupied slots are charged as payload.
    """

    def __init__(self, vm_count_B: int, per_vm_cap_L: int, word_size_w: int,
                 total_cap_S: int | None = None):
        if vm_count_B < 1:
            raise ValueError("need at least one VM")
        if not 8 <= word_size_w <= 64:
            raise ValueError("word size must be within [8, 64]")
        if per_vm_cap_L < word_size_w:
            raise ValueError("per-VM cap must hold at least one word")
        w = word_size_w
        self.w = w
        self.B = vm_count_B
        self.L = per_vm_cap_L
        self.S = vm_count_B * per_vm_cap_L if total_cap_S is None else total_cap_S
        if self.S > self.B * self.L:
            raise ValueError("total cap S must not exceed B * L")
        root = math.isqrt(per_vm_cap_L * w)
        if root * root < per_vm_cap_L * w:
            root += 1
        self.s = -(-root // w) * w
        self.words_per_chunk = self.s // w
        self.map_capacity = -(-per_vm_cap_L // self.s)
        self.universe = -(-self.S // self.s) + vm_count_B
        self.pointer_bits = max(1, self.universe.bit_length())
        self.lengths = [0] * vm_count_B  # in words
        self.slot_maps: list[list[int]] = [[] for _ in range(vm_count_B)]
        self.free_slots = list(range(self.universe - 1, -1, -1))
        self.slots = [0] * (self.universe * self.words_per_chunk)
        # instrumentation of the last resize
        self.last_slot_touches = 0
        self.last_map_touches = 0

    @property
    def chunk_size_s(self) -> int:
        return self.s

    @property
    def vm_count_B(self) -> int:
        return self.B

    def vm(self, i: int) -> "ChunkedVM":
        if not 0 <= i < self.B:
            raise IndexError(f"VM index {i} outside [0, {self.B})")
        return ChunkedVM(self, i)

    def _locate(self, i: int, addr: int) -> int:
        if not 1 <= addr <= self.lengths[i]:
            raise AddressError(f"address {addr} outside [1, {self.lengths[i]}] of VM {i}")
        c, off = divmod(addr - 1, self.words_per_chunk)
        return self.slot_maps[i][c] * self.words_per_chunk + off

    def read(self, i: int, addr: int) -> int:
        return self.slots[self._locate(i, addr)]

    def write(self, i: int, addr: int, value: int) -> None:
        if not 0 <= value < (1 << self.w):
            raise WidthError(f"value {value} does not fit in {self.w} bits")
        self.slots[self._locate(i, addr)] = value

    def resize(self, i: int, delta: int) -> None:
        self.last_slot_touches = 0
        self.last_map_touches = 0
        n = self.lengths[i]
        if delta == 1:
            if (n + 1) * self.w > self.L:
                raise CapacityError(f"VM {i} would exceed its cap of {self.L} bits")
            if (sum(self.lengths) + 1) * self.w > self.S:
                raise CapacityError("total cap S exceeded")
            if n % self.words_per_chunk == 0:
                if not self.free_slots:
                    raise CapacityError("slot universe exhausted")
                self.slot_maps[i].append(self.free_slots.pop())
                self.last_map_touches += 1
            self.lengths[i] = n + 1
            self.slots[self._locate(i, n + 1)] = 0
            self.last_slot_touches += 1
        elif delta == -1:
            if n == 0:
                raise AddressError(f"release on empty VM {i}")
            self.lengths[i] = n - 1
            if (n - 1) % self.words_per_chunk == 0:
                self.free_slots.append(self.slot_maps[i].pop())
                self.last_map_touches += 1
                self.last_slot_touches += 1
        else:
            raise ValueError("resize delta must be +1 or -1")

    def bit_length(self, i: int) -> int:
        return self.lengths[i] * self.w

    def slots_used(self) -> int:
        return sum(len(m) for m in self.slot_maps)

    def space_breakdown(self) -> dict:
        return {
            "payload_slots": self.slots_used() * self.s,
            "slot_maps": self.B * self.map_capacity * self.pointer_bits,
            "free_list": (self.universe + 1) * self.pointer_bits,
            "length_registers": self.B * self.w,
        }

    def space_bits(self) -> int:
        return sum(self.space_breakdown().values())

    # -- snapshot -----------------------------------------------------------

    def to_bytes(self) -> bytes:
        null = self.universe
        out = [SNAPSHOT_MAGIC,
               struct.pack("<6I", self.w, self.B, self.s, self.L, self.S, self.universe)]
        out.append(struct.pack(f"<{self.B}I", *self.lengths))
        for m in self.slot_maps:
            row = m + [null] * (self.map_capacity - len(m))
            out.append(struct.pack(f"<{self.map_capacity}I", *row))
        out.append(struct.pack("<I", len(self.free_slots)))
        out.append(struct.pack(f"<{len(self.free_slots)}I", *self.free_slots))
        out.append(struct.pack(f"<{len(self.slots)}Q", *self.slots))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ChunkStore":
        if data[:6] != SNAPSHOT_MAGIC:
            raise ValueError("not a DABVM1 snapshot")
        pos = 6
        w, b, s, cap_l, cap_s, universe = struct.unpack_from("<6I", data, pos)
        pos += 24
        store = cls(b, cap_l, w, cap_s)
        if (store.s, store.universe) != (s, universe):
            raise ValueError("snapshot layout constants do not match")
        store.lengths = list(struct.unpack_from(f"<{b}I", data, pos))
        pos += 4 * b
        maps = []
        for _ in range(b):
            row = struct.unpack_from(f"<{store.map_capacity}I", data, pos)
            pos += 4 * store.map_capacity
            maps.append([x for x in row if x != universe])
        store.slot_maps = maps
        (nfree,) = struct.unpack_from("<I", data, pos)
        pos += 4
        store.free_slots = list(struct.unpack_from(f"<{nfree}I", data, pos))
        pos += 4 * nfree
        store.slots = list(struct.unpack_from(f"<{len(store.slots)}Q", data, pos))
        pos += 8 * len(store.slots)
        if pos != len(data):
            raise ValueError("trailing bytes in snapshot")
        return store


def chunk_store_create(vm_count_B: int, per_vm_cap_L: int, word_size_w: int,
                       total_cap_S: int | None = None) -> ChunkStore:
    return ChunkStore(vm_count_B, per_vm_cap_L, word_size_w, total_cap_S)


def chunk_store_space(store: ChunkStore) -> int:
    return store.space_bits()


class ChunkedVM:
    """View of one VM hosted by a :class:`ChunkStore`."""

    __slots__ = ("store", "index")

    def __init__(self, store: ChunkStore, index: int):
        self.store = store
        self.index = index

    @property
    def w(self) -> int:
        return self.store.w

    word_size_w = w

    def __len__(self) -> int:
        return self.store.lengths[self.index]

    @property
    def length_L(self) -> int:
        return self.store.lengths[self.index]

    def read(self, addr: int) -> int:
        return self.store.read(self.index, addr)

    def write(self, addr: int, value: int) -> None:
        self.store.write(self.index, addr, value)

    def resize(self, delta: int) -> None:
        self.store.resize(self.index, delta)

    def words(self) -> list[int]:
        return [self.read(a) for a in range(1, len(self) + 1)]
