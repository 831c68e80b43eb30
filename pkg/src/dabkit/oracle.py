"""Slow, obviously-correct references used by the test suites.

Nothing here imports the structures it checks, except that
``exhaustive_injectivity`` drives the encoder it is asked to audit.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from dataclasses import dataclass, field


def _circle_point(x: int, width: int = 64) -> int:
    # binary digits of x, least significant first, read as a fraction
    digits = bin(x)[2:][::-1]
    return int(digits.ljust(width, "0"), 2)


def naive_bijection(l1: int, l2: int, lmax: int | None = None) -> dict:
    """Round-by-round matching; returns ``{(side, j): position}``.

    ``lmax`` defaults to the smallest power of two above ``l1 + l2``.
    """
    total = l1 + l2
    if lmax is None:
        lmax = 1
        while lmax <= total:
            lmax *= 2
    elem = {}
    for j in range(1, l1 + 1):
        elem[3 * lmax - j + 1] = (1, j)
    for j in range(1, l2 + 1):
        elem[3 * lmax + j] = (2, j)
    a_left = set(elem)
    b_left = set(range(1, total + 1))
    point = {x: _circle_point(x) for x in a_left | b_left}
    assert len(set(point.values())) == len(point)
    result = {}
    while a_left:
        alive = sorted(a_left | b_left, key=point.get)
        matched = []
        for idx, x in enumerate(alive):
            if x in a_left:
                nxt = alive[(idx + 1) % len(alive)]
                if nxt in b_left:
                    matched.append((x, nxt))
        assert matched, "a round must match something"
        for a, b in matched:
            result[elem[a]] = b
            a_left.discard(a)
            b_left.discard(b)
    return result


def naive_rounds(l1: int, l2: int, lmax: int | None = None) -> int:
    total = l1 + l2
    if lmax is None:
        lmax = 1
        while lmax <= total:
            lmax *= 2
    a_left = {3 * lmax - j + 1 for j in range(1, l1 + 1)} | {3 * lmax + j for j in range(1, l2 + 1)}
    b_left = set(range(1, total + 1))
    rounds = 0
    while a_left:
        alive = sorted(a_left | b_left, key=_circle_point)
        pairs = [(x, alive[(i + 1) % len(alive)]) for i, x in enumerate(alive)
                 if x in a_left and alive[(i + 1) % len(alive)] in b_left]
        for a, b in pairs:
            a_left.discard(a)
            b_left.discard(b)
        rounds += 1
    return rounds


def naive_rank(bits, k: int) -> int:
    return sum(bits[:k])


def naive_select(bits, k: int) -> int:
    seen = 0
    for pos, b in enumerate(bits, 1):
        seen += b
        if b and seen == k:
            return pos
    raise ValueError(f"fewer than {k} ones")


def naive_rank_select(bits, k: int) -> tuple:
    """``(rank(k), select(k))``; select is None when there are fewer than k ones."""
    try:
        sel = naive_select(bits, k) if k >= 1 else None
    except ValueError:
        sel = None
    return naive_rank(bits, min(k, len(bits))), sel


@dataclass
class NaiveMirror:
    """Plain array plus op log; replaying the log rebuilds the array."""

    initial: list
    array: list = field(default_factory=list)
    log: list = field(default_factory=list)

    def __post_init__(self):
        self.array = list(self.initial)

    def set(self, i: int, value) -> None:
        self.array[i - 1] = value
        self.log.append((i, value))

    def get(self, i: int):
        return self.array[i - 1]

    @property
    def bitset(self) -> list:
        return [1 if v else 0 for v in self.array]

    def replay(self) -> list:
        arr = list(self.initial)
        for i, v in self.log:
            arr[i - 1] = v
        return arr


def exhaustive_injectivity(tables, n: int, phi, encode=None, alphabet=None) -> tuple:
    """Encode every array of length ``n`` with root label ``phi``.

    Returns ``(ok, count)``: ``ok`` holds when all logical encodings are
    pairwise distinct and their number equals the table count ``N[n, phi]``.
    """
    if encode is None:
        from dabkit.dabtree import encode
    params = tables.params
    if alphabet is None:
        alphabet = params.alphabet
    seen = set()
    count = 0
    distinct = True
    for arr in itertools.product(alphabet, repeat=n):
        if root_label_naive(params, list(arr)) != phi:
            continue
        logical = encode(tables, list(arr)).logical()
        if logical in seen:
            distinct = False
        seen.add(logical)
        count += 1
    return distinct and count == tables.N[n][phi], count


def root_label_naive(params, arr) -> object:
    labels = [params.leaf_label(s) for s in arr]
    size = 1
    while len(labels) > 1:
        size *= 2
        labels = [params.combine(labels[i], labels[i + 1], size) for i in range(0, len(labels), 2)]
    return labels[0]


def small_set_redundancy_holds(spill_K: int, memory_M: int, set_size: int, r: int) -> bool:
    """``(K 2^M)^r <= 4 |X|^r``, in integers."""
    return (spill_K << memory_M) ** r <= 4 * set_size ** r


def fusion_redundancy_holds(code, probability: dict) -> bool:
    """``(K* 2^M*)^r <= 16 2^(H r)`` with ``H`` the smallest value satisfying
    ``K(x) 2^M(x) / p'(x) <= 2^H`` for every item.

    ``probability`` maps each item ``x`` of ``code`` to ``p'(x)``.  Taking the
    smallest real ``H`` makes this the strictest form of the check.
    """
    r = code.refinement_r
    worst = max(Fraction(it.K << it.M) / probability[it.x] for it in code.items)
    out = code.out_spill_K_star << code.out_memory_M_star
    return out ** r * worst.denominator ** r <= 16 * worst.numerator ** r


class IntBitset:
    """Bit array held in one Python int; bit ``i - 1`` is position ``i``."""

    def __init__(self, bits):
        self.n = len(bits)
        self.value = 0
        for i, b in enumerate(bits):
            if b:
                self.value |= 1 << i

    def set(self, i: int, bit: int) -> None:
        if bit:
            self.value |= 1 << (i - 1)
        else:
            self.value &= ~(1 << (i - 1))

    def get(self, i: int) -> int:
        return (self.value >> (i - 1)) & 1

    def rank(self, k: int) -> int:
        return (self.value & ((1 << k) - 1)).bit_count()

    def select(self, k: int) -> int:
        lo, hi = 1, self.n
        if k < 1 or self.rank(self.n) < k:
            raise ValueError(f"fewer than {k} ones")
        while lo < hi:
            mid = (lo + hi) // 2
            if self.rank(mid) >= k:
                hi = mid
            else:
                lo = mid + 1
        return lo
