"""Spillover codecs.

A spillover representation stores data as a pair ``(k, m)`` with ``k`` in
``[K]`` (the spill) and ``m`` a string of ``M`` bits, so that its effective
size is ``M + log2 K`` bits.  Bit strings are plain ints; their length is
carried alongside.

All arithmetic is on exact integers and ``fractions.Fraction``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Mapping, Sequence


class CorruptionError(ValueError):
    """A codeword does not decode to any valid input."""


@dataclass(frozen=True)
class SmallSetCode:
    set_size: int
    refinement_r: int
    spill_universe_K: int
    memory_bits_M: int

    @property
    def K(self) -> int:
        return self.spill_universe_K

    @property
    def M(self) -> int:
        return self.memory_bits_M


def small_set_params(set_size: int, r: int) -> SmallSetCode:
    """Pick ``(K, M)`` for one element of a set of ``set_size`` items.

    For ``set_size >= r`` this gives ``r <= K <= 2r``; smaller sets are
    stored entirely in the spill.
    """
    if set_size < 1 or r < 1:
        raise ValueError("set_size and r must be positive")
    if set_size < r:
        return SmallSetCode(set_size, r, set_size, 0)
    m = (set_size // r).bit_length() - 1
    k = -(-set_size >> m)
    return SmallSetCode(set_size, r, k, m)


def small_set_encode(code: SmallSetCode, u: int) -> tuple[int, int]:
    if not 0 <= u < code.set_size:
        raise ValueError(f"index {u} outside [0, {code.set_size})")
    return u >> code.M, u & ((1 << code.M) - 1)


def small_set_decode(code: SmallSetCode, k: int, m: int) -> int:
    if not (0 <= k < code.K and 0 <= m < (1 << code.M)):
        raise CorruptionError("spill or memory out of range")
    u = (k << code.M) | m
    if u >= code.set_size:
        raise CorruptionError(f"decoded index {u} >= set size {code.set_size}")
    return u


@dataclass(frozen=True)
class PerturbedDistribution:
    support: tuple
    probabilities: tuple  # of Fraction, aligned with support

    def __getitem__(self, x) -> Fraction:
        return self.probabilities[self.support.index(x)]

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.probabilities))


def perturb(p: Mapping[Hashable, Fraction], r: int) -> PerturbedDistribution:
    """Mix ``p`` with the uniform distribution at weight ``1/r``.

    Every probability becomes at least ``1/(r|X|)`` and no ``log 1/p``
    grows by more than ``-log2(1 - 1/r) <= 2/r`` (needs ``r >= 4``).
    """
    if r < 4:
        raise ValueError("perturbation needs r >= 4")
    if not p:
        raise ValueError("empty distribution")
    probs = [Fraction(v) for v in p.values()]
    if sum(probs) != 1 or any(v < 0 for v in probs):
        raise ValueError("input is not a probability distribution")
    size = len(probs)
    keep = 1 - Fraction(1, r)
    floor = Fraction(1, r * size)
    return PerturbedDistribution(tuple(p.keys()), tuple(keep * v + floor for v in probs))


@dataclass(frozen=True)
class FusionItem:
    x: Hashable
    M: int
    K: int

    @property
    def weight(self) -> int:
        return self.K << self.M


@dataclass
class FusionCode:
    """Aligned-interval code for ``(x, y_m, y_k)``.

    Item ``x`` owns the integer interval ``[start(x), start(x) + K(x) 2^M(x))``
    of codeword values.  Items are laid out by decreasing ``M(x)``, so every
    start is a multiple of ``2^M(x)`` and ``y_m`` lands verbatim in the low
    bits of the value.  The value is then split into
    ``k* = value >> M*`` and ``m* = value mod 2^M*``.
    """

    items: tuple
    starts: tuple
    total_T: int
    out_memory_M_star: int
    out_spill_K_star: int
    refinement_r: int
    p_prime: PerturbedDistribution | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {it.x: i for i, it in enumerate(self.items)}

    @property
    def M_star(self) -> int:
        return self.out_memory_M_star

    @property
    def K_star(self) -> int:
        return self.out_spill_K_star

    def item(self, x) -> FusionItem:
        return self.items[self._index[x]]

    def start(self, x) -> int:
        return self.starts[self._index[x]]

    def __contains__(self, x) -> bool:
        return x in self._index


def _sort_key(item: FusionItem):
    return (-item.M, item.x)


def fusion_build(
    items: Sequence[tuple],
    p_prime: PerturbedDistribution | None,
    r: int,
) -> FusionCode:
    """Build the fusion code over ``items = [(x, M(x), K(x)), ...]``.

    ``p_prime`` is kept as a certificate only; interval weights are the
    exact codeword counts ``K(x) 2^M(x)``.
    """
    if not items:
        raise ValueError("fusion code needs at least one item")
    if r < 1:
        raise ValueError("r must be positive")
    parsed = []
    for x, m, k in items:
        if m < 0 or k < 1:
            raise ValueError(f"item {x!r}: need M >= 0 and K >= 1")
        parsed.append(FusionItem(x, m, k))
    parsed.sort(key=_sort_key)
    starts = []
    total = 0
    for it in parsed:
        starts.append(total)
        total += it.weight
    # smallest M* with ceil(T / 2^M*) <= 2r
    m_star = 0
    while -(-total >> m_star) > 2 * r:
        m_star += 1
    k_star = -(-total >> m_star)
    return FusionCode(tuple(parsed), tuple(starts), total, m_star, k_star, r, p_prime)


def fusion_encode(code: FusionCode, x, y_m: int, y_k: int) -> tuple[int, int]:
    """Return ``(k*, m*)``."""
    try:
        i = code._index[x]
    except KeyError:
        raise ValueError(f"{x!r} is not an item of this code") from None
    it = code.items[i]
    if not 0 <= y_k < it.K:
        raise ValueError(f"spill {y_k} outside [0, {it.K})")
    if not 0 <= y_m < (1 << it.M):
        raise ValueError(f"memory value does not fit in {it.M} bits")
    value = code.starts[i] + (y_k << it.M) + y_m
    m_star = code.out_memory_M_star
    return value >> m_star, value & ((1 << m_star) - 1)


def fusion_decode(code: FusionCode, k_star: int, m_star: int) -> tuple:
    """Return ``(x, y_m, y_k)``."""
    if k_star < 0 or not 0 <= m_star < (1 << code.out_memory_M_star):
        raise CorruptionError("codeword out of range")
    value = (k_star << code.out_memory_M_star) | m_star
    if value >= code.total_T:
        raise CorruptionError(f"codeword value {value} >= T = {code.total_T}")
    i = bisect.bisect_right(code.starts, value) - 1
    it = code.items[i]
    offset = value - code.starts[i]
    return it.x, offset & ((1 << it.M) - 1), offset >> it.M
