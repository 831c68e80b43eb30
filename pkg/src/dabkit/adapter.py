"""Two-way adapter: store two sub-VMs inside one super-VM.

Side 1 word ``j`` is the integer ``3*Lmax - j + 1`` and side 2 word ``j`` is
``3*Lmax + j``; super-VM positions are ``1..L``.  Every integer is placed on
a circle by reversing its binary digits behind the binary point, and the
matching repeatedly pairs each surviving element with a position that is its
immediate clockwise successor among all surviving points.

Reading elements as opening brackets and positions as closing brackets,
that process is ordinary bracket matching on the circle: cut the circle
right after a point where the running excess is minimal and match with a
stack.  The number of rounds equals the nesting depth.  The kernels below
use this formulation; ``dabkit.oracle.naive_bijection`` runs the literal
rounds for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from numba import njit


class CapacityError(ValueError):
    pass


def bit_reversal_key(x: int, width_t: int) -> int:
    """Reverse the ``width_t`` low bits of ``x``."""
    if x < 0 or x >= (1 << width_t):
        raise ValueError(f"{x} does not fit in {width_t} bits")
    return int(format(x, f"0{width_t}b")[::-1], 2) if width_t else 0


def hash_width(lmax: int) -> int:
    return (4 * lmax).bit_length()


def canonical_lmax(total: int) -> int:
    """Smallest power of two strictly above ``total``.

    The matching is the same for every power-of-two ``Lmax > L``; at
    ``Lmax <= L`` it can differ, so this is the width-independent choice.
    """
    return 1 << total.bit_length()


class AdapterKey(NamedTuple):
    l1: int
    l2: int

    @property
    def L(self) -> int:
        return self.l1 + self.l2


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _circle_order(t):
    # order[k] = the integer whose key is k
    size = 1 << t
    order = np.empty(size, np.int64)
    for k in range(size):
        x = 0
        v = k
        for _ in range(t):
            x = (x << 1) | (v & 1)
            v >>= 1
        order[k] = x
    return order


@njit(cache=True)
def _sub_orders(order, lmax, cap):
    """Values of [1, cap] and of (3 lmax - cap, 3 lmax + cap], each by key."""
    bvals = np.empty(cap, np.int64)
    bkeys = np.empty(cap, np.int64)
    avals = np.empty(2 * cap, np.int64)
    akeys = np.empty(2 * cap, np.int64)
    nb = 0
    na = 0
    side = min(cap, lmax)
    lo = 3 * lmax - side
    hi = 3 * lmax + side
    for k in range(order.shape[0]):
        x = order[k]
        if 1 <= x <= cap:
            bvals[nb] = x
            bkeys[nb] = k
            nb += 1
        elif lo < x <= hi:
            avals[na] = x
            akeys[na] = k
            na += 1
    return bvals[:nb], bkeys[:nb], avals[:na], akeys[:na]


@njit(cache=True)
def _merged(l1, l2, lmax, sub, seq, seqkeys):
    """Elements and positions of key (l1, l2) in circle order; returns count."""
    bvals, bkeys, avals, akeys = sub
    total = l1 + l2
    lo = 3 * lmax - l1
    hi = 3 * lmax + l2
    i = 0
    j = 0
    cnt = 0
    nb = bvals.shape[0]
    na = avals.shape[0]
    while True:
        while i < nb and bvals[i] > total:
            i += 1
        while j < na and not (lo < avals[j] <= hi):
            j += 1
        if i >= nb and j >= na:
            break
        if j >= na or (i < nb and bkeys[i] < akeys[j]):
            seq[cnt] = bvals[i]
            seqkeys[cnt] = bkeys[i]
            i += 1
        else:
            seq[cnt] = avals[j]
            seqkeys[cnt] = akeys[j]
            j += 1
        cnt += 1
    return cnt


@njit(cache=True)
def _match_seq(seq, cnt, total, lmax, pos1, pos2):
    """Fill pos1/pos2 with 1-based positions; return the number of rounds."""
    if total == 0:
        return 0
    # cut right after the first minimum of the running excess
    level = 0
    best = 0
    cut = -1
    for i in range(cnt):
        if seq[i] > total:
            level += 1
        else:
            level -= 1
        if level < best:
            best = level
            cut = i
    stack = np.empty(total, np.int64)
    top = 0
    depth = 0
    for step in range(cnt):
        x = seq[(cut + 1 + step) % cnt]
        if x > total:
            stack[top] = x
            top += 1
            if top > depth:
                depth = top
        else:
            top -= 1
            a = stack[top]
            if a <= 3 * lmax:
                pos1[3 * lmax - a] = x
            else:
                pos2[a - 3 * lmax - 1] = x
    return depth


@njit(cache=True)
def _match(l1, l2, lmax, sub, pos1, pos2, seq, seqkeys):
    cnt = _merged(l1, l2, lmax, sub, seq, seqkeys)
    return _match_seq(seq, cnt, l1 + l2, lmax, pos1, pos2)


@njit(cache=True)
def _sweep(lcap, lmax, sub, sub2):
    """Exhaustive statistics over all keys with l1 + l2 <= lcap.

    Per L: max rounds, max |excess|, max excess range, max moves over
    transitions that end at total size L.  Also flags non-bijective keys,
    keys whose matching changes when Lmax doubles, and keys whose rounds
    differ from the excess range.
    """
    max_rounds = np.zeros(lcap + 1, np.int64)
    max_abs_gamma = np.zeros(lcap + 1, np.int64)
    max_moves = np.zeros(lcap + 1, np.int64)
    bad_bijection = 0
    bad_doubling = 0
    bad_depth = 0
    prev1 = np.zeros((lcap + 1, lcap + 1), np.int64)
    prev2 = np.zeros((lcap + 1, lcap + 1), np.int64)
    cur1 = np.zeros((lcap + 1, lcap + 1), np.int64)
    cur2 = np.zeros((lcap + 1, lcap + 1), np.int64)
    alt1 = np.zeros(lcap + 1, np.int64)
    alt2 = np.zeros(lcap + 1, np.int64)
    seen = np.zeros(lcap + 2, np.int64)
    seq = np.zeros(2 * lcap + 2, np.int64)
    seqkeys = np.zeros(2 * lcap + 2, np.int64)
    for total in range(lcap + 1):
        for l1 in range(total + 1):
            l2 = total - l1
            cnt = _merged(l1, l2, lmax, sub, seq, seqkeys)
            rounds = _match_seq(seq, cnt, total, lmax, cur1[l1], cur2[l1])
            # excess profile, read off before seq is reused
            hi_g = 0
            lo_g = 0
            g = 0
            for i in range(cnt):
                if seq[i] > total:
                    g += 1
                else:
                    g -= 1
                if abs(g) > max_abs_gamma[total]:
                    max_abs_gamma[total] = abs(g)
                if g > hi_g:
                    hi_g = g
                if g < lo_g:
                    lo_g = g
            if hi_g - lo_g != rounds:
                bad_depth += 1
            if rounds > max_rounds[total]:
                max_rounds[total] = rounds
            # bijectivity
            for p in range(1, total + 1):
                seen[p] = 0
            for j in range(l1):
                p = cur1[l1, j]
                if p < 1 or p > total or seen[p]:
                    bad_bijection += 1
                else:
                    seen[p] = 1
            for j in range(l2):
                p = cur2[l1, j]
                if p < 1 or p > total or seen[p]:
                    bad_bijection += 1
                else:
                    seen[p] = 1
            # doubling Lmax
            _match(l1, l2, 2 * lmax, sub2, alt1, alt2, seq, seqkeys)
            for j in range(l1):
                if alt1[j] != cur1[l1, j]:
                    bad_doubling += 1
                    break
            for j in range(l2):
                if alt2[j] != cur2[l1, j]:
                    bad_doubling += 1
                    break
            # transitions from size total-1: grow side 1 or side 2
            if total >= 1:
                if l1 >= 1:
                    moves = 1
                    for j in range(l1 - 1):
                        if prev1[l1 - 1, j] != cur1[l1, j]:
                            moves += 1
                    for j in range(l2):
                        if prev2[l1 - 1, j] != cur2[l1, j]:
                            moves += 1
                    if moves > max_moves[total]:
                        max_moves[total] = moves
                if l2 >= 1:
                    moves = 1
                    for j in range(l1):
                        if prev1[l1, j] != cur1[l1, j]:
                            moves += 1
                    for j in range(l2 - 1):
                        if prev2[l1, j] != cur2[l1, j]:
                            moves += 1
                    if moves > max_moves[total]:
                        max_moves[total] = moves
        for l1 in range(total + 1):
            for j in range(l1):
                prev1[l1, j] = cur1[l1, j]
            for j in range(total - l1):
                prev2[l1, j] = cur2[l1, j]
    return max_rounds, max_abs_gamma, max_moves, bad_bijection, bad_doubling, bad_depth


_ORDERS: dict = {}


def circle_order(t: int) -> np.ndarray:
    if t not in _ORDERS:
        _ORDERS[t] = _circle_order(t)
    return _ORDERS[t]


_SUBS: dict = {}


def sub_orders(lmax: int, cap: int) -> tuple:
    """Circle order restricted to what keys with ``l1 + l2 <= cap`` can use."""
    key = (lmax, cap)
    if key not in _SUBS:
        _SUBS[key] = _sub_orders(circle_order(hash_width(lmax)), lmax, cap)
    return _SUBS[key]


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class AdapterMap:
    key: AdapterKey
    side1: tuple  # side1[j-1] = position of (1, j)
    side2: tuple
    rounds: int

    def position(self, i: int, j: int) -> int:
        side = self.side1 if i == 1 else self.side2
        if i not in (1, 2) or not 1 <= j <= len(side):
            raise IndexError(f"element ({i}, {j}) not in key {tuple(self.key)}")
        return side[j - 1]

    @property
    def forward(self) -> dict:
        out = {(1, j): p for j, p in enumerate(self.side1, 1)}
        out.update({(2, j): p for j, p in enumerate(self.side2, 1)})
        return out

    @property
    def inverse(self) -> dict:
        return {p: e for e, p in self.forward.items()}


@dataclass(frozen=True)
class RelocationDelta:
    from_key: AdapterKey
    to_key: AdapterKey
    moves: tuple  # ((i, j), old position or None, new position or None)


def build_bijection(key, lmax: int | None = None) -> AdapterMap:
    l1, l2 = key
    if l1 < 0 or l2 < 0:
        raise ValueError("sub-VM sizes must be non-negative")
    if lmax is None:
        lmax = canonical_lmax(l1 + l2)
    elif max(l1, l2) > lmax:
        raise CapacityError(f"key {tuple(key)} exceeds Lmax = {lmax}")
    total = l1 + l2
    sub = sub_orders(lmax, canonical_lmax(total) - 1 if total < lmax else 2 * lmax)
    pos1 = np.zeros(max(l1, 1), np.int64)
    pos2 = np.zeros(max(l2, 1), np.int64)
    seq = np.zeros(2 * total + 1, np.int64)
    seqkeys = np.zeros(2 * total + 1, np.int64)
    rounds = _match(l1, l2, lmax, sub, pos1, pos2, seq, seqkeys)
    return AdapterMap(AdapterKey(l1, l2), tuple(int(p) for p in pos1[:l1]),
                      tuple(int(p) for p in pos2[:l2]), int(rounds))


def diff_maps(old: AdapterMap, new: AdapterMap) -> RelocationDelta:
    before = old.forward
    after = new.forward
    moves = []
    for e in sorted(set(before) | set(after)):
        a, b = before.get(e), after.get(e)
        if a != b:
            moves.append((e, a, b))
    return RelocationDelta(old.key, new.key, tuple(moves))


class AdapterTableCache:
    """Memoized bijections and deltas for all keys with ``l1 + l2 <= cap``."""

    def __init__(self, cap: int = 1024):
        self.cap = cap
        self._maps: dict = {}
        self._inverse: dict = {}
        self._deltas: dict = {}

    def bijection(self, key) -> AdapterMap:
        key = AdapterKey(*key)
        m = self._maps.get(key)
        if m is None:
            if key.L > self.cap:
                raise CapacityError(f"key {tuple(key)} exceeds the cap of {self.cap} words")
            m = build_bijection(key)
            self._maps[key] = m
        return m

    def sigma(self, key, i: int, j: int) -> int:
        return self.bijection(key).position(i, j)

    def sigma_inverse(self, key, pos: int) -> tuple:
        key = AdapterKey(*key)
        inv = self._inverse.get(key)
        if inv is None:
            m = self.bijection(key)
            inv = [None] * (key.L + 1)
            for j, p in enumerate(m.side1, 1):
                inv[p] = (1, j)
            for j, p in enumerate(m.side2, 1):
                inv[p] = (2, j)
            self._inverse[key] = inv
        if not 1 <= pos <= key.L:
            raise IndexError(f"position {pos} outside [1, {key.L}]")
        return inv[pos]

    def delta(self, key, side: int, op: int) -> RelocationDelta:
        """``op`` is +1 for an allocation on ``side`` and -1 for a release."""
        key = AdapterKey(*key)
        cached = self._deltas.get((key, side, op))
        if cached is not None:
            return cached
        if side not in (1, 2) or op not in (1, -1):
            raise ValueError("side must be 1 or 2 and op +1 or -1")
        sizes = list(key)
        if op == -1 and sizes[side - 1] == 0:
            raise ValueError(f"release from empty side {side}")
        sizes[side - 1] += op
        d = diff_maps(self.bijection(key), self.bijection(AdapterKey(*sizes)))
        self._deltas[(key, side, op)] = d
        return d

    def transition(self, old_key, new_key) -> list:
        """Delta steps from ``old_key`` to ``new_key``, side 1 first."""
        steps = []
        cur = AdapterKey(*old_key)
        for side in (1, 2):
            while cur[side - 1] != new_key[side - 1]:
                op = 1 if new_key[side - 1] > cur[side - 1] else -1
                d = self.delta(cur, side, op)
                steps.append(d)
                cur = d.to_key
        return steps


# Largest moves / (floor(log2 L') + 2) over every single-step transition
# with L <= 1024, measured by ``sweep`` and frozen here.
C_RELOC = 1.0


def relocation_bound(c_reloc: float, total_after: int) -> float:
    return c_reloc * ((max(total_after, 1)).bit_length() - 1 + 2)


def rounds_bound(total: int) -> int:
    return 2 * (total.bit_length() - 1 + 1) if total >= 1 else 0


def excess_profile(key, lmax: int | None = None) -> list:
    """``(circle position, excess)`` at every element or position, by key."""
    l1, l2 = key
    if lmax is None:
        lmax = canonical_lmax(l1 + l2)
    t = hash_width(lmax)
    total = l1 + l2
    sub = sub_orders(lmax, canonical_lmax(total) - 1 if total < lmax else 2 * lmax)
    seq = np.zeros(2 * total + 1, np.int64)
    keys = np.zeros(2 * total + 1, np.int64)
    cnt = _merged(l1, l2, lmax, sub, seq, keys)
    out = []
    level = 0
    for i in range(cnt):
        level += 1 if seq[i] > total else -1
        out.append((Fraction(int(keys[i]), 1 << t), level))
    return out


@dataclass
class SweepResult:
    lcap: int
    max_rounds: list
    max_abs_gamma: list
    max_moves: list
    bad_bijection: int
    bad_doubling: int
    bad_depth: int

    def rows(self):
        """``(L, max relocations, max rounds)`` for L = 1..lcap."""
        return [(L, self.max_moves[L], self.max_rounds[L]) for L in range(1, self.lcap + 1)]

    def max_reloc_ratio(self) -> float:
        return max(self.max_moves[L] / ((L.bit_length() - 1) + 2) for L in range(1, self.lcap + 1))


def sweep(lcap: int = 1024) -> SweepResult:
    """Exhaustive sweep over every key with ``l1 + l2 <= lcap``."""
    lmax = canonical_lmax(lcap)
    mr, mg, mm, bb, bd, bdep = _sweep(lcap, lmax, sub_orders(lmax, lcap),
                                      sub_orders(2 * lmax, lcap))
    return SweepResult(lcap, mr.tolist(), mg.tolist(), mm.tolist(), int(bb), int(bd), int(bdep))


# ---------------------------------------------------------------------------
# incremental adapter (allocations only) for long insertion workloads


@njit(cache=True)
def _st_update(sm, mn, size, slot, val):
    x = slot + size
    sm[x] = val
    mn[x] = val
    x >>= 1
    while x >= 1:
        a = 2 * x
        sm[x] = sm[a] + sm[a + 1]
        m2 = sm[a] + mn[a + 1]
        mn[x] = mn[a] if mn[a] < m2 else m2
        x >>= 1


@njit(cache=True)
def _st_prefix(sm, size, pos):
    # sum of slots [0, pos]
    if pos < 0:
        return 0
    total = 0
    lo = size
    hi = pos + size + 1
    while lo < hi:
        if lo & 1:
            total += sm[lo]
            lo += 1
        if hi & 1:
            hi -= 1
            total += sm[hi]
        lo >>= 1
        hi >>= 1
    return total


@njit(cache=True)
def _st_find(sm, mn, size, lo, hi, thr, last):
    """First (or last) slot q in [lo, hi] with prefix(q) <= thr, else -1."""
    if lo > hi:
        return -1
    # canonical nodes left to right
    nodes = np.empty(128, np.int64)
    left_n = 0
    right_nodes = np.empty(64, np.int64)
    right_n = 0
    a = lo + size
    b = hi + size + 1
    while a < b:
        if a & 1:
            nodes[left_n] = a
            left_n += 1
            a += 1
        if b & 1:
            b -= 1
            right_nodes[right_n] = b
            right_n += 1
        a >>= 1
        b >>= 1
    for i in range(right_n - 1, -1, -1):
        nodes[left_n] = right_nodes[i]
        left_n += 1
    bases = np.empty(left_n, np.int64)
    base = _st_prefix(sm, size, lo - 1)
    for i in range(left_n):
        bases[i] = base
        base += sm[nodes[i]]
    if last:
        rng = range(left_n - 1, -1, -1)
    else:
        rng = range(left_n)
    for i in rng:
        x = nodes[i]
        b0 = bases[i]
        if b0 + mn[x] > thr:
            continue
        while x < size:
            lc = 2 * x
            if last:
                br = b0 + sm[lc]
                if br + mn[lc + 1] <= thr:
                    x = lc + 1
                    b0 = br
                else:
                    x = lc
            else:
                if b0 + mn[lc] <= thr:
                    x = lc
                else:
                    b0 += sm[lc]
                    x = lc + 1
        return x - size
    return -1


@njit(cache=True)
def _enclosing(sm, mn, size, p, out, cnt):
    """Append openers of all arcs that strictly contain the empty slot p."""
    h = _st_prefix(sm, size, p)
    low = mn[1] if mn[1] < 0 else 0
    for v in range(low + 1, h + 1):
        q = _st_find(sm, mn, size, 0, p - 1, v - 1, True)
        if q < 0:
            q = _st_find(sm, mn, size, p, size - 1, v - 1, True)
        out[cnt] = (q + 1) % size
        cnt += 1
    return cnt


@njit(cache=True)
def _partner(sm, mn, size, i):
    thr = _st_prefix(sm, size, i) - 1
    j = _st_find(sm, mn, size, i + 1, size - 1, thr, False)
    if j < 0:
        j = _st_find(sm, mn, size, 0, i, thr, False)
    return j


@njit(cache=True)
def _inc_insert(sm, mn, size, partner, pa, pb, cand):
    cnt = _enclosing(sm, mn, size, pa, cand, 0)
    cnt = _enclosing(sm, mn, size, pb, cand, cnt)
    _st_update(sm, mn, size, pa, 1)
    _st_update(sm, mn, size, pb, -1)
    cand[cnt] = pa
    cnt += 1
    moved = 0
    for c in range(cnt):
        i = cand[c]
        dup = False
        for d in range(c):
            if cand[d] == i:
                dup = True
                break
        if dup:
            continue
        j = _partner(sm, mn, size, i)
        if j != partner[i]:
            partner[i] = j
            moved += 1
    return moved


class IncrementalAdapter:
    """Adapter supporting allocations in O(depth * log Lmax) per step.

    Only the elements whose matching arc contains a new point can change
    their position, so each allocation recomputes matches for those alone.
    """

    def __init__(self, cap: int):
        # sides may each reach cap, so L reaches 2 * cap
        self.cap = cap
        self.lmax = canonical_lmax(2 * cap)
        self.t = hash_width(self.lmax)
        self.size = 1 << self.t
        self.sm = np.zeros(2 * self.size, np.int64)
        self.mn = np.zeros(2 * self.size, np.int64)
        self.partner = np.full(self.size, -1, np.int64)
        self.cand = np.zeros(8 * self.t + 8, np.int64)
        self.order = circle_order(self.t)
        self.l1 = 0
        self.l2 = 0

    def _key(self, x: int) -> int:
        return bit_reversal_key(x, self.t)

    def allocate(self, side: int) -> int:
        """Grow ``side`` by one word; return the number of relocated elements."""
        if side == 1:
            if self.l1 >= self.cap:
                raise CapacityError("side 1 full")
            self.l1 += 1
            a = 3 * self.lmax - self.l1 + 1
        elif side == 2:
            if self.l2 >= self.cap:
                raise CapacityError("side 2 full")
            self.l2 += 1
            a = 3 * self.lmax + self.l2
        else:
            raise ValueError("side must be 1 or 2")
        b = self.l1 + self.l2
        return int(_inc_insert(self.sm, self.mn, self.size, self.partner,
                               self._key(a), self._key(b), self.cand))

    def position(self, i: int, j: int) -> int:
        x = 3 * self.lmax - j + 1 if i == 1 else 3 * self.lmax + j
        return int(self.order[self.partner[self._key(x)]])

    def snapshot(self) -> AdapterMap:
        return AdapterMap(AdapterKey(self.l1, self.l2),
                          tuple(self.position(1, j) for j in range(1, self.l1 + 1)),
                          tuple(self.position(2, j) for j in range(1, self.l2 + 1)), -1)
