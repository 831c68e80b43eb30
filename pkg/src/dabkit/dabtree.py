"""Compressed dynamic augmented binary trees.

A tree over ``n`` leaves (``n`` a power of two) stores an array ``A`` over an
alphabet; every node carries a label computed from its children's labels
and its subtree size.  The encoding of a subtree is a pair (memory bits,
spill); its complete memory words live in a VM and the trailing partial
word travels with the spill.

Internal nodes use one of two schemes:

* succinct: the children's complete words are merged through a two-way
  adapter, their partial words are appended, and the result is cut after a
  label-dependent prefix ``M_left``.  The remainder, the child labels and
  the child spills go through a fusion code.
* relaxed: the merged memory is kept whole and a fixed-size record with
  the child labels, spills, schemes and (for relaxed children) memory sizes
  is appended.  A node is relaxed if a child is, or if the succinct scheme
  would pad more than ``(6 beta w + 1) log2 n`` zero bits.

The root's bit string is memory, then the root spill in ``ceil(log2 K)``
bits (succinct only), then one scheme bit (1 = relaxed).  Its length
``total_bits_M`` and the root label are kept outside the VM.

Bit strings are MSB-first ints; word ``j`` of a memory covers bits
``[(j - 1) w, j w)``.
"""

from __future__ import annotations

import itertools
from collections import namedtuple
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from dabkit.adapter import AdapterTableCache
from dabkit.spillover import (
    CorruptionError,
    fusion_build,
    fusion_decode,
    fusion_encode,
    perturb,
    small_set_decode,
    small_set_encode,
    small_set_params,
)
from dabkit.vmem import VirtualMemory


def _mask(bits: int) -> int:
    return (1 << bits) - 1


def _take(value: int, length: int, a: int, b: int) -> int:
    """Bits ``[a, b)`` of the ``length``-bit string ``value``."""
    return (value >> (length - b)) & _mask(b - a)


def _put(value: int, length: int, a: int, b: int, part: int) -> int:
    shift = length - b
    return (value & ~(_mask(b - a) << shift)) | (part << shift)


def _ceil_log2(x: int) -> int:
    return (x - 1).bit_length() if x > 1 else 0


# ---------------------------------------------------------------------------
# parameters


@dataclass
class DabParams:
    n: int
    alphabet: tuple
    labels: tuple
    leaf_label: Callable
    combine: Callable  # (left label, right label, subtree size) -> label
    word_size_w: int = 16
    slack_C: int = 100

    def __post_init__(self):
        n = self.n
        if n < 1 or n & (n - 1):
            raise ValueError("n must be a power of two")
        if not 8 <= self.word_size_w <= 64:
            raise ValueError("word size must be within [8, 64]")
        self.alphabet = tuple(self.alphabet)
        self.labels = tuple(self.labels)
        self.label_index = {phi: i for i, phi in enumerate(self.labels)}
        self.w = self.word_size_w
        self.refinement_r = 12 * n
        self.log_n = n.bit_length() - 1
        nphi, nsig = len(self.labels), len(self.alphabet)
        # smallest beta with 2^(beta w) >= n |Phi| |Sigma| 2^C and >= 2r |Phi| |Sigma|
        need = max(n * nphi * nsig << self.slack_C, 2 * self.refinement_r * nphi * nsig)
        beta = 1
        while (1 << (beta * self.w)) < need:
            beta += 1
        self.beta = beta
        self.record_bits = 6 * beta * self.w
        self.relax_margin = (6 * beta * self.w + 1) * self.log_n
        self.flag_bits = 2
        self.label_bits = max(1, _ceil_log2(nphi))
        self.spill_bits = _ceil_log2(2 * self.refinement_r)
        self.size_bits = max(1, _ceil_log2(n * self.w * max(1, _ceil_log2(nphi))))

    @property
    def r(self) -> int:
        return self.refinement_r


def _add(a, b, size):
    return a + b


def _max(a, b, size):
    return max(a, b)


def _xor(a, b, size):
    return a ^ b


def _vec_add(a, b, size):
    return tuple(x + y for x, y in zip(a, b))


def _identity(s):
    return s


def _low_bit(s):
    return s & 1


def popcount_params(n: int, w: int = 16, slack_C: int = 100) -> DabParams:
    """Bits with the number of ones as label."""
    return DabParams(n, (0, 1), tuple(range(n + 1)), _identity, _add, w, slack_C)


def max_label_params(n: int, sigma: int = 8, w: int = 16, slack_C: int = 100) -> DabParams:
    """Symbols ``1..sigma`` labelled by the subtree maximum."""
    alpha = tuple(range(1, sigma + 1))
    return DabParams(n, alpha, alpha, _identity, _max, w, slack_C)


def parity_params(n: int, sigma: int = 256, w: int = 8, slack_C: int = 0) -> DabParams:
    """Symbols ``0..sigma-1`` labelled by the parity of their low bits."""
    return DabParams(n, tuple(range(sigma)), (0, 1), _low_bit, _xor, w, slack_C)


class _UnitVector:
    def __init__(self, k: int):
        self.k = k

    def __call__(self, s):
        return tuple(1 if i == s else 0 for i in range(self.k))


def count_vector_params(n: int, sigma: int = 3, w: int = 16, slack_C: int = 100) -> DabParams:
    """Symbols ``0..sigma-1`` labelled by their occurrence counts."""
    labels = []
    size = 1
    while size <= n:
        for combo in itertools.combinations_with_replacement(range(sigma), size):
            labels.append(tuple(combo.count(i) for i in range(sigma)))
        size *= 2
    return DabParams(n, tuple(range(sigma)), tuple(labels), _UnitVector(sigma), _vec_add, w, slack_C)


# ---------------------------------------------------------------------------
# tables


class TableError(ValueError):
    pass


class DabTables:
    """Per (subtree size, label) counts, code parameters and codes."""

    def __init__(self, params: DabParams):
        self.params = p = params
        w, r = p.w, p.r
        self.N: dict = {}
        self.K: dict = {}
        self.M: dict = {}
        self.M_left: dict = {}
        self.M_max: dict = {}
        self.pairs: dict = {}
        self.fusion: dict = {}
        self.leaf_members: dict = {}
        self.leaf_codes: dict = {}
        self.leaf_rank: dict = {}
        for s in p.alphabet:
            phi = p.leaf_label(s)
            if phi not in p.label_index:
                raise TableError(f"leaf label {phi!r} of {s!r} is not in the label set")
            self.leaf_members.setdefault(phi, []).append(s)
        for phi, members in self.leaf_members.items():
            self.leaf_members[phi] = tuple(members)
            self.leaf_rank[phi] = {s: i for i, s in enumerate(members)}
            code = small_set_params(len(members), r)
            self.leaf_codes[phi] = code
        self.N[1] = {phi: len(m) for phi, m in self.leaf_members.items()}
        self.K[1] = {phi: c.K for phi, c in self.leaf_codes.items()}
        self.M[1] = {phi: c.M for phi, c in self.leaf_codes.items()}
        size = 2
        while size <= p.n:
            half = size // 2
            counts: dict = {}
            pairs: dict = {}
            for phi1, n1 in self.N[half].items():
                for phi2, n2 in self.N[half].items():
                    phi = p.combine(phi1, phi2, size)
                    if phi not in p.label_index:
                        raise TableError(f"combine produced {phi!r}, not in the label set")
                    counts[phi] = counts.get(phi, 0) + n1 * n2
                    pairs.setdefault(phi, []).append((phi1, phi2))
            self.N[size] = counts
            self.pairs[size] = pairs
            self.K[size], self.M[size] = {}, {}
            self.M_left[size], self.M_max[size], self.fusion[size] = {}, {}, {}
            for phi, xs in pairs.items():
                mcat = {x: self.M[half][x[0]] + self.M[half][x[1]] for x in xs}
                m_max = max(mcat.values())
                m_left = max(m_max - 4 * p.beta * w, 0)
                items = [((p.label_index[a], p.label_index[b]), max(mcat[(a, b)] - m_left, 0),
                          self.K[half][a] * self.K[half][b]) for a, b in xs]
                code = fusion_build(items, None, r)
                self.M_max[size][phi] = m_max
                self.M_left[size][phi] = m_left
                self.fusion[size][phi] = code
                self.K[size][phi] = code.K_star
                self.M[size][phi] = m_left + code.M_star
            size *= 2
        # largest memory any node can have, relaxed or not
        top, size = max(self.M[1].values()), 2
        while size <= p.n:
            top = max(2 * top + p.record_bits, max(self.M[size].values()))
            size *= 2
        self.max_memory_bits = top
        cap = top // w + 2
        self.adapters = AdapterTableCache(cap)

    def perturbed(self, size: int, phi):
        """Perturbed pair distribution of a node; a certificate, not used to code."""
        half = size // 2
        total = self.N[size][phi]
        p = {(a, b): Fraction(self.N[half][a] * self.N[half][b], total)
             for a, b in self.pairs[size][phi]}
        return perturb(p, self.params.r)

    def succinct_bound_holds(self, size: int, phi) -> bool:
        """``(K 2^M)^r <= N^r 2^(6(2 size - 1))`` in exact integers."""
        r = self.params.r
        lhs = (self.K[size][phi] << self.M[size][phi]) ** r
        rhs = (self.N[size][phi] ** r) << (6 * (2 * size - 1))
        return lhs <= rhs

    def spill_field_bits(self, phi) -> int:
        return _ceil_log2(self.K[self.params.n][phi])


def build_tables(params: DabParams) -> DabTables:
    return DabTables(params)


# ---------------------------------------------------------------------------
# encoding

Enc = namedtuple("Enc", "label mem M k relaxed")


def _pack_record(p: DabParams, c1: Enc, c2: Enc) -> int:
    v = (int(c1.relaxed) << 1) | int(c2.relaxed)
    for field_value, bits in ((p.label_index[c1.label], p.label_bits),
                              (p.label_index[c2.label], p.label_bits),
                              (c1.k or 0, p.spill_bits), (c2.k or 0, p.spill_bits)):
        assert field_value < (1 << bits)
        v = (v << bits) | field_value
    used = p.flag_bits + 2 * p.label_bits + 2 * p.spill_bits
    for c in (c1, c2):
        if c.relaxed:
            assert c.M < (1 << p.size_bits), "relaxed child size overflows its field"
            v = (v << p.size_bits) | c.M
            used += p.size_bits
    assert used <= p.record_bits
    return v << (p.record_bits - used)


def _unpack_record(p: DabParams, rec: int) -> dict:
    bits = p.record_bits
    pos = 0

    def field_(width):
        nonlocal pos
        out = _take(rec, bits, pos, pos + width)
        pos += width
        return out

    flags = field_(2)
    out = {"relaxed1": bool(flags >> 1), "relaxed2": bool(flags & 1)}
    out["phi1"] = p.labels[field_(p.label_bits)]
    out["phi2"] = p.labels[field_(p.label_bits)]
    out["k1"] = field_(p.spill_bits)
    out["k2"] = field_(p.spill_bits)
    out["M1"] = field_(p.size_bits) if out["relaxed1"] else None
    out["M2"] = field_(p.size_bits) if out["relaxed2"] else None
    return out


def encode_leaf(tables: DabTables, symbol) -> Enc:
    p = tables.params
    phi = p.leaf_label(symbol)
    code = tables.leaf_codes[phi]
    k, m = small_set_encode(code, tables.leaf_rank[phi][symbol])
    return Enc(phi, m, code.M, k, False)


def superimpose(tables: DabTables, c1: Enc, c2: Enc) -> tuple:
    """The concatenated memory of two children: ``(bits, length)``."""
    w = tables.params.w
    l1, l2 = c1.M // w, c2.M // w
    amap = tables.adapters.bijection((l1, l2))
    words = [0] * (l1 + l2)
    for j, pos in enumerate(amap.side1, 1):
        words[pos - 1] = _take(c1.mem, c1.M, (j - 1) * w, j * w)
    for j, pos in enumerate(amap.side2, 1):
        words[pos - 1] = _take(c2.mem, c2.M, (j - 1) * w, j * w)
    cat = 0
    for x in words:
        cat = (cat << w) | x
    r1, r2 = c1.M - l1 * w, c2.M - l2 * w
    cat = (cat << r1) | (c1.mem & _mask(r1))
    cat = (cat << r2) | (c2.mem & _mask(r2))
    return cat, c1.M + c2.M


def encode_internal(tables: DabTables, size: int, c1: Enc, c2: Enc) -> Enc:
    p = tables.params
    phi = p.combine(c1.label, c2.label, size)
    cat, m_cat = superimpose(tables, c1, c2)
    m_left = tables.M_left[size][phi]
    if c1.relaxed or c2.relaxed or m_cat < m_left - p.relax_margin:
        rec = _pack_record(p, c1, c2)
        return Enc(phi, (cat << p.record_bits) | rec, m_cat + p.record_bits, None, True)
    if m_cat >= m_left:
        left, right = cat >> (m_cat - m_left), cat & _mask(m_cat - m_left)
    else:
        left, right = cat << (m_left - m_cat), 0
    code = tables.fusion[size][phi]
    k2_universe = tables.K[size // 2][c2.label]
    x = (p.label_index[c1.label], p.label_index[c2.label])
    ks, ms = fusion_encode(code, x, right, c1.k * k2_universe + c2.k)
    return Enc(phi, (left << code.M_star) | ms, m_left + code.M_star, ks, False)


def encode_nodes(tables: DabTables, A, memo: dict | None = None) -> list:
    """Bottom-up encodings, one list per level (leaves first)."""
    p = tables.params
    if len(A) != p.n:
        raise ValueError(f"array length {len(A)} != n = {p.n}")
    if memo is not None:
        return [[_encode_memo(tables, tuple(A), memo)]]
    level = [encode_leaf(tables, s) for s in A]
    levels = [level]
    size = 1
    while len(level) > 1:
        size *= 2
        level = [encode_internal(tables, size, level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(level)
    return levels


def _encode_memo(tables, sub: tuple, memo: dict) -> Enc:
    hit = memo.get(sub)
    if hit is None:
        if len(sub) == 1:
            hit = encode_leaf(tables, sub[0])
        else:
            h = len(sub) // 2
            hit = encode_internal(tables, len(sub), _encode_memo(tables, sub[:h], memo),
                                  _encode_memo(tables, sub[h:], memo))
        memo[sub] = hit
    return hit


def root_bits(tables: DabTables, root: Enc) -> tuple:
    """``(bits, total_bits_M)`` of the stored root string."""
    if root.relaxed:
        return (root.mem << 1) | 1, root.M + 1
    sb = tables.spill_field_bits(root.label)
    return ((root.mem << sb | root.k) << 1), root.M + sb + 1


def words_of(bits: int, length: int, w: int) -> list:
    count = -(-length // w)
    padded = bits << (count * w - length)
    return [_take(padded, count * w, (j - 1) * w, j * w) for j in range(1, count + 1)]


class DabState:
    """One encoded tree.  All root bits live in ``vm``; the root label and
    ``total_bits_M`` are registers kept outside."""

    def __init__(self, tables: DabTables, vm=None):
        self.tables = tables
        self.params = tables.params
        self.vm = vm if vm is not None else VirtualMemory(tables.params.w)
        self.root_label = None
        self.total_bits_M = 0
        self.reads = 0
        self.writes = 0

    # root VM access, instrumented
    def read_word(self, j: int) -> int:
        self.reads += 1
        return self.vm.read(j)

    def write_word(self, j: int, value: int) -> None:
        self.writes += 1
        self.vm.write(j, value)

    def read_bits(self, a: int, b: int) -> int:
        w = self.params.w
        if a >= b:
            return 0
        first, last = a // w + 1, (b - 1) // w + 1
        acc = 0
        for j in range(first, last + 1):
            acc = (acc << w) | self.read_word(j)
        span = (last - first + 1) * w
        return _take(acc, span, a - (first - 1) * w, b - (first - 1) * w)

    def write_bits(self, a: int, b: int, value: int) -> None:
        w = self.params.w
        j = a // w + 1
        while a < b:
            lo = (j - 1) * w
            hi = min(j * w, b)
            part = (value >> (b - hi)) & _mask(hi - a)
            if a == lo and hi == lo + w:
                self.write_word(j, part)
            else:
                cur = self.read_word(j)
                self.write_word(j, _put(cur, w, a - lo, hi - lo, part))
            value &= _mask(b - hi)
            a = hi
            j += 1

    @property
    def scheme_flag(self) -> str:
        return "relaxed" if self.read_bits(self.total_bits_M - 1, self.total_bits_M) else "succinct"

    @property
    def memory_bits(self) -> int:
        if self.scheme_flag == "relaxed":
            return self.total_bits_M - 1
        return self.total_bits_M - 1 - self.tables.spill_field_bits(self.root_label)

    @property
    def complete_words(self) -> int:
        return self.memory_bits // self.params.w

    @property
    def incomplete_word(self) -> int:
        m = self.memory_bits
        return self.read_bits(self.complete_words * self.params.w, m)

    @property
    def root_spill(self):
        if self.scheme_flag == "relaxed":
            return None
        m = self.memory_bits
        return self.read_bits(m, self.total_bits_M - 1)

    def logical(self) -> tuple:
        return (self.root_label, self.total_bits_M, tuple(self.vm.words()))

    def space_bound_holds(self) -> bool:
        """``total_bits_M <= log2 N[n, root] + 3``."""
        return (1 << self.total_bits_M) <= 8 * self.tables.N[self.params.n][self.root_label]

    def _store(self, bits: int, total: int) -> None:
        w = self.params.w
        words = words_of(bits, total, w)
        while len(self.vm) > len(words):
            self.vm.resize(-1)
        while len(self.vm) < len(words):
            self.vm.resize(1)
        for j, x in enumerate(words, 1):
            self.write_word(j, x)
        self.total_bits_M = total


def encode(tables: DabTables, A, vm=None, memo: dict | None = None) -> DabState:
    root = encode_nodes(tables, A, memo)[-1][0]
    state = DabState(tables, vm)
    bits, total = root_bits(tables, root)
    state.root_label = root.label
    state._store(bits, total)
    return state


def logical_encoding(tables: DabTables, A, memo: dict | None = None) -> tuple:
    """The logical state ``encode(tables, A).logical()`` without a VM."""
    root = encode_nodes(tables, A, memo)[-1][0]
    bits, total = root_bits(tables, root)
    return (root.label, total, tuple(words_of(bits, total, tables.params.w)))


# ---------------------------------------------------------------------------
# decoding along a root path


@dataclass
class NodeView:
    """An opened node.  Child fields are filled for internal nodes."""

    level: int  # 0 = root
    index: int  # position among the nodes of its level
    side: int | None  # 1 or 2 below the parent, None at the root
    size: int
    label: object
    relaxed: bool
    M: int
    k: int | None
    inc: int = 0  # trailing M mod w bits (unused at the root)
    phi1: object = None
    phi2: object = None
    k1: int | None = None
    k2: int | None = None
    M1: int = 0
    M2: int = 0
    relaxed1: bool = False
    relaxed2: bool = False
    l1: int = 0
    l2: int = 0
    M_cat: int = 0
    M_left: int = 0
    m_right: int = 0
    m_right_len: int = 0
    dirty: bool = field(default=False, repr=False)

    @property
    def child_schemes(self) -> tuple:
        return ("relaxed" if self.relaxed1 else "succinct", "relaxed" if self.relaxed2 else "succinct")

    @property
    def child_sizes(self) -> tuple:
        return (self.M1 if self.relaxed1 else None, self.M2 if self.relaxed2 else None)

    @property
    def key(self) -> tuple:
        return (self.l1, self.l2)

    def pure_prefix(self, w: int) -> int:
        """Leading memory words that are plain super-VM words."""
        L = self.l1 + self.l2
        return L if self.relaxed else min(L, self.M_left // w)


class PathCursor:
    """Frames from the root down to some node, with word-level access."""

    def __init__(self, state: DabState):
        self.state = state
        self.tables = state.tables
        self.p = state.params
        self.frames: list[NodeView] = []

    # reading ---------------------------------------------------------------

    def mem_bits(self, d: int, a: int, b: int) -> int:
        if a >= b:
            return 0
        if d == 0:
            return self.state.read_bits(a, b)
        f = self.frames[d]
        w = self.p.w
        full = (f.M // w) * w
        acc = 0
        pos = a
        while pos < b:
            if pos < full:
                j = pos // w + 1
                hi = min(j * w, b)
                word = self.word(d, j)
                acc = (acc << (hi - pos)) | _take(word, w, pos - (j - 1) * w, hi - (j - 1) * w)
            else:
                hi = b
                acc = (acc << (hi - pos)) | _take(f.inc, f.M - full, pos - full, hi - full)
            pos = hi
        return acc

    def word(self, d: int, j: int) -> int:
        """Word ``j`` of the VM of the node at depth ``d``."""
        f = self.frames[d]
        if j < 1 or j > f.M // self.p.w:
            raise IndexError(f"word {j} outside the node's {f.M // self.p.w} words")
        if d == 0:
            return self.state.read_word(j)
        parent = self.frames[d - 1]
        q = self.tables.adapters.sigma(parent.key, f.side, j)
        w = self.p.w
        return self.cat_bits(d - 1, (q - 1) * w, q * w)

    def cat_bits(self, d: int, a: int, b: int) -> int:
        """Bits ``[a, b)`` of the concatenated memory of the node at ``d``."""
        f = self.frames[d]
        if f.relaxed:
            return self.mem_bits(d, a, b)
        cut = f.M_left
        if b <= cut:
            return self.mem_bits(d, a, b)
        if a >= cut:
            return _take(f.m_right, f.m_right_len, a - cut, b - cut)
        left = self.mem_bits(d, a, cut)
        return (left << (b - cut)) | _take(f.m_right, f.m_right_len, 0, b - cut)

    # opening ---------------------------------------------------------------

    def open_root(self) -> NodeView:
        st = self.state
        total = st.total_bits_M
        relaxed = bool(st.read_bits(total - 1, total))
        if relaxed:
            m, k = total - 1, None
        else:
            sb = self.tables.spill_field_bits(st.root_label)
            m = total - 1 - sb
            k = st.read_bits(m, total - 1)
        f = NodeView(0, 0, None, self.p.n, st.root_label, relaxed, m, k)
        self.frames = [f]
        self._decode(0)
        return f

    def _decode(self, d: int) -> None:
        f = self.frames[d]
        p, t = self.p, self.tables
        if f.size == 1:
            return
        half = f.size // 2
        if f.relaxed:
            rec = self.mem_bits(d, f.M - p.record_bits, f.M)
            info = _unpack_record(p, rec)
            f.phi1, f.phi2 = info["phi1"], info["phi2"]
            f.relaxed1, f.relaxed2 = info["relaxed1"], info["relaxed2"]
            f.k1 = None if f.relaxed1 else info["k1"]
            f.k2 = None if f.relaxed2 else info["k2"]
            f.M1 = info["M1"] if f.relaxed1 else t.M[half][f.phi1]
            f.M2 = info["M2"] if f.relaxed2 else t.M[half][f.phi2]
            f.M_cat = f.M1 + f.M2
            if f.M_cat != f.M - p.record_bits:
                raise CorruptionError("relaxed record disagrees with the node size")
            f.M_left = t.M_left[f.size][f.label]
            f.m_right, f.m_right_len = 0, 0
        else:
            code = t.fusion[f.size][f.label]
            f.M_left = t.M_left[f.size][f.label]
            ms = self.mem_bits(d, f.M_left, f.M)
            x, y_m, y_k = fusion_decode(code, f.k, ms)
            f.phi1, f.phi2 = p.labels[x[0]], p.labels[x[1]]
            f.relaxed1 = f.relaxed2 = False
            k2u = t.K[half][f.phi2]
            f.k1, f.k2 = divmod(y_k, k2u)
            f.M1, f.M2 = t.M[half][f.phi1], t.M[half][f.phi2]
            f.M_cat = f.M1 + f.M2
            f.m_right_len = max(f.M_cat - f.M_left, 0)
            f.m_right = y_m
        w = p.w
        f.l1, f.l2 = f.M1 // w, f.M2 // w

    def open_child(self, side: int) -> NodeView:
        d = len(self.frames) - 1
        f = self.frames[d]
        if f.size == 1:
            raise ValueError("a leaf has no children")
        w = self.p.w
        if side == 1:
            label, relaxed, m, k = f.phi1, f.relaxed1, f.M1, f.k1
            off = (f.l1 + f.l2) * w
        elif side == 2:
            label, relaxed, m, k = f.phi2, f.relaxed2, f.M2, f.k2
            off = (f.l1 + f.l2) * w + (f.M1 - f.l1 * w)
        else:
            raise ValueError("navigator must choose side 1 or 2")
        inc_len = m - (m // w) * w
        inc = self.cat_bits(d, off, off + inc_len)
        child = NodeView(f.level + 1, 2 * f.index + side - 1, side, f.size // 2, label,
                         relaxed, m, k, inc)
        self.frames.append(child)
        self._decode(d + 1)
        return child

    def leaf_symbol(self) -> object:
        d = len(self.frames) - 1
        f = self.frames[d]
        code = self.tables.leaf_codes[f.label]
        m = self.mem_bits(d, 0, f.M)
        u = small_set_decode(code, f.k, m)
        return self.tables.leaf_members[f.label][u]

    # staged writes (used by vm_access_path) --------------------------------

    def write_mem_bits(self, d: int, a: int, b: int, value: int) -> None:
        if a >= b:
            return
        if d == 0:
            self.state.write_bits(a, b, value)
            return
        f = self.frames[d]
        w = self.p.w
        full = (f.M // w) * w
        pos = a
        while pos < b:
            if pos < full:
                j = pos // w + 1
                hi = min(j * w, b)
                part = _take(value, b - a, pos - a, hi - a)
                lo = (j - 1) * w
                if pos == lo and hi == lo + w:
                    self.write_word(d, j, part)
                else:
                    cur = self.word(d, j)
                    self.write_word(d, j, _put(cur, w, pos - lo, hi - lo, part))
            else:
                hi = b
                part = _take(value, b - a, pos - a, hi - a)
                f.inc = _put(f.inc, f.M - full, pos - full, hi - full, part)
                parent = self.frames[d - 1]
                off = (parent.l1 + parent.l2) * w
                if f.side == 2:
                    off += parent.M1 - parent.l1 * w
                self.write_cat_bits(d - 1, off + pos - full, off + hi - full, part)
            pos = hi

    def write_word(self, d: int, j: int, value: int) -> None:
        f = self.frames[d]
        if j < 1 or j > f.M // self.p.w:
            raise IndexError(f"word {j} outside the node's {f.M // self.p.w} words")
        if not 0 <= value < (1 << self.p.w):
            raise ValueError("value wider than a word")
        if d == 0:
            self.state.write_word(j, value)
            return
        parent = self.frames[d - 1]
        q = self.tables.adapters.sigma(parent.key, f.side, j)
        w = self.p.w
        self.write_cat_bits(d - 1, (q - 1) * w, q * w, value)

    def write_cat_bits(self, d: int, a: int, b: int, value: int) -> None:
        f = self.frames[d]
        if f.relaxed:
            self.write_mem_bits(d, a, b, value)
            return
        cut = f.M_left
        if a < cut:
            hi = min(b, cut)
            self.write_mem_bits(d, a, hi, _take(value, b - a, 0, hi - a))
        if b > cut:
            lo = max(a, cut)
            part = _take(value, b - a, lo - a, b - a)
            f.m_right = _put(f.m_right, f.m_right_len, lo - cut, b - cut, part)
            f.dirty = True

    def flush(self) -> None:
        """Re-run the fusion code of every node with staged edits, deepest first."""
        p, t = self.p, self.tables
        for d in range(len(self.frames) - 1, -1, -1):
            f = self.frames[d]
            if not f.dirty:
                continue
            f.dirty = False
            code = t.fusion[f.size][f.label]
            k2u = t.K[f.size // 2][f.phi2]
            x = (p.label_index[f.phi1], p.label_index[f.phi2])
            ks, ms = fusion_encode(code, x, f.m_right, f.k1 * k2u + f.k2)
            self.write_mem_bits(d, f.M_left, f.M, ms)
            if ks != f.k:
                f.k = ks
                if d == 0:
                    sb = t.spill_field_bits(f.label)
                    self.state.write_bits(f.M, f.M + sb, ks)
                else:
                    self._set_child_spill(d - 1, f.side, ks)

    def _set_child_spill(self, d: int, side: int, k: int) -> None:
        f = self.frames[d]
        if side == 1:
            f.k1 = k
        else:
            f.k2 = k
        if f.relaxed:
            c1 = Enc(f.phi1, None, f.M1, f.k1, f.relaxed1)
            c2 = Enc(f.phi2, None, f.M2, f.k2, f.relaxed2)
            self.write_mem_bits(d, f.M - self.p.record_bits, f.M, _pack_record(self.p, c1, c2))
        else:
            f.dirty = True


def open_path(state: DabState, path=()) -> list:
    """Open every node from the root along ``path`` (a sequence of 1/2)."""
    walk = PathCursor(state)
    walk.open_root()
    for side in path:
        walk.open_child(side)
    return walk.frames


def walk_nodes(state: DabState):
    """Yield ``(path, NodeView)`` for every node, depth first, opening each once."""
    walk = PathCursor(state)
    walk.open_root()
    path = []

    def visit():
        f = walk.frames[-1]
        yield tuple(path), f
        if f.size == 1:
            return
        for side in (1, 2):
            walk.open_child(side)
            path.append(side)
            yield from visit()
            path.pop()
            walk.frames.pop()

    yield from visit()


def open_node(state: DabState, path=()) -> NodeView:
    return open_path(state, path)[-1]


def vm_access_path(state: DabState, path, j: int, mode: str = "read", value: int | None = None):
    """Read or write word ``j`` of the VM of the node at ``path``.

    Writes that land in some ancestor's fusion-coded tail are staged on the
    opened node and flushed by re-encoding once the write has propagated.
    """
    walk = PathCursor(state)
    walk.open_root()
    for side in path:
        walk.open_child(side)
    d = len(walk.frames) - 1
    if mode == "read":
        return walk.word(d, j)
    if mode != "write":
        raise ValueError("mode must be 'read' or 'write'")
    walk.write_word(d, j, value)
    walk.flush()
    return None


# ---------------------------------------------------------------------------
# queries


class RankNavigator:
    """Number of ones among the first ``k`` symbols (label = ones count)."""

    def __init__(self, k: int):
        self.start = (k, 0)

    def step(self, acc, half, phi1, phi2):
        left, count = acc
        if left <= half:
            return 1, acc
        return 2, (left - half, count + phi1)

    def finish(self, acc, symbol):
        left, count = acc
        return count + (symbol if left >= 1 else 0)


class SelectNavigator:
    """Position of the ``k``-th one (label = ones count)."""

    def __init__(self, k: int):
        self.start = (k, 0)

    def step(self, acc, half, phi1, phi2):
        left, offset = acc
        if phi1 >= left:
            return 1, acc
        return 2, (left - phi1, offset + half)

    def finish(self, acc, symbol):
        return acc[1] + 1


class PositionNavigator:
    """The symbol at 1-based position ``i``."""

    def __init__(self, i: int):
        self.start = i

    def step(self, acc, half, phi1, phi2):
        return (1, acc) if acc <= half else (2, acc - half)

    def finish(self, acc, symbol):
        return symbol


def query(state: DabState, navigator):
    walk = PathCursor(state)
    f = walk.open_root()
    acc = navigator.start
    while f.size > 1:
        side, acc = navigator.step(acc, f.size // 2, f.phi1, f.phi2)
        if side not in (1, 2):
            raise ValueError(f"navigator chose side {side!r}")
        f = walk.open_child(side)
    return navigator.finish(acc, walk.leaf_symbol())


def get(state: DabState, i: int):
    if not 1 <= i <= state.params.n:
        raise IndexError(f"index {i} outside [1, {state.params.n}]")
    return query(state, PositionNavigator(i))


def decode_all(state: DabState) -> list:
    return [get(state, i) for i in range(1, state.params.n + 1)]


# ---------------------------------------------------------------------------
# updates

# Per-update allocations <= C_UPD (log2 n)^2 and relocations <= C_UPD (log2 n)^3,
# frozen from an instrumented sweep over n = 8..256 (largest ratio seen: 0.75).
C_UPD = 1.0


@dataclass
class UpdateStats:
    relocations: int = 0
    allocations: int = 0
    releases: int = 0
    word_reads: int = 0
    word_writes: int = 0
    patched_words: int = 0


@dataclass
class _NewNode:
    label: object
    relaxed: bool
    M: int
    k: int | None
    stable: int  # leading words whose location is unchanged
    patch: dict  # word -> value, only words <= stable
    tail: int  # bits [stable * w, M)


def _leaf_new(tables: DabTables, symbol) -> _NewNode:
    e = encode_leaf(tables, symbol)
    return _NewNode(e.label, False, e.M, e.k, 0, {}, e.mem)


def _rebuild(walk: PathCursor, d: int, cres: _NewNode, stats: UpdateStats) -> _NewNode:
    """New encoding of the node at depth ``d`` whose child on the path changed."""
    p, t = walk.p, walk.tables
    w = p.w
    u = walk.frames[d]
    cs = walk.frames[d + 1].side
    half = u.size // 2
    if cs == 1:
        c1 = (cres.label, cres.relaxed, cres.M, cres.k)
        c2 = (u.phi2, u.relaxed2, u.M2, u.k2)
    else:
        c1 = (u.phi1, u.relaxed1, u.M1, u.k1)
        c2 = (cres.label, cres.relaxed, cres.M, cres.k)
    phi = p.combine(c1[0], c2[0], u.size)
    n1, n2 = c1[2] // w, c2[2] // w
    m_cat = c1[2] + c2[2]
    m_left = t.M_left[u.size][phi]
    relaxed = c1[1] or c2[1] or m_cat < m_left - p.relax_margin
    new_key = (n1, n2)
    prefix_new = (n1 + n2) if relaxed else min(n1 + n2, m_left // w)
    stable = min(u.pure_prefix(w), prefix_new)

    old_l = u.l1 if cs == 1 else u.l2
    new_l = n1 if cs == 1 else n2
    if new_l > old_l:
        stats.allocations += new_l - old_l
    else:
        stats.releases += old_l - new_l

    # elements whose super-VM position changes
    moved = {}
    if new_key != u.key:
        orig, cur = {}, {}
        for step in t.adapters.transition(u.key, new_key):
            stats.relocations += len(step.moves)
            for e, a, b in step.moves:
                if e not in orig:
                    orig[e] = a
                cur[e] = b
        moved = {e: b for e, b in cur.items() if b is not None and orig[e] != b}

    def old_cat_word(q):
        return walk.cat_bits(d, (q - 1) * w, q * w)

    def content(side, j):
        if side != cs:
            return old_cat_word(t.adapters.sigma(u.key, side, j))
        if j in cres.patch:
            return cres.patch[j]
        if j > cres.stable:
            off = (j - 1 - cres.stable) * w
            return _take(cres.tail, cres.M - cres.stable * w, off, off + w)
        return old_cat_word(t.adapters.sigma(u.key, side, j))

    patch = {}
    for (side, j), q in moved.items():
        if q <= stable:
            patch[q] = content(side, j)
    for j, v in cres.patch.items():
        q = t.adapters.sigma(new_key, cs, j)
        if q <= stable:
            patch[q] = v
    for j in range(cres.stable + 1, new_l + 1):
        q = t.adapters.sigma(new_key, cs, j)
        if q <= stable:
            patch[q] = content(cs, j)

    # concatenated memory from word stable + 1 on
    cat, length = 0, 0
    for q in range(stable + 1, n1 + n2 + 1):
        side, j = t.adapters.sigma_inverse(new_key, q)
        cat = (cat << w) | content(side, j)
        length += w
    for side, (label, rel, m, k) in ((1, c1), (2, c2)):
        r_len = m - (m // w) * w
        if side == cs:
            bits = cres.tail & _mask(r_len)
        else:
            off = (u.l1 + u.l2) * w + (0 if side == 1 else u.M1 - u.l1 * w)
            bits = walk.cat_bits(d, off, off + r_len)
        cat = (cat << r_len) | bits
        length += r_len
    assert length == m_cat - stable * w

    if relaxed:
        rec = _pack_record(p, Enc(c1[0], None, c1[2], c1[3], c1[1]),
                           Enc(c2[0], None, c2[2], c2[3], c2[1]))
        tail = (cat << p.record_bits) | rec
        return _NewNode(phi, True, m_cat + p.record_bits, None, stable, patch, tail)
    lead = m_left - stable * w
    if m_cat >= m_left:
        left, right = cat >> (m_cat - m_left), cat & _mask(m_cat - m_left)
    else:
        left, right = cat << (lead - length), 0
    code = t.fusion[u.size][phi]
    x = (p.label_index[c1[0]], p.label_index[c2[0]])
    ks, ms = fusion_encode(code, x, right, c1[3] * t.K[half][c2[0]] + c2[3])
    return _NewNode(phi, False, m_left + code.M_star, ks, stable, patch, (left << code.M_star) | ms)


def update(state: DabState, i: int, symbol) -> UpdateStats:
    """Set ``A[i] = symbol`` (1-based) in place."""
    p = state.params
    if not 1 <= i <= p.n:
        raise IndexError(f"index {i} outside [1, {p.n}]")
    if symbol not in state.tables.leaf_members.get(p.leaf_label(symbol), ()):
        raise ValueError(f"{symbol!r} is not in the alphabet")
    reads0, writes0 = state.reads, state.writes
    walk = PathCursor(state)
    f = walk.open_root()
    pos = i
    while f.size > 1:
        half = f.size // 2
        side = 1 if pos <= half else 2
        if side == 2:
            pos -= half
        f = walk.open_child(side)
    stats = UpdateStats()
    if walk.leaf_symbol() == symbol:
        stats.word_reads = state.reads - reads0
        return stats
    res = _leaf_new(state.tables, symbol)
    for d in range(len(walk.frames) - 2, -1, -1):
        res = _rebuild(walk, d, res, stats)

    # write the new root string
    w = p.w
    t = state.tables
    if res.relaxed:
        tail, tail_len = (res.tail << 1) | 1, res.M - res.stable * w + 1
    else:
        sb = t.spill_field_bits(res.label)
        tail = ((res.tail << sb) | res.k) << 1
        tail_len = res.M - res.stable * w + sb + 1
    total = res.stable * w + tail_len
    new_words = -(-total // w)
    while len(state.vm) > new_words:
        state.vm.resize(-1)
        stats.releases += 1
    while len(state.vm) < new_words:
        state.vm.resize(1)
        stats.allocations += 1
    for q, v in res.patch.items():
        state.write_word(q, v)
    for q, v in enumerate(words_of(tail, tail_len, w), res.stable + 1):
        state.write_word(q, v)
    stats.patched_words = len(res.patch)
    state.root_label = res.label
    state.total_bits_M = total
    stats.word_reads = state.reads - reads0
    stats.word_writes = state.writes - writes0
    return stats
