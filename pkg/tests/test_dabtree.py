import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dabkit.dabtree import (
    C_UPD,
    DabParams,
    PathCursor,
    PositionNavigator,
    RankNavigator,
    SelectNavigator,
    TableError,
    build_tables,
    count_vector_params,
    decode_all,
    encode,
    encode_nodes,
    get,
    logical_encoding,
    max_label_params,
    open_node,
    open_path,
    parity_params,
    popcount_params,
    query,
    update,
    vm_access_path,
    walk_nodes,
    words_of,
)
from dabkit.oracle import root_label_naive
from dabkit.spillover import CorruptionError


@pytest.fixture(scope="module")
def pop16():
    return build_tables(popcount_params(16))


@pytest.fixture(scope="module")
def pop256_w8():
    # small slack and byte words make M_left > 0, so the adapters do real work
    return build_tables(popcount_params(256, w=8, slack_C=0))


def test_counts_follow_recurrence():
    t = build_tables(popcount_params(2))
    assert [t.N[2][phi] for phi in range(3)] == [1, 2, 1]
    t = build_tables(popcount_params(4))
    assert t.N[4][2] == 6
    t = build_tables(popcount_params(32))
    assert all(t.N[32][phi] == math.comb(32, phi) for phi in range(33))


def test_parameters():
    p = popcount_params(16)
    assert p.r == 12 * 16
    assert (1 << (p.beta * p.w)) >= 16 * 17 * 2 << 100
    assert (1 << ((p.beta - 1) * p.w)) < 16 * 17 * 2 << 100
    assert p.record_bits == 6 * p.beta * p.w
    with pytest.raises(ValueError):
        popcount_params(12)


@pytest.mark.parametrize("n", [2, 4, 8, 16, 32])
def test_succinct_space_bound_all_entries(n):
    t = build_tables(popcount_params(n))
    size = 2
    while size <= n:
        for phi in t.N[size]:
            assert t.K[size][phi] <= 2 * t.params.r
            assert t.succinct_bound_holds(size, phi)
        size *= 2


def test_combine_outside_labels_is_rejected():
    bad = DabParams(4, (0, 1), (0, 1), lambda s: s, lambda a, b, n: a + b)
    with pytest.raises(TableError):
        build_tables(bad)


def test_two_leaf_instances(pop16):
    t = build_tables(popcount_params(2))
    a, b = encode(t, [0, 1]), encode(t, [1, 0])
    assert a.logical() != b.logical()
    assert a.total_bits_M <= 1 + 3 and b.total_bits_M <= 1 + 3
    root = open_node(a)
    assert (root.phi1, root.phi2) == (0, 1)


def test_single_leaf():
    t = build_tables(max_label_params(1))
    st_ = encode(t, [6])
    assert st_.root_label == 6
    assert decode_all(st_) == [6]


def test_max_label_all_ones_is_tiny():
    t = build_tables(max_label_params(16))
    st_ = encode(t, [1] * 16)
    assert t.N[16][1] == 1
    assert st_.total_bits_M <= 3


def test_max_label_relaxed_after_one_eight():
    t = build_tables(max_label_params(16))
    st_ = encode(t, [1] * 16)
    update(st_, 5, 8)
    assert st_.scheme_flag == "relaxed"


def test_relaxed_rule_holds_at_every_node():
    rng = random.Random(3)
    t = build_tables(max_label_params(16))
    margin = t.params.relax_margin
    for _ in range(30):
        st_ = encode(t, [rng.randint(1, 8) for _ in range(16)])
        for _, f in walk_nodes(st_):
            if f.size > 1:
                rule = f.relaxed1 or f.relaxed2 or f.M_cat < f.M_left - margin
                assert f.relaxed == rule


def _check_views(t, arr):
    levels = encode_nodes(t, arr)
    st_ = encode(t, arr)
    depth = len(levels) - 1
    for path, f in walk_nodes(st_):
        index = 0
        for side in path:
            index = 2 * index + side - 1
        enc = levels[depth - len(path)][index]
        assert (f.label, f.M, f.relaxed) == (enc.label, enc.M, enc.relaxed)
        if path:
            assert f.k == enc.k
        for j in range(1, f.M // t.params.w + 1):
            assert vm_access_path(st_, path, j) == words_of(enc.mem, enc.M, t.params.w)[j - 1]


def test_open_node_inverts_encoder_exhaustive_to_eight():
    for n in (2, 4, 8):
        t = build_tables(popcount_params(n))
        for arr in itertools.product((0, 1), repeat=n):
            _check_views(t, list(arr))


@pytest.mark.slow
def test_open_node_inverts_encoder_exhaustive_sixteen(pop16):
    for arr in itertools.product((0, 1), repeat=16):
        _check_views(pop16, list(arr))


def test_node_views_with_live_adapters(pop256_w8):
    rng = random.Random(7)
    for _ in range(3):
        _check_views(pop256_w8, [rng.randrange(2) for _ in range(256)])


def test_queries_small():
    t = build_tables(popcount_params(4))
    st_ = encode(t, [0, 1, 1, 0])
    assert query(st_, RankNavigator(3)) == 2
    assert query(st_, RankNavigator(0)) == 0
    assert query(st_, SelectNavigator(2)) == 3
    assert [query(st_, PositionNavigator(i)) for i in range(1, 5)] == [0, 1, 1, 0]


def test_bad_navigator_choice():
    class Sideways:
        start = None

        def step(self, acc, half, phi1, phi2):
            return 3, acc

        def finish(self, acc, symbol):
            return symbol

    t = build_tables(popcount_params(4))
    with pytest.raises(ValueError):
        query(encode(t, [0, 1, 1, 0]), Sideways())


def test_update_to_same_symbol_is_free(pop16):
    st_ = encode(pop16, [1, 0] * 8)
    before = st_.logical()
    stats = update(st_, 3, 1)
    assert (stats.relocations, stats.allocations, stats.releases, stats.word_writes) == (0, 0, 0, 0)
    assert st_.logical() == before


def test_update_errors(pop16):
    st_ = encode(pop16, [0] * 16)
    with pytest.raises(IndexError):
        update(st_, 17, 1)
    with pytest.raises(ValueError):
        update(st_, 1, 2)
    with pytest.raises(IndexError):
        get(st_, 0)


def test_update_stream_matches_fresh_encode(pop16):
    rng = random.Random(21)
    arr = [rng.randrange(2) for _ in range(16)]
    st_ = encode(pop16, arr)
    for _ in range(10_000):
        i, b = rng.randrange(1, 17), rng.randrange(2)
        update(st_, i, b)
        arr[i - 1] = b
        assert st_.logical() == logical_encoding(pop16, arr)
        assert st_.space_bound_holds()


@pytest.mark.parametrize("make", [
    lambda: popcount_params(256, w=8, slack_C=0),
    lambda: parity_params(64),
    lambda: max_label_params(64, w=8, slack_C=0),
    lambda: count_vector_params(64, w=8, slack_C=0),
])
def test_update_families_match_fresh_encode(make):
    params = make()
    t = build_tables(params)
    rng = random.Random(5)
    arr = [rng.choice(params.alphabet) for _ in range(params.n)]
    st_ = encode(t, arr)
    for _ in range(150):
        i, s = rng.randrange(1, params.n + 1), rng.choice(params.alphabet)
        update(st_, i, s)
        arr[i - 1] = s
        assert st_.logical() == logical_encoding(t, arr)
    assert decode_all(st_) == arr
    assert st_.root_label == root_label_naive(params, arr)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 16), st.integers(0, 1)), min_size=1, max_size=40),
       st.randoms(use_true_random=False))
def test_history_independence_pairs(ops, rnd):
    t = build_tables(popcount_params(16))
    arr = [0] * 16
    first = encode(t, arr)
    for i, b in ops:
        update(first, i, b)
        arr[i - 1] = b
    # a different route to the same array: shuffled distinct writes via detours
    second = encode(t, [1] * 16)
    order = list(range(1, 17))
    rnd.shuffle(order)
    for i in order:
        update(second, i, 1 - arr[i - 1])
        update(second, i, arr[i - 1])
    assert first.logical() == second.logical()


def test_write_access_roundtrip(pop256_w8):
    rng = random.Random(9)
    arr = [rng.randrange(2) for _ in range(256)]
    st_ = encode(pop256_w8, arr)
    reference = st_.logical()
    for _ in range(300):
        path = tuple(rng.choice((1, 2)) for _ in range(rng.randrange(1, 8)))
        frames = open_path(st_, path)
        node = frames[-1]
        words = node.M // 8
        if not words:
            continue
        j = rng.randrange(1, words + 1)
        old = vm_access_path(st_, path, j)
        new = rng.randrange(256)
        vm_access_path(st_, path, j, "write", new)
        assert vm_access_path(st_, path, j) == new
        vm_access_path(st_, path, j, "write", old)
        assert st_.logical() == reference
    with pytest.raises(IndexError):
        vm_access_path(st_, (), len(st_.vm) + 1)


def test_word_straddling_the_cut():
    # byte words with a cut that is not a multiple of 8 inside the super-VM
    t = build_tables(popcount_params(256, w=8, slack_C=0))
    rng = random.Random(1)
    found = 0
    for _ in range(40):
        arr = [rng.randrange(2) for _ in range(256)]
        st_ = encode(t, arr)
        for path, f in walk_nodes(st_):
            if not path or f.M < 8:
                continue
            parent = open_path(st_, path[:-1])[-1]
            if parent.relaxed:
                continue
            for j in range(1, f.M // 8 + 1):
                q = t.adapters.sigma(parent.key, f.side, j)
                if (q - 1) * 8 < parent.M_left < q * 8:
                    found += 1
                    before = st_.logical()
                    old = vm_access_path(st_, path, j)
                    vm_access_path(st_, path, j, "write", old ^ 0xFF)
                    assert vm_access_path(st_, path, j) == old ^ 0xFF
                    vm_access_path(st_, path, j, "write", old)
                    assert st_.logical() == before
        if found >= 3:
            break
    assert found, "no straddling word in the sample"


def test_pure_prefix_word_costs_one_root_read(pop256_w8):
    rng = random.Random(2)
    st_ = encode(pop256_w8, [rng.randrange(2) for _ in range(256)])
    checked = 0
    for side in (1, 2):
        cursor = PathCursor(st_)
        root = cursor.open_root()
        child = cursor.open_child(side)
        grandchild = cursor.open_child(1)
        for j in range(1, child.M // 8 + 1):
            if pop256_w8.adapters.sigma(root.key, side, j) <= root.pure_prefix(8):
                before = st_.reads
                cursor.word(1, j)
                assert st_.reads - before == 1
                checked += 1
        for j in range(1, grandchild.M // 8 + 1):
            q = pop256_w8.adapters.sigma(child.key, 1, j)
            if q <= child.pure_prefix(8) and \
                    pop256_w8.adapters.sigma(root.key, side, q) <= root.pure_prefix(8):
                before = st_.reads
                cursor.word(2, j)
                assert st_.reads - before == 1
                checked += 1
    assert checked


def test_corrupt_spill_is_detected():
    t = build_tables(popcount_params(8))
    for phi in range(9):
        st_ = encode(t, [1] * phi + [0] * (8 - phi))
        if st_.scheme_flag != "succinct":
            continue
        m = st_.memory_bits
        width = st_.total_bits_M - 1 - m
        if width and (1 << width) > t.K[8][phi]:
            st_.write_bits(m, m + width, (1 << width) - 1)
            with pytest.raises(CorruptionError):
                decode_all(st_)
            return
    pytest.skip("every spill field is saturated")


def test_update_cost_constants_max_label():
    for n in (8, 16, 32, 64):
        t = build_tables(max_label_params(n, w=8, slack_C=0))
        rng = random.Random(n)
        st_ = encode(t, [rng.randint(1, 8) for _ in range(n)])
        lg = math.log2(n)
        for i in range(1, n + 1):
            for s in (8, 1):
                u = update(st_, i, s)
                assert u.allocations <= C_UPD * lg ** 2
                assert u.relocations <= C_UPD * lg ** 3


@pytest.mark.slow
def test_relaxed_scheme_at_scale():
    params = popcount_params(4096, w=8, slack_C=0)
    t = build_tables(params)
    arr = [0] * 2048 + [1] * 2048
    st_ = encode(t, arr)
    assert st_.scheme_flag == "relaxed"
    assert st_.space_bound_holds()
    relaxed = 0
    for path, f in walk_nodes(st_):
        if f.size > 1:
            assert f.relaxed == (f.relaxed1 or f.relaxed2
                                 or f.M_cat < f.M_left - params.relax_margin)
        if f.relaxed:
            relaxed += 1
            levels_up = params.log_n - (f.size.bit_length() - 1)
            limit = (t.N[f.size][f.label] - 1).bit_length() \
                - (params.record_bits + 1) * levels_up + 1
            assert f.M <= limit
    assert relaxed
    rng = random.Random(0)
    for _ in range(20):
        i, b = rng.randrange(1, 4097), rng.randrange(2)
        update(st_, i, b)
        arr[i - 1] = b
    assert st_.logical() == logical_encoding(t, arr)


@pytest.mark.slow
def test_mixed_ops_against_plain_array(pop256_w8):
    rng = random.Random(12)
    arr = [rng.randrange(2) for _ in range(256)]
    st_ = encode(pop256_w8, arr)
    for _ in range(100_000):
        c = rng.randrange(4)
        if c == 0:
            k = rng.randrange(0, 257)
            assert query(st_, RankNavigator(k)) == sum(arr[:k])
        elif c == 1 and any(arr):
            k = rng.randrange(1, sum(arr) + 1)
            ones = [i for i, b in enumerate(arr, 1) if b]
            assert query(st_, SelectNavigator(k)) == ones[k - 1]
        elif c == 2:
            i = rng.randrange(1, 257)
            assert get(st_, i) == arr[i - 1]
        else:
            i, b = rng.randrange(1, 257), rng.randrange(2)
            update(st_, i, b)
            arr[i - 1] = b
    assert st_.logical() == logical_encoding(pop256_w8, arr)
