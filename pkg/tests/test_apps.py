import math
import random

import pytest

from dabkit.apps import (
    AcState,
    FidState,
    SumTree,
    ac_get,
    ac_new,
    ac_overhead_formula,
    ac_set,
    ac_space_report,
    fid_new,
    fid_overhead_formula,
    fid_rank,
    fid_redundancy_envelope,
    fid_select,
    fid_space_report,
    fid_update,
    multinomial,
)
from dabkit.oracle import naive_rank, naive_select


def test_sum_tree_against_list():
    rng = random.Random(0)
    values = [rng.randrange(10) for _ in range(13)]
    tree = SumTree(13, 8)
    for i, v in enumerate(values):
        tree.set(i, v)
    for count in range(14):
        assert tree.prefix(count) == sum(values[:count])
    for k in range(1, sum(values) + 1):
        b, before = tree.search(k)
        assert before == sum(values[:b]) < k <= before + values[b]


def test_fid_new_blocks_and_shared_tables():
    fid = fid_new(256, 16)
    assert fid.block_count == 16
    assert all(st.root_label == 0 for st in fid.blocks)
    assert all(st.tables is fid.tables for st in fid.blocks)
    report = fid_space_report(fid)
    assert report["payload_bits"] == 0
    assert report["total_bits"] == fid_overhead_formula(fid)
    assert report["redundancy_bits"] == report["total_bits"]


def test_fid_parameter_errors():
    with pytest.raises(ValueError):
        FidState(256, 24)
    with pytest.raises(ValueError):
        FidState(100, 16)


def test_fid_single_one():
    bits = [0] * 64
    bits[6] = 1
    fid = FidState(64, 16, bits=bits)
    assert fid_select(fid, 1) == 7
    assert fid_rank(fid, 0) == 0
    assert fid_rank(fid, 64) == 1
    with pytest.raises(IndexError):
        fid_select(fid, 2)
    with pytest.raises(IndexError):
        fid_rank(fid, 65)


def test_fid_select_of_rank():
    rng = random.Random(5)
    bits = [rng.randrange(2) for _ in range(512)]
    fid = FidState(512, 32, bits=bits)
    for k, b in enumerate(bits, 1):
        if b:
            assert fid.select(fid.rank(k)) == k
    last = max(i for i, b in enumerate(bits, 1) if b)
    assert fid.select(fid.ones) == last


def test_fid_set_then_clear_restores_state():
    fid = FidState(256, 16)
    before = [st.logical() for st in fid.blocks]
    fid_update(fid, 100, 1)
    fid_update(fid, 100, 0)
    assert [st.logical() for st in fid.blocks] == before


def test_fid_noop_update_touches_nothing():
    fid = FidState(256, 16)
    stats = fid_update(fid, 9, 0)
    assert (stats.allocations, stats.releases, stats.word_writes) == (0, 0, 0)


def test_fid_stream_against_bitset():
    rng = random.Random(17)
    n = 4096
    bits = [rng.randrange(2) for _ in range(n)]
    fid = FidState(n, 64, bits=bits)
    for op in range(3000):
        c = rng.randrange(3)
        if c == 0:
            k = rng.randrange(n + 1)
            assert fid.rank(k) == naive_rank(bits, k)
        elif c == 1 and fid.ones:
            k = rng.randrange(1, fid.ones + 1)
            assert fid.select(k) == naive_select(bits, k)
        else:
            i, b = rng.randrange(1, n + 1), rng.randrange(2)
            fid.update(i, b)
            bits[i - 1] = b
        if op % 1000 == 999:
            for blk in range(fid.block_count):
                assert fid.blocks[blk].root_label == sum(bits[blk * 64:(blk + 1) * 64])
                assert fid.inter.get(blk) == fid.blocks[blk].root_label
    assert fid.to_list() == bits


def test_fid_space_report_is_exact():
    rng = random.Random(2)
    bits = [rng.randrange(2) for _ in range(2048)]
    fid = FidState(2048, 64, bits=bits)
    report = fid.space_report()
    assert report["total_bits"] == fid_overhead_formula(fid)
    m = sum(bits)
    assert report["payload_bits"] == pytest.approx(math.log2(math.comb(2048, m)), abs=1e-9)
    assert set(report) == {"payload_bits", "redundancy_bits", "overhead_breakdown", "total_bits"}
    # every block stays inside log2 C(r, m_i) + 3 bits
    for st in fid.blocks:
        assert (1 << st.total_bits_M) <= 8 * math.comb(64, st.root_label)


def test_fid_redundancy_envelope_half_full():
    rng = random.Random(4)
    n = 1 << 16
    bits = [1] * (n // 2) + [0] * (n // 2)
    rng.shuffle(bits)
    fid = FidState(n, 64, bits=bits)
    assert fid.space_report()["redundancy_bits"] <= fid_redundancy_envelope(fid)


def test_fid_snapshot_roundtrip(tmp_path):
    rng = random.Random(8)
    bits = [rng.randrange(2) for _ in range(1024)]
    fid = FidState(1024, 32, bits=bits)
    for _ in range(200):
        i, b = rng.randrange(1, 1025), rng.randrange(2)
        fid.update(i, b)
        bits[i - 1] = b
    path = tmp_path / "fid.bin"
    path.write_bytes(fid.to_bytes())
    copy = FidState.from_bytes(path.read_bytes())
    assert copy.to_list() == bits
    assert copy.rank(700) == fid.rank(700)
    with pytest.raises(ValueError):
        FidState.from_bytes(b"DABAC1" + bytes(40))


def test_ac_constant_array_costs_only_overhead():
    ac = ac_new(128, 16, 3, symbols=[2] * 128)
    report = ac_space_report(ac)
    assert report["payload_bits"] == 0
    assert report["total_bits"] == ac_overhead_formula(ac)
    assert ac.frequencies == [0, 0, 128]


def test_ac_errors():
    ac = AcState(64, 16)
    with pytest.raises(ValueError):
        ac_set(ac, 1, 3)
    with pytest.raises(IndexError):
        ac_get(ac, 65)
    with pytest.raises(ValueError):
        AcState(64, 16, symbols=[5] * 64)


def test_ac_stream_against_array():
    rng = random.Random(6)
    n = 1024
    arr = [rng.randrange(3) for _ in range(n)]
    ac = AcState(n, 16, 3, symbols=arr)
    for _ in range(3000):
        i = rng.randrange(1, n + 1)
        if rng.random() < 0.5:
            assert ac.get(i) == arr[i - 1]
        else:
            s = rng.randrange(3)
            ac.set(i, s)
            arr[i - 1] = s
    assert ac.to_list() == arr
    assert ac.frequencies == [arr.count(s) for s in range(3)]


def test_ac_space_within_benchmark_plus_overhead():
    rng = random.Random(10)
    for _ in range(20):
        n = 512
        weights = [rng.random() for _ in range(3)]
        arr = rng.choices(range(3), weights, k=n)
        ac = AcState(n, 16, 3, symbols=arr)
        report = ac.space_report()
        blocks = sum(ac.block_bits())
        bench = multinomial([arr.count(s) for s in range(3)])
        # sum of block sizes <= log2 multinomial + 3 bits per block, in integers
        assert 1 << blocks <= bench << (3 * ac.block_count)
        assert report["total_bits"] == ac_overhead_formula(ac)
        assert report["total_bits"] - blocks >= 0


def test_ac_snapshot_roundtrip():
    rng = random.Random(3)
    arr = [rng.randrange(3) for _ in range(256)]
    ac = AcState(256, 16, 3, symbols=arr)
    ac.set(5, 1)
    arr[4] = 1
    copy = AcState.from_bytes(ac.to_bytes())
    assert copy.to_list() == arr
    assert copy.frequencies == ac.frequencies
