import csv
import io
import json
import math
import random

import pytest

from dabkit import apps, cli
from dabkit.adapter import C_RELOC, rounds_bound


def test_parse_ops_grammar():
    stream = cli.parse_ops("R 0\n# comment\n\nS 2\nU 3 1\nG 4\n", 8)
    assert stream.ops == [("R", 0), ("S", 2), ("U", 3, 1), ("G", 4)]
    assert cli.parse_ops("T 2 2\n", 4, "ac", 3).ops == [("T", 2, 2)]


@pytest.mark.parametrize("text, line", [
    ("Q 1\n", 1), ("R 1\nU 2\n", 2), ("R 1\nR x\n", 2), ("G 9\n", 1), ("U 1 2\n", 1),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(cli.OpParseError) as err:
        cli.parse_ops(text, 8)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_fid_only_ops_rejected_for_ac():
    with pytest.raises(cli.OpParseError):
        cli.parse_ops("R 1\n", 8, "ac", 3)


def test_empty_stream_reports_build_space():
    report, state = cli.run_ops("fid", cli.OpStream([]), 256, 16)
    assert report["answers"] == []
    assert report["space_report"]["total_bits"] == apps.fid_overhead_formula(state)
    assert report["schema"] == cli.SCHEMA


def test_verified_random_stream():
    rng = random.Random(1)
    n = 1 << 14
    lines = []
    for _ in range(10_000):
        c = rng.randrange(4)
        if c == 0:
            lines.append(f"R {rng.randrange(n + 1)}")
        elif c == 1:
            lines.append(f"S {rng.randrange(1, 200)}")
        elif c == 2:
            lines.append(f"G {rng.randrange(1, n + 1)}")
        else:
            lines.append(f"U {rng.randrange(1, n + 1)} {rng.randrange(2)}")
    stream = cli.parse_ops("\n".join(lines), n)
    report, _ = cli.run_ops("fid", stream, n, 64, verify=True)
    assert report["verified"]


def test_verification_mismatch_names_the_op(monkeypatch):
    stream = cli.parse_ops("G 1\nU 2 1\nR 2\n", 64)
    monkeypatch.setattr(apps.FidState, "rank", lambda self, k: -1)
    with pytest.raises(cli.VerificationError) as err:
        cli.run_ops("fid", stream, 64, 16, verify=True)
    assert err.value.index == 2


def test_main_fid_run(tmp_path, capsys):
    data = bytes([0b10100000]) + bytes(7)
    (tmp_path / "in.bin").write_bytes(data)
    (tmp_path / "ops.txt").write_text("R 3\nS 2\nU 2 1\nR 3\n")
    snap = tmp_path / "snap.bin"
    code = cli.main(["fid", "run", "--input", str(tmp_path / "in.bin"), "--ops",
                     str(tmp_path / "ops.txt"), "--n", "64", "--r", "16", "--verify",
                     "--snapshot", str(snap)])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["answers"] == [2, 3, 3]
    assert apps.FidState.from_bytes(snap.read_bytes()).to_list()[:3] == [1, 1, 1]


def test_main_ac_run(tmp_path, capsys):
    (tmp_path / "in.bin").write_bytes(bytes([0, 1, 2, 1] * 16))
    (tmp_path / "ops.txt").write_text("G 3\nT 3 0\nG 3\n")
    code = cli.main(["ac", "run", "--input", str(tmp_path / "in.bin"), "--ops",
                     str(tmp_path / "ops.txt"), "--n", "64", "--r", "16", "--verify"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["answers"] == [2, 0]


def test_main_reports_parse_error(tmp_path, capsys):
    (tmp_path / "ops.txt").write_text("bogus\n")
    code = cli.main(["fid", "run", "--ops", str(tmp_path / "ops.txt"), "--n", "64", "--r", "16"])
    assert code == 1
    assert "line 1" in capsys.readouterr().err


def test_bench_adapter_rows():
    rows = cli.bench_adapter(64)
    assert rows[0] == (1, 1, 1)
    for L, moves, rounds in rows:
        assert rounds <= rounds_bound(L)
        assert moves <= C_RELOC * (L.bit_length() - 1 + 2)
    out = io.StringIO()
    cli.write_adapter_csv(rows, out)
    parsed = list(csv.reader(io.StringIO(out.getvalue())))
    assert parsed[0] == ["L", "max_relocations", "max_rounds"] and len(parsed) == 65
    with pytest.raises(ValueError):
        cli.bench_adapter(5000)


def test_hard_distribution_shape():
    params = cli.HardDistParams(256, seed=3)
    assert params.lam == 64
    seq = cli.sample_hard_distribution(params)
    assert sum(1 for s, _ in seq if s == 1) == 256
    assert sum(1 for s, _ in seq if s == 2) == 256
    # leftmost child of the root: all A first or all B first
    head = [s for s, _ in seq[:8]]
    assert len(set(head)) == 1


def test_hard_distribution_degenerate_and_invalid():
    report = cli.bench_hard_distribution(cli.HardDistParams(2, seed=0))
    assert report["operations"] == 4
    assert report["max_relocations"] <= C_RELOC * (math.log2(4) + 2)
    with pytest.raises(ValueError):
        cli.sample_hard_distribution(cli.HardDistParams(4096))


def test_hard_distribution_report_is_deterministic():
    a = cli.bench_hard_distribution(cli.HardDistParams(256, seed=9))
    b = cli.bench_hard_distribution(cli.HardDistParams(256, seed=9))
    assert a == b
    assert sum(row["operations"] for row in a["per_level"]) == 512


def test_main_bench_commands(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert cli.main(["bench", "adapter", "--lmax", "16", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "L,max_relocations,max_rounds"
    assert cli.main(["bench", "harddist", "--n", "16", "--seed", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 16
