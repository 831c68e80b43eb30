"""Command-line harness for running op streams and benchmarks.

Op streams run against the bit-vector (FID) or array (AC) structures; the
benchmarks cover adapter sweeps and the hard insertion distribution.

    dabkit fid run --n 65536 --r 64 --ops ops.txt --verify
    dabkit ac run --n 4096 --r 16 --input syms.bin --ops ops.txt
    dabkit bench adapter --lmax 1024 --out sweep.csv
    dabkit bench harddist --n 65536 --seed 7
    dabkit verify all
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import random
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from dabkit import adapter
from dabkit.apps import AcState, FidState
from dabkit.oracle import NaiveMirror, naive_rank, naive_select

SCHEMA = "dabkit-report/1"


class OpParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class VerificationError(RuntimeError):
    def __init__(self, index: int, op, got, want):
        super().__init__(f"op {index} {op}: got {got!r}, expected {want!r}")
        self.index = index


# ---------------------------------------------------------------------------
# op streams

_ARITY = {"R": 1, "S": 1, "U": 2, "G": 1, "T": 2}
_ALLOWED = {"fid": {"R", "S", "U", "G"}, "ac": {"G", "T"}}


@dataclass
class OpStream:
    ops: list

    def __len__(self):
        return len(self.ops)


def parse_ops(text: str, n: int, app: str = "fid", sigma: int = 2) -> OpStream:
    """Parse ``R k | S k | U k b | G i | T i s`` lines; blank lines and ``#`` comments are skipped."""
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        code = parts[0].upper()
        if code not in _ARITY:
            raise OpParseError(lineno, f"unknown op {parts[0]!r}")
        if code not in _ALLOWED[app]:
            raise OpParseError(lineno, f"op {code} is not available for {app}")
        if len(parts) != 1 + _ARITY[code]:
            raise OpParseError(lineno, f"op {code} takes {_ARITY[code]} argument(s)")
        try:
            args = [int(x) for x in parts[1:]]
        except ValueError:
            raise OpParseError(lineno, "arguments must be integers") from None
        lo = 0 if code == "R" else 1
        if not lo <= args[0] <= n:
            raise OpParseError(lineno, f"index {args[0]} outside [{lo}, {n}]")
        if code == "U" and args[1] not in (0, 1):
            raise OpParseError(lineno, "update bit must be 0 or 1")
        if code == "T" and not 0 <= args[1] < sigma:
            raise OpParseError(lineno, f"symbol {args[1]} outside [0, {sigma})")
        ops.append((code, *args))
    return OpStream(ops)


def read_bits(data: bytes, n: int) -> list:
    """First ``n`` bits of ``data``, most significant bit of each byte first."""
    if len(data) * 8 < n:
        raise ValueError(f"input holds {len(data) * 8} bits, need {n}")
    return [(data[i // 8] >> (7 - i % 8)) & 1 for i in range(n)]


def read_symbols(data: bytes, n: int, sigma: int) -> list:
    if len(data) < n:
        raise ValueError(f"input holds {len(data)} symbols, need {n}")
    out = list(data[:n])
    bad = next((s for s in out if s >= sigma), None)
    if bad is not None:
        raise ValueError(f"symbol {bad} outside [0, {sigma})")
    return out


def run_ops(app: str, stream: OpStream, n: int, r: int, w: int = 16, initial=None,
            sigma: int = 3, verify: bool = False) -> tuple:
    """Execute ``stream``; return ``(report, state)``."""
    if app == "fid":
        state = FidState(n, r, w, initial)
        mirror = NaiveMirror(list(initial) if initial is not None else [0] * n)
    elif app == "ac":
        state = AcState(n, r, sigma, w, initial)
        mirror = NaiveMirror(list(initial) if initial is not None else [0] * n)
    else:
        raise ValueError(f"unknown app {app!r}")
    answers = []
    for index, op in enumerate(stream.ops):
        code = op[0]
        if code == "R":
            got = state.rank(op[1])
            want = naive_rank(mirror.array, op[1]) if verify else None
        elif code == "S":
            if op[1] > state.ones:
                got = None
            else:
                got = state.select(op[1])
            want = None
            if verify:
                try:
                    want = naive_select(mirror.array, op[1])
                except ValueError:
                    want = None
        elif code == "G":
            got = state.get(op[1])
            want = mirror.get(op[1]) if verify else None
        elif code == "U":
            state.update(op[1], op[2])
            mirror.set(op[1], op[2])
            continue
        else:
            state.set(op[1], op[2])
            mirror.set(op[1], op[2])
            continue
        if verify and got != want:
            raise VerificationError(index, op, got, want)
        answers.append(got)
    report = {
        "schema": SCHEMA,
        "app": app,
        "params": {"n": n, "r": r, "w": w} | ({"sigma": sigma} if app == "ac" else {}),
        "answers": answers,
        "space_report": state.space_report(),
        "instrumentation": dict(state.instrumentation),
        "verified": verify,
    }
    return report, state


# ---------------------------------------------------------------------------
# adapter sweep


def bench_adapter(lmax: int) -> list:
    """Rows ``(L, max relocations, max rounds)`` for every ``L <= lmax``."""
    if not 1 <= lmax <= 4096:
        raise ValueError("lmax must be within [1, 4096]")
    return adapter.sweep(lmax).rows()


def write_adapter_csv(rows, out) -> None:
    writer = csv.writer(out)
    writer.writerow(["L", "max_relocations", "max_rounds"])
    writer.writerows(rows)


# ---------------------------------------------------------------------------
# hard distribution


@dataclass
class HardDistParams:
    n: int
    lam: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.lam is None:
            self.lam = math.ceil(math.log2(self.n) ** 2) if self.n > 1 else 1

    @property
    def lambda_(self) -> int:
        return self.lam


def sample_hard_distribution(params: HardDistParams) -> list:
    """One insertion sequence of ``(side, depth)``; side 1 is an A-ball, 2 a B-ball.

    A node with ``m`` balls per side is a leaf when ``m < lambda`` (or
    ``lambda < 3``) and emits A, B alternately.  Otherwise it has ``lambda``
    children of ``m / lambda`` balls per side; with a fair bit ``b`` the
    leftmost child emits ``2 b m / lambda`` A-balls then ``(2 - 2 b) m / lambda``
    B-balls, the rightmost child the opposite counts, and the middle
    children recurse.
    """
    rng = random.Random(params.seed)
    lam = params.lam
    out = []

    def node(m, depth):
        if lam < 3 or m < lam:
            for _ in range(m):
                out.append((1, depth))
                out.append((2, depth))
            return
        if m % lam:
            raise ValueError(f"{m} balls per side do not split into {lam} children")
        part = m // lam
        bit = rng.getrandbits(1)
        for _ in range(2 * bit * part):
            out.append((1, depth + 1))
        for _ in range((2 - 2 * bit) * part):
            out.append((2, depth + 1))
        for _ in range(lam - 2):
            node(part, depth + 1)
        for _ in range((2 - 2 * bit) * part):
            out.append((1, depth + 1))
        for _ in range(2 * bit * part):
            out.append((2, depth + 1))

    node(params.n, 0)
    return out


def bench_hard_distribution(params: HardDistParams, c_reloc: float | None = None) -> dict:
    """Drive an incremental adapter with one sampled instance."""
    if c_reloc is None:
        c_reloc = adapter.C_RELOC
    seq = sample_hard_distribution(params)
    if sum(1 for s, _ in seq if s == 1) != params.n or len(seq) != 2 * params.n:
        raise AssertionError("sampler did not emit n balls per side")
    inc = adapter.IncrementalAdapter(params.n)
    bound = c_reloc * (math.log2(2 * params.n) + 2)
    levels: dict = {}
    total = worst = 0
    for side, depth in seq:
        moved = inc.allocate(side)
        if moved > bound:
            raise AssertionError(f"{moved} relocations exceed the bound {bound:.2f}")
        total += moved
        worst = max(worst, moved)
        ops, rel = levels.get(depth, (0, 0))
        levels[depth] = (ops + 1, rel + moved)
    return {
        "schema": SCHEMA,
        "n": params.n,
        "lambda": params.lam,
        "seed": params.seed,
        "operations": len(seq),
        "total_relocations": total,
        "amortized_relocations": total / len(seq),
        "max_relocations": worst,
        "upper_bound": bound,
        "per_level": [{"depth": d, "operations": o, "relocations": r,
                       "amortized": r / o} for d, (o, r) in sorted(levels.items())],
    }


def hard_distribution_trend(sizes, seeds: int = 32) -> dict:
    """Mean amortized relocations per ``n``; flags a decrease as a warning."""
    means = {}
    for n in sizes:
        runs = [bench_hard_distribution(HardDistParams(n, seed=s))["amortized_relocations"]
                for s in range(seeds)]
        means[n] = sum(runs) / len(runs)
    ordered = [means[n] for n in sizes]
    monotone = all(a <= b for a, b in zip(ordered, ordered[1:]))
    return {"means": means, "non_decreasing": monotone}


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dabkit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for app in ("fid", "ac"):
        p = sub.add_parser(app).add_subparsers(dest="action", required=True).add_parser("run")
        p.add_argument("--input", help="initial content (bits MSB-first, or one byte per symbol)")
        p.add_argument("--ops", help="operation file")
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--r", type=int, default=64 if app == "fid" else 16)
        p.add_argument("--w", type=int, default=16)
        if app == "ac":
            p.add_argument("--sigma", type=int, default=3)
        p.add_argument("--verify", action="store_true")
        p.add_argument("--snapshot", help="write a binary snapshot here after the run")
    bench = sub.add_parser("bench").add_subparsers(dest="action", required=True)
    pa = bench.add_parser("adapter")
    pa.add_argument("--lmax", type=int, default=1024)
    pa.add_argument("--out", help="CSV path (stdout when omitted)")
    ph = bench.add_parser("harddist")
    ph.add_argument("--n", type=int, required=True)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--lam", type=int, default=None)
    verify = sub.add_parser("verify").add_subparsers(dest="action", required=True)
    verify.add_parser("all")
    return ap


def _cmd_run(args) -> int:
    app = args.command
    sigma = getattr(args, "sigma", 2)
    initial = None
    if args.input:
        with open(args.input, "rb") as fh:
            data = fh.read()
        initial = read_bits(data, args.n) if app == "fid" else read_symbols(data, args.n, sigma)
    text = ""
    if args.ops:
        with open(args.ops) as fh:
            text = fh.read()
    stream = parse_ops(text, args.n, app, sigma)
    report, state = run_ops(app, stream, args.n, args.r, args.w, initial, sigma, args.verify)
    if args.snapshot:
        with open(args.snapshot, "wb") as fh:
            fh.write(state.to_bytes())
    json.dump(report, sys.stdout)
    sys.stdout.write("\n")
    return 0


def _cmd_verify() -> int:
    """Run the repository's test suites (needs the test extras installed)."""
    tests = Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        print("error: test suites are only available from a source checkout", file=sys.stderr)
        return 1
    return subprocess.call([sys.executable, "-m", "pytest", "-q", str(tests)])


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command in ("fid", "ac"):
            return _cmd_run(args)
        if args.command == "bench" and args.action == "adapter":
            rows = bench_adapter(args.lmax)
            if args.out:
                with open(args.out, "w", newline="") as fh:
                    write_adapter_csv(rows, fh)
            else:
                write_adapter_csv(rows, sys.stdout)
            return 0
        if args.command == "bench" and args.action == "harddist":
            report = bench_hard_distribution(HardDistParams(args.n, args.lam, args.seed))
            json.dump(report, sys.stdout)
            sys.stdout.write("\n")
            return 0
        if args.command == "verify":
            return _cmd_verify()
    except (OpParseError, VerificationError, ValueError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
