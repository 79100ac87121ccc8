"""Command-line driver tying the codec, kernels, scheduler, and io together.

Exit codes: 0 success, 1 invalid input (files, formats, panel mismatches),
2 usage errors, 3 infeasible memory budget.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import bench as bench_mod
from . import io as fid_io
from .codec import encode_genotype, pack
from .errors import FastIdError, InfeasiblePlanError
from .kernel import Panel, TileConfig, TILE_SIZES
from .scheduler import MemoryBudget, PipelineConfig, plan_batches, run_pipeline

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 3


def _tokenize_genotypes(field: str, lineno: int) -> list[str]:
    tokens = field.replace(",", " ").split()
    if len(tokens) == 1 and len(tokens[0]) > 2:
        run = tokens[0]
        if len(run) % 2:
            raise FastIdError(f"line {lineno}: odd genotype string length {len(run)}")
        tokens = [run[i : i + 2] for i in range(0, len(run), 2)]
    return tokens


def cmd_encode(args) -> int:
    profiles = []
    bit_length = None
    with open(args.input, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0]:
                raise FastIdError(f"line {lineno}: expected '<id><TAB><genotypes>'")
            try:
                bits = encode_genotype(_tokenize_genotypes(fields[1], lineno), fields[0])
            except FastIdError as exc:
                raise FastIdError(f"line {lineno}: {exc}") from None
            if bit_length is None:
                bit_length = bits.bit_length
            elif bits.bit_length != bit_length:
                raise FastIdError(
                    f"line {lineno}: profile has {bits.bit_length} bits, "
                    f"earlier lines have {bit_length}"
                )
            profiles.append(pack(bits, args.word_width))
    if not profiles:
        raise FastIdError(f"{args.input}: no profiles")
    panel = Panel.from_profiles(profiles, bit_length)
    fid_io.save_panel(panel, args.out)
    print(f"encoded {panel.n_profiles} profiles, bit length {panel.bit_length}")
    return EXIT_OK


def cmd_compare(args) -> int:
    refs = fid_io.load_panel(args.refs, args.word_width)
    queries = fid_io.load_panel(args.queries, args.word_width)
    budget = MemoryBudget.parse(args.budget) if args.budget else None
    plan = plan_batches(
        refs.n_profiles, queries.n_profiles, refs.n_words, args.word_width, budget
    )
    config = PipelineConfig(
        kernel=args.kernel,
        tile=TileConfig(args.tile),
        workers=args.workers,
        overlap=args.overlap,
        buffers=args.buffers,
    )
    out = fid_io.ScoreOutput(args.out, args.format)
    with fid_io.open_score_sink(out, refs.ids, queries.ids) as sink:
        _, ledger = run_pipeline(plan, refs, queries, config, sink=sink)
    ledger_path = args.ledger or f"{args.out}.ledger.csv"
    fid_io.write_ledger(ledger, ledger_path)
    print(
        f"compared {refs.n_profiles} refs x {queries.n_profiles} queries in "
        f"{plan.n_batches} batch(es); stage-in {ledger.stage_in_total_s * 1e3:.1f} ms, "
        f"compute {ledger.compute_total_s * 1e3:.1f} ms, "
        f"stage-out {ledger.stage_out_total_s * 1e3:.1f} ms"
    )
    print(f"scores written to {args.out}, ledger to {ledger_path}")
    return EXIT_OK


def _parse_sizes(text: str) -> list[tuple[int, int, int]]:
    sizes = []
    for part in text.split(","):
        dims = part.lower().split("x")
        if len(dims) != 3:
            raise FastIdError(f"bad size {part!r}, expected NRxNQxNW")
        try:
            sizes.append(tuple(int(d) for d in dims))
        except ValueError:
            raise FastIdError(f"bad size {part!r}, expected NRxNQxNW") from None
    return sizes


def cmd_bench(args) -> int:
    sizes = _parse_sizes(args.sizes)
    kernels = ["blocked", "naive"] if args.kernel == "both" else [args.kernel]
    configs = [
        PipelineConfig(
            kernel=k,
            tile=TileConfig(args.tile),
            workers=args.workers,
            overlap=args.overlap,
            buffers=args.buffers,
        )
        for k in kernels
    ]
    budget = MemoryBudget.parse(args.budget) if args.budget else None
    max_bytes = MemoryBudget.parse(args.max_bytes).bytes_total
    out_fh = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8", newline="\n")
    try:
        if args.long_form:
            rows = bench_mod.sweep(
                sizes,
                configs,
                word_width=args.word_width,
                seed=args.seed,
                reps=args.reps,
                budget=budget,
                max_bytes=max_bytes,
            )
            for row in rows:
                if row["phase"] == "infeasible":
                    print(
                        f"warning: {row['n_refs']}x{row['n_queries']}x{row['n_words']} "
                        "skipped, exceeds --max-bytes",
                        file=sys.stderr,
                    )
            bench_mod.rows_to_csv(rows, out_fh)
            return EXIT_OK
        out_fh.write(
            "n_refs,n_queries,n_words,kernel,tile,workers,stage_in_ms,compute_ms,"
            "stage_out_ms,comparisons_per_s,seed,checksum\n"
        )
        for n_refs, n_queries, n_words in sizes:
            for config in configs:
                result = bench_mod.measure(
                    n_refs,
                    n_queries,
                    n_words,
                    config,
                    word_width=args.word_width,
                    seed=args.seed,
                    reps=args.reps,
                    budget=budget,
                    max_bytes=max_bytes,
                )
                if result is None:
                    print(
                        f"warning: {n_refs}x{n_queries}x{n_words} skipped, exceeds --max-bytes",
                        file=sys.stderr,
                    )
                    out_fh.write(
                        f"{n_refs},{n_queries},{n_words},{config.kernel},"
                        f"{config.tile.block_size},{config.workers},,,,,{args.seed},\n"
                    )
                    continue
                out_fh.write(
                    f"{result.n_refs},{result.n_queries},{result.n_words},{result.kernel},"
                    f"{result.tile},{result.workers},{result.stage_in_ms:.6f},"
                    f"{result.compute_ms:.6f},{result.stage_out_ms:.6f},"
                    f"{result.comparisons_per_s:.1f},{result.seed},{result.checksum}\n"
                )
        return EXIT_OK
    finally:
        if out_fh is not sys.stdout:
            out_fh.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastid",
        description="Bit-packed identity profile comparison via XOR/AND/popcount kernels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode genotype codes into a packed panel file")
    enc.add_argument("input", help="text file, one '<id><TAB><genotypes>' per line")
    enc.add_argument("--out", required=True, help="panel file to write")
    enc.add_argument("--word-width", type=int, choices=(32, 64), default=64)
    enc.set_defaults(func=cmd_encode)

    cmp_ = sub.add_parser("compare", help="score a reference panel against a query panel")
    cmp_.add_argument("--refs", required=True, help="reference panel file")
    cmp_.add_argument("--queries", required=True, help="query panel file")
    cmp_.add_argument("--out", required=True, help="score matrix destination")
    cmp_.add_argument("--format", choices=("csv", "binary"), default="csv")
    cmp_.add_argument("--budget", help="staging memory budget, e.g. 512M (k/M/G suffixes)")
    cmp_.add_argument("--tile", type=int, choices=TILE_SIZES, default=64)
    cmp_.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    cmp_.add_argument("--overlap", action=argparse.BooleanOptionalAction, default=True,
                      help="overlap batch drain with the next batch load")
    cmp_.add_argument("--buffers", choices=("reusable", "fresh"), default="reusable")
    cmp_.add_argument("--kernel", choices=("blocked", "naive"), default="blocked")
    cmp_.add_argument("--word-width", type=int, choices=(32, 64), default=64)
    cmp_.add_argument("--ledger", help="ledger CSV path (default: <out>.ledger.csv)")
    cmp_.set_defaults(func=cmd_compare)

    ben = sub.add_parser("bench", help="time synthetic comparison jobs")
    ben.add_argument("--sizes", required=True, help="comma-separated NRxNQxNW triples")
    ben.add_argument("--reps", type=int, default=3, help="repetitions per configuration")
    ben.add_argument("--seed", type=int, default=0, help="seed for all synthetic panels")
    ben.add_argument("--kernel", choices=("blocked", "naive", "both"), default="blocked")
    ben.add_argument("--tile", type=int, choices=TILE_SIZES, default=64)
    ben.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ben.add_argument("--overlap", action=argparse.BooleanOptionalAction, default=True)
    ben.add_argument("--buffers", choices=("reusable", "fresh"), default="reusable")
    ben.add_argument("--word-width", type=int, choices=(32, 64), default=64)
    ben.add_argument("--budget", help="staging budget per job (forces batching)")
    ben.add_argument("--max-bytes", default="2G", help="skip jobs estimated above this")
    ben.add_argument("--long-form", action="store_true",
                     help="emit one row per phase instead of the wide report")
    ben.add_argument("--out", default="-", help="CSV destination, '-' for stdout")
    ben.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasiblePlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FastIdError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
