"""Command-line driver.

Exit codes: 0 ok, 1 usage error, 2 input error (bad trace or spec), 3
internal error. Profiles go to files (or stdout with ``-o -``), diagnostics
to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import bench
from .frontend import TraceError, format_trace, iter_trace, parse_trace
from .oracle import MAX_ORACLE_EVENTS, OracleError, oracle_profile
from .pipeline import buffer_bytes_from_env, make_config, parse_loops, profile_events
from .profilers import MODULES
from .workloads import WORKLOADS, WorkloadError, generate_synthetic

log = logging.getLogger("prompt_kit")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="prompt-kit", description="Trace-driven memory profiling.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug diagnostics on stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def input_args(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--trace", help="trace file ('-' for stdin)")
        src.add_argument("--workload", choices=WORKLOADS, help="generate a synthetic workload instead")
        sp.add_argument("--iters", type=_positive, default=1000)
        sp.add_argument("--footprint", type=_positive, default=4096)
        sp.add_argument("--stride", type=_positive, default=8)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--module", required=True, choices=sorted(MODULES))
        sp.add_argument("--flags", default="", help="memdep variants: count,all-types,distance,context")
        sp.add_argument("--loops", default="all", help="target loops: all, none, or ids like 1,3")
        sp.add_argument("--limit", type=_positive, default=None, help="pointsto set limit")
        sp.add_argument("-o", "--output", default="-", help="profile path ('-' for stdout)")

    sp = sub.add_parser("profile", help="run a profiler over a trace")
    input_args(sp)
    sp.add_argument("--workers", type=_positive, default=1)
    sp.add_argument("--buffer-bytes", type=_positive, default=None)
    sp.add_argument("--reducers", type=_positive, default=None)

    sp = sub.add_parser("oracle", help="compute the reference profile by brute force")
    input_args(sp)

    sp = sub.add_parser("gen-trace", help="write a synthetic workload as a trace")
    sp.add_argument("workload")
    sp.add_argument("--iters", type=int, default=1000)
    sp.add_argument("--footprint", type=_positive, default=4096)
    sp.add_argument("--stride", type=_positive, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", default="-")

    sp = sub.add_parser("bench", help="queue or map throughput")
    sp.add_argument("target", choices=("queue", "map"))
    sp.add_argument("--events", type=_positive, default=10_000_000)
    sp.add_argument("--baseline-events", type=_positive, default=None)
    sp.add_argument("--consumers", default="1,8")
    sp.add_argument("--reducers", default="1,2,4,8")
    sp.add_argument("--buffer-bytes", type=_positive, default=None)
    sp.add_argument("--seed", type=int, default=0)
    return p


def _events(args):
    if args.workload:
        return generate_synthetic(args.workload, args.iters, args.footprint, args.stride, args.seed)
    if args.trace == "-":
        return iter_trace(sys.stdin)
    return iter_trace(open(args.trace, encoding="utf-8"))


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def oracle_options(module: str, flags: str = "", loops="all", limit: Optional[int] = None) -> dict:
    """Oracle keyword arguments for the same options ``profile`` takes."""
    make_config(module, flags, loops, limit)  # same validation as profile
    if module == "memdep":
        opts = {f.strip().replace("-", "_"): True for f in flags.split(",") if f.strip()}
        return dict(opts, target_loops=loops)
    if module == "lifetime":
        return {"target_loops": loops}
    if module == "pointsto":
        return {"limit": limit}
    return {}


def cmd_profile(args) -> int:
    loops = parse_loops(args.loops)
    config = make_config(args.module, args.flags, loops, args.limit)
    result = profile_events(
        _events(args), args.module, config, workers=args.workers,
        buffer_bytes=args.buffer_bytes or buffer_bytes_from_env(), reducers=args.reducers,
    )
    _write(args.output, result.profile)
    print(
        f"events emitted={result.stats.emitted} dropped={result.stats.dropped} "
        f"words={result.stats.words} wall={result.seconds:.3f}s",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_oracle(args) -> int:
    loops = parse_loops(args.loops)
    opts = oracle_options(args.module, args.flags, loops, args.limit)
    events = []
    for ev in _events(args):
        events.append(ev)
        if len(events) > MAX_ORACLE_EVENTS:
            raise OracleError(f"trace exceeds the oracle limit of {MAX_ORACLE_EVENTS} events")
    _write(args.output, oracle_profile(events, args.module, **opts))
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    events = generate_synthetic(args.workload, args.iters, args.footprint, args.stride, args.seed)
    _write(args.output, format_trace(events))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        consumers = [int(x) for x in args.consumers.split(",")]
        reducers = [int(x) for x in args.reducers.split(",")]
    except ValueError:
        raise UsageError("--consumers and --reducers take comma-separated integers") from None
    if args.target == "queue":
        metrics = bench.bench_queue(
            args.events, consumers, args.buffer_bytes or buffer_bytes_from_env(),
            args.baseline_events, args.seed,
        )
    else:
        metrics = bench.bench_map(args.events, reducers, seed=args.seed)
    sys.stdout.write(bench.format_metrics(metrics))
    return EXIT_OK


COMMANDS = {"profile": cmd_profile, "oracle": cmd_oracle, "gen-trace": cmd_gen_trace, "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"prompt-kit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="prompt-kit: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"prompt-kit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceError, WorkloadError, OracleError, ValueError, OSError) as exc:
        print(f"prompt-kit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
