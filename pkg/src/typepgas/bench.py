"""Graph500-style benchmark harness: multi-root BFS runs, TEPS and mode sweeps.

Command line::

    python -m typepgas --scale 10 --edgefactor 16 --ranks 1,2,4,8 --mode both
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
from dataclasses import asdict, dataclass, field

from .bfs import BfsMode, ValidationFailure, bfs_run, validate_tree
from .graph import (
    EdgeList,
    GraphConfig,
    build_csr,
    generate_edges,
    pick_search_keys,
    read_edges,
    write_edges,
)
from .runtime import Scheduler

log = logging.getLogger(__name__)

QUEUE_OBJECT = "vertex_queue_next"
TIMING_FIELDS = ("teps", "elapsed_seconds", "wall_time_seconds", "mean_teps", "harmonic_mean_teps")


class ConfigError(ValueError):
    pass


class MissingPair(KeyError):
    pass


@dataclass
class BenchConfig:
    scale: int = 10
    edgefactor: int = 16
    seed: int = 1
    num_roots: int = 16
    ranks: tuple[int, ...] = (1, 2, 4, 8)
    modes: tuple[str, ...] = ("one-sided", "async")
    async_capacity: int = 256
    output: str = "json"
    scheduler: str = "det"
    dump_edges: str | None = None
    load_edges: str | None = None

    def __post_init__(self):
        self.ranks = tuple(self.ranks)
        self.modes = tuple(self.modes)
        self.validate()

    def validate(self) -> None:
        if self.scale < 0 or self.edgefactor < 1 or self.num_roots < 1 or self.async_capacity < 1:
            raise ConfigError("scale must be >= 0 and edgefactor, roots and buffer must be positive")
        if not self.ranks or any(r < 1 for r in self.ranks):
            raise ConfigError(f"rank counts must be positive, got {self.ranks}")
        if not self.modes:
            raise ConfigError("at least one mode is required")
        for m in self.modes:
            if m not in ("one-sided", "async"):
                raise ConfigError(f"unknown mode {m!r}")
        if self.output not in ("json", "csv"):
            raise ConfigError(f"unknown output format {self.output!r}")
        try:
            Scheduler.parse(self.scheduler)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def bfs_mode(self, mode: str) -> BfsMode:
        return BfsMode.parse("one-sided" if mode == "one-sided" else f"async[{self.async_capacity}]")


@dataclass
class RunRecord:
    mode: str
    ranks: int
    root: int
    edges_traversed: int
    elapsed_seconds: float
    teps: float
    validation: str
    counters: dict
    queue_counters: dict

    def key(self) -> tuple[int, int]:
        return self.ranks, self.root


@dataclass
class Aggregate:
    mode: str
    ranks: int
    runs: int
    mean_teps: float
    harmonic_mean_teps: float
    messages_sent: int


@dataclass
class BenchReport:
    config: dict
    graph: dict
    runs: list[RunRecord] = field(default_factory=list)
    aggregates: list[Aggregate] = field(default_factory=list)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = asdict(self)
        if not include_timing:
            d = _strip(d)
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        return cls(
            config=d["config"],
            graph=d["graph"],
            runs=[RunRecord(**r) for r in d["runs"]],
            aggregates=[Aggregate(**a) for a in d["aggregates"]],
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["mode", "ranks", "root", "edges_traversed", "elapsed_seconds", "teps", "validation",
                "messages_sent", "elements_sent", "bytes_sent", "flushes", "queue_messages_sent"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.runs:
            c = r.counters
            w.writerow([r.mode, r.ranks, r.root, r.edges_traversed, r.elapsed_seconds, r.teps, r.validation,
                        c["messages_sent"], c["elements_sent"], c["bytes_sent"], c["flushes"],
                        r.queue_counters.get("messages_sent", 0)])
        return buf.getvalue()


def _strip(obj):
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [_strip(v) for v in obj]
    return obj


def _edges_for(config: BenchConfig) -> EdgeList:
    if config.load_edges:
        loaded = read_edges(config.load_edges)
        return EdgeList(loaded.edges, max(1 << config.scale, loaded.num_vertices))
    return generate_edges(GraphConfig(config.scale, config.edgefactor, config.seed))


def run_bench(config: BenchConfig) -> BenchReport:
    """Build the graph once, then BFS from every key for each rank count and mode."""
    config.validate()
    edges = _edges_for(config)
    if config.dump_edges:
        write_edges(config.dump_edges, edges)
    base = build_csr(edges, 1)
    keys = pick_search_keys(base, config.num_roots, config.seed)
    report = BenchReport(
        config={k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        graph={
            "num_vertices": edges.num_vertices,
            "generated_edges": len(edges),
            "unique_edges": base.num_unique_edges,
            "search_keys": keys,
        },
    )
    scheduler = Scheduler.parse(config.scheduler)
    for ranks in config.ranks:
        graph = base if ranks == 1 else build_csr(edges, ranks)
        for mode in config.modes:
            bmode = config.bfs_mode(mode)
            for root in keys:
                res = bfs_run(graph, root, bmode, scheduler=scheduler)
                try:
                    validate_tree(graph, root, res)
                except ValidationFailure as exc:
                    raise ValidationFailure(
                        exc.rule, exc.vertex, f"{exc.detail} [mode={bmode}, ranks={ranks}, root={root}]"
                    ) from exc
                rep = res.report
                counters = rep.counters().to_dict()
                report.runs.append(RunRecord(
                    mode=mode,
                    ranks=ranks,
                    root=root,
                    edges_traversed=res.edges_traversed,
                    elapsed_seconds=res.elapsed,
                    teps=res.teps,
                    validation="ok",
                    counters=counters,
                    queue_counters=rep.counters(QUEUE_OBJECT).to_dict(),
                ))
                log.info("%s ranks=%d root=%d teps=%.3g", bmode, ranks, root, res.teps)
    report.aggregates = _aggregate(report.runs)
    return report


def _aggregate(runs: list[RunRecord]) -> list[Aggregate]:
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for r in runs:
        groups.setdefault((r.mode, r.ranks), []).append(r)
    out = []
    for (mode, ranks), rs in groups.items():
        teps = [r.teps for r in rs]
        out.append(Aggregate(
            mode=mode,
            ranks=ranks,
            runs=len(rs),
            mean_teps=statistics.fmean(teps),
            harmonic_mean_teps=statistics.harmonic_mean(teps) if all(t > 0 for t in teps) else 0.0,
            messages_sent=sum(r.counters["messages_sent"] for r in rs),
        ))
    return out


@dataclass
class ModePair:
    ranks: int
    root: int
    message_ratio: float
    element_ratio: float
    queue_message_ratio: float
    wall_time_ratio: float


@dataclass
class ModeComparison:
    pairs: list[ModePair]

    def by_ranks(self) -> dict[int, list[ModePair]]:
        out: dict[int, list[ModePair]] = {}
        for p in self.pairs:
            out.setdefault(p.ranks, []).append(p)
        return out


def _ratio(a: float, b: float) -> float:
    if a == b:
        return 1.0
    return a / b if b else float("inf")


def compare_modes(report: BenchReport) -> ModeComparison:
    """One-sided / async ratios for every (ranks, root) run in both modes."""
    one = {r.key(): r for r in report.runs if r.mode == "one-sided"}
    asy = {r.key(): r for r in report.runs if r.mode == "async"}
    missing = sorted(one.keys() ^ asy.keys())
    if missing or not one:
        raise MissingPair(f"runs without a counterpart in the other mode: {missing or 'all'}")
    pairs = []
    for key in sorted(one):
        o, a = one[key], asy[key]
        pairs.append(ModePair(
            ranks=key[0],
            root=key[1],
            message_ratio=_ratio(o.counters["messages_sent"], a.counters["messages_sent"]),
            element_ratio=_ratio(o.counters["elements_sent"], a.counters["elements_sent"]),
            queue_message_ratio=_ratio(o.queue_counters.get("messages_sent", 0),
                                       a.queue_counters.get("messages_sent", 0)),
            wall_time_ratio=_ratio(o.elapsed_seconds, a.elapsed_seconds),
        ))
    return ModeComparison(pairs)


# ---------------------------------------------------------------------------
# CLI

def _rank_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rank list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="typepgas-bench", description="Type-driven PGAS Graph500 BFS benchmark.")
    p.add_argument("--scale", type=int, default=10, help="log2 of the vertex count")
    p.add_argument("--edgefactor", type=int, default=16, help="generated edges per vertex")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--ranks", type=_rank_list, default=(1, 2, 4, 8), help="comma-separated rank counts")
    p.add_argument("--mode", choices=("onesided", "p2p", "both"), default="both")
    p.add_argument("--buffer", type=int, default=256, help="coalescing buffer capacity for p2p mode")
    p.add_argument("--roots", type=int, default=16, help="number of BFS search keys")
    p.add_argument("--scheduler", choices=("det", "free"), default="det")
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("--dump-edges", metavar="PATH")
    p.add_argument("--load-edges", metavar="PATH")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> BenchConfig:
    modes = {"onesided": ("one-sided",), "p2p": ("async",), "both": ("one-sided", "async")}[args.mode]
    return BenchConfig(
        scale=args.scale,
        edgefactor=args.edgefactor,
        seed=args.seed,
        num_roots=args.roots,
        ranks=args.ranks,
        modes=modes,
        async_capacity=args.buffer,
        output=args.output,
        scheduler=args.scheduler,
        dump_edges=args.dump_edges,
        load_edges=args.load_edges,
    )


def main(argv: list[str] | None = None) -> int:
    """Exit status: 0 all runs validated, 1 bad configuration, 2 validation failure."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        config = config_from_args(args)
        report = run_bench(config)
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    out = report.to_json() if config.output == "json" else report.to_csv()
    sys.stdout.write(out if out.endswith("\n") else out + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
