import json

import numpy as np
import pytest

from typepgas import bench
from typepgas.bench import (
    BenchConfig,
    BenchReport,
    ConfigError,
    MissingPair,
    compare_modes,
    main,
    run_bench,
)
from typepgas.bfs import BfsResult, ValidationFailure
from typepgas.graph import GraphConfig, generate_edges, read_edges


@pytest.fixture(scope="module")
def report():
    return run_bench(BenchConfig(scale=10, edgefactor=16, ranks=(1, 4), num_roots=4))


def test_sixteen_validated_runs(report):
    assert len(report.runs) == 16
    assert {(r.mode, r.ranks) for r in report.runs} == {(m, p) for m in ("one-sided", "async") for p in (1, 4)}
    assert all(r.validation == "ok" for r in report.runs)
    assert len(report.aggregates) == 4 and all(a.runs == 4 for a in report.aggregates)


def test_teps_definition(report):
    assert BfsResult(np.zeros(1), np.zeros(1), 256, 0.5).teps == 512
    for r in report.runs:
        assert r.teps == pytest.approx(r.edges_traversed / r.elapsed_seconds)


def test_harmonic_mean_headline(report):
    for a in report.aggregates:
        teps = [r.teps for r in report.runs if (r.mode, r.ranks) == (a.mode, a.ranks)]
        assert a.harmonic_mean_teps == pytest.approx(len(teps) / sum(1 / t for t in teps))
        assert a.harmonic_mean_teps <= a.mean_teps


def test_deterministic_modulo_timing(report):
    again = run_bench(BenchConfig(scale=10, edgefactor=16, ranks=(1, 4), num_roots=4))
    assert again.to_json(include_timing=False) == report.to_json(include_timing=False)
    assert "teps" not in report.to_json(include_timing=False)


def test_json_round_trip(report):
    back = BenchReport.from_json(report.to_json())
    assert back == report


def test_csv_rows(report):
    lines = report.to_csv().splitlines()
    assert lines[0].startswith("mode,ranks,root") and len(lines) == 17


def test_compare_modes(report):
    cmp = compare_modes(report)
    assert len(cmp.pairs) == 8
    for p in cmp.by_ranks()[1]:
        assert p.message_ratio == 1 and p.queue_message_ratio == 1
    for p in cmp.by_ranks()[4]:
        assert p.message_ratio > 1 and p.queue_message_ratio > 1


def test_capacity_one_matches_one_sided_queue_traffic():
    rep = run_bench(BenchConfig(scale=7, edgefactor=8, ranks=(3,), num_roots=3, async_capacity=1))
    for p in compare_modes(rep).pairs:
        assert p.queue_message_ratio == 1


def test_missing_pair():
    rep = run_bench(BenchConfig(scale=5, edgefactor=4, ranks=(2,), num_roots=2, modes=("async",)))
    with pytest.raises(MissingPair):
        compare_modes(rep)


@pytest.mark.parametrize("kw", [dict(scale=-1), dict(ranks=()), dict(ranks=(0,)), dict(modes=()),
                                dict(modes=("rdma",)), dict(async_capacity=0), dict(output="xml"),
                                dict(scheduler="fifo"), dict(num_roots=0)])
def test_bad_config(kw):
    with pytest.raises(ConfigError):
        BenchConfig(**kw)


def test_cli_json(capsys):
    assert main(["--scale", "5", "--edgefactor", "4", "--ranks", "1,2", "--roots", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["runs"]) == 8


def test_cli_csv_single_mode(capsys):
    assert main(["--scale", "4", "--ranks", "2", "--roots", "1", "--mode", "p2p",
                 "--buffer", "8", "--output", "csv", "--scheduler", "free"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 2 and rows[1].startswith("async,2,")


@pytest.mark.parametrize("argv", [["--ranks", "0"], ["--mode", "rdma"], ["--buffer", "0"], ["--ranks", "x"],
                                  ["--scale", "4", "--roots", "100"]])
def test_cli_config_errors(argv, capsys):
    assert main(argv) == 1


def test_cli_validation_failure(monkeypatch, capsys):
    def broken(graph, root, result):
        raise ValidationFailure(2, 7, "tampered")
    monkeypatch.setattr(bench, "validate_tree", broken)
    assert main(["--scale", "4", "--ranks", "1", "--roots", "1"]) == 2
    assert "tampered" in capsys.readouterr().err


def test_dump_and_load_edges(tmp_path, capsys):
    path = tmp_path / "edges.txt"
    assert main(["--scale", "5", "--ranks", "2", "--roots", "2", "--dump-edges", str(path)]) == 0
    first = json.loads(capsys.readouterr().out)
    assert read_edges(path, 32) == generate_edges(GraphConfig(5, 16, 1))
    assert main(["--scale", "5", "--ranks", "2", "--roots", "2", "--load-edges", str(path)]) == 0
    second = json.loads(capsys.readouterr().out)
    strip = bench._strip
    assert strip(first)["runs"] == strip(second)["runs"]
