from __future__ import annotations

import pytest

from prompt_kit.cli import main, oracle_options
from prompt_kit.pipeline import BUFFER_ENV, parse_loops


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("module,flags", [
    ("memdep", "count,distance"), ("memdep", "all-types,context"), ("valuepattern", ""),
    ("lifetime", ""), ("pointsto", ""),
])
@pytest.mark.parametrize("workload", ["stride-loop", "pointer-chase", "alloc-churn"])
def test_profile_matches_oracle(capsys, module, flags, workload):
    common = ["--workload", workload, "--iters", "60", "--module", module]
    if flags:
        common += ["--flags", flags]
    code, prof, err = run(capsys, "profile", *common, "--workers", "4")
    assert code == 0 and "emitted=" in err
    code, ref, _ = run(capsys, "oracle", *common)
    assert code == 0
    assert prof == ref


def test_trace_file_and_output(tmp_path, capsys):
    trace = tmp_path / "t.trace"
    assert main(["gen-trace", "stride-loop", "--iters", "1", "--footprint", "8", "-o", str(trace)]) == 0
    assert len(trace.read_text().splitlines()) == 7
    out = tmp_path / "p.txt"
    assert main(["profile", "--trace", str(trace), "--module", "memdep", "--flags", "count", "-o", str(out)]) == 0
    again = tmp_path / "q.txt"
    assert main(["profile", "--trace", str(trace), "--module", "memdep", "--flags", "count", "-o", str(again),
                 "--workers", "3", "--reducers", "2", "--buffer-bytes", "4096"]) == 0
    assert out.read_text() == again.read_text()
    assert "dep flow 1 2 1 LI 8 - -" in out.read_text()


@pytest.mark.parametrize("argv", [
    [], ["bogus"], ["profile", "--module", "memdep"], ["profile", "--workload", "stride-loop", "--module", "x"],
    ["profile", "--workload", "stride-loop", "--module", "memdep", "--workers", "0"],
    ["bench", "bogus"], ["bench", "queue", "--consumers", "a,b", "--events", "10"],
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 1


def test_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.trace"
    bad.write_text("prog_start 1\nload 1 zz 0 4\nprog_end 1\n")
    code, _, err = run(capsys, "profile", "--trace", str(bad), "--module", "memdep")
    assert code == 2 and "line 2" in err
    assert run(capsys, "gen-trace", "bogus")[0] == 2
    assert run(capsys, "profile", "--trace", str(tmp_path / "missing"), "--module", "memdep")[0] == 2
    assert run(capsys, "profile", "--workload", "stride-loop", "--module", "memdep",
               "--flags", "distance", "--loops", "none")[0] == 2
    assert run(capsys, "profile", "--workload", "stride-loop", "--module", "valuepattern", "--limit", "3")[0] == 2


def test_buffer_env(monkeypatch, capsys):
    monkeypatch.setenv(BUFFER_ENV, "8192")
    code, a, _ = run(capsys, "profile", "--workload", "alloc-churn", "--iters", "50", "--module", "lifetime")
    assert code == 0
    monkeypatch.setenv(BUFFER_ENV, "many")
    assert run(capsys, "profile", "--workload", "alloc-churn", "--module", "lifetime")[0] == 2


def test_bench_small(capsys):
    code, out, _ = run(capsys, "bench", "queue", "--events", "20000", "--consumers", "1,2")
    assert code == 0
    names = [line.split()[0] for line in out.splitlines()]
    assert "spmc_touch_events_per_sec_c2" in names and "locked_events_per_sec_c1" in names
    code, out, _ = run(capsys, "bench", "map", "--events", "5000", "--reducers", "1,2")
    assert code == 0 and "htcount_ops_per_sec_r2" in out and "naive_ops_per_sec" in out


def test_oracle_options():
    assert oracle_options("memdep", "count,all-types", parse_loops("1,2")) == {
        "count": True, "all_types": True, "target_loops": frozenset({1, 2})}
    assert oracle_options("pointsto", limit=4) == {"limit": 4}
    assert oracle_options("valuepattern") == {}
