"""Command-line interface: artifacts, verdicts, and exit codes.

Everything drives main(argv) in-process so the exit code, stdout, and
the files in --out can all be asserted directly.
"""

from __future__ import annotations

import os
import re

import pytest

from spectime.cli import main
from spectime.fileio import builtin_scenario, emit_scenario, parse_scenario, read_trace
from spectime.simulator import run, verify_trace


def _run_dispatch(tmp_path, *extra):
    out = tmp_path / "run"
    text = emit_scenario(builtin_scenario("dispatch3-directed"))
    code = main(["run", text, "--out", str(out), *extra])
    return code, out


# ---------------------------------------------------------------------------
# builtin
# ---------------------------------------------------------------------------


def test_builtin_prints_the_exact_document(capsys):
    assert main(["builtin", "dispatch3-directed"]) == 0
    got = capsys.readouterr().out
    assert got == emit_scenario(builtin_scenario("dispatch3-directed"))


def test_unknown_builtin_exits_one_and_lists_the_names(capsys):
    assert main(["builtin", "dispatch4"]) == 1
    err = capsys.readouterr().err
    assert "dispatch3-directed" in err and "two-agent-undirected" in err


def test_builtin_writes_a_parseable_file(tmp_path):
    path = tmp_path / "sc.json"
    assert main(["builtin", "two-agent-undirected", "--out", str(path)]) == 0
    assert parse_scenario(path).protocol == "undirected"


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_writes_the_artifact_triple_and_passes(tmp_path, capsys):
    code, out = _run_dispatch(tmp_path, "--sample-at", "2.0,5.0")
    assert code == 0
    for name in ("scenario.json", "trace.csv", "summary.txt"):
        assert (out / name).exists()
    stdout = capsys.readouterr().out
    assert "verification: PASS" in stdout
    match = re.search(r"sample t = 2: f = ([0-9.]+)", stdout)
    assert match is not None
    assert float(match.group(1)) == pytest.approx(6412.1874, abs=2e-4)
    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "f_t_0 = " in summary and "t_1 = 5" in summary


def test_run_rejects_a_disconnected_scenario(tmp_path, capsys):
    doc = """{
      "graph": {"n": 2, "edges": [[1, 2]]},
      "objective": {"quadratic": [{"a": 1.0, "b": 0.0, "c": 0.0},
                                  {"a": 1.0, "b": 0.0, "c": 0.0}]},
      "x0": [0.0, 0.0],
      "schedule": {"kind": "truncated", "T_c": 1.0, "k_eps": 10, "eps": 0.1},
      "protocol": "directed",
      "horizon": 1.0
    }"""
    assert main(["run", doc, "--out", str(tmp_path / "x")]) == 2
    assert "strongly connected" in capsys.readouterr().err


def test_run_exits_three_on_divergence(tmp_path, capsys):
    code, _ = _run_dispatch(tmp_path, "--beta", "100", "--unsafe")
    assert code == 3
    assert "diverged" in capsys.readouterr().err


def test_run_refuses_an_uncertified_gain_without_the_flag(tmp_path, capsys):
    out = tmp_path / "run"
    text = emit_scenario(builtin_scenario("dispatch3-undirected-demo"))
    assert main(["run", text, "--out", str(out), "--beta", "0.6"]) == 2
    assert "unsafe" in capsys.readouterr().err


def test_run_rejects_a_bad_sample_time(tmp_path, capsys):
    code, _ = _run_dispatch(tmp_path, "--sample-at", "2.0,99.0")
    assert code == 1
    assert "outside" in capsys.readouterr().err
    code, _ = _run_dispatch(tmp_path, "--sample-at", "two")
    assert code == 1


def test_verbose_psi_round_trips_the_observer_stack(tmp_path):
    code, out = _run_dispatch(tmp_path, "--verbose-psi")
    assert code == 0
    back = read_trace(out / "trace.csv")
    sc = builtin_scenario("dispatch3-directed")
    tr = run(sc, record_psi=True)
    assert back[0].psi is not None and back[0].psi.size == 9
    import numpy as np

    for orig, rec in zip(tr.records, back):
        assert np.array_equal(rec.psi, orig.psi)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def test_verify_agrees_with_the_in_memory_checks(tmp_path, capsys):
    code, out = _run_dispatch(tmp_path)
    capsys.readouterr()
    assert main(["verify", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "verification: PASS" in stdout
    sc = builtin_scenario("dispatch3-directed")
    report = verify_trace(run(sc), sc)
    for check in report.checks:
        verdict = "skipped" if check.passed is None else ("pass" if check.passed else "FAIL")
        assert f"{check.name}: {verdict}" in stdout


def test_verify_catches_a_numeric_tamper(tmp_path, capsys):
    code, out = _run_dispatch(tmp_path)
    trace_path = out / "trace.csv"
    lines = trace_path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    col = header.index("x_2")
    cells = lines[40].split(",")
    cells[col] = "1000.0"
    lines[40] = ",".join(cells)
    trace_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    capsys.readouterr()
    assert main(["verify", str(out)]) == 2
    stdout = capsys.readouterr().out
    assert "residual-recompute: FAIL" in stdout
    assert "verification: FAIL" in stdout


def test_verify_exits_four_on_an_empty_directory(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["verify", str(empty)]) == 4
    assert "missing" in capsys.readouterr().err


def test_verify_exits_four_on_a_mismatched_summary(tmp_path, capsys):
    code, out = _run_dispatch(tmp_path)
    summary_path = out / "summary.txt"
    text = summary_path.read_text(encoding="utf-8")
    summary_path.write_text(text.replace("C = 420", "C = 421"), encoding="utf-8")
    capsys.readouterr()
    assert main(["verify", str(out)]) == 4
    assert "does not match" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def test_report_renders_four_figures_for_a_directed_run(tmp_path, capsys):
    code, out = _run_dispatch(tmp_path)
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    pngs = sorted(p for p in os.listdir(out) if p.endswith(".png"))
    assert pngs == [
        "allocation.png",
        "convergence.png",
        "observer_error.png",
        "residual.png",
    ]
    for name in pngs:
        assert (out / name).stat().st_size > 1000


def test_report_skips_the_observer_figure_without_observers(tmp_path, capsys):
    out = tmp_path / "undirected"
    text = emit_scenario(builtin_scenario("two-agent-undirected"))
    assert main(["run", text, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    pngs = sorted(p for p in os.listdir(out) if p.endswith(".png"))
    assert pngs == ["allocation.png", "convergence.png", "residual.png"]


def test_usage_errors_exit_one(capsys):
    assert main(["run"]) == 1
    capsys.readouterr()
    assert main(["frobnicate"]) == 1
