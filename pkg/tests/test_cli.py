import json
import os
import signal
import subprocess
import sys
import time
from importlib import resources
from pathlib import Path

from wordopt import report
from wordopt.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_TOOL, EXIT_TRANSPORT, _classify, main
from wordopt.config import ConfigError
from wordopt.core import EvaluationError, token_restore
from wordopt.distributed.wire import TransportError

LONG = """<problem name="table-long">
  <alphabet><symbol>0</symbol><symbol>1</symbol></alphabet>
  <n>14</n>
  <seed>5</seed>
  <score name="random-table"><param name="seed" type="int">2</param></score>
  <metaheuristic name="sa"><param name="alpha" type="float">0.999</param></metaheuristic>
  <stop><max_iterations>{iters}</max_iterations></stop>
  <output checkpoint_every="1000"/>
</problem>
"""


def example(name):
    return str(resources.files("wordopt") / "examples" / name)


def write(tmp_path, text, name="spec.xml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_validate_ok(capsys):
    assert main(["validate", example("onemax-sa.xml")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "OK"


def test_validate_bad_spec_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "<problem name='x'><n>3</n></problem>")
    assert main(["validate", bad]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.xml")]) == EXIT_CONFIG


def test_run_writes_report_and_report_agrees(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", example("onemax-sa.xml"), "--out", str(out)]) == EXIT_OK
    for name in ("trace.csv", "summary.json", "convergence.png", "checkpoint.bin", "run.json", "spec.xml",
                 "events.log"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    trace = report.read_trace(out / "trace.csv")
    assert len(trace) == summary["iterations"]
    assert min(float(r["best_score"]) for r in trace) == summary["best_score"] == 0.0
    capsys.readouterr()
    assert main(["report", str(out)]) == EXIT_OK
    printed = capsys.readouterr()
    assert f"best_score: {summary['best_score']}" in printed.out and "warning" not in printed.err


def test_sa_temperature_column_nonincreasing(tmp_path):
    out = tmp_path / "run"
    assert main(["run", write(tmp_path, LONG.format(iters=3000)), "--out", str(out)]) == EXIT_OK
    temps = [float(r["control"]) for r in report.read_trace(out / "trace.csv")]
    assert len(temps) == 3000
    assert all(b <= a for a, b in zip(temps, temps[1:]))
    assert temps[-1] < temps[0]


def test_saw_run_writes_walk(tmp_path):
    out = tmp_path / "run"
    assert main(["run", example("saw-pivot-sa.xml"), "--out", str(out), "--seed", "2"]) == EXIT_OK
    assert (out / "walk.txt").read_text().strip()
    assert json.loads((out / "summary.json").read_text())["seed"] == 2


def test_farm_run_min_merges(tmp_path):
    out = tmp_path / "run"
    assert main(["run", example("random-table-farm.xml"), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    trace = report.read_trace(out / "trace.csv")
    assert trace and min(float(r["best_score"]) for r in trace) == summary["best_score"]


def test_report_on_empty_dir_exit_3(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == EXIT_RUNTIME
    assert "summary.json" in capsys.readouterr().err


def test_exit_code_classes():
    assert _classify(ConfigError("x"))[0] == EXIT_CONFIG
    assert _classify(EvaluationError("x"))[0] == EXIT_TOOL
    assert _classify(TransportError("x"))[0] == EXIT_TRANSPORT
    assert _classify(RuntimeError("x"))[0] == EXIT_RUNTIME


def test_resume_rejects_other_document(tmp_path):
    out = tmp_path / "run"
    spec = write(tmp_path, LONG.format(iters=2000))
    assert main(["run", spec, "--out", str(out)]) == EXIT_OK
    other = write(tmp_path, LONG.format(iters=2001), "other.xml")
    assert main(["run", other, "--resume", str(out / "checkpoint.bin")]) == EXIT_CONFIG


def _run_cli(args, **kw):
    return subprocess.Popen([sys.executable, "-m", "wordopt", *args], stdout=subprocess.PIPE,
                            stderr=subprocess.PIPE, text=True, **kw)


def test_kill_and_resume_equals_uninterrupted(tmp_path):
    spec = write(tmp_path, LONG.format(iters=60000))
    straight, killed = tmp_path / "straight", tmp_path / "killed"
    ref = _run_cli(["run", spec, "--out", str(straight)])

    proc = _run_cli(["run", spec, "--out", str(killed)])
    ckpt = killed / "checkpoint.bin"
    deadline = time.monotonic() + 60
    while not ckpt.exists() and time.monotonic() < deadline and proc.poll() is None:
        time.sleep(0.05)
    time.sleep(0.3)
    assert proc.poll() is None, "run finished before it could be interrupted"
    os.kill(proc.pid, signal.SIGKILL)
    proc.wait()
    cut = token_restore(ckpt.read_bytes()).iteration
    assert 0 < cut < 60000
    assert not (killed / "summary.json").exists()

    res = _run_cli(["resume", str(ckpt)])
    assert res.wait(120) == 0, res.stderr.read()
    assert ref.wait(120) == 0, ref.stderr.read()
    a = json.loads((straight / "summary.json").read_text())
    b = json.loads((killed / "summary.json").read_text())
    for key in ("best_word", "best_score", "final_word", "final_score", "iterations", "evaluations"):
        assert a[key] == b[key], key
    assert (straight / "trace.csv").read_text() == (killed / "trace.csv").read_text()
    assert token_restore((straight / "checkpoint.bin").read_bytes()) == \
        token_restore((killed / "checkpoint.bin").read_bytes())


def test_unwritable_report_dir_exit_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", example("onemax-sa.xml"), "--out", str(blocker / "run")]) == EXIT_RUNTIME
    assert "report error" in capsys.readouterr().err


def test_console_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "wordopt", "validate", example("hp-sa.yaml")],
                         capture_output=True, text=True, timeout=60)
    assert out.returncode == 0 and out.stdout.strip() == "OK"
    assert Path(example("hp-sa.yaml")).exists()
