"""Run reports: streamed trace CSV, summary document and a convergence figure."""

from __future__ import annotations

import csv
import json
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.json"
FIGURE_FILE = "convergence.png"
CHECKPOINT_FILE = "checkpoint.bin"
BASE_COLUMNS = ("iteration", "current_score", "best_score", "control")


class ReportError(OSError):
    pass


def preflight(run_dir) -> Path:
    """Create ``run_dir`` and prove it is writable before any work starts."""
    run_dir = Path(run_dir)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        probe = run_dir / f".probe-{os.getpid()}"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ReportError(f"report directory {run_dir} is not writable: {exc}") from exc
    return run_dir


class TraceWriter:
    """Appends one CSV record per iteration; ``truncate_after`` supports resuming."""

    def __init__(self, path, extra_columns=(), resume_at: Optional[int] = None):
        self.path = Path(path)
        self.columns = BASE_COLUMNS + tuple(extra_columns)
        if resume_at is not None and self.path.exists():
            kept = [r for r in read_trace(self.path) if int(r["iteration"]) <= resume_at]
            self._fh = open(self.path, "w", newline="", encoding="utf-8")
            self._w = csv.writer(self._fh)
            self._w.writerow(self.columns)
            for r in kept:
                self._w.writerow([r[c] for c in self.columns])
        else:
            self._fh = open(self.path, "w", newline="", encoding="utf-8")
            self._w = csv.writer(self._fh)
            self._w.writerow(self.columns)
        self._fh.flush()

    def __call__(self, row) -> None:
        extra = row.extra or {}
        self._w.writerow([row.iteration, repr(row.current_score), repr(row.best_score), row.control]
                         + [repr(extra.get(c, "")) for c in self.columns[len(BASE_COLUMNS):]])

    def flush(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()


def read_trace(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@dataclass
class RunReport:
    run_id: str
    spec_digest: str
    seed: int
    metaheuristic: str
    trace: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def trace_best(self) -> Optional[float]:
        return min((float(r["best_score"]) for r in self.trace), default=None)


def new_run_id() -> str:
    return uuid.uuid4().hex[:12]


def write_summary(run_dir, summary: dict) -> Path:
    path = Path(run_dir) / SUMMARY_FILE
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def build_summary(token, spec, run_id: str, seed: int, wall_time: float, phases: int, alphabet) -> dict:
    return {
        "run_id": run_id,
        "problem": spec.name,
        "spec_digest": spec.digest(),
        "seed": seed,
        "metaheuristic": spec.metaheuristic.name,
        "best_word": alphabet.format(token.best),
        "best_score": token.best_score,
        "final_word": alphabet.format(token.current),
        "final_score": token.current_score,
        "iterations": token.iteration,
        "evaluations": token.evaluations,
        "self_loops": token.self_loops,
        "phases": phases,
        "wall_time": wall_time,
    }


def load_report(run_dir) -> RunReport:
    run_dir = Path(run_dir)
    try:
        summary = json.loads((run_dir / SUMMARY_FILE).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ReportError(f"{run_dir} has no {SUMMARY_FILE}") from None
    trace_path = run_dir / TRACE_FILE
    trace = read_trace(trace_path) if trace_path.exists() else []
    return RunReport(summary["run_id"], summary["spec_digest"], summary["seed"], summary["metaheuristic"],
                     trace, summary)


def plot_convergence(trace: list, path, title: str = "") -> Path:
    """Current and best score against iteration; numeric control values on a log twin axis."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.2))
    if trace:
        it = [int(r["iteration"]) for r in trace]
        ax.plot(it, [float(r["current_score"]) for r in trace], lw=0.8, alpha=0.6, label="current")
        ax.step(it, [float(r["best_score"]) for r in trace], where="post", lw=1.6, label="best")
        try:
            control = [float(r["control"]) for r in trace]
        except ValueError:
            control = None
        if control and all(c > 0 for c in control):
            tw = ax.twinx()
            tw.plot(it, control, color="0.5", ls="--", lw=0.8)
            tw.set_yscale("log")
            tw.set_ylabel("temperature")
        ax.legend(frameon=False, loc="upper right")
    ax.set_xlabel("iteration")
    ax.set_ylabel("score")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
