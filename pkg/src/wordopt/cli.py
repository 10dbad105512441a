"""Command line: run, resume, report, validate, and the factory/worker services.

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 external-tool error, 5 transport error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import time
from pathlib import Path

from . import report
from .config import ConfigError, build_engine, build_problem, load_spec, parse_spec
from .core import CheckpointError, ContractError, EvaluationError, derive_rng, token_restore
from .distributed.executor import ExecutionError
from .distributed.master import PartialResultError
from .distributed.wire import TransportError
from .logs import configure, get_logger
from .registry import RegistryError
from .runner import drive, write_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_TOOL, EXIT_TRANSPORT = 0, 2, 3, 4, 5
RUN_META = "run.json"
LOG_FILE = "events.log"

log = get_logger("cli")


def instance_seed(seed: int, k: int) -> int:
    """Seed of parallel instance ``k``; instance 0 runs the base seed itself."""
    return seed if k == 0 else int(derive_rng(seed, "instance", k).integers(2**31))


def _spec_copy_name(fmt: str) -> str:
    return "spec.xml" if fmt == "xml" else "spec.yaml"


def _write_extras(run_dir: Path, spec, problem, token) -> None:
    if spec.alphabet == ("N", "E", "S", "W"):
        from . import saw

        seq = getattr(problem.score, "sequence", None)
        labels = ["H" if h else "P" for h in seq] if seq is not None else None
        (run_dir / "walk.txt").write_text(saw.walk_table(token.best, labels) + "\n", encoding="utf-8")
    pop = token.state.get("population") if isinstance(token.state, dict) else None
    if pop and "archive" in pop:
        lines = ["word,score"] + [f"{problem.alphabet.format(w)},{s!r}" for w, s in pop["archive"]]
        (run_dir / "archive.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _finish(run_dir: Path, spec, problem, engine, token, meta: dict, wall: float) -> dict:
    summary = report.build_summary(token, spec, meta["run_id"], meta["seed"], wall,
                                   engine.phase_count(token), problem.alphabet)
    report.write_summary(run_dir, summary)
    _write_extras(run_dir, spec, problem, token)
    trace = report.read_trace(run_dir / report.TRACE_FILE)
    report.plot_convergence(trace, run_dir / report.FIGURE_FILE, f"{spec.name} ({spec.metaheuristic.name})")
    return summary


def _drive_single(run_dir: Path, spec, meta: dict, checkpoint_every: int, resume_token=None) -> dict:
    problem = build_problem(spec)
    engine = build_engine(spec, problem)
    ckpt = run_dir / report.CHECKPOINT_FILE
    if resume_token is None:
        token = engine.start(meta["seed"])
        writer = report.TraceWriter(run_dir / report.TRACE_FILE, engine.extra_columns)
    else:
        token = resume_token
        writer = report.TraceWriter(run_dir / report.TRACE_FILE, engine.extra_columns, resume_at=token.iteration)
    t0 = time.perf_counter()

    def on_ckpt(tok):
        writer.flush()  # trace rows reach disk before the checkpoint that covers them

    try:
        drive(engine, token, sink=writer, checkpoint_every=checkpoint_every,
              checkpoint_path=ckpt if checkpoint_every else None, on_checkpoint=on_ckpt)
    finally:
        writer.close()
    write_checkpoint(token, ckpt)
    return _finish(run_dir, spec, problem, engine, token, meta, time.perf_counter() - t0)


def _drive_farm(run_dir: Path, spec, text: str, fmt: str, meta: dict, pool_addr) -> dict:
    """Independent instances with derived seeds, farmed out and min-merged."""
    from .distributed.master import master_run
    from .distributed.tasks import run_task

    tasks = [run_task(text, instance_seed(meta["seed"], k), fmt) for k in range(spec.instances)]
    t0 = time.perf_counter()
    if pool_addr:
        from .distributed.factory import remote_pool

        with remote_pool(pool_addr, spec.workers) as hub:
            merged, _ = master_run(tasks, hub)
    elif spec.transport == "socket":
        from .distributed.factory import FactoryServer, remote_pool

        factory = FactoryServer().start()
        try:
            with remote_pool(factory.address, spec.workers) as hub:
                merged, _ = master_run(tasks, hub)
        finally:
            factory.stop()
    else:
        from .distributed.transport import InProcessHub

        hub = InProcessHub().start_workers(spec.workers)
        try:
            merged, _ = master_run(tasks, hub)
        finally:
            hub.close()
    problem = build_problem(spec)
    engine = build_engine(spec, problem)
    writer = report.TraceWriter(run_dir / report.TRACE_FILE)
    for it, best in merged.trace_tail:
        writer(_Row(it, best))
    writer.close()
    write_checkpoint(merged, run_dir / report.CHECKPOINT_FILE)
    return _finish(run_dir, spec, problem, engine, merged, meta, time.perf_counter() - t0)


class _Row:
    """Trace record rebuilt from a token's best-score history (no current score is kept)."""

    def __init__(self, iteration, best):
        self.iteration = iteration
        self.current_score = best
        self.best_score = best
        self.control = "merged"
        self.extra = None


def _print_summary(summary: dict) -> None:
    for key in ("run_id", "problem", "metaheuristic", "seed", "best_word", "best_score", "iterations",
                "evaluations", "self_loops", "wall_time"):
        print(f"{key}: {summary[key]}")


def cmd_run(args) -> int:
    spec, text, fmt = load_spec(args.spec)
    seed = spec.effective_seed(args.seed)
    pool_addr = spec.effective_pool(args.pool)
    if args.resume:
        run_dir = Path(args.out) if args.out else Path(args.resume).resolve().parent
        meta = json.loads((run_dir / RUN_META).read_text(encoding="utf-8"))
        if meta["spec_digest"] != spec.digest():
            raise ConfigError(f"checkpoint in {run_dir} was written for a different problem document")
        return _resume(run_dir, spec, meta, Path(args.resume), args.checkpoint_every)
    run_id = report.new_run_id()
    run_dir = Path(args.out or spec.report_dir or Path("runs") / run_id)
    report.preflight(run_dir)
    configure(run_dir / LOG_FILE)
    every = args.checkpoint_every if args.checkpoint_every is not None else spec.checkpoint_every
    meta = {"run_id": run_id, "seed": seed, "spec_file": _spec_copy_name(fmt), "spec_digest": spec.digest(),
            "checkpoint_every": every}
    (run_dir / meta["spec_file"]).write_text(text, encoding="utf-8")
    (run_dir / RUN_META).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    if spec.instances > 1 or pool_addr:
        summary = _drive_farm(run_dir, spec, text, fmt, meta, pool_addr)
    else:
        summary = _drive_single(run_dir, spec, meta, every)
    _print_summary(summary)
    print(f"report: {run_dir}")
    return EXIT_OK


def _resume(run_dir: Path, spec, meta: dict, ckpt: Path, every) -> int:
    report.preflight(run_dir)
    configure(run_dir / LOG_FILE)
    token = token_restore(ckpt.read_bytes())
    if ckpt.resolve() != (run_dir / report.CHECKPOINT_FILE).resolve():
        shutil.copyfile(ckpt, run_dir / report.CHECKPOINT_FILE)
    every = meta.get("checkpoint_every", 0) if every is None else every
    summary = _drive_single(run_dir, spec, meta, every, resume_token=token)
    _print_summary(summary)
    print(f"report: {run_dir}")
    return EXIT_OK


def cmd_resume(args) -> int:
    ckpt = Path(args.checkpoint)
    run_dir = ckpt.resolve().parent
    try:
        meta = json.loads((run_dir / RUN_META).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{run_dir} has no {RUN_META}; use 'run <spec> --resume {ckpt}'") from None
    spec, _, _ = load_spec(run_dir / meta["spec_file"])
    return _resume(run_dir, spec, meta, ckpt, args.checkpoint_every)


def cmd_report(args) -> int:
    run = report.load_report(args.run_dir)
    _print_summary(run.summary)
    best = run.trace_best()
    if best is not None and best != run.summary["best_score"]:
        print(f"warning: trace minimum {best} differs from summary best", file=sys.stderr)
    if args.trace:
        shutil.copyfile(Path(args.run_dir) / report.TRACE_FILE, args.trace)
    figure = report.plot_convergence(run.trace, Path(args.run_dir) / report.FIGURE_FILE,
                                     f"{run.summary['problem']} ({run.metaheuristic})")
    print(f"trace: {Path(args.trace or Path(args.run_dir) / report.TRACE_FILE)}")
    print(f"figure: {figure}")
    return EXIT_OK


def cmd_validate(args) -> int:
    text = Path(args.spec).read_text(encoding="utf-8")
    parse_spec(text)
    print("OK")
    return EXIT_OK


def cmd_factory(args) -> int:
    from .distributed.factory import FactoryServer

    configure(args.log)
    server = FactoryServer(args.addr, ttl=args.ttl)
    print(f"factory listening on {server.address}", flush=True)
    server.serve_forever()
    return EXIT_OK


def cmd_worker(args) -> int:
    from .distributed.transport import join

    configure(args.log)
    join(args.addr, args.name or f"worker-{os.getpid()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wordopt", description="Metaheuristic search over fixed-length words")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a problem document")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None, metavar="N")
    p.add_argument("--resume", default=None, metavar="FILE", help="continue from a checkpoint of this document")
    p.add_argument("--pool", default=None, metavar="ADDR", help="worker-pool factory address (host:port)")
    p.add_argument("--out", default=None, help="report directory (default: document's, else runs/<run id>)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue a run from its checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--checkpoint-every", type=int, default=None, metavar="N")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("report", help="print a finished run's summary and redraw its figure")
    p.add_argument("run_dir")
    p.add_argument("--trace", default=None, help="also copy the trace file here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="check a problem document")
    p.add_argument("spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("factory", help="worker-pool factory service")
    fsub = p.add_subparsers(dest="action", required=True)
    f = fsub.add_parser("serve")
    f.add_argument("addr")
    f.add_argument("--ttl", type=float, default=60.0, help="pool lease in seconds")
    f.add_argument("--log", default=None)
    f.set_defaults(func=cmd_factory)

    p = sub.add_parser("worker", help="task worker")
    wsub = p.add_subparsers(dest="action", required=True)
    w = wsub.add_parser("join")
    w.add_argument("addr")
    w.add_argument("--name", default=None)
    w.add_argument("--log", default=None)
    w.set_defaults(func=cmd_worker)
    return parser


def _classify(exc) -> tuple:
    if isinstance(exc, (ConfigError, RegistryError, CheckpointError, FileNotFoundError)):
        return EXIT_CONFIG, "config error"
    if isinstance(exc, (EvaluationError, ExecutionError)):
        return EXIT_TOOL, "external tool error"
    if isinstance(exc, (TransportError, PartialResultError)):
        return EXIT_TRANSPORT, "transport error"
    if isinstance(exc, ContractError):
        return EXIT_CONFIG, "config error"
    if isinstance(exc, report.ReportError):
        return EXIT_RUNTIME, "report error"
    return EXIT_RUNTIME, "runtime error"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        code, kind = _classify(exc)
        print(f"wordopt: {kind}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
