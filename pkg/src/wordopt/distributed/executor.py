"""Shell-free launcher for third-party commands with timeouts and central logging."""

from __future__ import annotations

import os
import shlex
import signal
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..logs import get_logger

log = get_logger("executor")

ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "PYTHONPATH", "SYSTEMROOT")


class ExecutionError(RuntimeError):
    def __init__(self, message, output=""):
        super().__init__(message)
        self.output = output


class ExecTimeout(ExecutionError):
    pass


class UnexpectedExit(ExecutionError):
    def __init__(self, message, result):
        super().__init__(message, result.stdout + result.stderr)
        self.result = result


@dataclass
class ExecSpec:
    command: object  # str template or argv list; placeholders use {name}
    placeholders: dict = field(default_factory=dict)
    workdir: Optional[Path] = None
    env: dict = field(default_factory=dict)
    timeout: float = 60.0
    expected_codes: Sequence[int] = (0,)
    check: bool = True
    tag: str = "-"

    def argv(self) -> list:
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        parts = shlex.split(self.command) if isinstance(self.command, str) else list(self.command)
        try:
            return [p.format(**self.placeholders) for p in parts]
        except (KeyError, IndexError) as exc:
            raise ValueError(f"unresolved placeholder {exc} in command {self.command!r}") from None


@dataclass
class ExecResult:
    exit_code: int
    stdout: str
    stderr: str
    duration: float
    expected: bool = True


def _clean_env(overrides: dict) -> dict:
    env = {k: os.environ[k] for k in ENV_ALLOWLIST if k in os.environ}
    env.update({str(k): str(v) for k, v in overrides.items()})
    return env


def execute(spec: ExecSpec) -> ExecResult:
    """Run ``spec`` without a shell; the whole process group is killed on timeout."""
    argv = spec.argv()
    log.info("launch %s", " ".join(shlex.quote(a) for a in argv), extra={"job_id": spec.tag})
    t0 = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=spec.workdir,
            env=_clean_env(spec.env),
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            start_new_session=True,
        )
    except OSError as exc:
        raise ExecutionError(f"cannot launch {argv[0]!r}: {exc}") from exc
    try:
        out, err = proc.communicate(timeout=spec.timeout)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, err = proc.communicate()
        log.error("timeout after %.3gs", spec.timeout, extra={"job_id": spec.tag})
        raise ExecTimeout(f"command timed out after {spec.timeout}s: {argv[0]}", (out or "") + (err or ""))
    duration = time.monotonic() - t0
    for line in out.splitlines():
        log.info("stdout: %s", line, extra={"job_id": spec.tag})
    for line in err.splitlines():
        log.info("stderr: %s", line, extra={"job_id": spec.tag})
    result = ExecResult(proc.returncode, out, err, duration, proc.returncode in spec.expected_codes)
    if not result.expected:
        log.warning("exit code %d not in %s", proc.returncode, list(spec.expected_codes), extra={"job_id": spec.tag})
        if spec.check:
            raise UnexpectedExit(f"command exited with {proc.returncode}: {argv[0]}", result)
    return result
