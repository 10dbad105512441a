"""Core-gene subset selection: binary words scored by size and the lowest tree support."""

from __future__ import annotations

import re
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ContractError, EvaluationError


class EmptySubsetError(ContractError):
    pass


@dataclass(frozen=True)
class SupportEvaluation:
    lowest_support: int
    topology_id: Optional[str] = None
    evaluator_cost: float = 0.0

    def __post_init__(self):
        if not 1 <= self.lowest_support <= 100:
            raise ContractError(f"lowest support must be in [1, 100], got {self.lowest_support}")


def percentage_of_ones(word: Sequence[int]) -> float:
    return 100.0 * sum(word) / len(word)


def check_subset(word: Sequence[int]) -> None:
    if any(b not in (0, 1) for b in word):
        raise ContractError("subset words are binary")
    if not any(word):
        raise EmptySubsetError("empty subset: at least one gene must be selected")


def raw_subset_score(word, evaluation: SupportEvaluation) -> float:
    """Mean of the selected-gene percentage and the lowest support (to be maximized)."""
    check_subset(word)
    return (percentage_of_ones(word) + evaluation.lowest_support) / 2.0


def subset_score(word, evaluation: SupportEvaluation, wrapper: str = "complement") -> float:
    """Minimized score: ``100 - raw`` by default, or ``1/raw`` with wrapper="inverse"."""
    raw = raw_subset_score(word, evaluation)
    if wrapper == "complement":
        return 100.0 - raw
    if wrapper == "inverse":
        return 1.0 / raw
    raise ContractError(f"unknown score wrapper {wrapper!r}; available: complement, inverse")


@dataclass(frozen=True)
class SyntheticOracleSpec:
    planted: frozenset
    noise_level: float = 0.0
    seed: int = 0
    penalty: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "planted", frozenset(int(i) for i in self.planted))
        if not self.planted:
            raise ContractError("planted set must be nonempty")
        if not 0 <= self.noise_level < 1:
            raise ContractError("noise_level must lie in [0, 1)")


def synthetic_evaluate(word: Sequence[int], spec: SyntheticOracleSpec) -> SupportEvaluation:
    """Stand-in for a tree-building pipeline whose support peaks on a planted gene set."""
    chosen = {i for i, b in enumerate(word) if b}
    hit = len(chosen & spec.planted) / len(spec.planted)
    extra = len(chosen - spec.planted) / len(word)
    value = 100.0 * hit * (1.0 - spec.penalty * extra)
    if spec.noise_level > 0:
        rng = np.random.default_rng([spec.seed, len(word), *(int(b) for b in word)])
        value += spec.noise_level * 10.0 * (2.0 * rng.random() - 1.0)
    support = int(min(100, max(1, round(value))))
    return SupportEvaluation(support)


_SUPPORT_LINE = re.compile(r"^\s*support\s*=\s*(\d+)\s*$", re.MULTILINE)
_TOPOLOGY_LINE = re.compile(r"^\s*topology\s*=\s*(\S+)\s*$", re.MULTILINE)


def parse_support(text: str) -> SupportEvaluation:
    m = _SUPPORT_LINE.search(text)
    if m is None:
        raise EvaluationError("no 'support=<int>' line in evaluator output", text)
    try:
        return SupportEvaluation(int(m.group(1)), _topology(text))
    except ContractError as exc:
        raise EvaluationError(str(exc), text) from exc


def _topology(text):
    m = _TOPOLOGY_LINE.search(text)
    return m.group(1) if m else None


@dataclass
class ExternalEvaluator:
    """Runs a user command per subset and parses ``support=<int>`` from its output.

    ``command`` may use the placeholders {input}, {output} and {word}. The input
    file lists the selected gene indices (0-based), one per line. When the
    command writes nothing to {output}, its stdout is parsed instead.
    Results are cached per word; ``cache_path`` persists them as
    append-only "word support" records.
    """

    command: str
    timeout: float = 600.0
    cache_path: Optional[Path] = None
    workdir: Optional[Path] = None
    env: dict = field(default_factory=dict)
    calls: int = 0

    def __post_init__(self):
        self._cache = {}
        self._lock = threading.Lock()
        if self.cache_path is not None:
            self.cache_path = Path(self.cache_path)
            if self.cache_path.exists():
                for line in self.cache_path.read_text().splitlines():
                    parts = line.split()
                    if len(parts) == 2:
                        self._cache[parts[0]] = SupportEvaluation(int(parts[1]))

    def __call__(self, word: Sequence[int]) -> SupportEvaluation:
        check_subset(word)
        key = "".join(str(int(b)) for b in word)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        result = self._run(word, key)
        with self._lock:
            self._cache[key] = result
            if self.cache_path is not None:
                with open(self.cache_path, "a") as fh:
                    fh.write(f"{key} {result.lowest_support}\n")
        return result

    def _run(self, word, key) -> SupportEvaluation:
        from .distributed.executor import ExecSpec, ExecutionError, execute

        self.calls += 1
        with tempfile.TemporaryDirectory(prefix="wordopt-eval-") as tmp:
            inp = Path(tmp) / "genes.txt"
            out = Path(tmp) / "result.txt"
            inp.write_text("".join(f"{i}\n" for i, b in enumerate(word) if b))
            spec = ExecSpec(
                command=self.command,
                placeholders={"input": str(inp), "output": str(out), "word": key},
                workdir=self.workdir,
                env=self.env,
                timeout=self.timeout,
                tag=f"eval:{key}",
            )
            try:
                res = execute(spec)
            except ExecutionError as exc:
                raise EvaluationError(str(exc), getattr(exc, "output", "")) from exc
            text = out.read_text() if out.exists() and out.stat().st_size else res.stdout
            ev = parse_support(text)
            return SupportEvaluation(ev.lowest_support, ev.topology_id, res.duration)
