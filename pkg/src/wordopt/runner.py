"""Engine protocol and the generic step driver with periodic checkpointing."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .core import StateToken, token_checkpoint


@dataclass
class TraceRow:
    iteration: int
    current_score: float
    best_score: float
    control: str  # temperature or phase label
    extra: Optional[dict] = None

    def as_tuple(self):
        return (self.iteration, self.current_score, self.best_score, self.control)


class Engine:
    """A metaheuristic expressed as start/step/finished over a StateToken.

    Subclasses keep all mutable run memory inside the token so that a
    checkpointed token resumes the exact trajectory.
    """

    name = "engine"
    extra_columns: tuple = ()

    def start(self, seed: int) -> StateToken:
        raise NotImplementedError

    def step(self, token: StateToken) -> TraceRow:
        raise NotImplementedError

    def finished(self, token: StateToken) -> bool:
        raise NotImplementedError

    def phase_count(self, token: StateToken) -> int:
        return 1


def write_checkpoint(token: StateToken, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(token_checkpoint(token))
    os.replace(tmp, path)


def drive(
    engine: Engine,
    token: StateToken,
    sink: Optional[Callable[[TraceRow], None]] = None,
    checkpoint_every: int = 0,
    checkpoint_path=None,
    on_checkpoint: Optional[Callable[[StateToken], None]] = None,
    max_steps: Optional[int] = None,
) -> StateToken:
    """Step ``engine`` until it reports completion (or ``max_steps`` steps were taken)."""
    steps = 0
    while not engine.finished(token):
        if max_steps is not None and steps >= max_steps:
            break
        row = engine.step(token)
        steps += 1
        if sink is not None:
            sink(row)
        if checkpoint_every and token.iteration % checkpoint_every == 0:
            if on_checkpoint is not None:
                on_checkpoint(token)
            if checkpoint_path is not None:
                write_checkpoint(token, checkpoint_path)
    return token
