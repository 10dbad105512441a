"""Basin hopping: SA proposals, with greedy descents fanned out on every accepted move."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

from ..core import StateToken, derive_rng
from ..runner import TraceRow
from ..sa import SAParams, SimulatedAnnealing, greedy_descent, sa_step


@dataclass
class BHParams:
    T0: Optional[float] = None
    alpha: float = 0.95
    chain_length: int = 100
    T_min: float = 1e-4
    max_iterations: int = 10_000
    target_score: Optional[float] = None
    descent_width: int = 2
    descent_cap: int = 200
    descent_patience: Optional[int] = None
    rounds: Optional[int] = None  # cap on Markov chains (plateaus)

    def __post_init__(self):
        if self.descent_width < 1:
            raise ValueError("descent_width must be >= 1")
        if self.descent_cap < 0:
            raise ValueError("descent_cap must be >= 0")
        self.sa_params()

    def sa_params(self) -> SAParams:
        names = {f.name for f in fields(SAParams)}
        return SAParams(**{k: v for k, v in self.__dict__.items() if k in names}, criterion="metropolis")


class LocalDescents:
    """Runs the descents of one accepted move sequentially in this process."""

    def __init__(self, problem):
        self.problem = problem

    def descend(self, token: StateToken, seed: int, iteration: int, width: int, cap: int, patience):
        out = []
        for k in range(width):
            t = token.copy()
            t.rng = derive_rng(seed, "descent", iteration, k)
            out.append(greedy_descent(self.problem, t, t.rng, cap, patience))
        return out


class FarmDescents:
    """Dispatches the descents as tasks to a worker pool (hub) via master_run."""

    def __init__(self, hub, spec_text: str, spec_format: str = "xml", task_timeout: float = 600.0):
        self.hub = hub
        self.spec_text = spec_text
        self.spec_format = spec_format
        self.task_timeout = task_timeout

    def descend(self, token, seed, iteration, width, cap, patience):
        from .master import master_run
        from .tasks import descent_task

        tasks = [descent_task(self.spec_text, token, seed, ("descent", iteration, k), cap, patience, self.spec_format)
                 for k in range(width)]
        _, tokens = master_run(tasks, self.hub, task_timeout=self.task_timeout)
        return tokens


class BasinHopping(SimulatedAnnealing):
    """Metropolis SA whose accepted moves are each refined by ``descent_width`` descents.

    The best descended word (ties: lowest descent index) becomes the current
    word. Descents draw from their own substreams, so with ``descent_cap=0``
    the trajectory equals plain SA under the same seed.
    """

    name = "basin-hopping"

    def __init__(self, problem, params: Optional[BHParams] = None, descents=None):
        self.bh = params or BHParams()
        super().__init__(problem, self.bh.sa_params())
        self.descents = descents or LocalDescents(problem)

    def start(self, seed: int) -> StateToken:
        token = super().start(seed)
        token.mh_params.update(name=self.name, descent_width=self.bh.descent_width, descent_cap=self.bh.descent_cap)
        token.state["seed"] = int(seed)
        token.state["descents"] = 0
        return token

    def step(self, token: StateToken) -> TraceRow:
        T = self.temperature(token)
        before = token.current
        sa_step(token, self.problem, self.criterion, T, token.rng)
        if token.current != before and self.bh.descent_cap > 0:
            results = self.descents.descend(token, token.state["seed"], token.iteration, self.bh.descent_width,
                                            self.bh.descent_cap, self.bh.descent_patience)
            base_evals = token.evaluations
            k, best = min(enumerate(results), key=lambda r: (r[1].current_score, r[0]))
            token.evaluations = base_evals + sum(r.evaluations - base_evals for r in results)
            token.state["descents"] += len(results)
            if best.current_score <= token.current_score:
                token.current, token.current_score = best.current, best.current_score
            for r in results:
                token.offer(r.best, r.best_score)
        self._advance_clock(token)
        token.record()
        return TraceRow(token.iteration, token.current_score, token.best_score, repr(T))

    def finished(self, token) -> bool:
        if self.bh.rounds is not None and token.state["plateau"] >= self.bh.rounds:
            return True
        return super().finished(token)


def basin_hopping(problem, params: Optional[BHParams] = None, seed: int = 0, masters: int = 1, descents=None):
    """Run ``masters`` basin-hopping chains in lockstep.

    At every plateau boundary all masters adopt the overall best word found
    so far. Returns (best token, trace rows of the combined best).
    """
    engines = [BasinHopping(problem, params, descents) for _ in range(masters)]
    tokens = [e.start(seed if m == 0 else derive_rng(seed, "master", m).integers(2**31)) for m, e in enumerate(engines)]
    rows = []
    while not all(e.finished(t) for e, t in zip(engines, tokens)):
        for e, t in zip(engines, tokens):
            if not e.finished(t):
                e.step(t)
        it = max(t.iteration for t in tokens)
        lead = min(tokens, key=lambda t: t.best_score)
        rows.append(TraceRow(it, min(t.current_score for t in tokens), lead.best_score,
                             repr(engines[0].temperature(tokens[0]))))
        if masters > 1 and all(e.at_plateau_boundary(t) for e, t in zip(engines, tokens)):
            for t in tokens:
                if t is not lead and lead.best_score < t.current_score:
                    t.current, t.current_score = lead.best, lead.best_score
                    t.offer(lead.best, lead.best_score)
    best = min(enumerate(tokens), key=lambda r: (r[1].best_score, r[0]))[1]
    return best, rows
