"""Simulated annealing as a threshold-class local search with pluggable acceptance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ContractError, EvaluationError, Problem, StateToken, derive_rng
from .runner import Engine, TraceRow, drive


def metropolis_accept(delta: float, T: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(-delta/T)); draws one uniform only when delta > 0."""
    if not T > 0:
        raise ContractError(f"temperature must be positive, got {T}")
    if delta <= 0:
        return True
    return bool(rng.random() < math.exp(-delta / T))


def threshold_accept(delta: float, threshold: float) -> bool:
    if threshold < 0:
        raise ContractError(f"threshold must be nonnegative, got {threshold}")
    return delta <= threshold


class Metropolis:
    name = "metropolis"

    def __call__(self, delta, control, rng):
        return metropolis_accept(delta, control, rng)


class Threshold:
    """Deterministic acceptance of any delta up to a fixed threshold."""

    name = "threshold"

    def __init__(self, threshold: float = 0.0):
        if threshold < 0:
            raise ContractError(f"threshold must be nonnegative, got {threshold}")
        self.threshold = threshold

    def __call__(self, delta, control, rng):
        return threshold_accept(delta, self.threshold)


class Deluge:
    """Threshold that decays with the schedule: the control value is the threshold."""

    name = "deluge"

    def __call__(self, delta, control, rng):
        return threshold_accept(delta, control)


CRITERIA = {"metropolis": Metropolis, "threshold": Threshold, "deluge": Deluge}


def make_criterion(name: str, **params):
    try:
        cls = CRITERIA[name]
    except KeyError:
        raise ContractError(f"unknown criterion {name!r}; available: {', '.join(sorted(CRITERIA))}") from None
    return cls(**params)


@dataclass(frozen=True)
class Temperature:
    """Geometric plateau schedule; the value on plateau k is T0 * alpha**k."""

    T0: float
    alpha: float = 0.95
    chain_length: int = 100
    T_min: float = 1e-4

    def __post_init__(self):
        if not self.T0 > 0:
            raise ContractError("T0 must be positive")
        if not 0 < self.alpha < 1:
            raise ContractError("alpha must lie in (0, 1)")
        if self.chain_length < 1:
            raise ContractError("chain_length must be >= 1")

    def value(self, plateau: int) -> float:
        return self.T0 * self.alpha ** plateau


@dataclass
class SAParams:
    T0: Optional[float] = None  # None: calibrate from a probe of uphill moves
    alpha: float = 0.95
    chain_length: int = 100
    T_min: float = 1e-4
    max_iterations: int = 10_000
    target_score: Optional[float] = None
    criterion: str = "metropolis"
    criterion_params: dict = field(default_factory=dict)
    calibration_moves: int = 100
    calibration_acceptance: float = 0.8

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ContractError("alpha must lie in (0, 1)")
        if self.chain_length < 1:
            raise ContractError("chain_length must be >= 1")
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be >= 1")
        if self.T0 is not None and not self.T0 > 0:
            raise ContractError("T0 must be positive")
        if not 0 < self.calibration_acceptance < 1:
            raise ContractError("calibration_acceptance must lie in (0, 1)")
        make_criterion(self.criterion, **self.criterion_params)


def calibrate_t0(problem: Problem, word, score: float, rng, moves: int = 100, acceptance: float = 0.8) -> float:
    """Temperature at which the mean uphill delta of a move probe is accepted with ``acceptance``."""
    probe = StateToken.fresh(word, score, rng)
    uphill = []
    for _ in range(moves):
        cand = problem.move(probe, rng)
        try:
            d = problem.evaluate(cand) - score
        except EvaluationError:
            continue
        if d > 0:
            uphill.append(d)
    if not uphill:
        return 1.0
    return -float(np.mean(uphill)) / math.log(acceptance)


def sa_step(token: StateToken, problem: Problem, criterion, control: float, rng) -> StateToken:
    """One move/evaluate/test iteration; updates ``token`` in place and returns it."""
    candidate = problem.move(token, rng)
    token.iteration += 1
    if candidate == token.current:
        token.self_loops += 1
    try:
        cand_score = problem.evaluate(candidate)
    except EvaluationError:
        return token
    token.evaluations += 1
    if criterion(cand_score - token.current_score, control, rng):
        token.current = candidate
        token.current_score = cand_score
    token.offer(candidate, cand_score)
    return token


class SimulatedAnnealing(Engine):
    name = "sa"

    def __init__(self, problem: Problem, params: Optional[SAParams] = None):
        self.problem = problem
        self.params = params or SAParams()
        self.criterion = make_criterion(self.params.criterion, **self.params.criterion_params)

    def start(self, seed: int) -> StateToken:
        p = self.params
        rng = derive_rng(seed, "sa")
        word = self.problem.initial_word(rng)
        score = self.problem.evaluate(word)
        T0 = p.T0
        if T0 is None:
            T0 = calibrate_t0(self.problem, word, score, derive_rng(seed, "sa", "calibrate"),
                              p.calibration_moves, p.calibration_acceptance)
        token = StateToken.fresh(word, score, rng, evaluations=1)
        token.mh_params = {"name": self.name, "T0": T0, "alpha": p.alpha, "chain_length": p.chain_length,
                           "T_min": p.T_min, "criterion": p.criterion}
        token.state = {"plateau": 0, "in_chain": 0, "T0": T0}
        return token

    def schedule(self, token) -> Temperature:
        p = self.params
        return Temperature(token.state["T0"], p.alpha, p.chain_length, p.T_min)

    def temperature(self, token) -> float:
        return self.schedule(token).value(token.state["plateau"])

    def step(self, token: StateToken) -> TraceRow:
        T = self.temperature(token)
        sa_step(token, self.problem, self.criterion, T, token.rng)
        self._advance_clock(token)
        token.record()
        return TraceRow(token.iteration, token.current_score, token.best_score, repr(T))

    def _advance_clock(self, token):
        st = token.state
        st["in_chain"] += 1
        if st["in_chain"] >= self.params.chain_length:
            st["in_chain"] = 0
            st["plateau"] += 1

    def at_plateau_boundary(self, token) -> bool:
        return token.state["in_chain"] == 0

    def finished(self, token: StateToken) -> bool:
        p = self.params
        if p.target_score is not None and token.best_score <= p.target_score:
            return True
        if token.iteration >= p.max_iterations:
            return True
        return self.temperature(token) < p.T_min


def run_sa(problem: Problem, params: Optional[SAParams] = None, seed: int = 0, sink=None):
    """Run SA to completion; returns (token, trace rows)."""
    engine = SimulatedAnnealing(problem, params)
    rows = []

    def collect(row):
        rows.append(row)
        if sink is not None:
            sink(row)

    token = drive(engine, engine.start(seed), sink=collect)
    return token, rows


def greedy_descent(problem: Problem, token: StateToken, rng, max_steps: int = 1000, patience: Optional[int] = None) -> StateToken:
    """Descent with threshold 0 from ``token.current``.

    Stops after ``max_steps`` moves or ``patience`` consecutive non-improving
    proposals (default 4n), which is taken as reaching a local minimum.
    """
    if patience is None:
        patience = 4 * problem.n
    crit = Threshold(0.0)
    stall = 0
    for _ in range(max_steps):
        if stall >= patience:
            break
        before = token.current_score
        sa_step(token, problem, crit, 0.0, rng)
        stall = stall + 1 if token.current_score >= before else 0
    return token
