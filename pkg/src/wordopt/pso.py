"""Discrete particle swarm: real velocities squashed by a sigmoid onto alphabet anchors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ContractError, EvaluationError, Problem, StateToken, derive_rng, random_word
from .runner import Engine, TraceRow, drive


@dataclass
class PSOParams:
    swarm_size: int = 30
    inertia: float = 0.72
    phi1: float = 1.49
    phi2: float = 1.49
    v_max: float = 4.0
    max_iterations: int = 500
    stop_threshold: Optional[float] = None
    stochastic: bool = False
    init_velocity: tuple = (-1.0, 1.0)
    restart_after: Optional[int] = 120  # stalled iterations before velocities are redrawn; None disables

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ContractError("swarm_size must be >= 1")
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be >= 1")
        if not self.v_max > 0:
            raise ContractError("v_max must be positive")
        if self.restart_after is not None and self.restart_after < 1:
            raise ContractError("restart_after must be >= 1")
        lo, hi = self.init_velocity
        if lo > hi:
            raise ContractError("init_velocity must be an ordered (low, high) pair")
        self.init_velocity = (float(lo), float(hi))


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-np.asarray(v, dtype=float)))


def anchors(m: int) -> np.ndarray:
    if m < 2:
        raise ContractError("alphabet needs at least 2 symbols")
    return np.arange(m) / (m - 1)


def discretize(v, m: int):
    """Index of the anchor j/(m-1) nearest to sigmoid(v); ties go to the lower index.

    Accepts a scalar (returns an int) or an array of velocities of any shape.
    """
    s = sigmoid(v)
    dist = np.abs(s[..., None] - anchors(m))
    idx = np.argmin(dist, axis=-1)
    return int(idx) if np.ndim(v) == 0 else idx


def velocity_update(v, x, p_best, g_best, inertia, phi1, phi2, v_max, rng=None):
    """inertia*v + phi1*(p_best - x) + phi2*(g_best - x), clamped to [-v_max, v_max].

    With ``rng`` given, phi1 and phi2 are scaled by fresh per-component uniforms.
    """
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p_best, dtype=float)
    g = np.asarray(g_best, dtype=float)
    if rng is None:
        c1, c2 = phi1, phi2
    else:
        c1 = phi1 * rng.random(v.shape)
        c2 = phi2 * rng.random(v.shape)
    out = inertia * v + c1 * (p - x) + c2 * (g - x)
    return np.clip(out, -v_max, v_max)


class Swarm:
    """View over the swarm arrays kept (as lists) in ``StateToken.state``."""

    def __init__(self, state: dict):
        self.state = state

    @property
    def size(self) -> int:
        return len(self.state["positions"])

    def global_best(self):
        i = min(range(self.size), key=lambda k: (self.state["pbest_scores"][k], k))
        return tuple(self.state["pbest"][i]), self.state["pbest_scores"][i]


def pso_step(swarm: Swarm, params: PSOParams, problem: Problem, rng, token: Optional[StateToken] = None) -> Swarm:
    """Synchronous update: every particle sees the global best from the start of the step."""
    st = swarm.state
    m = problem.alphabet.size
    g_word, _ = swarm.global_best()
    V = np.asarray(st["velocities"], dtype=float)
    X = np.asarray(st["positions"], dtype=float)
    P = np.asarray(st["pbest"], dtype=float)
    if params.stochastic:
        # per particle: n draws scaling phi1, then n draws scaling phi2
        draws = [(rng.random(V.shape[1]), rng.random(V.shape[1])) for _ in range(swarm.size)]
        c1 = params.phi1 * np.array([d[0] for d in draws])
        c2 = params.phi2 * np.array([d[1] for d in draws])
    else:
        c1, c2 = params.phi1, params.phi2
    V = np.clip(params.inertia * V + c1 * (P - X) + c2 * (np.asarray(g_word, dtype=float) - X),
                -params.v_max, params.v_max)
    idx = discretize(V, m)
    st["velocities"] = V.tolist()
    for i in range(swarm.size):
        new = tuple(int(j) for j in idx[i])
        st["positions"][i] = list(new)
        try:
            score = problem.evaluate(new)
        except EvaluationError:
            score = st["scores"][i]
        else:
            if token is not None:
                token.evaluations += 1
                token.offer(new, score)
        st["scores"][i] = score
        if score < st["pbest_scores"][i]:
            st["pbest"][i] = list(new)
            st["pbest_scores"][i] = score
    return swarm


class ParticleSwarm(Engine):
    name = "pso"
    extra_columns = ("swarm_mean", "swarm_std")

    def __init__(self, problem: Problem, params: Optional[PSOParams] = None):
        self.problem = problem
        self.params = params or PSOParams()

    def start(self, seed: int) -> StateToken:
        p = self.params
        rng = derive_rng(seed, "pso")
        n = self.problem.n
        positions, velocities, scores = [], [], []
        evals = 0
        for i in range(p.swarm_size):
            w = self.problem.initial_word(rng) if i == 0 else random_word(self.problem.alphabet, n, rng)
            positions.append(list(w))
            velocities.append([float(c) for c in rng.uniform(p.init_velocity[0], p.init_velocity[1], size=n)])
            scores.append(self.problem.evaluate(w))
            evals += 1
        state = {"positions": positions, "velocities": velocities, "scores": scores,
                 "pbest": [list(w) for w in positions], "pbest_scores": list(scores)}
        word, score = Swarm(state).global_best()
        token = StateToken.fresh(word, score, rng, evaluations=evals)
        token.mh_params = {"name": self.name, "swarm_size": p.swarm_size, "inertia": p.inertia,
                           "phi1": p.phi1, "phi2": p.phi2, "v_max": p.v_max}
        state["stall"] = 0
        token.state = state
        return token

    def step(self, token) -> TraceRow:
        p = self.params
        st = token.state
        if p.restart_after is not None and st["stall"] >= p.restart_after:
            st["velocities"] = [[float(c) for c in token.rng.uniform(*p.init_velocity, size=self.problem.n)]
                                for _ in range(len(st["velocities"]))]
            st["stall"] = 0
        before = token.best_score
        swarm = pso_step(Swarm(st), p, self.problem, token.rng, token)
        st["stall"] = 0 if token.best_score < before else st["stall"] + 1
        token.iteration += 1
        i = min(range(swarm.size), key=lambda k: (token.state["scores"][k], k))
        token.current = tuple(token.state["positions"][i])
        token.current_score = token.state["scores"][i]
        token.record()
        sc = token.state["scores"]
        mean = sum(sc) / len(sc)
        std = math.sqrt(sum((s - mean) ** 2 for s in sc) / len(sc))
        return TraceRow(token.iteration, token.current_score, token.best_score, "swarm",
                        {"swarm_mean": mean, "swarm_std": std})

    def finished(self, token) -> bool:
        t = self.params.stop_threshold
        if t is not None and token.best_score <= t:
            return True
        return token.iteration >= self.params.max_iterations


def run_pso(problem: Problem, params: Optional[PSOParams] = None, seed: int = 0, sink=None):
    engine = ParticleSwarm(problem, params)
    rows = []

    def collect(row):
        rows.append(row)
        if sink is not None:
            sink(row)

    token = drive(engine, engine.start(seed), sink=collect)
    return token, rows
