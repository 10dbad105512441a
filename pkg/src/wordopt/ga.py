"""Genetic algorithm over words, with an optional Lasso position-ranking phase."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ContractError, EvaluationError, Problem, StateToken, derive_rng, random_word
from .runner import Engine, TraceRow, drive


def random_partition(n: int, k: int, rng) -> list:
    """Split positions 0..n-1 into ``k`` nonempty disjoint subsets, in sampled order."""
    if n < 1 or not 1 <= k <= max(1, n // 2):
        raise ContractError(f"need 1 <= k <= n/2, got n={n}, k={k}")
    perm = rng.permutation(n)
    cuts = np.sort(rng.choice(n - 1, size=k - 1, replace=False)) + 1 if k > 1 else []
    return [sorted(int(i) for i in chunk) for chunk in np.split(perm, cuts)]


def check_partition(partition: Sequence, n: int) -> None:
    seen = [i for subset in partition for i in subset]
    if sorted(seen) != list(range(n)) or any(len(s) == 0 for s in partition):
        raise ContractError("partition must cover positions 0..n-1 exactly once with nonempty subsets")


def crossover(w1: Sequence[int], w2: Sequence[int], partition: Sequence) -> tuple:
    """Child takes parent 1 on odd-numbered subsets (1st, 3rd, ...) and parent 2 elsewhere."""
    if len(w1) != len(w2):
        raise ContractError("parents differ in length")
    check_partition(partition, len(w1))
    child = list(w2)
    for j, subset in enumerate(partition):
        if j % 2 == 0:
            for i in subset:
                child[i] = w1[i]
    return tuple(child)


def mutate(word: Sequence[int], k_mut: int, alphabet, rng) -> tuple:
    """Resample ``k_mut`` distinct positions uniformly (a draw may repeat the old symbol)."""
    n = len(word)
    if not 1 <= k_mut <= n:
        raise ContractError(f"k_mut must be in 1..{n}, got {k_mut}")
    out = list(word)
    for pos in rng.choice(n, size=k_mut, replace=False):
        out[pos] = int(rng.integers(0, alphabet.size))
    return tuple(out)


# --- Lasso -------------------------------------------------------------------

def lasso_cd(X, y, lam: float, tol: float = 1e-8, max_sweeps: int = 10_000):
    """Minimize 0.5*||y - b0 - X b||^2 + lam*||b||_1 by cyclic coordinate descent.

    The intercept is unpenalized (handled by centering). Returns (b0, b).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ContractError("lambda must be nonnegative")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    norms = (Xc ** 2).sum(axis=0)
    b = np.zeros(X.shape[1])
    if lam >= np.max(np.abs(Xc.T @ yc), initial=0.0):
        return y_mean, b  # at or above lambda_max the solution is exactly zero
    r = yc.copy()
    for _ in range(max_sweeps):
        max_step = 0.0
        for j in range(X.shape[1]):
            if norms[j] == 0.0:
                continue
            old = b[j]
            rho = Xc[:, j] @ r + norms[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / norms[j]
            if new != old:
                r -= Xc[:, j] * (new - old)
                b[j] = new
                max_step = max(max_step, abs(new - old))
        if max_step < tol:
            break
    return y_mean - x_mean @ b, b


def one_hot(words, alphabet_size: int):
    """Columns per (position, symbol) with symbol 0 dropped as the reference level."""
    W = np.asarray(words, dtype=int)
    m, n = W.shape
    X = np.zeros((m, n * (alphabet_size - 1)))
    for s in range(1, alphabet_size):
        X[:, (s - 1)::(alphabet_size - 1)] = W == s
    return X


def lambda_max(X, y) -> float:
    """Smallest penalty giving the all-zero solution."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.max(np.abs((X - X.mean(axis=0)).T @ (y - y.mean())), initial=0.0))


def lasso_rank(archive: Sequence, lam: float, alphabet_size: int = 2, tol: float = 1e-8, max_sweeps: int = 10_000):
    """Rank positions by their largest absolute Lasso coefficient.

    ``archive`` is a sequence of (word, score). Returns [(position, impact)]
    sorted by impact descending, ties by position.
    """
    words = [w for w, _ in archive]
    if not words:
        raise ContractError("empty archive")
    n = len(words[0])
    if len(words) < 2 * n:
        raise ContractError(f"archive has {len(words)} rows, need at least 2n = {2 * n}")
    X = one_hot(words, alphabet_size)
    y = np.array([s for _, s in archive], dtype=float)
    _, coef = lasso_cd(X, y, lam, tol, max_sweeps)
    impact = np.abs(coef).reshape(n, alphabet_size - 1).max(axis=1)
    return sorted(((i, float(impact[i])) for i in range(n)), key=lambda t: (-t[1], t[0]))


# --- GA engine ---------------------------------------------------------------

@dataclass
class GAParams:
    pop_size: int = 50
    max_iterations: int = 200
    n_crossovers: int = 5
    n_mutations: int = 5
    n_randoms: int = 5
    k_subsets: Optional[int] = None  # None: uniform in [1, n/2] per crossover
    k_mut: Optional[int] = None  # None: max(1, n // 20)
    stop_threshold: Optional[float] = None
    lasso_enabled: bool = False
    lasso_lambda: Optional[float] = None  # None: lasso_lambda_fraction * lambda_max
    lasso_lambda_fraction: float = 0.05
    lasso_frozen_fraction: float = 0.5
    lasso_resample_rate: float = 0.5

    def __post_init__(self):
        for name in ("pop_size", "max_iterations", "n_crossovers", "n_mutations", "n_randoms"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.pop_size < self.n_crossovers + self.n_mutations + self.n_randoms:
            raise ContractError("pop_size must be >= n_crossovers + n_mutations + n_randoms")
        if self.lasso_lambda is not None and self.lasso_lambda < 0:
            raise ContractError("lasso_lambda must be nonnegative")

    def validate_for(self, n: int) -> None:
        if self.k_subsets is not None and not 1 <= self.k_subsets <= max(1, n // 2):
            raise ContractError(f"k_subsets must be in 1..{max(1, n // 2)}")
        if self.k_mut is not None and not 1 <= self.k_mut <= n:
            raise ContractError(f"k_mut must be in 1..{n}")


class Population:
    """Scored members plus the append-only archive of every evaluated word.

    Lives as plain lists inside ``StateToken.state`` so it checkpoints as-is:
    members are [word, score, birth] with birth an insertion counter.
    """

    def __init__(self, state: dict):
        self.state = state

    @classmethod
    def empty(cls, capacity: int) -> "Population":
        return cls({"members": [], "archive": [], "births": 0, "capacity": capacity})

    @property
    def members(self):
        return self.state["members"]

    @property
    def archive(self):
        return self.state["archive"]

    def add(self, word, score) -> None:
        self.state["members"].append([list(word), score, self.state["births"]])
        self.state["births"] += 1
        self.state["archive"].append([list(word), score])

    def best(self):
        w, s, _ = min(self.members, key=lambda m: (m[1], m[2]))
        return tuple(w), s

    def select(self, capacity: int) -> None:
        """Keep the ``capacity`` lowest scores, preferring distinct words; ties go to older members."""
        ranked = sorted(self.members, key=lambda m: (m[1], m[2]))
        seen = set()
        keep, dupes = [], []
        for m in ranked:
            key = tuple(m[0])
            (dupes if key in seen else keep).append(m)
            seen.add(key)
        keep = keep[:capacity]
        if len(keep) < capacity:
            keep += dupes[: capacity - len(keep)]
            keep.sort(key=lambda m: (m[1], m[2]))
        self.state["members"] = keep


def _try_score(problem: Problem, word):
    try:
        return problem.evaluate(word)
    except EvaluationError:
        return None


def ga_iteration(pop: Population, params: GAParams, problem: Problem, rng, token: Optional[StateToken] = None) -> Population:
    """Crossovers, then mutants of the augmented population, then random words, then selection."""
    n = problem.n

    def offer(word):
        score = _try_score(problem, word)
        if score is None:
            return
        pop.add(word, score)
        if token is not None:
            token.evaluations += 1
            token.offer(word, score)

    for _ in range(params.n_crossovers):
        members = pop.members
        a = members[int(rng.integers(0, len(members)))][0]
        b = members[int(rng.integers(0, len(members)))][0]
        k = params.k_subsets or int(rng.integers(1, max(1, n // 2) + 1))
        offer(crossover(a, b, random_partition(n, k, rng)))
    k_mut = params.k_mut or max(1, n // 20)
    for _ in range(params.n_mutations):
        members = pop.members
        w = members[int(rng.integers(0, len(members)))][0]
        offer(mutate(w, k_mut, problem.alphabet, rng))
    for _ in range(params.n_randoms):
        offer(random_word(problem.alphabet, n, rng))
    pop.select(params.pop_size)
    return pop


def freeze_and_resample(pop: Population, ranking, params: GAParams, problem: Problem, rng, token: StateToken) -> None:
    """Default bridge into the post-Lasso phase.

    The top-ranked positions (nonzero impact, at most a fraction of n) are
    frozen at the elite values; the rest are resampled position-wise with
    ``lasso_resample_rate`` to refill the lower half of the population.
    """
    n = problem.n
    limit = max(1, int(params.lasso_frozen_fraction * n))
    frozen = {pos for pos, impact in ranking[:limit] if impact > 0}
    free = [i for i in range(n) if i not in frozen]
    elite = sorted(pop.members, key=lambda m: (m[1], m[2]))
    n_keep = max(1, params.pop_size // 2)
    pop.state["members"] = elite[:n_keep]
    for slot in range(params.pop_size - n_keep):
        word = list(elite[slot % n_keep][0])
        for i in free:
            if rng.random() < params.lasso_resample_rate:
                word[i] = int(rng.integers(0, problem.alphabet.size))
        score = _try_score(problem, tuple(word))
        if score is None:
            continue
        pop.add(word, score)
        token.evaluations += 1
        token.offer(word, score)
    pop.state["frozen"] = sorted(frozen)


class GeneticAlgorithm(Engine):
    name = "ga"

    def __init__(self, problem: Problem, params: Optional[GAParams] = None, bridge: Callable = freeze_and_resample):
        self.problem = problem
        self.params = params or GAParams()
        self.params.validate_for(problem.n)
        self.bridge = bridge

    def start(self, seed: int) -> StateToken:
        rng = derive_rng(seed, "ga")
        pop = Population.empty(self.params.pop_size)
        evals = 0
        while len(pop.members) < self.params.pop_size:
            w = self.problem.initial_word(rng) if not pop.members else random_word(self.problem.alphabet, self.problem.n, rng)
            s = _try_score(self.problem, w)
            if s is not None:
                pop.add(w, s)
                evals += 1
        word, score = pop.best()
        token = StateToken.fresh(word, score, rng, evaluations=evals)
        token.mh_params = {"name": self.name, "pop_size": self.params.pop_size,
                           "max_iterations": self.params.max_iterations, "lasso": self.params.lasso_enabled}
        token.state = {"population": pop.state, "phase": 1, "phase_iter": 0, "stopped": False}
        return token

    def _stop_hit(self, token) -> bool:
        t = self.params.stop_threshold
        return t is not None and token.best_score <= t

    def finished(self, token) -> bool:
        st = token.state
        if self._stop_hit(token):
            return True
        if st["phase"] == 1:
            return st["phase_iter"] >= self.params.max_iterations and not self.params.lasso_enabled
        return st["phase_iter"] >= max(1, self.params.max_iterations // 2)

    def step(self, token) -> TraceRow:
        st = token.state
        pop = Population(st["population"])
        if st["phase"] == 1 and st["phase_iter"] >= self.params.max_iterations:
            lam = self.params.lasso_lambda
            archive = [(w, s) for w, s in pop.archive]
            if lam is None:
                X = one_hot([w for w, _ in archive], self.problem.alphabet.size)
                lam = self.params.lasso_lambda_fraction * lambda_max(X, [s for _, s in archive])
            ranking = lasso_rank(archive, lam, self.problem.alphabet.size)
            st["ranking"] = [[p, v] for p, v in ranking]
            self.bridge(pop, ranking, self.params, self.problem, token.rng, token)
            st["phase"] = 2
            st["phase_iter"] = 0
        ga_iteration(pop, self.params, self.problem, token.rng, token)
        st["phase_iter"] += 1
        token.iteration += 1
        token.current, token.current_score = pop.best()
        token.record()
        return TraceRow(token.iteration, token.current_score, token.best_score, f"phase{st['phase']}")

    def phase_count(self, token) -> int:
        return token.state["phase"]


def run_ga(problem: Problem, params: Optional[GAParams] = None, seed: int = 0, sink=None):
    engine = GeneticAlgorithm(problem, params)
    rows = []

    def collect(row):
        rows.append(row)
        if sink is not None:
            sink(row)

    token = drive(engine, engine.start(seed), sink=collect)
    return token, rows
