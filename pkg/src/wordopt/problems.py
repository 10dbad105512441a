"""Score functions shipped with the toolbox, each minimized by every engine."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import saw, subset
from .core import ContractError, derive_rng


class OneMax:
    """Number of non-reference symbols (ones, for binary words)."""

    def __init__(self, alphabet, n):
        self.n = n

    def __call__(self, word):
        return float(sum(1 for s in word if s != 0))


def word_index(word: Sequence[int], m: int) -> int:
    idx = 0
    for s in word:
        idx = idx * m + int(s)
    return idx


class RandomTable:
    """i.i.d. uniform scores over every word of a small space (at most 2**22 words)."""

    def __init__(self, alphabet, n, seed: int = 0, scale: float = 1.0):
        m = alphabet.size
        if m ** n > 1 << 22:
            raise ContractError(f"random table over {m}^{n} words is too large")
        self.m = m
        self.table = derive_rng(seed, "random-table").random(m ** n) * scale

    def __call__(self, word):
        return float(self.table[word_index(word, self.m)])

    def exhaustive_minimum(self):
        return float(self.table.min())


class PlantedLinear:
    """Linear score on binary words: offset + sum c_i w_i, with a few planted nonzero weights."""

    def __init__(self, alphabet, n, planted: Optional[Sequence[int]] = None, weight: float = 1.0,
                 noise: float = 0.0, seed: int = 0):
        self.n = n
        planted = list(range(min(5, n))) if planted is None else [int(i) for i in planted]
        self.coef = np.zeros(n)
        self.coef[planted] = weight
        self.planted = sorted(planted)
        self.noise = noise
        self.seed = seed
        self.offset = float(np.abs(self.coef).sum()) if weight < 0 else 0.0

    def __call__(self, word):
        value = self.offset + float(self.coef @ np.asarray(word, dtype=float))
        if self.noise:
            rng = np.random.default_rng([self.seed, *(int(b) for b in word)])
            value += self.noise * float(rng.standard_normal())
        return max(value, 0.0)


def _saw_penalty(word) -> Optional[float]:
    """Score for non-self-avoiding words: worse than any walk, by n + 1 + collisions."""
    walk = saw.decode(word)
    collisions = len(walk) - len(set(walk))
    if collisions == 0:
        return None
    return float(len(word) + 1 + collisions)


class PivotCount:
    """Pivotable interior vertices; zero marks an unfoldable walk."""

    def __init__(self, alphabet, n):
        if alphabet.symbols != saw.DIRECTIONS.symbols:
            raise ContractError("pivot-count needs the N,E,S,W alphabet")

    def __call__(self, word):
        pen = _saw_penalty(word)
        return pen if pen is not None else saw.pivot_count_score(word)


class HPContacts:
    """(n + 1) - H-H contacts for a fixed HP sequence of n + 1 residues."""

    def __init__(self, alphabet, n, sequence: str):
        if alphabet.symbols != saw.DIRECTIONS.symbols:
            raise ContractError("hp needs the N,E,S,W alphabet")
        self.sequence = saw.parse_hp(sequence)
        if len(self.sequence) != n + 1:
            raise ContractError(f"HP sequence needs n + 1 = {n + 1} residues, got {len(self.sequence)}")

    def __call__(self, word):
        pen = _saw_penalty(word)
        return pen if pen is not None else saw.hp_contact_score(word, self.sequence)


class _SubsetScore:
    # an empty subset has no tree; it gets the worst complement score
    EMPTY = 100.0

    def __init__(self, alphabet, n, wrapper="complement"):
        if alphabet.size != 2:
            raise ContractError("subset problems need a binary alphabet")
        self.wrapper = wrapper
        subset.subset_score((1,), subset.SupportEvaluation(100), wrapper)

    def __call__(self, word):
        if not any(word):
            return self.EMPTY if self.wrapper == "complement" else 1.0 / 0.5
        return subset.subset_score(word, self.evaluate(word), self.wrapper)


class SubsetSynthetic(_SubsetScore):
    def __init__(self, alphabet, n, planted, noise: float = 0.0, seed: int = 0, penalty: float = 0.5,
                 wrapper="complement"):
        super().__init__(alphabet, n, wrapper)
        if any(not 0 <= int(i) < n for i in planted):
            raise ContractError(f"planted positions must lie in 0..{n - 1}")
        self.spec = subset.SyntheticOracleSpec(frozenset(planted), noise, seed, penalty)

    def evaluate(self, word):
        return subset.synthetic_evaluate(word, self.spec)


class SubsetExternal(_SubsetScore):
    def __init__(self, alphabet, n, command: str, timeout: float = 600.0, cache: Optional[str] = None,
                 wrapper="complement"):
        super().__init__(alphabet, n, wrapper)
        self.evaluator = subset.ExternalEvaluator(command, timeout, cache)

    def evaluate(self, word):
        return self.evaluator(word)


def straight_line_start(alphabet, n):
    return lambda rng: saw.straight_line(n)


def elongation_start(alphabet, n, sequence: Optional[str] = None):
    seq = saw.parse_hp(sequence) if sequence else "P" * (n + 1)
    return lambda rng: saw.elongate(seq, rng)


def random_start(alphabet, n):
    return None
