"""Word space, plug-in interfaces and the state token threaded through every search step."""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

Word = tuple  # tuple[int, ...] of alphabet indices

TRACE_TAIL_LIMIT = 10_000


class ContractError(ValueError):
    """A precondition of an operation was violated by the caller."""


class ScoreError(RuntimeError):
    """The score function failed on a candidate; the candidate is attached."""

    def __init__(self, word, cause):
        super().__init__(f"score failed on {word!r}: {cause}")
        self.word = word
        self.cause = cause


class EvaluationError(RuntimeError):
    """A recoverable evaluation failure: optimizers skip the candidate."""

    def __init__(self, message, output=""):
        super().__init__(message)
        self.output = output


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        if len(self.symbols) < 2:
            raise ContractError("alphabet needs at least 2 symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise ContractError(f"alphabet symbols are not distinct: {self.symbols}")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise ContractError(f"symbol {symbol!r} not in alphabet {self.symbols}") from None

    def parse(self, text: str) -> Word:
        """Read a word written either as contiguous one-char symbols or whitespace separated."""
        parts = text.split() if any(c.isspace() for c in text.strip()) else list(text.strip())
        return tuple(self.index(p) for p in parts)

    def format(self, word: Sequence[int]) -> str:
        sep = "" if all(len(s) == 1 for s in self.symbols) else " "
        return sep.join(self.symbols[i] for i in word)


BINARY = Alphabet(("0", "1"))
DIRECTIONS = Alphabet(("N", "E", "S", "W"))


def check_word(word: Sequence[int], alphabet: Alphabet, n: Optional[int] = None) -> None:
    if n is not None and len(word) != n:
        raise ContractError(f"word has length {len(word)}, expected {n}")
    for i in word:
        if not 0 <= i < alphabet.size:
            raise ContractError(f"index {i} outside alphabet of size {alphabet.size}")


def hamming_distance(a: Sequence, b: Sequence) -> int:
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} != {len(b)}")
    return sum(x != y for x, y in zip(a, b))


def random_word(alphabet: Alphabet, n: int, rng: np.random.Generator) -> Word:
    """Uniform word; consumes exactly one integer draw per position."""
    if n < 1:
        raise ContractError("word length must be >= 1")
    return tuple(int(x) for x in rng.integers(0, alphabet.size, size=n))


def neighbors(word: Sequence[int], alphabet: Alphabet) -> list:
    out = []
    for pos, sym in enumerate(word):
        for other in range(alphabet.size):
            if other != sym:
                out.append(tuple(word[:pos]) + (other,) + tuple(word[pos + 1:]))
    return out


def _label_key(label) -> int:
    if isinstance(label, int):
        return label
    return zlib.crc32(str(label).encode())


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Independent PCG64 substream for ``seed`` and a path of component labels."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_key(l) for l in labels))
    return np.random.Generator(np.random.PCG64(ss))


def rng_from_state(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


class ScoreFunction(Protocol):
    def __call__(self, word: Word) -> float: ...


class MoveFunction(Protocol):
    def __call__(self, token: "StateToken", rng: np.random.Generator) -> Word: ...


class HammingMove:
    """Resample ``radius`` distinct positions, each to a different symbol."""

    def __init__(self, alphabet: Alphabet, radius: int = 1):
        if radius < 1:
            raise ContractError("move radius must be >= 1")
        self.alphabet = alphabet
        self.radius = radius

    def __call__(self, token, rng):
        word = list(token.current)
        m = self.alphabet.size
        r = min(self.radius, len(word))
        for pos in rng.choice(len(word), size=r, replace=False):
            word[pos] = (word[pos] + 1 + int(rng.integers(0, m - 1))) % m
        return tuple(word)


@dataclass
class Problem:
    """Everything a metaheuristic needs: the space, a score and a move."""

    name: str
    alphabet: Alphabet
    n: int
    score: Callable
    move: Callable
    initial: Optional[Callable] = None  # rng -> Word; defaults to a random word

    def initial_word(self, rng):
        if self.initial is None:
            return random_word(self.alphabet, self.n, rng)
        return tuple(self.initial(rng))

    def evaluate(self, word) -> float:
        try:
            value = self.score(word)
        except EvaluationError:
            raise
        except Exception as exc:
            raise ScoreError(word, exc) from exc
        value = float(value)
        if not math.isfinite(value) or value < 0:
            raise ScoreError(word, f"score {value} is not a finite nonnegative real")
        return value


@dataclass(eq=False)
class StateToken:
    """Search state: current and best words, counters, random stream and engine memory.

    ``state`` holds engine-specific JSON-able memory (temperature, population, swarm).
    """

    current: Word
    current_score: float
    best: Word
    best_score: float
    rng: np.random.Generator
    iteration: int = 0
    mh_params: dict = field(default_factory=dict)
    trace_tail: list = field(default_factory=list)
    state: dict = field(default_factory=dict)
    evaluations: int = 0
    self_loops: int = 0
    trace_limit: int = TRACE_TAIL_LIMIT

    @classmethod
    def fresh(cls, word, score, rng, **kw) -> "StateToken":
        return cls(current=tuple(word), current_score=score, best=tuple(word), best_score=score, rng=rng, **kw)

    def offer(self, word, score) -> bool:
        """Record an evaluated word; returns True when it becomes the new best."""
        if score < self.best_score:
            self.best = tuple(word)
            self.best_score = score
            return True
        return False

    def record(self) -> None:
        self.trace_tail.append((self.iteration, self.best_score))
        if len(self.trace_tail) > self.trace_limit:
            del self.trace_tail[: len(self.trace_tail) - self.trace_limit]

    def to_dict(self) -> dict:
        return {
            "current": list(self.current),
            "current_score": self.current_score,
            "best": list(self.best),
            "best_score": self.best_score,
            "iteration": self.iteration,
            "rng_state": self.rng.bit_generator.state,
            "mh_params": self.mh_params,
            "trace_tail": [list(t) for t in self.trace_tail],
            "state": self.state,
            "evaluations": self.evaluations,
            "self_loops": self.self_loops,
            "trace_limit": self.trace_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateToken":
        return cls(
            current=tuple(d["current"]),
            current_score=d["current_score"],
            best=tuple(d["best"]),
            best_score=d["best_score"],
            iteration=d["iteration"],
            rng=rng_from_state(d["rng_state"]),
            mh_params=d["mh_params"],
            trace_tail=[tuple(t) for t in d["trace_tail"]],
            state=d["state"],
            evaluations=d["evaluations"],
            self_loops=d["self_loops"],
            trace_limit=d["trace_limit"],
        )

    def __eq__(self, other):
        if not isinstance(other, StateToken):
            return NotImplemented
        return _canonical(self.to_dict()) == _canonical(other.to_dict())

    def copy(self) -> "StateToken":
        return StateToken.from_dict(json.loads(_canonical(self.to_dict())))


# Checkpoint layout: magic(4) version(u16) length(u32) crc32(u32) canonical JSON payload.
CHECKPOINT_MAGIC = b"WOTK"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct(">4sHII")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def token_checkpoint(token: StateToken) -> bytes:
    payload = _canonical(token.to_dict()).encode("utf-8")
    return _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(payload), zlib.crc32(payload)) + payload


def token_restore(data: bytes) -> StateToken:
    if len(data) < _HEADER.size:
        raise CheckpointError("checkpoint truncated before header end")
    magic, version, length, crc = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("not a token checkpoint (bad magic)")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise CheckpointError(f"checkpoint payload is {len(payload)} bytes, header says {length}")
    if zlib.crc32(payload) != crc:
        raise CheckpointError("checkpoint payload checksum mismatch")
    try:
        return StateToken.from_dict(json.loads(payload.decode("utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint payload: {exc}") from exc
