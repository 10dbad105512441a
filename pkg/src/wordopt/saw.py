"""Self-avoiding walks on the square lattice, encoded as absolute N/E/S/W direction words."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .core import DIRECTIONS, ContractError, StateToken

N, E, S, W = range(4)
UNIT = ((0, 1), (1, 0), (0, -1), (-1, 0))
_STEP_INDEX = {u: d for d, u in enumerate(UNIT)}


class ConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class PivotMove:
    center: int
    angle: int  # +90 (counterclockwise) or -90

    def __post_init__(self):
        if self.angle not in (90, -90):
            raise ContractError(f"pivot angle must be +90 or -90, got {self.angle}")


def rotate_direction(d: int, angle: int) -> int:
    # N,E,S,W is clockwise order
    return (d + 3) % 4 if angle == 90 else (d + 1) % 4


def decode(word: Sequence[int]) -> list:
    x = y = 0
    walk = [(0, 0)]
    for d in word:
        dx, dy = UNIT[d]
        x += dx
        y += dy
        walk.append((x, y))
    return walk


def encode(walk: Sequence) -> tuple:
    out = []
    for (x0, y0), (x1, y1) in zip(walk, walk[1:]):
        try:
            out.append(_STEP_INDEX[(x1 - x0, y1 - y0)])
        except KeyError:
            raise ContractError(f"vertices {(x0, y0)} and {(x1, y1)} are not lattice neighbors") from None
    return tuple(out)


def is_self_avoiding(walk: Sequence) -> bool:
    return len(set(walk)) == len(walk)


def word_is_saw(word: Sequence[int]) -> bool:
    return is_self_avoiding(decode(word))


def _rotate_about(point, center, angle):
    dx, dy = point[0] - center[0], point[1] - center[1]
    if angle == 90:
        return (center[0] - dy, center[1] + dx)
    return (center[0] + dy, center[1] - dx)


def apply_pivot(walk: Sequence, move: PivotMove) -> Optional[list]:
    """Rotate every vertex after ``move.center``; None when the result self-intersects."""
    n = len(walk) - 1
    if not 1 <= move.center <= n - 1:
        raise ContractError(f"pivot center {move.center} outside interior range 1..{n - 1}")
    c = walk[move.center]
    head = walk[: move.center + 1]
    occupied = set(head)
    out = list(head)
    for v in walk[move.center + 1:]:
        r = _rotate_about(v, c, move.angle)
        if r in occupied:
            return None
        out.append(r)
    return out


def _pivot_valid(walk, occupied_prefix, center, angle) -> bool:
    c = walk[center]
    for v in walk[center + 1:]:
        if _rotate_about(v, c, angle) in occupied_prefix:
            return False
    return True


def pivotable_centers(word: Sequence[int]) -> list:
    walk = decode(word)
    if not is_self_avoiding(walk):
        raise ContractError("pivot count is defined on self-avoiding walks only")
    out = []
    head = {walk[0]}
    for center in range(1, len(walk) - 1):
        head.add(walk[center])
        if _pivot_valid(walk, head, center, 90) or _pivot_valid(walk, head, center, -90):
            out.append(center)
    return out


def pivot_count_score(word: Sequence[int]) -> float:
    """Number of interior vertices admitting at least one valid +-90 degree pivot."""
    return float(len(pivotable_centers(word)))


def hp_contacts(word: Sequence[int], seq: Sequence[str]) -> int:
    walk = decode(word)
    if len(seq) != len(walk):
        raise ContractError(f"HP sequence has {len(seq)} labels for {len(walk)} vertices")
    if not is_self_avoiding(walk):
        raise ContractError("HP contacts are defined on self-avoiding walks only")
    where = {v: i for i, v in enumerate(walk)}
    contacts = 0
    for i, (x, y) in enumerate(walk):
        if seq[i] != "H":
            continue
        for dx, dy in UNIT:
            j = where.get((x + dx, y + dy))
            if j is not None and j > i + 1 and seq[j] == "H":
                contacts += 1
    return contacts


def hp_contact_score(word: Sequence[int], seq: Sequence[str]) -> float:
    """(n + 1) - contacts, so that maximizing contacts is a minimization."""
    return float(len(word) + 1 - hp_contacts(word, seq))


def parse_hp(text: str) -> str:
    text = text.strip().upper()
    if not text or set(text) - {"H", "P"}:
        raise ContractError(f"HP sequence must be a nonempty string over H/P, got {text!r}")
    return text


def straight_line(n: int) -> tuple:
    return (E,) * n


class PivotMoveFunction:
    """Random +-90 degree pivot; retries invalid pivots, then returns the current word."""

    def __init__(self, retries: int = 50):
        self.retries = retries

    def __call__(self, token: StateToken, rng):
        return saw_move(token, rng, self.retries)


def saw_move(token: StateToken, rng, retries: int = 50) -> tuple:
    word = token.current
    n = len(word)
    if n < 2:
        return tuple(word)
    walk = decode(word)
    for _ in range(retries):
        center = int(rng.integers(1, n))
        angle = 90 if rng.integers(0, 2) else -90
        new = apply_pivot(walk, PivotMove(center, angle))
        if new is not None:
            return tuple(word[:center]) + tuple(rotate_direction(d, angle) for d in word[center:])
    return tuple(word)


def elongate(seq: Sequence[str], rng, max_backtracks: int = 10_000) -> tuple:
    """Grow a walk step by step, each time taking an extension that gains the most H-H contacts.

    Ties are broken uniformly at random. Dead ends backtrack one step and
    forbid the branch that failed.
    """
    if len(seq) < 2:
        raise ContractError("elongation needs at least 2 residues")
    n = len(seq) - 1
    walk = [(0, 0)]
    occupied = {(0, 0): 0}
    word = []
    options = []  # per depth: remaining ranked directions
    backtracks = 0

    def ranked(depth):
        x, y = walk[-1]
        prev = word[-1] if word else None
        scored = []
        for d in range(4):
            if prev is not None and d == (prev + 2) % 4:
                continue
            nxt = (x + UNIT[d][0], y + UNIT[d][1])
            if nxt in occupied:
                continue
            gain = 0
            if seq[depth + 1] == "H":
                for dx, dy in UNIT:
                    j = occupied.get((nxt[0] + dx, nxt[1] + dy))
                    if j is not None and j < depth and seq[j] == "H":
                        gain += 1
            scored.append((gain, float(rng.random()), d))
        scored.sort(key=lambda t: (-t[0], t[1]))
        return [d for _, _, d in scored]

    while len(word) < n:
        depth = len(word)
        if len(options) <= depth:
            options.append(ranked(depth))
        if options[depth]:
            d = options[depth].pop(0)
            x, y = walk[-1]
            nxt = (x + UNIT[d][0], y + UNIT[d][1])
            word.append(d)
            walk.append(nxt)
            occupied[nxt] = depth + 1
            continue
        options.pop()
        if not word:
            raise ConstructionError("no self-avoiding extension exists")
        backtracks += 1
        if backtracks > max_backtracks:
            raise ConstructionError(f"construction failed after {max_backtracks} backtracks")
        word.pop()
        del occupied[walk.pop()]
    return tuple(word)


def walk_table(word: Sequence[int], seq: Optional[Sequence[str]] = None) -> str:
    """One "x y label" row per vertex."""
    walk = decode(word)
    rows = []
    for i, (x, y) in enumerate(walk):
        label = seq[i] if seq is not None else str(i)
        rows.append(f"{x} {y} {label}")
    return "\n".join(rows) + "\n"


def format_word(word) -> str:
    return DIRECTIONS.format(word)
