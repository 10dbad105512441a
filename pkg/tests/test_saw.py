import itertools

import numpy as np
import pytest

from wordopt.core import DIRECTIONS, ContractError, StateToken
from wordopt.saw import (
    PivotMove, apply_pivot, decode, elongate, encode, hp_contact_score, hp_contacts,
    is_self_avoiding, pivot_count_score, saw_move, straight_line, walk_table, word_is_saw,
)

STEP = {0: 1j, 1: 1, 2: -1j, 3: -1}  # N E S W as complex unit steps


def W(text):
    return DIRECTIONS.parse(text)


def oracle_points(word):
    pts = [0j]
    for d in word:
        pts.append(pts[-1] + STEP[d])
    return pts


def oracle_saw(word):
    pts = oracle_points(word)
    return len(set(pts)) == len(pts)


def oracle_pivots(word):
    pts = oracle_points(word)
    count = 0
    for c in range(1, len(word)):
        ok = False
        for rot in (1j, -1j):
            moved = pts[: c + 1] + [pts[c] + (p - pts[c]) * rot for p in pts[c + 1:]]
            ok = ok or len(set(moved)) == len(moved)
        count += ok
    return count


def oracle_contacts(word, seq):
    pts = oracle_points(word)
    return sum(1 for i in range(len(pts)) for j in range(i + 2, len(pts))
               if seq[i] == seq[j] == "H" and abs(pts[i] - pts[j]) == 1)


def random_saw(n, rng):
    while True:
        w = tuple(int(d) for d in rng.integers(0, 4, n))
        if oracle_saw(w):
            return w


def test_decode_examples():
    assert decode(W("EE")) == [(0, 0), (1, 0), (2, 0)]
    assert decode(W("ENW")) == [(0, 0), (1, 0), (1, 1), (0, 1)]


def test_encode_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        w = tuple(int(d) for d in rng.integers(0, 4, int(rng.integers(1, 15))))
        assert encode(decode(w)) == w


def test_self_avoidance_examples():
    assert is_self_avoiding(decode(W("EE")))
    assert not is_self_avoiding(decode(W("EW")))
    assert sum(word_is_saw(w) for w in itertools.product(range(4), repeat=3)) == 36


def test_pivot_examples():
    walk = decode(W("EEE"))
    up = apply_pivot(walk, PivotMove(1, 90))
    assert up == [(0, 0), (1, 0), (1, 1), (1, 2)]
    assert pivot_count_score(W("EEE")) == 2
    assert pivot_count_score(W("E")) == 0
    with pytest.raises(ContractError):
        apply_pivot(decode(W("E")), PivotMove(1, 90))
    with pytest.raises(ContractError):
        apply_pivot(walk, PivotMove(0, 90))
    with pytest.raises(ContractError):
        PivotMove(1, 180)
    with pytest.raises(ContractError):
        pivot_count_score(W("EW"))


def test_pivot_inverse():
    rng = np.random.default_rng(1)
    for _ in range(300):
        w = random_saw(8, rng)
        walk = decode(w)
        c = int(rng.integers(1, 8))
        there = apply_pivot(walk, PivotMove(c, 90))
        if there is not None:
            assert apply_pivot(there, PivotMove(c, -90)) == walk


@pytest.mark.parametrize("n", range(1, 7))
def test_exhaustive_against_oracles(n):
    for w in itertools.product(range(4), repeat=n):
        saw = oracle_saw(w)
        assert word_is_saw(w) == saw
        if not saw:
            continue
        assert pivot_count_score(w) == oracle_pivots(w)
        for seq in ("H" * (n + 1), "HP" * n + "H"):
            seq = seq[: n + 1]
            assert hp_contacts(w, seq) == oracle_contacts(w, seq)
            assert hp_contact_score(w, seq) == n + 1 - oracle_contacts(w, seq)


def test_hp_examples():
    assert hp_contact_score(W("ENW"), "HHHH") == 3
    assert hp_contact_score(W("ENWN"), "PPPPP") == 5
    assert hp_contacts(straight_line(9), "H" * 10) == 0
    with pytest.raises(ContractError):
        hp_contact_score(W("EN"), "HH")


SYMMETRIES = [lambda d, k=k: (d + k) % 4 for k in range(4)] + \
             [lambda d, k=k: ((4 - d) % 4 + k) % 4 for k in range(4)]  # N<->S mirror then rotate


def test_hp_invariant_under_lattice_symmetries():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(3, 16))
        w = random_saw(n, rng)
        seq = "".join("H" if b else "P" for b in rng.integers(0, 2, n + 1))
        base = hp_contact_score(w, seq)
        for sym in SYMMETRIES:
            assert hp_contact_score(tuple(sym(d) for d in w), seq) == base


def test_saw_move_outputs_saws():
    rng = np.random.default_rng(3)
    tok = StateToken.fresh(straight_line(12), 11.0, rng)
    for _ in range(500):
        w = saw_move(tok, rng)
        assert word_is_saw(w)
        tok.current = w


def test_saw_move_self_loop_on_degenerate():
    rng = np.random.default_rng(0)
    tok = StateToken.fresh(W("E"), 0.0, rng)
    assert saw_move(tok, rng) == W("E")


def test_saw_move_center_uniform():
    rng = np.random.default_rng(4)
    line = straight_line(10)
    tok = StateToken.fresh(line, 9.0, rng)
    counts = np.zeros(10, int)
    trials = 10_000
    for _ in range(trials):
        w = saw_move(tok, rng)
        # on a straight line every pivot is valid; the first changed step is the center
        counts[next(i for i in range(10) if w[i] != line[i])] += 1
    assert counts[0] == 0
    p = 1 / 9
    sd = np.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(counts[1:] - trials * p) <= 3 * sd)


def test_elongate():
    rng = np.random.default_rng(5)
    assert len(elongate("HP", rng)) == 1
    for s in range(100):
        r = np.random.default_rng(s)
        w = elongate("P" * 15, r)
        assert len(w) == 14 and word_is_saw(w)
        h = elongate("H" * 8, r)
        assert hp_contacts(h, "H" * 8) >= 0 and word_is_saw(h)
    with pytest.raises(ContractError):
        elongate("H", rng)


def test_elongate_beats_straight_line_on_all_h():
    gains = [hp_contacts(elongate("H" * 8, np.random.default_rng(s)), "H" * 8) for s in range(100)]
    assert min(gains) >= 0 and max(gains) > 0


def test_walk_table_export():
    table = walk_table(W("EN"), "HPH")
    assert table.splitlines() == ["0 0 H", "1 0 P", "1 1 H"]
