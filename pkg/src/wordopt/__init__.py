"""Metaheuristic search over fixed-length words on a finite alphabet."""

from .core import (
    BINARY,
    DIRECTIONS,
    Alphabet,
    Problem,
    StateToken,
    derive_rng,
    hamming_distance,
    neighbors,
    random_word,
    token_checkpoint,
    token_restore,
)

__version__ = "0.1.0"
