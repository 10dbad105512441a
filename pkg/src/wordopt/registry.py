"""Name -> factory tables for scores, moves, start words, criteria and metaheuristics."""

from __future__ import annotations

import inspect

from . import problems, saw
from .core import ContractError, HammingMove
from .sa import CRITERIA


class RegistryError(ContractError):
    pass


def _sa(problem, **params):
    from .sa import SAParams, SimulatedAnnealing

    # documents are flat, so the threshold criterion's parameter travels as "threshold"
    if "threshold" in params:
        params["criterion_params"] = {"threshold": params.pop("threshold")}
    return SimulatedAnnealing(problem, SAParams(**params))


def _ga(problem, **params):
    from .ga import GAParams, GeneticAlgorithm

    return GeneticAlgorithm(problem, GAParams(**params))


def _pso(problem, **params):
    from .pso import ParticleSwarm, PSOParams

    return ParticleSwarm(problem, PSOParams(**params))


def _basin(problem, **params):
    from .distributed.basin import BasinHopping, BHParams

    return BasinHopping(problem, BHParams(**params))


REGISTRY = {
    "score": {
        "onemax": problems.OneMax,
        "random-table": problems.RandomTable,
        "planted-linear": problems.PlantedLinear,
        "pivot-count": problems.PivotCount,
        "hp": problems.HPContacts,
        "subset-synthetic": problems.SubsetSynthetic,
        "subset-external": problems.SubsetExternal,
    },
    "move": {
        "hamming": lambda alphabet, n, radius=1: HammingMove(alphabet, radius),
        "pivot": lambda alphabet, n, retries=50: saw.PivotMoveFunction(retries),
    },
    "initial": {
        "random": problems.random_start,
        "straight-line": problems.straight_line_start,
        "elongation": problems.elongation_start,
    },
    "metaheuristic": {
        "sa": _sa,
        "ga": _ga,
        "pso": _pso,
        "basin-hopping": _basin,
    },
    "criterion": CRITERIA,
}


def listing() -> str:
    return "; ".join(f"{kind}: {', '.join(sorted(names))}" for kind, names in REGISTRY.items())


def accepted_params(kind: str, name: str) -> list:
    factory = lookup(kind, name)
    if kind == "metaheuristic":
        from dataclasses import fields

        from .distributed.basin import BHParams
        from .ga import GAParams
        from .pso import PSOParams
        from .sa import SAParams

        cls = {"sa": SAParams, "ga": GAParams, "pso": PSOParams, "basin-hopping": BHParams}[name]
        extra = ["threshold"] if name == "sa" else []
        return [f.name for f in fields(cls)] + extra
    sig = inspect.signature(factory)
    return [p for p in sig.parameters if p not in ("alphabet", "n", "self")]


def lookup(kind: str, name: str):
    if kind not in REGISTRY:
        raise RegistryError(f"unknown registry kind {kind!r}; registry: {listing()}")
    try:
        return REGISTRY[kind][name]
    except KeyError:
        raise RegistryError(f"unknown {kind} {name!r}; registry: {listing()}") from None


def registry_resolve(kind: str, name: str, params=None, **context):
    """Instantiate ``name`` of ``kind``; ``context`` carries alphabet/n or the problem."""
    factory = lookup(kind, name)
    params = dict(params or {})
    allowed = accepted_params(kind, name)
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise RegistryError(f"{kind} {name!r} does not accept {unknown}; accepted: {allowed}")
    try:
        return factory(**context, **params)
    except TypeError as exc:
        raise RegistryError(f"cannot build {kind} {name!r}: {exc}") from exc


def register(kind: str, name: str, factory) -> None:
    """Add a user factory; it must follow the calling convention of its kind."""
    REGISTRY.setdefault(kind, {})[name] = factory
