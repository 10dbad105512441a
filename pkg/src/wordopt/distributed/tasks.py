"""Task payloads exchanged with workers and the worker-side executor for them.

A payload is UTF-8 JSON naming the problem document, a seed and what to do.
Tokens travel as base64 of the checkpoint bytes; results are raw checkpoint bytes.
"""

from __future__ import annotations

import base64
import json

from ..core import derive_rng, token_checkpoint, token_restore


def run_task(spec_text: str, seed: int, spec_format: str = "xml") -> bytes:
    return json.dumps({"op": "run", "spec": spec_text, "format": spec_format, "seed": int(seed)}).encode()


def descent_task(spec_text, token, seed, labels, cap, patience=None, spec_format="xml") -> bytes:
    return json.dumps({
        "op": "descent",
        "spec": spec_text,
        "format": spec_format,
        "seed": int(seed),
        "labels": list(labels),
        "cap": int(cap),
        "patience": patience,
        "token": base64.b64encode(token_checkpoint(token)).decode("ascii"),
    }).encode()


def execute_task(payload: bytes) -> bytes:
    from ..config import build_engine, build_problem, parse_spec
    from ..runner import drive
    from ..sa import greedy_descent

    task = json.loads(payload.decode("utf-8"))
    spec = parse_spec(task["spec"], task.get("format"))
    if task["op"] == "run":
        engine = build_engine(spec)
        token = drive(engine, engine.start(task["seed"]))
        return token_checkpoint(token)
    if task["op"] == "descent":
        problem = build_problem(spec)
        token = token_restore(base64.b64decode(task["token"]))
        token.rng = derive_rng(task["seed"], *task["labels"])
        greedy_descent(problem, token, token.rng, task["cap"], task["patience"])
        return token_checkpoint(token)
    raise ValueError(f"unknown task op {task['op']!r}")
