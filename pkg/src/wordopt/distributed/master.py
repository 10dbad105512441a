"""Master/worker task farm over any Hub/Channel transport."""

from __future__ import annotations

import time
import traceback
from typing import Callable, Optional, Sequence

from ..core import StateToken, token_restore
from ..logs import get_logger
from .wire import Kind, Message, TransportError

log = get_logger("master")


class PartialResultError(RuntimeError):
    def __init__(self, message, completed, results):
        super().__init__(message)
        self.completed = sorted(completed)
        self.results = results


def default_handlers() -> dict:
    from .tasks import execute_task

    return {Kind.TASK: execute_task}


def worker_loop(channel, handlers: Optional[dict] = None) -> int:
    """Serve messages until SHUTDOWN; returns the number of results sent.

    Handler exceptions are reported as ERROR messages carrying the job id.
    """
    handlers = default_handlers() if handlers is None else handlers
    wlog = get_logger("worker")
    done = 0
    while True:
        try:
            msg = channel.recv()
        except TransportError:
            wlog.info("channel closed, exiting")
            return done
        if msg is None:
            continue
        if msg.kind == Kind.SHUTDOWN:
            wlog.info("shutdown after %d results", done)
            for h in wlog.handlers:
                h.flush()
            return done
        if msg.kind == Kind.HEARTBEAT:
            channel.send(Message(Kind.HEARTBEAT, msg.job_id))
            continue
        handler = handlers.get(msg.kind)
        if handler is None:
            channel.send(Message(Kind.ERROR, msg.job_id, f"no handler for {msg.kind.name}".encode()))
            continue
        try:
            out = handler(msg.payload)
        except Exception:
            text = traceback.format_exc()
            wlog.error("job failed: %s", text.strip().splitlines()[-1], extra={"job_id": msg.job_id})
            channel.send(Message(Kind.ERROR, msg.job_id, text.encode()))
            continue
        channel.send(Message(Kind.RESULT, msg.job_id, out))
        done += 1


def min_best(results: Sequence) -> StateToken:
    """Token with the lowest best_score; ties go to the lowest task index."""
    index, token = min(results, key=lambda r: (r[1].best_score, r[0]))
    return token


def master_run(
    tasks: Sequence[bytes],
    hub,
    merge: Callable = min_best,
    task_timeout: Optional[float] = 600.0,
    retries: int = 1,
):
    """Farm ``tasks`` round-robin over ``hub`` and merge their result tokens.

    Returns (merged token, tokens in task order). Each task whose worker
    errors, dies or times out is re-dispatched ``retries`` times; after that
    PartialResultError lists the completed task indices.
    """
    if not tasks:
        raise ValueError("master_run needs at least one task")
    endpoints = list(hub.endpoints())
    if not endpoints:
        raise TransportError("no workers in pool")
    alive = list(endpoints)
    results = {}
    attempts = {i: 0 for i in range(len(tasks))}
    pending = {}  # job_id -> (endpoint, deadline)
    failed = {}
    rr = 0

    def dispatch(i):
        nonlocal rr
        if not alive:
            failed[i] = "no live workers"
            return
        ep = alive[rr % len(alive)]
        rr += 1
        attempts[i] += 1
        deadline = time.monotonic() + task_timeout if task_timeout else float("inf")
        job_id = i + 1
        try:
            hub.send(ep, Message(Kind.TASK, job_id, tasks[i]))
        except TransportError as exc:
            log.warning("send to %s failed: %s", ep, exc, extra={"job_id": job_id})
            alive.remove(ep)
            retry_or_fail(i, str(exc))
            return
        pending[job_id] = (ep, deadline)
        log.info("dispatched to %s (attempt %d)", ep, attempts[i], extra={"job_id": job_id})

    def retry_or_fail(i, reason):
        if attempts[i] <= retries:
            dispatch(i)
        else:
            failed[i] = reason

    for i in range(len(tasks)):
        dispatch(i)

    while pending:
        now = time.monotonic()
        next_deadline = min(d for _, d in pending.values())
        wait = None if next_deadline == float("inf") else max(0.0, next_deadline - now)
        msg = hub.recv(timeout=wait if wait is None else min(wait, 1.0))
        if msg is None:
            now = time.monotonic()
            for job_id, (ep, deadline) in list(pending.items()):
                if now >= deadline:
                    del pending[job_id]
                    log.warning("timed out on %s", ep, extra={"job_id": job_id})
                    retry_or_fail(job_id - 1, "timeout")
            continue
        if msg.kind == Kind.ERROR and msg.job_id == 0:
            # transport-level loss of a worker: re-dispatch what it held
            if msg.sender in alive:
                alive.remove(msg.sender)
            for job_id, (ep, _) in list(pending.items()):
                if ep == msg.sender:
                    del pending[job_id]
                    retry_or_fail(job_id - 1, f"worker {ep} lost")
            continue
        if msg.job_id not in pending:
            continue
        del pending[msg.job_id]
        i = msg.job_id - 1
        if msg.kind == Kind.RESULT:
            results[i] = token_restore(msg.payload)
        elif msg.kind == Kind.ERROR:
            log.warning("error from %s: %s", msg.sender, msg.payload.decode(errors="replace").strip().splitlines()[-1:],
                        extra={"job_id": msg.job_id})
            retry_or_fail(i, msg.payload.decode(errors="replace"))

    if failed:
        raise PartialResultError(
            f"{len(failed)} of {len(tasks)} tasks failed: {sorted(failed)}", results.keys(), results
        )
    ordered = [results[i] for i in range(len(tasks))]
    return merge(list(enumerate(ordered))), ordered
