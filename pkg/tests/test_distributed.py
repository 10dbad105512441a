import os
import sys
import threading
import time
from collections import Counter

import pytest

from wordopt.config import parse_spec
from wordopt.core import token_checkpoint
from wordopt.distributed.basin import BasinHopping, BHParams, FarmDescents, LocalDescents, basin_hopping
from wordopt.distributed.executor import ExecSpec, ExecTimeout, UnexpectedExit, execute
from wordopt.distributed.factory import FactoryClient, FactoryServer, remote_pool
from wordopt.distributed.master import PartialResultError, master_run, min_best, worker_loop
from wordopt.distributed.tasks import execute_task, run_task
from wordopt.distributed.transport import InProcessHub, SocketChannel, SocketHub, join
from wordopt.distributed.wire import Kind, Message, TransportError, decode_frame, encode_frame
from wordopt.runner import drive
from wordopt.sa import SAParams, run_sa

from conftest import onemax_problem

PY = sys.executable

SPEC = """<?xml version="1.0"?>
<problem name="farm">
  <alphabet><symbol>0</symbol><symbol>1</symbol></alphabet>
  <n>10</n>
  <score name="random-table"><param name="seed" type="int">3</param></score>
  <metaheuristic name="sa"/>
  <stop><max_iterations>300</max_iterations></stop>
</problem>
"""


def test_frame_round_trip_and_layout():
    msg = Message(Kind.RESULT, 2**40 + 5, b"payload")
    data = encode_frame(msg)
    assert data[:4] == (1 + 8 + 7).to_bytes(4, "big")
    assert data[4] == 2 and data[5:13] == (2**40 + 5).to_bytes(8, "big")
    back = decode_frame(data)
    assert (back.kind, back.job_id, back.payload) == (msg.kind, msg.job_id, msg.payload)
    with pytest.raises(TransportError):
        decode_frame(data[:-1])
    with pytest.raises(TransportError):
        decode_frame((9).to_bytes(4, "big") + bytes([77]) + bytes(8))


# --- executor ---------------------------------------------------------------

def test_execute_echo_and_streams():
    res = execute(ExecSpec(f"{PY} -c \"print('hello')\""))
    assert res.exit_code == 0 and res.stdout == "hello\n" and res.duration > 0
    res = execute(ExecSpec([PY, "-c", "import sys; sys.stderr.write('oops')"]))
    assert res.stderr == "oops" and res.stdout == ""


def test_execute_timeout_kills():
    spec = ExecSpec([PY, "-c", "import os, time; print(os.getpid(), flush=True); time.sleep(60)"], timeout=1)
    with pytest.raises(ExecTimeout) as info:
        execute(spec)
    pid = int(info.value.output.split()[0])
    time.sleep(0.2)
    with pytest.raises(ProcessLookupError):
        os.kill(pid, 0)


def test_execute_expected_codes_and_env():
    with pytest.raises(UnexpectedExit):
        execute(ExecSpec([PY, "-c", "raise SystemExit(2)"]))
    res = execute(ExecSpec([PY, "-c", "raise SystemExit(2)"], expected_codes=(0, 2)))
    assert res.exit_code == 2 and res.expected
    os.environ["WORDOPT_SECRET_TEST"] = "leak"
    try:
        res = execute(ExecSpec([PY, "-c", "import os; print(os.environ.get('WORDOPT_SECRET_TEST'), os.environ.get('X'))"],
                               env={"X": "y"}))
    finally:
        del os.environ["WORDOPT_SECRET_TEST"]
    assert res.stdout.split() == ["None", "y"]
    with pytest.raises(ValueError):
        ExecSpec("echo {missing}").argv()
    with pytest.raises(ValueError):
        ExecSpec("echo", timeout=0).argv()


# --- worker loop --------------------------------------------------------------

def test_worker_shutdown_first():
    hub = InProcessHub()
    ch = hub.add_endpoint("w")
    hub.send("w", Message(Kind.SHUTDOWN, 0))
    assert worker_loop(ch, {}) == 0


def test_worker_handler_error_becomes_error_message():
    hub = InProcessHub()
    ch = hub.add_endpoint("w")
    hub.send("w", Message(Kind.TASK, 7, b"x"))
    hub.send("w", Message(Kind.SHUTDOWN, 0))

    def bad(payload):
        raise RuntimeError("handler blew up")

    worker_loop(ch, {Kind.TASK: bad})
    msg = hub.recv(1)
    assert msg.kind == Kind.ERROR and msg.job_id == 7 and b"handler blew up" in msg.payload


def test_worker_bookkeeping_100_tasks():
    hub = InProcessHub().start_workers(3, {Kind.TASK: lambda p: p[::-1]})
    for i in range(100):
        hub.send(f"w{i % 3}", Message(Kind.TASK, i + 1, str(i).encode()))
    got = [hub.recv(5) for _ in range(100)]
    hub.close()
    assert Counter(m.job_id for m in got) == Counter(range(1, 101))
    assert all(m.kind == Kind.RESULT and m.payload == str(m.job_id - 1).encode()[::-1] for m in got)


# --- master_run -----------------------------------------------------------------

def test_single_task_equals_local_run():
    hub = InProcessHub().start_workers(1)
    try:
        merged, tokens = master_run([run_task(SPEC, 4)], hub)
    finally:
        hub.close()
    spec = parse_spec(SPEC)
    from wordopt.config import build_engine
    engine = build_engine(spec)
    local = drive(engine, engine.start(4))
    assert merged == local and tokens == [local]


def test_min_reduction_and_ties():
    hub = InProcessHub().start_workers(2)
    try:
        merged, tokens = master_run([run_task(SPEC, s) for s in range(5)], hub)
    finally:
        hub.close()
    assert all(merged.best_score <= t.best_score for t in tokens)
    first = min(range(5), key=lambda i: (tokens[i].best_score, i))
    assert merged == tokens[first]
    a, b = tokens[0].copy(), tokens[0].copy()
    assert min_best([(1, a), (0, b)]) is b


def test_retry_then_partial_result():
    calls = Counter()
    lock = threading.Lock()

    def flaky(payload):
        with lock:
            calls[payload] += 1
            n = calls[payload]
        if payload == b"always":
            raise RuntimeError("bad")
        if payload == b"once" and n == 1:
            raise RuntimeError("transient")
        return execute_task(run_task(SPEC, 1))

    hub = InProcessHub().start_workers(2, {Kind.TASK: flaky})
    try:
        merged, _ = master_run([b"once", b"fine"], hub)
        assert calls[b"once"] == 2
        with pytest.raises(PartialResultError) as info:
            master_run([b"fine", b"always", b"fine2"], hub)
        assert info.value.completed == [0, 2] and calls[b"always"] == 2
    finally:
        hub.close()


def test_master_times_out_and_redispatches():
    seen = Counter()

    def slow_first(payload):
        seen[payload] += 1
        if seen[payload] == 1:
            time.sleep(1.5)
        return execute_task(run_task(SPEC, 2))

    hub = InProcessHub().start_workers(2, {Kind.TASK: slow_first})
    try:
        merged, _ = master_run([b"a"], hub, task_timeout=0.5)
    finally:
        hub.close()
    assert seen[b"a"] == 2 and merged.iteration == 300


def _socket_workers(hub, count):
    threads = [threading.Thread(target=join, args=(hub.address, f"s{i}"), daemon=True) for i in range(count)]
    for t in threads:
        t.start()
    hub.accept(count, timeout=10)
    return threads


def test_inprocess_vs_socket_threads_identical():
    tasks = [run_task(SPEC, s) for s in range(8)]
    hub = InProcessHub().start_workers(3)
    try:
        a, ta = master_run(tasks, hub)
    finally:
        hub.close()
    shub = SocketHub()
    threads = _socket_workers(shub, 3)
    try:
        b, tb = master_run(tasks, shub)
        assert shub.ping_all(5) == {"s0", "s1", "s2"}
    finally:
        shub.close()
    for t in threads:
        t.join(5)
    assert token_checkpoint(a) == token_checkpoint(b)
    assert [token_checkpoint(t) for t in ta] == [token_checkpoint(t) for t in tb]


def test_socket_worker_loss_reported():
    shub = SocketHub()
    sock_side = []

    def fake_worker():
        ch = SocketChannel.connect(shub.address, "ghost")
        ch.send(Message(Kind.HEARTBEAT, 0, b"ghost"))
        sock_side.append(ch)
        ch.recv(5)  # take the task and die
        ch.close()

    t = threading.Thread(target=fake_worker, daemon=True)
    t.start()
    shub.accept(1, timeout=10)
    try:
        with pytest.raises((PartialResultError, TransportError)):
            master_run([run_task(SPEC, 0)], shub, task_timeout=5)
    finally:
        shub.close()


# --- factory ----------------------------------------------------------------------

def _alive(pid):
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    try:
        # reaped children raise above; zombies are reported by waitpid elsewhere
        with open(f"/proc/{pid}/stat") as fh:
            return fh.read().split()[2] != "Z"
    except FileNotFoundError:
        return False


def test_factory_spawn_heartbeat_release():
    factory = FactoryServer(reap_interval=0.2).start()
    try:
        client = FactoryClient(factory.address)
        hub = SocketHub()
        handle = client.spawn(2, hub.address)
        assert handle.worker_count == 2 and len(set(handle.pids)) == 2
        hub.accept(2, timeout=60)
        assert hub.ping_all(10) == set(handle.endpoints)
        status = client.heartbeat(handle.pool_id)
        assert status["pools"][handle.pool_id]["live"] == 2
        hub.close()
        assert client.release(handle.pool_id) is True
        deadline = time.time() + 10
        while any(_alive(p) for p in handle.pids) and time.time() < deadline:
            time.sleep(0.1)
        assert not any(_alive(p) for p in handle.pids)
        assert factory.pools == {}
        client.close()
    finally:
        factory.stop()


def test_factory_concurrent_spawns_disjoint():
    factory = FactoryServer().start()
    hubs = [SocketHub(), SocketHub()]
    handles = [None, None]
    try:
        def ask(i):
            c = FactoryClient(factory.address)
            handles[i] = c.spawn(1, hubs[i].address)
            c.close()

        threads = [threading.Thread(target=ask, args=(i,)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(30)
        assert handles[0].pool_id != handles[1].pool_id
        assert not set(handles[0].pids) & set(handles[1].pids)
        for h in hubs:
            h.accept(1, timeout=60)
    finally:
        for h in hubs:
            h.close()
        factory.stop()
    assert factory.pools == {}


def test_factory_reaps_expired_lease():
    factory = FactoryServer(ttl=0.5, reap_interval=0.1).start()
    try:
        c = FactoryClient(factory.address)
        hub = SocketHub()
        handle = c.spawn(1, hub.address)
        deadline = time.time() + 10
        while factory.pools and time.time() < deadline:
            time.sleep(0.1)
        assert factory.pools == {}
        # the reaper drops the pool from the registry, then terminates its processes
        while _alive(handle.pids[0]) and time.time() < deadline:
            time.sleep(0.1)
        assert not _alive(handle.pids[0])
        c.close()
        hub.close()
    finally:
        factory.stop()


def test_factory_rejects_bad_request():
    factory = FactoryServer().start()
    try:
        c = FactoryClient(factory.address)
        with pytest.raises(TransportError):
            c.spawn(0, "127.0.0.1:1")
        c.close()
    finally:
        factory.stop()


def test_cross_process_equivalence_via_factory():
    tasks = [run_task(SPEC, s) for s in range(8)]
    hub = InProcessHub().start_workers(3)
    try:
        a, _ = master_run(tasks, hub)
    finally:
        hub.close()
    factory = FactoryServer().start()
    try:
        with remote_pool(factory.address, 3) as shub:
            b, _ = master_run(tasks, shub)
            pids = [p for pool in factory.pools.values() for p in pool.handle.pids]
    finally:
        factory.stop()
    assert token_checkpoint(a) == token_checkpoint(b)
    assert factory.pools == {} and not any(_alive(p) for p in pids)


# --- basin hopping ------------------------------------------------------------------

def test_basin_degenerate_equals_sa():
    problem = onemax_problem(24)
    sa_tok, sa_rows = run_sa(problem, SAParams(max_iterations=2000), seed=3)
    bh = BasinHopping(problem, BHParams(max_iterations=2000, descent_width=1, descent_cap=0))
    bh_rows = []
    tok = drive(bh, bh.start(3), sink=bh_rows.append)
    assert [r.as_tuple() for r in bh_rows] == [r.as_tuple() for r in sa_rows]
    assert tok.best == sa_tok.best and tok.current == sa_tok.current


def test_descent_never_worsens():
    problem = onemax_problem(16)
    bh = BasinHopping(problem, BHParams(max_iterations=200))
    tok = bh.start(1)
    desc = LocalDescents(problem)
    for it in range(20):
        bh.step(tok)
        for r in desc.descend(tok, 1, it, 2, 50, None):
            assert r.current_score <= tok.current_score


def test_basin_farm_matches_local():
    spec = parse_spec(SPEC)
    from wordopt.config import build_problem
    problem = build_problem(spec)
    params = BHParams(max_iterations=60, descent_width=2, descent_cap=20)
    local = drive(BasinHopping(problem, params), BasinHopping(problem, params).start(5))
    hub = InProcessHub().start_workers(2)
    try:
        farm_engine = BasinHopping(problem, params, FarmDescents(hub, SPEC))
        farmed = drive(farm_engine, farm_engine.start(5))
    finally:
        hub.close()
    assert farmed.best == local.best and farmed.best_score == local.best_score
    assert farmed.current == local.current and farmed.iteration == local.iteration


def test_multi_master_sync():
    problem = onemax_problem(20)
    best, rows = basin_hopping(problem, BHParams(max_iterations=400, chain_length=50, descent_cap=10), seed=2,
                               masters=3)
    assert best.best_score == min(r.best_score for r in rows)
    assert all(b.best_score <= a.best_score for a, b in zip(rows, rows[1:]))
