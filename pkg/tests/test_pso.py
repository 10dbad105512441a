import numpy as np
import pytest

from wordopt.core import Alphabet, ContractError
from wordopt.pso import (
    PSOParams, ParticleSwarm, Swarm, anchors, discretize, pso_step, run_pso, sigmoid, velocity_update,
)

from conftest import onemax_problem, table_problem


def test_velocity_update_identity_and_decay():
    v = np.array([0.3, -1.2, 2.0])
    x = np.array([0, 1, 1])
    assert np.array_equal(velocity_update(v, x, [1, 0, 0], [0, 0, 1], 1.0, 0.0, 0.0, 4.0), v)
    assert np.allclose(velocity_update(v, x, x, x, 0.7, 1.49, 1.49, 4.0), 0.7 * v)


def test_velocity_update_worked_scalar():
    assert velocity_update([0.1], [0], [1], [1], 0.7, 1.0, 2.0, 4.0)[0] == pytest.approx(3.07, rel=1e-12)
    assert velocity_update([1.0], [0], [1], [1], 1.0, 2.0, 2.0, 4.0)[0] == 4.0


def test_velocity_update_fuzz_against_scalar_loop():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        v = rng.uniform(-4, 4, n)
        x, p, g = (rng.integers(0, 4, n) for _ in range(3))
        w, f1, f2, vmax = rng.uniform(0, 1), rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0.5, 6)
        got = velocity_update(v, x, p, g, w, f1, f2, vmax)
        for i in range(n):
            ref = w * float(v[i]) + f1 * (int(p[i]) - int(x[i])) + f2 * (int(g[i]) - int(x[i]))
            ref = min(vmax, max(-vmax, ref))
            assert got[i] == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_stochastic_mode_scales_terms():
    rng = np.random.default_rng(4)
    out = velocity_update(np.zeros(1000), np.zeros(1000), np.ones(1000), np.ones(1000), 0.0, 1.0, 1.0, 4.0, rng)
    assert 0 <= out.min() and out.max() <= 2.0 and abs(out.mean() - 1.0) < 0.05


def test_discretize_examples():
    assert discretize(0.0, 2) == 0
    assert discretize(20.0, 2) == 1
    assert discretize(-20.0, 2) == 0
    assert discretize(1.0, 3) == 1
    assert discretize(np.array([-5.0, 0.0, 5.0]), 3).tolist() == [0, 1, 2]
    assert anchors(4).tolist() == pytest.approx([0, 1 / 3, 2 / 3, 1])
    with pytest.raises(ContractError):
        anchors(1)


def test_sigmoid_and_discretize_ranges():
    v = np.linspace(-30, 30, 601)
    s = sigmoid(v)
    assert np.all((s >= 0) & (s <= 1))
    for m in (2, 3, 5):
        d = discretize(v, m)
        assert d.min() >= 0 and d.max() < m


def test_fixed_point_at_optimum():
    problem = onemax_problem(6)
    zero = [0] * 6
    state = {"positions": [list(zero)] * 3, "velocities": [[0.0] * 6 for _ in range(3)], "scores": [0.0] * 3,
             "pbest": [list(zero)] * 3, "pbest_scores": [0.0] * 3}
    pso_step(Swarm(state), PSOParams(), problem, np.random.default_rng(0))
    assert state["positions"] == [zero] * 3
    assert state["velocities"] == [[0.0] * 6] * 3


def test_swarm_invariants_over_run():
    problem, _ = table_problem(6)
    params = PSOParams(max_iterations=60)
    engine = ParticleSwarm(problem, params)
    tok = engine.start(2)
    last_g = Swarm(tok.state).global_best()[1]
    last_p = list(tok.state["pbest_scores"])
    for _ in range(60):
        row = engine.step(tok)
        g = Swarm(tok.state).global_best()[1]
        assert g <= last_g and g == min(tok.state["pbest_scores"])
        assert all(a <= b for a, b in zip(tok.state["pbest_scores"], last_p))
        assert max(abs(c) for v in tok.state["velocities"] for c in v) <= params.v_max
        assert set(row.extra) == {"swarm_mean", "swarm_std"}
        last_g, last_p = g, list(tok.state["pbest_scores"])
    assert tok.best_score == last_g


def test_single_particle_runs():
    tok, rows = run_pso(onemax_problem(8), PSOParams(swarm_size=1, max_iterations=30), seed=0)
    assert len(rows) == 30 and tok.best_score >= 0


def test_determinism():
    problem, _ = table_problem(3)
    a = run_pso(problem, PSOParams(max_iterations=100), seed=5)
    b = run_pso(problem, PSOParams(max_iterations=100), seed=5)
    assert a[0] == b[0] and [r.as_tuple() for r in a[1]] == [r.as_tuple() for r in b[1]]


def test_multi_symbol_alphabet():
    quad = Alphabet(tuple("ACGT"))
    problem = onemax_problem(8, quad)
    tok, _ = run_pso(problem, PSOParams(max_iterations=50, stochastic=True), seed=0)
    assert all(0 <= s < 4 for s in tok.best)


def test_params_validation():
    for bad in (dict(swarm_size=0), dict(v_max=0), dict(init_velocity=(1, -1)), dict(restart_after=0)):
        with pytest.raises(ContractError):
            PSOParams(**bad)


@pytest.mark.slow
def test_onemax_16_statistical():
    problem = onemax_problem(16)
    hits = sum(run_pso(problem, PSOParams(stop_threshold=0), seed=s)[0].best_score == 0 for s in range(100))
    assert hits >= 90
