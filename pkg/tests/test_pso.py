"""Tests for the particle swarm optimizer."""

import numpy as np
import pytest

from ndrsim.pso import (PsoConfig, PsoState, clamp_to_box, pso_minimize,
                        stopping_rule)


def sphere(x):
    return float(np.sum(x * x))


def cfg_10d(**kw):
    base = dict(n_particles=10, lower=np.full(4, -5.0),
                upper=np.full(4, 5.0), max_iterations=50,
                no_improve_window=50, seed=0)
    base.update(kw)
    return PsoConfig(**base)


class TestConfig:
    def test_inertia_schedule_endpoints(self):
        cfg = cfg_10d(max_iterations=10)
        assert cfg.inertia(0) == pytest.approx(0.9)
        assert cfg.inertia(9) == pytest.approx(0.4)
        assert cfg.inertia(99) == pytest.approx(0.4)

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            cfg_10d(lower=np.zeros(4), upper=np.zeros(4))
        with pytest.raises(ValueError):
            cfg_10d(lower=np.array([0.0, np.inf, 0, 0]))

    def test_particle_count_checked(self):
        with pytest.raises(ValueError):
            cfg_10d(n_particles=0)

    def test_clamp_to_box(self):
        out = clamp_to_box(np.array([-9.0, 0.0, 9.0]), -5.0, 5.0)
        assert out.tolist() == [-5.0, 0.0, 5.0]


class TestStoppingRule:
    def test_iteration_cap(self):
        assert stopping_rule([3.0, 2.0, 1.0], window=20, max_iterations=2)
        assert not stopping_rule([3.0, 2.0, 1.0], window=20, max_iterations=5)

    def test_stall_window(self):
        history = [5.0, 4.0] + [4.0] * 3
        assert stopping_rule(history, window=3, max_iterations=100)
        assert not stopping_rule(history[:-1], window=3, max_iterations=100)

    def test_improvement_resets_window(self):
        history = [5.0, 4.0, 4.0, 3.9]
        assert not stopping_rule(history, window=2, max_iterations=100)


class TestMinimize:
    def test_converges_on_sphere(self):
        res = pso_minimize(sphere, cfg_10d())
        assert res.gbest_f < 1e-2
        assert sphere(res.gbest) == pytest.approx(res.gbest_f)

    def test_gbest_history_monotone(self):
        res = pso_minimize(sphere, cfg_10d(seed=3))
        assert all(b <= a for a, b in zip(res.best_history,
                                          res.best_history[1:]))

    def test_deterministic_per_seed(self):
        a = pso_minimize(sphere, cfg_10d(seed=5))
        b = pso_minimize(sphere, cfg_10d(seed=5))
        c = pso_minimize(sphere, cfg_10d(seed=6))
        assert np.array_equal(a.gbest, b.gbest)
        assert a.best_history == b.best_history
        assert not np.array_equal(a.gbest, c.gbest)

    def test_initial_gbest_is_best_initial_particle(self):
        seen = []

        def spy(x):
            seen.append(sphere(x))
            return seen[-1]

        res = pso_minimize(spy, cfg_10d(max_iterations=0, n_particles=6))
        assert res.best_history[0] == min(seen[:6])
        assert res.evaluations == 6

    def test_evaluation_count(self):
        res = pso_minimize(sphere, cfg_10d(max_iterations=7, n_particles=5))
        assert res.evaluations == 5 * (7 + 1)
        assert res.iterations == 7

    def test_stalls_stop_early(self):
        res = pso_minimize(lambda x: 1.0,
                           cfg_10d(max_iterations=100, no_improve_window=4))
        assert res.iterations == 4
        assert res.gbest_f == 1.0

    def test_non_finite_values_never_become_pbest(self):
        def patchy(x):
            return float("nan") if x[0] > 0 else sphere(x)

        res = pso_minimize(patchy, cfg_10d(seed=2))
        assert np.isfinite(res.gbest_f)
        assert any("non-finite" in e[2] for e in res.events)
        assert all(np.isfinite(res.state.pbest_f))

    def test_positions_stay_in_box(self):
        res = pso_minimize(sphere, cfg_10d(seed=7))
        assert np.all(res.state.positions >= -5.0)
        assert np.all(res.state.positions <= 5.0)

    def test_batch_evaluator_equals_serial(self):
        serial = pso_minimize(sphere, cfg_10d(seed=9))
        batched = pso_minimize(None, cfg_10d(seed=9),
                               evaluator=lambda xs: [sphere(x) for x in xs])
        assert np.array_equal(serial.gbest, batched.gbest)
        assert serial.best_history == batched.best_history

    def test_progress_callback_sees_every_iteration(self):
        rows = []
        pso_minimize(sphere, cfg_10d(max_iterations=5),
                     progress=lambda k, best, mean, wall: rows.append(k))
        assert rows == [1, 2, 3, 4, 5]


class TestCheckpointing:
    def test_state_round_trip(self, tmp_path):
        res = pso_minimize(sphere, cfg_10d(max_iterations=3))
        path = tmp_path / "state.npz"
        res.state.save(path)
        loaded = PsoState.load(path)
        assert np.array_equal(loaded.positions, res.state.positions)
        assert np.array_equal(loaded.pbest_f, res.state.pbest_f)
        assert loaded.gbest_f == res.state.gbest_f
        assert loaded.iteration == res.state.iteration
        assert loaded.rng_states == res.state.rng_states

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        # constant inertia so the schedule does not depend on the iteration
        # cap of the interrupted leg
        flat = dict(inertia_start=0.6, inertia_end=0.6)
        full = pso_minimize(sphere, cfg_10d(max_iterations=20, **flat))
        head = pso_minimize(sphere, cfg_10d(max_iterations=8, **flat),
                            checkpoint_path=tmp_path / "ck.npz")
        state = PsoState.load(tmp_path / "ck.npz")
        tail = pso_minimize(sphere, cfg_10d(max_iterations=20, **flat),
                            resume_state=state)
        assert np.array_equal(tail.gbest, full.gbest)
        assert tail.best_history == full.best_history
        assert head.iterations == 8
