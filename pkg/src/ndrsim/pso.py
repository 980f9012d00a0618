"""Particle swarm optimization over a box-bounded continuous domain.

Velocity update per particle i at iteration k:

    V <- w_k V + c1 r1 (pbest - X) + c2 r2 (gbest - X)
    X <- clamp(X + V) into the box

with r1, r2 uniform [0, 1] vectors (one component per dimension) drawn once
per particle per iteration from a stream derived from (seed, particle index),
so evaluation concurrency never reorders draws. The pbest/gbest reduction is
a sequential merge by particle index, independent of evaluation completion
order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int
    lower: np.ndarray
    upper: np.ndarray
    c1: float = 2.0
    c2: float = 2.0
    inertia_start: float = 0.9
    inertia_end: float = 0.4
    max_iterations: int = 45
    no_improve_window: int = 20
    seed: int = 0
    velocity_clamp: float = 0.5  # fraction of box width per dimension

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if self.no_improve_window < 1:
            raise ValueError("no-improvement window must be >= 1")
        if (self.lower.shape != self.upper.shape
                or np.any(self.lower >= self.upper)
                or not np.all(np.isfinite(self.lower))
                or not np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite with lower < upper")

    def inertia(self, k: int) -> float:
        if self.max_iterations <= 1:
            return self.inertia_start
        frac = min(k / (self.max_iterations - 1), 1.0)
        return self.inertia_start + frac * (self.inertia_end
                                            - self.inertia_start)


def clamp_to_box(x, lower, upper):
    return np.minimum(np.maximum(x, lower), upper)


def stopping_rule(best_history, window: int, max_iterations: int) -> bool:
    """True when the cap is reached or the best value stalled for `window`.

    `best_history` holds f(gbest) per iteration, index 0 = initialization.
    """
    k = len(best_history) - 1
    if k >= max_iterations:
        return True
    last_improvement = 0
    for i in range(1, len(best_history)):
        if best_history[i] < best_history[i - 1]:
            last_improvement = i
    return k - last_improvement >= window


@dataclass
class PsoState:
    positions: np.ndarray
    velocities: np.ndarray
    pbest: np.ndarray
    pbest_f: np.ndarray
    gbest: np.ndarray
    gbest_f: float
    iteration: int
    best_history: list
    rng_states: list

    def save(self, path) -> None:
        np.savez(path,
                 positions=self.positions, velocities=self.velocities,
                 pbest=self.pbest, pbest_f=self.pbest_f,
                 gbest=self.gbest, gbest_f=self.gbest_f,
                 iteration=self.iteration,
                 best_history=np.array(self.best_history),
                 rng_states=np.array(
                     [json.dumps(s) for s in self.rng_states]))

    @classmethod
    def load(cls, path) -> "PsoState":
        z = np.load(path, allow_pickle=False)
        return cls(positions=z["positions"], velocities=z["velocities"],
                   pbest=z["pbest"], pbest_f=z["pbest_f"],
                   gbest=z["gbest"], gbest_f=float(z["gbest_f"]),
                   iteration=int(z["iteration"]),
                   best_history=list(z["best_history"]),
                   rng_states=[json.loads(s) for s in z["rng_states"]])


@dataclass
class PsoResult:
    gbest: np.ndarray
    gbest_f: float
    best_history: list
    iterations: int
    evaluations: int
    events: list = field(default_factory=list)
    state: PsoState = None


def _make_rngs(cfg: PsoConfig):
    return [np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([cfg.seed, i])))
        for i in range(cfg.n_particles)]


def _restore_rngs(cfg: PsoConfig, states):
    rngs = _make_rngs(cfg)
    for rng, st in zip(rngs, states):
        rng.bit_generator.state = st
    return rngs


def pso_minimize(f, cfg: PsoConfig, progress=None, evaluator=None,
                 checkpoint_path=None, resume_state: PsoState = None
                 ) -> PsoResult:
    """Minimize a black-box objective over the configured box.

    `evaluator`, when given, maps a list of positions to a list of values
    (e.g. a process-pool map); results are consumed in particle order.
    Non-finite objective values never displace a particle's pbest.
    """
    dim = cfg.lower.size
    width = cfg.upper - cfg.lower
    vmax = cfg.velocity_clamp * width
    evaluate = evaluator or (lambda xs: [f(x) for x in xs])
    events = []
    n_evals = 0

    if resume_state is None:
        rngs = _make_rngs(cfg)
        positions = np.stack([
            cfg.lower + rng.uniform(size=dim) * width for rng in rngs])
        velocities = np.stack([
            rng.uniform(-1.0, 1.0, size=dim) * vmax for rng in rngs])
        values = np.array(evaluate(list(positions)), dtype=float)
        n_evals += cfg.n_particles
        values = np.where(np.isfinite(values), values, np.inf)
        pbest = positions.copy()
        pbest_f = values.copy()
        gi = int(np.argmin(pbest_f))
        state = PsoState(
            positions=positions, velocities=velocities,
            pbest=pbest, pbest_f=pbest_f,
            gbest=pbest[gi].copy(), gbest_f=float(pbest_f[gi]),
            iteration=0, best_history=[float(pbest_f[gi])],
            rng_states=[r.bit_generator.state for r in rngs])
    else:
        state = resume_state
        rngs = _restore_rngs(cfg, state.rng_states)

    t0 = time.monotonic()
    while not stopping_rule(state.best_history, cfg.no_improve_window,
                            cfg.max_iterations):
        k = state.iteration
        w = cfg.inertia(k)
        for i, rng in enumerate(rngs):
            r1 = rng.uniform(size=dim)
            r2 = rng.uniform(size=dim)
            v = (w * state.velocities[i]
                 + cfg.c1 * r1 * (state.pbest[i] - state.positions[i])
                 + cfg.c2 * r2 * (state.gbest - state.positions[i]))
            v = clamp_to_box(v, -vmax, vmax)
            state.velocities[i] = v
            state.positions[i] = clamp_to_box(
                state.positions[i] + v, cfg.lower, cfg.upper)

        values = np.array(evaluate(list(state.positions)), dtype=float)
        n_evals += cfg.n_particles
        for i in range(cfg.n_particles):
            fx = values[i]
            if not np.isfinite(fx):
                events.append((k + 1, i, "non-finite objective value"))
                continue
            if fx < state.pbest_f[i]:
                state.pbest_f[i] = fx
                state.pbest[i] = state.positions[i].copy()
        gi = int(np.argmin(state.pbest_f))
        if state.pbest_f[gi] < state.gbest_f:
            state.gbest_f = float(state.pbest_f[gi])
            state.gbest = state.pbest[gi].copy()

        state.iteration = k + 1
        state.best_history.append(state.gbest_f)
        state.rng_states = [r.bit_generator.state for r in rngs]
        if progress is not None:
            finite = values[np.isfinite(values)]
            progress(state.iteration, state.gbest_f,
                     float(finite.mean()) if finite.size else float("nan"),
                     time.monotonic() - t0)
        if checkpoint_path is not None:
            _atomic_save(state, checkpoint_path)

    return PsoResult(gbest=state.gbest.copy(), gbest_f=state.gbest_f,
                     best_history=list(state.best_history),
                     iterations=state.iteration, evaluations=n_evals,
                     events=events, state=state)


def _atomic_save(state: PsoState, path) -> None:
    import os
    tmp = str(path) + ".tmp"
    state.save(tmp)
    saved = tmp if os.path.exists(tmp) else tmp + ".npz"
    target = str(path) if str(path).endswith(".npz") else str(path)
    os.replace(saved, target)
