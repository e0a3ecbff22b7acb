"""Euler-Maruyama time stepping with collision-safe step halving.

Steps are explicit: drift * h plus the state-dependent noise map applied to
the exact Wiener increment of the interval.  When a proposal leaves the
admissible domain (non-finite, ordering violation in d = 1, or pair
separation below the collision guard) the interval is split in half and
retried on the refined Brownian path, up to 20 halvings; a step that still
fails is reported as collision_rejected.  Untruncated runs with a singular
pair potential treat that as a fatal diagnostic, truncated runs merely
count it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import System, build_system
from .noise import NoiseStream
from .state import CollisionError, ModelConfig, PhaseState

__all__ = [
    "StepResult",
    "TrajectorySummary",
    "CoupledResult",
    "step_em",
    "step_truncated",
    "simulate",
    "coupled_simulate",
    "Observer",
    "SampleCollector",
    "RunningMax",
    "RunningMin",
    "FirstExit",
    "TimeSeriesWriter",
    "MAX_HALVINGS",
]

MAX_HALVINGS = 20


class _IntervalFailed(Exception):
    pass


def _advance(system: System, q, p, noise: NoiseStream, level: int, idx: int,
             depth_left: int, counter: list):
    """One interval of length noise.dt(level); recursively halves on failure."""
    h = noise.dt(level)
    dq, dp = system.drift(q, p)
    nq, npp = system.noise(q, p, noise.increment(level, idx))
    q1 = q + h * dq + nq
    p1 = p + h * dp + npp
    if system.admissible(q1, p1):
        counter[0] += 1
        return q1, p1
    if depth_left == 0:
        raise _IntervalFailed()
    qm, pm = _advance(system, q, p, noise, level + 1, 2 * idx, depth_left - 1, counter)
    return _advance(system, qm, pm, noise, level + 1, 2 * idx + 1, depth_left - 1, counter)


@dataclass(frozen=True)
class StepResult:
    next_state: PhaseState
    status: str            # "accepted" | "substepped" | "collision_rejected"
    substeps: int = 1


def step_em(state: PhaseState, cfg: ModelConfig, potentials, diffusion=None,
            noise: Optional[NoiseStream] = None, step_index: int = 0) -> StepResult:
    """One Euler-Maruyama step of length cfg.dt from the given state."""
    system = build_system(cfg, potentials, diffusion)
    if noise is None:
        noise = NoiseStream(cfg.seed, state.positions.shape, cfg.dt)
    level = noise.level_for(cfg.dt)
    counter = [0]
    try:
        q1, p1 = _advance(system, state.positions, state.momenta, noise,
                          level, step_index, MAX_HALVINGS, counter)
    except _IntervalFailed:
        return StepResult(state, "collision_rejected", 0)
    status = "accepted" if counter[0] == 1 else "substepped"
    return StepResult(PhaseState(q1, p1, state.time + cfg.dt), status, counter[0])


def step_truncated(state: PhaseState, cfg: ModelConfig, potentials, diffusion=None,
                   noise: Optional[NoiseStream] = None, step_index: int = 0) -> StepResult:
    """step_em for the truncated variants; rejects untruncated configs."""
    if not cfg.is_truncated:
        raise ValueError("step_truncated requires a truncated model kind")
    return step_em(state, cfg, potentials, diffusion, noise, step_index)


# ---------------------------------------------------------------------------
# Observers
# ---------------------------------------------------------------------------

class Observer:
    """Callback collecting statistics along a run; sees batched arrays."""

    def observe(self, step: int, t: float, q: np.ndarray, p: np.ndarray):
        raise NotImplementedError

    def result(self):
        return None


class SampleCollector(Observer):
    """Collects extract(q, p) every ``stride`` steps after ``burn_in`` steps."""

    def __init__(self, extract, burn_in: int = 0, stride: int = 1):
        self.extract = extract
        self.burn_in = burn_in
        self.stride = max(1, stride)
        self._rows = []

    def observe(self, step, t, q, p):
        if step >= self.burn_in and step % self.stride == 0:
            self._rows.append(np.array(self.extract(q, p)))

    def result(self) -> np.ndarray:
        return np.stack(self._rows) if self._rows else np.empty((0,))


class RunningMax(Observer):
    def __init__(self, func):
        self.func = func
        self.value = None

    def observe(self, step, t, q, p):
        v = np.asarray(self.func(q, p), dtype=float)
        self.value = v.copy() if self.value is None else np.maximum(self.value, v)

    def result(self):
        return self.value


class RunningMin(Observer):
    def __init__(self, func):
        self.func = func
        self.value = None

    def observe(self, step, t, q, p):
        v = np.asarray(self.func(q, p), dtype=float)
        self.value = v.copy() if self.value is None else np.minimum(self.value, v)

    def result(self):
        return self.value


class FirstExit(Observer):
    """First time func(q, p) >= threshold, per trajectory (inf if never)."""

    def __init__(self, func, threshold: float):
        self.func = func
        self.threshold = threshold
        self.times = None

    def observe(self, step, t, q, p):
        v = np.asarray(self.func(q, p), dtype=float)
        if self.times is None:
            self.times = np.full(v.shape, np.inf)
        hit = (v >= self.threshold) & np.isinf(self.times)
        self.times = np.where(hit, t, self.times)

    def result(self):
        return self.times


class TimeSeriesWriter(Observer):
    """Appends delimited rows ``t q[0,0] .. q[N-1,d-1] p[0,0] .. p[N-1,d-1]``
    for one trajectory of the batch; one row per ``stride`` steps."""

    def __init__(self, path, stride: int = 1, trajectory: int = 0):
        self.path = path
        self.stride = max(1, stride)
        self.trajectory = trajectory
        self.rows = 0
        self._fh = open(path, "w")

    def observe(self, step, t, q, p):
        if step % self.stride:
            return
        qt = np.atleast_3d(q)[self.trajectory].ravel()
        pt = np.atleast_3d(p)[self.trajectory].ravel()
        vals = " ".join(f"{v:.17g}" for v in np.concatenate(([t], qt, pt)))
        self._fh.write(vals + "\n")
        self.rows += 1

    def result(self):
        self._fh.close()
        return {"path": str(self.path), "rows": self.rows}


# ---------------------------------------------------------------------------
# Trajectory drivers
# ---------------------------------------------------------------------------

@dataclass
class TrajectorySummary:
    positions: np.ndarray          # (B, N, d)
    momenta: np.ndarray
    time: float
    steps: int
    collision_rejected: int
    substeps: int
    observations: dict = field(default_factory=dict)

    @property
    def final_state(self) -> PhaseState:
        if self.positions.shape[0] != 1:
            raise ValueError("final_state is only defined for a single-trajectory run")
        return PhaseState(self.positions[0], self.momenta[0], self.time)


def _batched_initial(initial, batch: int):
    if isinstance(initial, PhaseState):
        q0, p0 = initial.positions, initial.momenta
    else:
        q0, p0 = initial
        q0 = np.asarray(q0, dtype=float)
        p0 = np.asarray(p0, dtype=float)
    if q0.ndim == 2:
        q0 = np.broadcast_to(q0, (batch,) + q0.shape)
        p0 = np.broadcast_to(p0, (batch,) + p0.shape)
    return np.array(q0, dtype=float), np.array(p0, dtype=float)


def _step_count(horizon: float, dt: float) -> int:
    n = int(round(horizon / dt))
    if abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not an integer multiple of dt {dt}")
    return n


def simulate(initial, cfg: ModelConfig, potentials, diffusion=None,
             horizon: float = 1.0, observers: Sequence[Observer] = (),
             noise: Optional[NoiseStream] = None, batch: int = 1) -> TrajectorySummary:
    """Integrate to time ``horizon`` invoking observers after every step.

    A collision_rejected step on an untruncated run with a singular pair
    potential aborts with a :class:`CollisionError` diagnostic; on truncated
    runs the step is skipped and counted.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    system = build_system(cfg, potentials, diffusion)
    q, p = _batched_initial(initial, batch)
    if noise is None:
        noise = NoiseStream(cfg.seed, q.shape, cfg.dt)
    level = noise.level_for(cfg.dt)
    n_steps = _step_count(horizon, cfg.dt)
    rejected = 0
    counter = [0]
    for obs in observers:
        obs.observe(0, 0.0, q, p)
    t = 0.0
    fatal = system.has_pair_singularity and not cfg.is_truncated
    for i in range(n_steps):
        try:
            q, p = _advance(system, q, p, noise, level, i, MAX_HALVINGS, counter)
        except _IntervalFailed:
            if fatal:
                raise CollisionError(
                    f"collision_rejected at step {i} (t={t:.6g}) on an untruncated "
                    f"singular run; min positions snapshot: {q.min():.6g}..{q.max():.6g}"
                )
            rejected += 1
        t = (i + 1) * cfg.dt
        for obs in observers:
            obs.observe(i + 1, t, q, p)
    observations = {type(o).__name__ + f"_{k}": o.result() for k, o in enumerate(observers)}
    return TrajectorySummary(q, p, t, n_steps, rejected, counter[0], observations)


@dataclass
class CoupledResult:
    times: np.ndarray
    configs: list
    positions: list                # per config: (n_base+1, B, N, d)
    momenta: list

    def sup_distance(self, a: int, b: int):
        """Pathwise sup over the shared grid of |q_a - q_b| and |p_a - p_b|.

        Norms are Euclidean over all particles and components; returns two
        arrays of shape (B,), one per channel.
        """
        dq = self.positions[a] - self.positions[b]
        dp = self.momenta[a] - self.momenta[b]
        nq = np.sqrt(np.sum(dq * dq, axis=(-2, -1)))
        np_ = np.sqrt(np.sum(dp * dp, axis=(-2, -1)))
        return nq.max(axis=0), np_.max(axis=0)


def coupled_simulate(initial, configs: Sequence[ModelConfig], potentials,
                     diffusion=None, horizon: float = 1.0, batch: int = 1) -> CoupledResult:
    """Run several configs on one Brownian path and record shared-grid states.

    All configs must agree on (N, d, seed) and use dt values that are dyadic
    fractions of the largest dt; the identical NoiseStream drives every run,
    with refinement reconciling the different step sizes.
    """
    if not configs:
        raise ValueError("need at least one config")
    n0, d0, seed = configs[0].particle_count, configs[0].dimension, configs[0].seed
    for c in configs:
        if (c.particle_count, c.dimension, c.seed) != (n0, d0, seed):
            raise ValueError("coupled configs must share particle_count, dimension and seed")
    base_dt = max(c.dt for c in configs)
    q0, p0 = _batched_initial(initial, batch)
    noise = NoiseStream(seed, q0.shape, base_dt)
    n_base = _step_count(horizon, base_dt)
    times = np.arange(n_base + 1) * base_dt
    all_q, all_p = [], []
    for cfg in configs:
        system = build_system(cfg, potentials, diffusion)
        level = noise.level_for(cfg.dt)
        stride = 1 << level
        q, p = q0.copy(), p0.copy()
        rec_q = np.empty((n_base + 1,) + q.shape)
        rec_p = np.empty_like(rec_q)
        rec_q[0], rec_p[0] = q, p
        counter = [0]
        fatal = system.has_pair_singularity and not cfg.is_truncated
        for i in range(n_base * stride):
            try:
                q, p = _advance(system, q, p, noise, level, i, MAX_HALVINGS, counter)
            except _IntervalFailed:
                if fatal:
                    raise CollisionError(
                        f"collision_rejected in coupled run ({cfg.model_kind}, step {i})"
                    )
            if (i + 1) % stride == 0:
                k = (i + 1) // stride
                rec_q[k], rec_p[k] = q, p
        all_q.append(rec_q)
        all_p.append(rec_p)
    return CoupledResult(times, list(configs), all_q, all_p)
