"""Phase-space state, model configuration and collision-domain bookkeeping.

Positions and momenta are stored as ``(N, d)`` float arrays.  The admissible
configuration domain excludes particle collisions: for ``d >= 2`` positions
must be pairwise distinct, for ``d = 1`` they must be strictly increasing
(the dynamics is confined to one ordered chamber of the line).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "PhaseState",
    "ModelConfig",
    "AssumptionConstants",
    "StateViolation",
    "CollisionError",
    "MODEL_KINDS",
    "min_pair_distance",
    "validate_state",
]

MODEL_KINDS = (
    "classical",
    "relativistic",
    "overdamped",
    "classical_limit",
    "classical_truncated",
    "relativistic_truncated",
    "overdamped_truncated",
    "classical_limit_truncated",
)

_CLASSICAL_KINDS = ("classical", "classical_truncated", "overdamped", "overdamped_truncated")
_RELATIVISTIC_KINDS = ("relativistic", "relativistic_truncated")
_TRUNCATED_KINDS = tuple(k for k in MODEL_KINDS if k.endswith("truncated"))
_OVERDAMPED_KINDS = ("overdamped", "overdamped_truncated")


class CollisionError(RuntimeError):
    """Raised when a configuration reaches (or starts at) a collision."""


def _as_particle_array(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must have shape (N, d), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class PhaseState:
    """Immutable snapshot of an N-particle phase point.

    Parameters
    ----------
    positions : array_like, shape (N, d)
        Particle positions.  A 1-d array of length N is promoted to (N, 1).
    momenta : array_like, shape (N, d)
        Particle momenta (relativistic models) or velocities (classical
        models).  Unused but carried along for position-only dynamics.
    time : float
        Simulation time of the snapshot, nonnegative.
    """

    positions: np.ndarray
    momenta: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        q = _as_particle_array(self.positions, "positions")
        p = _as_particle_array(self.momenta, "momenta")
        if q.shape != p.shape:
            raise ValueError(f"positions {q.shape} and momenta {p.shape} differ in shape")
        if q.shape[0] < 1 or q.shape[1] < 1:
            raise ValueError("need N >= 1 particles and d >= 1 dimensions")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        q = q.copy()
        p = p.copy()
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "positions", q)
        object.__setattr__(self, "momenta", p)

    @property
    def particle_count(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def with_time(self, t: float) -> "PhaseState":
        return PhaseState(self.positions, self.momenta, t)


@dataclass(frozen=True)
class ModelConfig:
    """Which model to run and with which parameters.

    ``mass`` is required by the classical kinds, ``epsilon`` (= 1/c^2) by the
    relativistic kinds and ``truncation_radius`` by the truncated kinds.
    ``collision_guard`` is the minimum admissible pair separation for the
    integrators; the continuum dynamics never collides but a discrete step
    may, and such proposals are rejected and retried at a smaller step.
    """

    model_kind: str
    particle_count: int
    dimension: int
    dt: float
    seed: int = 0
    mass: Optional[float] = None
    epsilon: Optional[float] = None
    truncation_radius: Optional[float] = None
    collision_guard: float = 1e-10
    noise_induced_drift: bool = True

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        if self.particle_count < 1 or self.dimension < 1:
            raise ValueError("particle_count and dimension must be positive")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if not (self.collision_guard > 0):
            raise ValueError("collision_guard must be positive")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.requires_mass:
            if self.mass is None or not (self.mass > 0):
                raise ValueError(f"model_kind {self.model_kind!r} requires mass > 0")
        if self.requires_epsilon:
            if self.epsilon is None or not (self.epsilon > 0):
                raise ValueError(f"model_kind {self.model_kind!r} requires epsilon > 0")
        if self.is_truncated:
            if self.truncation_radius is None or not (self.truncation_radius >= 1):
                raise ValueError(f"model_kind {self.model_kind!r} requires truncation_radius >= 1")

    @property
    def is_truncated(self) -> bool:
        return self.model_kind in _TRUNCATED_KINDS

    @property
    def is_overdamped(self) -> bool:
        return self.model_kind in _OVERDAMPED_KINDS

    @property
    def requires_mass(self) -> bool:
        return self.model_kind in _CLASSICAL_KINDS

    @property
    def requires_epsilon(self) -> bool:
        return self.model_kind in _RELATIVISTIC_KINDS

    def with_updates(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class AssumptionConstants:
    """Numeric constants entering the growth/coercivity inequalities.

    ``lam`` is the confining growth exponent, ``beta1``/``beta2`` the
    singularity exponents of the pair potential, ``a1..a6`` the inequality
    constants and ``gamma_lo``/``gamma_hi`` uniform ellipticity bounds of the
    diffusion field.
    """

    lam: float
    beta1: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float = 0.0
    a6: float = 0.0
    beta2: float = 0.0
    gamma_lo: float = 1.0
    gamma_hi: float = 1.0
    relativistic_multi: bool = False

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if self.beta1 < 1:
            raise ValueError("beta1 must be >= 1")
        if not (0 <= self.beta2 < self.beta1):
            raise ValueError("need 0 <= beta2 < beta1")
        for name in ("a1", "a2", "a3", "a4", "a6"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("a1", "a2", "a4"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.gamma_lo <= self.gamma_hi):
            raise ValueError("need 0 < gamma_lo <= gamma_hi")
        if self.relativistic_multi and not (1 < self.beta1 <= 2):
            raise ValueError("multi-particle relativistic runs need beta1 in (1, 2]")


def min_pair_distance(state_or_positions) -> float:
    """Smallest distance between distinct particles; +inf for N = 1."""
    q = state_or_positions.positions if isinstance(state_or_positions, PhaseState) else None
    if q is None:
        q = _as_particle_array(state_or_positions, "positions")
    n = q.shape[0]
    if n == 1:
        return math.inf
    diff = q[:, None, :] - q[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(n, k=1)
    return float(dist[iu].min())


@dataclass(frozen=True)
class StateViolation:
    """One reason a phase point is outside the admissible domain."""

    kind: str  # "collision" | "ordering" | "nonfinite"
    pair: Optional[tuple] = None
    detail: str = ""

    def __str__(self):
        where = f" at particles {self.pair}" if self.pair is not None else ""
        return f"{self.kind}{where}: {self.detail}" if self.detail else f"{self.kind}{where}"


def validate_state(state: PhaseState, cfg: Optional[ModelConfig] = None) -> list:
    """Check the phase-space domain invariants.

    Returns an empty list when the state is admissible, otherwise a list of
    :class:`StateViolation` naming the offending particle pairs.  A pure
    function: identical inputs produce identical reports.
    """
    guard = cfg.collision_guard if cfg is not None else 0.0
    violations = []
    q, p = state.positions, state.momenta
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        violations.append(StateViolation("nonfinite", detail="non-finite coordinate"))
        return violations
    n, d = q.shape
    if n == 1:
        return violations
    if d == 1:
        gaps = np.diff(q[:, 0])
        for i, g in enumerate(gaps):
            if not (g > guard):
                violations.append(
                    StateViolation("ordering", pair=(i, i + 1), detail=f"gap {g:.3e}")
                )
        return violations
    diff = q[:, None, :] - q[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    for i in range(n):
        for j in range(i + 1, n):
            if not (dist[i, j] > guard):
                violations.append(
                    StateViolation("collision", pair=(i, j), detail=f"distance {dist[i, j]:.3e}")
                )
    return violations
