"""Drift fields and noise maps for every model variant.

All functions operate on arrays of shape ``(..., N, d)`` and broadcast over
leading batch axes, so a single code path serves one trajectory or a whole
ensemble.  Truncated variants multiply the confining force by
``theta_R(|x_i|)`` and each pair force by ``theta_R(1/|x_i - x_j|)``; the
Ito-correction drift ``div D`` is never truncated, while the relativistic
noise matrix is replaced by its truncated counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diffusion as dfn
from . import potentials as pot
from .state import ModelConfig

__all__ = [
    "System",
    "build_system",
    "pair_differences",
    "interaction_forces",
    "interaction_energy",
    "confining_forces",
]


def pair_differences(x: np.ndarray):
    """Separations r_ij = x_i - x_j, diagonal masked to a safe unit vector.

    Returns (diff, mask) where mask is True on the diagonal; entries under
    the mask hold a dummy separation so singular kernels can be evaluated
    vectorized and zeroed afterwards.
    """
    n = x.shape[-2]
    diff = x[..., :, None, :] - x[..., None, :, :]
    mask = np.eye(n, dtype=bool)[..., :, :, None]
    safe = np.where(mask, 1.0, diff)
    return safe, np.eye(n, dtype=bool)


def interaction_forces(spec: pot.PotentialSpec, x: np.ndarray,
                       trunc_radius: Optional[float] = None) -> np.ndarray:
    """F_i = -sum_{j != i} theta_R(1/|r_ij|) grad G(r_ij)."""
    if spec.pairwise is None or x.shape[-2] == 1:
        return np.zeros_like(x)
    diff, mask = pair_differences(x)
    g = pot.grad_G(spec, diff)
    if trunc_radius is not None:
        sep = np.linalg.norm(diff, axis=-1)
        g = g * dfn.theta(1.0 / sep, trunc_radius)[..., None]
    g = np.where(mask[..., None], 0.0, g)
    return -np.sum(g, axis=-2)


def interaction_energy(spec: pot.PotentialSpec, x: np.ndarray) -> np.ndarray:
    """(1/2) sum_{i != j} G(x_i - x_j); zero without a pair potential."""
    if spec.pairwise is None or x.shape[-2] == 1:
        return np.zeros(x.shape[:-2])
    diff, mask = pair_differences(x)
    g = pot.eval_G(spec, diff)
    g = np.where(mask, 0.0, g)
    return 0.5 * np.sum(g, axis=(-2, -1))


def confining_forces(spec: pot.PotentialSpec, x: np.ndarray,
                     trunc_radius: Optional[float] = None) -> np.ndarray:
    """F_i = -theta_R(|x_i|) grad U(x_i)."""
    g = pot.grad_U(spec, x)
    if trunc_radius is not None:
        g = g * dfn.theta(np.linalg.norm(x, axis=-1), trunc_radius)[..., None]
    return -g


@dataclass
class System:
    """Drift and noise map of one model variant, ready to time-step."""

    cfg: ModelConfig
    potentials: pot.PotentialSpec
    diffusion: object

    def __post_init__(self):
        kind = self.cfg.model_kind
        self._kinetic = kind.split("_truncated")[0]
        self._radius = self.cfg.truncation_radius if self.cfg.is_truncated else None
        if self._kinetic == "relativistic" and not isinstance(self.diffusion, dfn.RelativisticDiffusion):
            raise TypeError("relativistic kinds need the relativistic diffusion field")
        if self._kinetic != "relativistic" and not isinstance(
            self.diffusion, (dfn.ConstantDiffusion, dfn.SinePerturbedDiffusion)
        ):
            raise TypeError(f"model kind {kind!r} needs a classical diffusion field")

    @property
    def has_pair_singularity(self) -> bool:
        if self.potentials.pairwise is None:
            return False
        return self.cfg.particle_count > 1 or self._single_particle_G

    @property
    def _single_particle_G(self) -> bool:
        # the single-particle relativistic model keeps G as an external
        # singular potential at the origin
        return (self._kinetic == "relativistic" and self.cfg.particle_count == 1
                and self.potentials.pairwise is not None)

    def forces(self, q: np.ndarray) -> np.ndarray:
        f = confining_forces(self.potentials, q, self._radius) + interaction_forces(
            self.potentials, q, self._radius
        )
        if self._single_particle_G:
            qq = q[..., 0, :]
            g = pot.grad_G(self.potentials, qq)
            if self._radius is not None:
                sep = np.linalg.norm(qq, axis=-1)
                g = g * dfn.theta(1.0 / sep, self._radius)[..., None]
            f = f - g[..., None, :]
        return f

    def admissible(self, q: np.ndarray, p: np.ndarray) -> bool:
        """Domain check for a (batched) proposal, including the guard."""
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            return False
        guard = self.cfg.collision_guard
        n, d = q.shape[-2], q.shape[-1]
        if self._single_particle_G:
            r2 = np.sum(q[..., 0, :] ** 2, axis=-1)
            if not np.all(r2 > guard * guard):
                return False
        if n == 1:
            return True
        if d == 1:
            gaps = np.diff(q[..., 0], axis=-1)
            return bool(np.all(gaps > guard))
        diff = q[..., :, None, :] - q[..., None, :, :]
        dist2 = np.sum(diff * diff, axis=-1)
        iu = np.triu_indices(n, k=1)
        return bool(np.all(dist2[..., iu[0], iu[1]] > guard * guard))

    def drift(self, q: np.ndarray, p: np.ndarray):
        """Deterministic drift (dq/dt, dp/dt) at the given phase point."""
        kin = self._kinetic
        if kin == "classical":
            g = dfn.scalar_field(self.diffusion, q)[..., None]
            dv = (self.forces(q) - g * p) / self.cfg.mass
            return p, dv
        if kin == "relativistic":
            eps = self.cfg.epsilon
            root = np.sqrt(1.0 + eps * np.sum(p * p, axis=-1, keepdims=True))
            ptilde = p / root
            a, b = dfn._rel_D_coeffs(eps, p)
            friction = -dfn.apply_iso_outer(a, b, p, ptilde)
            dp = friction + dfn.div_D(self.diffusion, p) + self.forces(q)
            return ptilde, dp
        if kin == "overdamped":
            g = dfn.scalar_field(self.diffusion, q)[..., None]
            dq = self.forces(q) / g
            if self.cfg.noise_induced_drift:
                dq = dq - dfn.div_inv_D(self.diffusion, q)
            return dq, np.zeros_like(p)
        if kin == "classical_limit":
            return p, -p + self.forces(q)
        raise AssertionError(kin)

    def noise(self, q: np.ndarray, p: np.ndarray, dW: np.ndarray):
        """State-dependent noise contributions (to q, to p) for increment dW."""
        kin = self._kinetic
        if kin == "classical":
            g = dfn.scalar_field(self.diffusion, q)[..., None]
            return np.zeros_like(q), np.sqrt(2.0 * g) * dW / self.cfg.mass
        if kin == "relativistic":
            if self._radius is None:
                a, b = dfn._rel_sqrtD_coeffs(self.cfg.epsilon, p)
            else:
                _, _, a, b, _ = dfn._truncated_coeffs(self.diffusion, p, self._radius)
            return np.zeros_like(q), np.sqrt(2.0) * dfn.apply_iso_outer(a, b, p, dW)
        if kin == "overdamped":
            g = dfn.scalar_field(self.diffusion, q)[..., None]
            return np.sqrt(2.0 / g) * dW, np.zeros_like(p)
        if kin == "classical_limit":
            return np.zeros_like(q), np.sqrt(2.0) * dW
        raise AssertionError(kin)


def build_system(cfg: ModelConfig, potentials: pot.PotentialSpec,
                 diffusion=None) -> System:
    """Assemble a System; relativistic kinds derive their own diffusion field."""
    if cfg.requires_epsilon:
        diffusion = dfn.RelativisticDiffusion(cfg.epsilon)
    elif diffusion is None:
        diffusion = dfn.ConstantDiffusion(1.0)
    return System(cfg, potentials, diffusion)
