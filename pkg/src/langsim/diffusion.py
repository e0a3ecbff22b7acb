"""Diffusion / friction fields and their matrix algebra.

Two families are supported.  Classical fields are smooth scalar multiples of
the identity, ``D(x) = g(x) I`` with ``g`` either constant or a bounded sine
perturbation; this keeps square roots, inverses and divergences closed-form
while staying uniformly elliptic.  The relativistic momentum-dependent field
is

    ``D(p) = (I + eps * p p^T) / sqrt(1 + eps |p|^2)``

whose eigenvalues are ``sqrt(1 + eps|p|^2)`` along ``p`` and its reciprocal
on the orthogonal complement.  All relativistic matrices here have the form
``a I + b p p^T``; the coefficients are computed in forms that stay finite
as ``p -> 0`` (no division by ``|p|^2``), so no special-casing of the origin
is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

__all__ = [
    "ConstantDiffusion",
    "SinePerturbedDiffusion",
    "RelativisticDiffusion",
    "DiffusionKindError",
    "D_matrix",
    "sqrt_D",
    "div_D",
    "inv_D",
    "div_inv_D",
    "truncated_D",
    "theta",
    "theta_factors",
    "scalar_field",
    "scalar_field_grad",
    "ellipticity_bounds",
    "relativistic_spectrum",
]


class DiffusionKindError(TypeError):
    """Operation not defined for this diffusion kind."""


@dataclass(frozen=True)
class ConstantDiffusion:
    """D(x) = gamma * I."""

    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class SinePerturbedDiffusion:
    """D(x) = (gamma0 + amplitude * sin(wavevector . x)) * I.

    Requires ``gamma0 > amplitude >= 0`` so the field stays uniformly
    elliptic with eigenvalue bounds ``gamma0 -+ amplitude``.
    """

    gamma0: float = 2.0
    amplitude: float = 1.0
    wavevector: tuple = (1.0,)

    def __post_init__(self):
        if not (self.gamma0 > self.amplitude >= 0):
            raise ValueError("need gamma0 > amplitude >= 0")
        object.__setattr__(self, "wavevector", tuple(float(w) for w in self.wavevector))


@dataclass(frozen=True)
class RelativisticDiffusion:
    """Momentum-dependent friction matrix, eps = 1/c^2."""

    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _is_classical(spec) -> bool:
    return isinstance(spec, (ConstantDiffusion, SinePerturbedDiffusion))


def _require_classical(spec, op: str):
    if not _is_classical(spec):
        raise DiffusionKindError(f"{op} is only defined for classical diffusion fields")


def ellipticity_bounds(spec) -> Tuple[float, float]:
    """Uniform eigenvalue bounds (gamma_lo, gamma_hi) of a classical field."""
    _require_classical(spec, "ellipticity_bounds")
    if isinstance(spec, ConstantDiffusion):
        return spec.gamma, spec.gamma
    return spec.gamma0 - spec.amplitude, spec.gamma0 + spec.amplitude


# ---------------------------------------------------------------------------
# Classical scalar field g with D = g I
# ---------------------------------------------------------------------------

def scalar_field(spec, x) -> np.ndarray:
    """g(x) for classical kinds; shape (...,) for x of shape (..., d)."""
    _require_classical(spec, "scalar_field")
    x = np.asarray(x, dtype=float)
    if isinstance(spec, ConstantDiffusion):
        return np.full(x.shape[:-1], spec.gamma)
    kap = np.asarray(spec.wavevector)
    return spec.gamma0 + spec.amplitude * np.sin(np.sum(x * kap, axis=-1))


def scalar_field_grad(spec, x) -> np.ndarray:
    """Gradient of g(x); zero for the constant field."""
    _require_classical(spec, "scalar_field_grad")
    x = np.asarray(x, dtype=float)
    if isinstance(spec, ConstantDiffusion):
        return np.zeros_like(x)
    kap = np.asarray(spec.wavevector)
    phase = np.cos(np.sum(x * kap, axis=-1))
    return spec.amplitude * phase[..., None] * kap


# ---------------------------------------------------------------------------
# Relativistic coefficient bundles: every matrix is a*I + b*(p p^T)
# ---------------------------------------------------------------------------

def _rel_D_coeffs(eps: float, p: np.ndarray):
    x = eps * np.sum(p * p, axis=-1)
    root = np.sqrt(1.0 + x)
    return 1.0 / root, eps / root


def _rel_sqrtD_coeffs(eps: float, p: np.ndarray):
    x = eps * np.sum(p * p, axis=-1)
    root = np.sqrt(1.0 + x)
    quarter = np.sqrt(root)
    # ((1+x)^(1/4) - (1+x)^(-1/4)) / |p|^2 rewritten without the |p|^2 division
    return 1.0 / quarter, eps / (quarter * (1.0 + root))


def _iso_outer_matrix(a, b, p: np.ndarray) -> np.ndarray:
    d = p.shape[-1]
    eye = np.eye(d)
    outer = p[..., :, None] * p[..., None, :]
    return np.asarray(a)[..., None, None] * eye + np.asarray(b)[..., None, None] * outer


def apply_iso_outer(a, b, p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(a I + b p p^T) v without forming the matrix."""
    dot = np.sum(p * v, axis=-1, keepdims=True)
    return np.asarray(a)[..., None] * v + np.asarray(b)[..., None] * dot * p


# ---------------------------------------------------------------------------
# Public matrix operations
# ---------------------------------------------------------------------------

def D_matrix(spec, z) -> np.ndarray:
    """Diffusion matrix at z (position for classical, momentum otherwise)."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    if _is_classical(spec):
        return scalar_field(spec, z)[..., None, None] * np.eye(d)
    a, b = _rel_D_coeffs(spec.epsilon, z)
    return _iso_outer_matrix(a, b, z)


def sqrt_D(spec, z) -> np.ndarray:
    """Symmetric positive-definite square root of D(z)."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    if _is_classical(spec):
        return np.sqrt(scalar_field(spec, z))[..., None, None] * np.eye(d)
    a, b = _rel_sqrtD_coeffs(spec.epsilon, z)
    return _iso_outer_matrix(a, b, z)


def div_D(spec, z) -> np.ndarray:
    """Componentwise divergence [div D]_i = sum_j dD_ij/dz_j."""
    z = np.asarray(z, dtype=float)
    if _is_classical(spec):
        return scalar_field_grad(spec, z)
    eps = spec.epsilon
    d = z.shape[-1]
    x = eps * np.sum(z * z, axis=-1, keepdims=True)
    return eps * d * z / np.sqrt(1.0 + x)


def inv_D(spec, z) -> np.ndarray:
    """Inverse diffusion matrix; classical kinds only."""
    _require_classical(spec, "inv_D")
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    return (1.0 / scalar_field(spec, z))[..., None, None] * np.eye(d)


def div_inv_D(spec, z) -> np.ndarray:
    """Divergence of D^-1 via d(D^-1) = -D^-1 (dD) D^-1; classical only.

    For the scalar-times-identity family this reduces to grad(1/g) =
    -grad(g)/g^2.
    """
    _require_classical(spec, "div_inv_D")
    z = np.asarray(z, dtype=float)
    g = scalar_field(spec, z)[..., None]
    return -scalar_field_grad(spec, z) / g**2


def relativistic_spectrum(spec: RelativisticDiffusion, p) -> np.ndarray:
    """Sorted eigenvalues of D(p): one sqrt(1+eps|p|^2), d-1 reciprocals."""
    p = np.asarray(p, dtype=float)
    d = p.shape[-1]
    x = spec.epsilon * np.sum(p * p, axis=-1)
    root = np.sqrt(1.0 + x)
    vals = np.concatenate(
        [np.broadcast_to((1.0 / root)[..., None], p.shape[:-1] + (d - 1,)), root[..., None]],
        axis=-1,
    )
    return np.sort(vals, axis=-1)


# ---------------------------------------------------------------------------
# Smooth cutoff and truncated noise matrix
# ---------------------------------------------------------------------------

def theta(t, radius: float) -> np.ndarray:
    """C^1 cutoff: 1 on [0, R], cubic smoothstep down to 0 on [R, R+1].

    The interpolant is 1 - 3 s^2 + 2 s^3 with s = |t| - R, which is monotone
    on [R, R+1] and equals 1/2 at the midpoint.
    """
    if radius < 1:
        raise ValueError("truncation radius must be >= 1")
    t = np.abs(np.asarray(t, dtype=float))
    s = np.clip(t - radius, 0.0, 1.0)
    return 1.0 - 3.0 * s**2 + 2.0 * s**3


def theta_factors(x: np.ndarray, radius: float):
    """Force-truncation factors for positions: theta(|x_i|) per particle."""
    return theta(np.linalg.norm(x, axis=-1), radius)


def _truncated_coeffs(spec: RelativisticDiffusion, p: np.ndarray, radius: float):
    eps = spec.epsilon
    pn2 = np.sum(p * p, axis=-1)
    x = eps * pn2
    root = np.sqrt(1.0 + x)
    th = theta(np.sqrt(pn2), radius)
    m_perp = 1.0 + th * (1.0 / root - 1.0)
    m_par = 1.0 + th * (root - 1.0)
    # (m_par - m_perp)/|p|^2 = th*eps/root, finite at p = 0
    b = th * eps / root
    sb = b / (np.sqrt(m_par) + np.sqrt(m_perp))
    return m_perp, b, np.sqrt(m_perp), sb, (m_par, m_perp)


def truncated_D(spec: RelativisticDiffusion, p, radius: float):
    """Noise matrix theta(|p|) (D(p) - I) + I and its square root.

    Returns a pair ``(M, sqrtM)``.  Outside ``|p| > R + 1`` the cutoff makes
    ``M`` the identity exactly; the eigenvalues of ``M`` stay below
    ``1 + 2 eps R^2`` and those of ``(sqrtM - I)^2`` below both
    ``eps^2 R^2 |p|^2 / 4`` and ``eps^2 R^4``.
    """
    if not isinstance(spec, RelativisticDiffusion):
        raise DiffusionKindError("truncated_D applies to the relativistic field")
    p = np.asarray(p, dtype=float)
    a, b, sa, sb, _ = _truncated_coeffs(spec, p, radius)
    return _iso_outer_matrix(a, b, p), _iso_outer_matrix(sa, sb, p)


def truncated_spectrum(spec: RelativisticDiffusion, p, radius: float):
    """Eigenvalue pairs (m_par, m_perp) of the truncated noise matrix."""
    p = np.asarray(p, dtype=float)
    return _truncated_coeffs(spec, p, radius)[4]
