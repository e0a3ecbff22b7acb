"""Confining and pairwise singular potentials with analytic derivatives.

The confining family is ``U(q) = scale * (1 + |q|^2)^((lam+1)/2)`` which is
smooth, bounded below by ``scale >= 1`` and grows like ``|q|^(lam+1)``.  The
pairwise family covers the three standard repulsive examples: logarithmic
(``beta1 = 1``), inverse power (``beta1 > 1``) and Lennard-Jones.  All
evaluators broadcast over leading axes: ``q`` of shape ``(..., d)`` yields
values ``(...,)``, gradients ``(..., d)`` and Hessians ``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .state import AssumptionConstants

__all__ = [
    "Confining",
    "LogRepulsive",
    "PowerRepulsive",
    "LennardJones",
    "PotentialSpec",
    "SingularInputError",
    "eval_U",
    "grad_U",
    "hess_U",
    "eval_G",
    "grad_G",
    "hess_G",
    "audit_assumptions",
    "AuditReport",
    "InequalityAudit",
]


class SingularInputError(ValueError):
    """Pair potential evaluated at zero separation."""


@dataclass(frozen=True)
class Confining:
    """Polynomially confining external potential.

    ``U(q) = scale * (1 + |q|^2)^((lam+1)/2)`` with growth exponent
    ``lam >= 1`` and ``scale >= 1`` so that ``U >= 1`` everywhere.
    """

    lam: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if self.scale < 1:
            raise ValueError("scale must be >= 1 so that U >= 1")


@dataclass(frozen=True)
class LogRepulsive:
    """G(r) = -k * log|r|, the canonical beta1 = 1 repulsion."""

    k: float = 1.0
    beta1: float = field(default=1.0, init=False)

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be positive")


@dataclass(frozen=True)
class PowerRepulsive:
    """G(r) = k * |r|^(1-beta1) / (beta1 - 1) for beta1 > 1."""

    k: float = 1.0
    beta1: float = 2.0

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.beta1 <= 1:
            raise ValueError("beta1 must exceed 1 (use LogRepulsive for beta1 = 1)")


@dataclass(frozen=True)
class LennardJones:
    """G(r) = A|r|^-12 - B|r|^-6; repulsive core, optionally attractive tail."""

    A: float = 1.0
    B: float = 0.0
    beta1: float = field(default=13.0, init=False)

    def __post_init__(self):
        if self.A <= 0:
            raise ValueError("A must be positive")
        if self.B < 0:
            raise ValueError("B must be nonnegative")


_PAIR_KINDS = (type(None), LogRepulsive, PowerRepulsive, LennardJones)


def _derive_constants(confining: Confining, pairwise) -> AssumptionConstants:
    """Provable inequality constants for the chosen variant pair."""
    lam, s = confining.lam, confining.scale
    a1_u = s * 2.0 ** (0.5 * (lam - 1.0))                     # |U| growth
    a1_grad = s * (lam + 1.0) * 2.0 ** max(lam - 1.0, 0.0)    # |grad U| growth
    a1_hess = s * (lam + 1.0) * lam * 2.0 ** max(lam - 2.0, 0.0)
    a1 = max(a1_u, a1_grad, a1_hess)
    a2 = s * (lam + 1.0)
    a3 = 0.0
    if pairwise is None:
        return AssumptionConstants(lam=lam, beta1=1.0, a1=a1, a2=a2, a3=a3, a4=1.0)
    if isinstance(pairwise, LogRepulsive):
        k = pairwise.k
        return AssumptionConstants(
            lam=lam, beta1=1.0, a1=max(a1, k), a2=a2, a3=a3, a4=k, a5=0.0, a6=0.0, beta2=0.0
        )
    if isinstance(pairwise, PowerRepulsive):
        k, b1 = pairwise.k, pairwise.beta1
        a1_g = max(k / (b1 - 1.0), k * b1)
        return AssumptionConstants(
            lam=lam, beta1=b1, a1=max(a1, a1_g), a2=a2, a3=a3, a4=k, a5=0.0, a6=0.0, beta2=0.0
        )
    if isinstance(pairwise, LennardJones):
        A, B = pairwise.A, pairwise.B
        a1_g = max(A + B, 12.0 * A + 6.0 * B, 156.0 * A + 42.0 * B)
        return AssumptionConstants(
            lam=lam, beta1=13.0, a1=max(a1, a1_g), a2=a2, a3=a3,
            a4=12.0 * A, a5=-6.0 * B, a6=0.0, beta2=7.0,
        )
    raise TypeError(f"unsupported pairwise variant {pairwise!r}")


@dataclass(frozen=True)
class PotentialSpec:
    """Bundle of confining and pairwise potentials plus derived constants."""

    confining: Confining = Confining()
    pairwise: object = None
    constants: AssumptionConstants = None

    def __post_init__(self):
        if not isinstance(self.pairwise, _PAIR_KINDS):
            raise TypeError(f"unsupported pairwise variant {self.pairwise!r}")
        if self.constants is None:
            object.__setattr__(self, "constants", _derive_constants(self.confining, self.pairwise))

    @property
    def has_pairwise(self) -> bool:
        return self.pairwise is not None

    @property
    def beta1(self) -> float:
        return self.pairwise.beta1 if self.pairwise is not None else 1.0


# ---------------------------------------------------------------------------
# Confining potential
# ---------------------------------------------------------------------------

def eval_U(spec: PotentialSpec, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    c = spec.confining
    r2 = np.sum(q * q, axis=-1)
    return c.scale * (1.0 + r2) ** (0.5 * (c.lam + 1.0))


def grad_U(spec: PotentialSpec, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    c = spec.confining
    r2 = np.sum(q * q, axis=-1, keepdims=True)
    return c.scale * (c.lam + 1.0) * q * (1.0 + r2) ** (0.5 * (c.lam - 1.0))


def hess_U(spec: PotentialSpec, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    c = spec.confining
    d = q.shape[-1]
    r2 = np.sum(q * q, axis=-1)[..., None, None]
    eye = np.eye(d)
    outer = q[..., :, None] * q[..., None, :]
    fac = c.scale * (c.lam + 1.0)
    return fac * ((1.0 + r2) ** (0.5 * (c.lam - 1.0)) * eye
                  + (c.lam - 1.0) * (1.0 + r2) ** (0.5 * (c.lam - 3.0)) * outer)


# ---------------------------------------------------------------------------
# Pairwise potential (functions of the separation vector r != 0)
# ---------------------------------------------------------------------------

def _radius(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    rad = np.sqrt(np.sum(r * r, axis=-1))
    if np.any(rad == 0.0):
        raise SingularInputError("pair potential evaluated at zero separation")
    return rad


def eval_G(spec: PotentialSpec, r) -> np.ndarray:
    pw = spec.pairwise
    if pw is None:
        r = np.asarray(r, dtype=float)
        return np.zeros(r.shape[:-1])
    rad = _radius(r)
    if isinstance(pw, LogRepulsive):
        return -pw.k * np.log(rad)
    if isinstance(pw, PowerRepulsive):
        return pw.k / (pw.beta1 - 1.0) * rad ** (1.0 - pw.beta1)
    return pw.A * rad ** -12.0 - pw.B * rad ** -6.0


def grad_G(spec: PotentialSpec, r) -> np.ndarray:
    pw = spec.pairwise
    r = np.asarray(r, dtype=float)
    if pw is None:
        return np.zeros_like(r)
    rad = _radius(r)[..., None]
    if isinstance(pw, LogRepulsive):
        return -pw.k * r / rad**2
    if isinstance(pw, PowerRepulsive):
        return -pw.k * r / rad ** (pw.beta1 + 1.0)
    return -12.0 * pw.A * r * rad**-14.0 + 6.0 * pw.B * r * rad**-8.0


def _power_hess(c: float, s: float, r: np.ndarray, rad: np.ndarray) -> np.ndarray:
    # Hessian of c * |r|^(-s): c*s*[(s+2) rhat rhat^T - I] / |r|^(s+2)
    d = r.shape[-1]
    eye = np.eye(d)
    outer = r[..., :, None] * r[..., None, :]
    rr = rad[..., None, None]
    return c * s * ((s + 2.0) * outer / rr ** (s + 4.0) - eye / rr ** (s + 2.0))


def hess_G(spec: PotentialSpec, r) -> np.ndarray:
    pw = spec.pairwise
    r = np.asarray(r, dtype=float)
    d = r.shape[-1]
    if pw is None:
        return np.zeros(r.shape[:-1] + (d, d))
    rad = _radius(r)
    if isinstance(pw, LogRepulsive):
        eye = np.eye(d)
        outer = r[..., :, None] * r[..., None, :]
        rr = rad[..., None, None]
        return pw.k * (2.0 * outer / rr**4 - eye / rr**2)
    if isinstance(pw, PowerRepulsive):
        return _power_hess(pw.k / (pw.beta1 - 1.0), pw.beta1 - 1.0, r, rad)
    return _power_hess(pw.A, 12.0, r, rad) + _power_hess(-pw.B, 6.0, r, rad)


# ---------------------------------------------------------------------------
# Assumption audit
# ---------------------------------------------------------------------------

@dataclass
class InequalityAudit:
    """Sampled slack record for one inequality (slack = rhs - lhs)."""

    name: str
    slack: np.ndarray
    radii: np.ndarray
    violation_count: int = 0
    worst_slack: float = np.inf
    worst_radius: float = np.nan

    def finalize(self, rel_tol: float = 1e-9):
        scale = 1.0 + np.abs(self.slack)
        bad = self.slack < -rel_tol * scale
        self.violation_count = int(np.count_nonzero(bad))
        i = int(np.argmin(self.slack))
        self.worst_slack = float(self.slack[i])
        self.worst_radius = float(self.radii[i])
        return self


@dataclass
class AuditReport:
    sample_count: int
    radius_range: tuple
    seed: int
    entries: dict
    inf_U: float
    inf_U_plus_G: Optional[float]

    @property
    def total_violations(self) -> int:
        return sum(e.violation_count for e in self.entries.values())

    def summary_lines(self):
        lines = [f"assumption audit: {self.sample_count} samples, "
                 f"radii in [{self.radius_range[0]:g}, {self.radius_range[1]:g}]"]
        for name, e in self.entries.items():
            lines.append(f"  {name:<30s} violations={e.violation_count:<6d} "
                         f"worst_slack={e.worst_slack:+.3e} at |q|={e.worst_radius:.3e}")
        lines.append(f"  inf U (sampled) = {self.inf_U:.6g}")
        if self.inf_U_plus_G is not None:
            lines.append(f"  inf U+G (sampled) = {self.inf_U_plus_G:.6g}")
        return lines


def _log_uniform_sphere(count: int, d: int, radius_range, rng) -> np.ndarray:
    lo, hi = radius_range
    if not (0 < lo < hi):
        raise ValueError("radius_range must satisfy 0 < lo < hi")
    radii = np.exp(rng.uniform(np.log(lo), np.log(hi), size=count))
    dirs = rng.standard_normal((count, d))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return radii[:, None] * dirs


def audit_assumptions(spec: PotentialSpec, sample_count: int = 10_000,
                      radius_range=(1e-3, 1e3), rng_seed: int = 0, dimension: int = 2,
                      constants: AssumptionConstants = None) -> AuditReport:
    """Numerically audit the growth/coercivity inequalities of the potentials.

    Points are sampled log-uniformly in radius over ``radius_range`` and
    uniformly on the sphere.  Each inequality is checked with the constants
    stored in (or passed alongside) the spec; the report lists worst-case
    slack and any violating radius per inequality.  Violations are report
    entries, never exceptions.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    c = constants if constants is not None else spec.constants
    rng = np.random.default_rng(rng_seed)
    q = _log_uniform_sphere(sample_count, dimension, radius_range, rng)
    r = np.linalg.norm(q, axis=-1)

    entries = {}

    def add(name, lhs, rhs):
        entries[name] = InequalityAudit(name, np.asarray(rhs - lhs, dtype=float), r).finalize()

    u = eval_U(spec, q)
    gu = grad_U(spec, q)
    gu_norm = np.linalg.norm(gu, axis=-1)
    hu_norm = np.linalg.norm(hess_U(spec, q), ord=2, axis=(-2, -1))
    add("U_growth", np.abs(u), c.a1 * (1.0 + r ** (c.lam + 1.0)))
    add("gradU_growth", gu_norm, c.a1 * (1.0 + r**c.lam))
    add("gradU_coercive", c.a2 * r ** (c.lam + 1.0) - c.a3, np.sum(gu * q, axis=-1))
    add("hessU_growth", hu_norm, c.a1 * (1.0 + r ** (c.lam - 1.0)))
    add("gradU_lower", c.a2 * r**c.lam - max(c.a2, c.a3), gu_norm)

    inf_u_plus_g = None
    if spec.has_pairwise:
        g = eval_G(spec, q)
        gg = grad_G(spec, q)
        gg_norm = np.linalg.norm(gg, axis=-1)
        hg_norm = np.linalg.norm(hess_G(spec, q), ord=2, axis=(-2, -1))
        b1, b2 = c.beta1, c.beta2
        add("G_growth", np.abs(g), c.a1 * (1.0 + r + r**-b1))
        add("gradG_growth", gg_norm, c.a1 * (1.0 + r**-b1))
        add("hessG_growth", hg_norm, c.a1 * (1.0 + r ** -(b1 + 1.0)))
        core = gg + c.a4 * q / r[:, None] ** (b1 + 1.0)
        add("gradG_close_classical", np.linalg.norm(core, axis=-1),
            abs(c.a5) * r**-b2 + c.a6)
        core_rel = core + c.a5 * q / r[:, None] ** (b2 + 1.0)
        add("gradG_close_relativistic", np.linalg.norm(core_rel, axis=-1),
            np.full_like(r, c.a6))
        inf_u_plus_g = float(np.min(u + g))

    return AuditReport(
        sample_count=sample_count,
        radius_range=(float(radius_range[0]), float(radius_range[1])),
        seed=rng_seed,
        entries=entries,
        inf_U=float(np.min(u)),
        inf_U_plus_G=inf_u_plus_g,
    )
