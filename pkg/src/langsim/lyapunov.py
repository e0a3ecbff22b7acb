"""Lyapunov functions, infinitesimal generators and drift certification.

Observables carry analytic position/momentum gradients and per-particle
momentum Hessian blocks, which is all the hypoelliptic generators need: the
noise acts particle-by-particle, so only diagonal Hessian blocks enter the
second-order term.  ``apply_generator`` assembles the generator exactly from
closed-form coefficients; an independent short-time quadrature oracle exists
for testing it.

Single-particle relativistic runs keep the singular potential G as an
external potential at the origin, matching the Hamiltonian
``H = sqrt(1 + eps |p|^2) + eps U(q) + eps G(q)`` used by the
single-particle Lyapunov function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import diffusion as dfn
from . import potentials as pot
from .dynamics import build_system, interaction_energy, pair_differences
from .state import ModelConfig, PhaseState

__all__ = [
    "SmoothObservable",
    "hamiltonian",
    "observable_hamiltonian",
    "lyapunov_classical",
    "lyapunov_relativistic_single",
    "lyapunov_relativistic_multi",
    "V_classical",
    "V_relativistic_single",
    "V_relativistic_multi",
    "apply_generator",
    "generator_oracle",
    "DriftCertificate",
    "SamplePlan",
    "certify_drift",
    "default_eps1",
]


@dataclass
class SmoothObservable:
    """Scalar phase-space observable with the derivatives generators need.

    ``value(q, p) -> (...)``, ``grad_q``/``grad_p`` -> ``(..., N, d)`` and
    ``hess_p`` -> ``(..., N, d, d)`` per-particle momentum Hessian blocks.
    All callables broadcast over leading batch axes.
    """

    name: str
    value: Callable
    grad_q: Callable
    grad_p: Callable
    hess_p: Callable


def _as_arrays(state):
    if isinstance(state, PhaseState):
        return state.positions, state.momenta
    q, p = state
    return np.asarray(q, dtype=float), np.asarray(p, dtype=float)


def _pair_energy_double(spec, q):
    """sum_{i != j} G(q_i - q_j); twice the unordered-pair energy."""
    return 2.0 * interaction_energy(spec, q)


def _single_particle_G(spec, q):
    """G at the position itself; the N = 1 external singular potential."""
    return pot.eval_G(spec, q[..., 0, :]) if spec.pairwise is not None else np.zeros(q.shape[:-2])


def _kinetic_root(eps, p):
    return np.sqrt(1.0 + eps * np.sum(p * p, axis=-1))


def hamiltonian(state, potentials: pot.PotentialSpec, cfg: ModelConfig):
    """Energy of the configured model at the given state.

    Classical: ``m|v|^2/2 + sum U + (1/2) sum_{i != j} G``.  Relativistic:
    ``sum sqrt(1 + eps|p_i|^2) + eps sum U + eps sum_{i != j} G`` with the
    N = 1 convention of G evaluated at q itself.
    """
    q, p = _as_arrays(state)
    n = q.shape[-2]
    if cfg.requires_epsilon:
        eps = cfg.epsilon
        kin = np.sum(_kinetic_root(eps, p), axis=-1)
        u = np.sum(pot.eval_U(potentials, q), axis=-1)
        if n == 1:
            g = _single_particle_G(potentials, q)
        else:
            g = _pair_energy_double(potentials, q)
        return kin + eps * (u + g)
    m = cfg.mass
    kin = 0.5 * m * np.sum(p * p, axis=(-2, -1))
    u = np.sum(pot.eval_U(potentials, q), axis=-1)
    return kin + u + interaction_energy(potentials, q)


# ---------------------------------------------------------------------------
# Pairwise derivative helpers
# ---------------------------------------------------------------------------

def _pair_grad_sum(spec, q):
    """sum_{j != i} grad G(q_i - q_j) per particle; (..., N, d)."""
    if spec.pairwise is None or q.shape[-2] == 1:
        return np.zeros_like(q)
    diff, mask = pair_differences(q)
    g = pot.grad_G(spec, diff)
    g = np.where(mask[..., None], 0.0, g)
    return np.sum(g, axis=-2)


def _unit_pair_sum(q):
    """sum_{j != i} (q_i - q_j)/|q_i - q_j| per particle."""
    diff, mask = pair_differences(q)
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    u = np.where(mask[..., None], 0.0, diff / norm)
    return np.sum(u, axis=-2)


def _relativistic_grad_q_H(spec, q, eps):
    n = q.shape[-2]
    gu = pot.grad_U(spec, q)
    if n == 1:
        gg = pot.grad_G(spec, q[..., 0, :])[..., None, :] if spec.pairwise is not None else 0.0
        return eps * (gu + gg)
    return eps * (gu + 2.0 * _pair_grad_sum(spec, q))


def _rel_h_and_K(eps, p):
    """grad_p and per-particle Hessian blocks of sum_i sqrt(1+eps|p_i|^2)."""
    root = _kinetic_root(eps, p)[..., None]
    h = eps * p / root
    d = p.shape[-1]
    eye = np.eye(d)
    outer = p[..., :, None] * p[..., None, :]
    r2 = root[..., None]
    K = eps * ((r2**2) * eye - eps * outer) / r2**3
    return h, K


# ---------------------------------------------------------------------------
# Hamiltonian and Lyapunov observables
# ---------------------------------------------------------------------------

def observable_hamiltonian(potentials: pot.PotentialSpec, cfg: ModelConfig) -> SmoothObservable:
    if cfg.requires_epsilon:
        eps = cfg.epsilon

        def val(q, p):
            return hamiltonian((q, p), potentials, cfg)

        def gq(q, p):
            return np.broadcast_to(_relativistic_grad_q_H(potentials, q, eps), q.shape).copy()

        def gp(q, p):
            return _rel_h_and_K(eps, p)[0]

        def hp(q, p):
            return _rel_h_and_K(eps, p)[1]

        return SmoothObservable("H_rel", val, gq, gp, hp)

    m = cfg.mass

    def val(q, p):
        return hamiltonian((q, p), potentials, cfg)

    def gq(q, p):
        return pot.grad_U(potentials, q) + _pair_grad_sum(potentials, q)

    def gp(q, p):
        return m * p

    def hp(q, p):
        d = p.shape[-1]
        return np.broadcast_to(m * np.eye(d), p.shape + (d,)).copy()

    return SmoothObservable("H_classical", val, gq, gp, hp)


def default_eps1(m: float, potentials: pot.PotentialSpec) -> float:
    """Small coupling for the classical Lyapunov cross terms."""
    return min(1e-2, 0.25 * m * potentials.constants.a2)


def lyapunov_classical(potentials: pot.PotentialSpec, m: float, eps1: float) -> SmoothObservable:
    """H + eps1 m <x, v> - eps1 m sum_i <v_i, sum_j (x_i-x_j)/|x_i-x_j|>."""

    def val(q, p):
        cfg = ModelConfig("classical", q.shape[-2], q.shape[-1], dt=1.0, mass=m)
        h = hamiltonian((q, p), potentials, cfg)
        cross = eps1 * m * np.sum(q * p, axis=(-2, -1))
        sing = eps1 * m * np.sum(_unit_pair_sum(q) * p, axis=(-2, -1))
        return h + cross - sing

    def gp(q, p):
        return m * p + eps1 * m * q - eps1 * m * _unit_pair_sum(q)

    def gq(q, p):
        base = pot.grad_U(potentials, q) + _pair_grad_sum(potentials, q) + eps1 * m * p
        n = q.shape[-2]
        if n == 1:
            return base
        diff, mask = pair_differences(q)
        s = p[..., :, None, :] - p[..., None, :, :]
        norm = np.linalg.norm(diff, axis=-1, keepdims=True)
        u = diff / norm
        jv = (s - u * np.sum(u * s, axis=-1, keepdims=True)) / norm
        jv = np.where(mask[..., None], 0.0, jv)
        return base - eps1 * m * np.sum(jv, axis=-2)

    def hp(q, p):
        d = p.shape[-1]
        return np.broadcast_to(m * np.eye(d), p.shape + (d,)).copy()

    return SmoothObservable("V_classical", val, gq, gp, hp)


def lyapunov_relativistic_single(potentials: pot.PotentialSpec, eps: float,
                                 eps1: float, kappa1: float = 0.0) -> SmoothObservable:
    """H^2 + eps1 <p, q> - <p, q>/|q| + kappa1 for the single-particle model."""

    def parts(q, p):
        cfg = ModelConfig("relativistic", 1, q.shape[-1], dt=1.0, epsilon=eps)
        h = hamiltonian((q, p), potentials, cfg)
        qq = q[..., 0, :]
        pp = p[..., 0, :]
        r = np.linalg.norm(qq, axis=-1)
        if np.any(r == 0.0):
            raise pot.SingularInputError("single-particle Lyapunov undefined at q = 0")
        return h, qq, pp, r

    def val(q, p):
        h, qq, pp, r = parts(q, p)
        dot = np.sum(qq * pp, axis=-1)
        return h * h + eps1 * dot - dot / r + kappa1

    def gp(q, p):
        h, qq, pp, r = parts(q, p)
        hh, _ = _rel_h_and_K(eps, p)
        return 2.0 * h[..., None, None] * hh + (eps1 * qq - qq / r[..., None])[..., None, :]

    def gq(q, p):
        h, qq, pp, r = parts(q, p)
        gh = _relativistic_grad_q_H(potentials, q, eps)
        rr = r[..., None]
        un = qq / rr
        jp = (pp - un * np.sum(un * pp, axis=-1, keepdims=True)) / rr
        return 2.0 * h[..., None, None] * gh + (eps1 * pp - jp)[..., None, :]

    def hp(q, p):
        h, qq, pp, r = parts(q, p)
        hh, K = _rel_h_and_K(eps, p)
        outer = hh[..., :, None] * hh[..., None, :]
        return 2.0 * (outer + h[..., None, None, None] * K)

    return SmoothObservable("V_rel_single", val, gq, gp, hp)


def lyapunov_relativistic_multi(potentials: pot.PotentialSpec, eps: float,
                                A1: float = 10.0, A2: float = 10.0,
                                kappaN: float = 0.0) -> SmoothObservable:
    """A1 H^3 + eps H <q, p> - A2 eps^2 * pair momentum-alignment + kappaN.

    The pair term sums <q_i - q_j, p_i - p_j>/|q_i - q_j|^(beta1 - 1) over
    ordered pairs; it requires beta1 in (1, 2].
    """
    b1 = potentials.beta1
    if not (1 < b1 <= 2):
        raise ValueError("multi-particle relativistic Lyapunov needs beta1 in (1, 2]")

    def cfg_for(q):
        return ModelConfig("relativistic", q.shape[-2], q.shape[-1], dt=1.0, epsilon=eps)

    def pair_term(q, p):
        diff, mask = pair_differences(q)
        s = p[..., :, None, :] - p[..., None, :, :]
        norm = np.linalg.norm(diff, axis=-1)
        dot = np.sum(diff * s, axis=-1)
        vals = np.where(mask, 0.0, dot / norm ** (b1 - 1.0))
        return np.sum(vals, axis=(-2, -1))

    def val(q, p):
        h = hamiltonian((q, p), potentials, cfg_for(q))
        s = np.sum(q * p, axis=(-2, -1))
        return A1 * h**3 + eps * h * s - A2 * eps**2 * pair_term(q, p) + kappaN

    def gp(q, p):
        h = hamiltonian((q, p), potentials, cfg_for(q))[..., None, None]
        s = np.sum(q * p, axis=(-2, -1))[..., None, None]
        hh, _ = _rel_h_and_K(eps, p)
        diff, mask = pair_differences(q)
        norm = np.linalg.norm(diff, axis=-1, keepdims=True)
        w = np.where(mask[..., None], 0.0, diff / norm ** (b1 - 1.0))
        dpair = 2.0 * np.sum(w, axis=-2)
        return 3.0 * A1 * h**2 * hh + eps * (hh * s + h * q) - A2 * eps**2 * dpair

    def gq(q, p):
        h = hamiltonian((q, p), potentials, cfg_for(q))[..., None, None]
        s = np.sum(q * p, axis=(-2, -1))[..., None, None]
        gh = _relativistic_grad_q_H(potentials, q, eps)
        diff, mask = pair_differences(q)
        sp = p[..., :, None, :] - p[..., None, :, :]
        norm = np.linalg.norm(diff, axis=-1, keepdims=True)
        dot = np.sum(diff * sp, axis=-1, keepdims=True)
        term = sp / norm ** (b1 - 1.0) - (b1 - 1.0) * dot * diff / norm ** (b1 + 1.0)
        term = np.where(mask[..., None], 0.0, term)
        dpair = 2.0 * np.sum(term, axis=-2)
        return 3.0 * A1 * h**2 * gh + eps * (gh * s + h * p) - A2 * eps**2 * dpair

    def hp(q, p):
        h = hamiltonian((q, p), potentials, cfg_for(q))[..., None, None, None]
        s = np.sum(q * p, axis=(-2, -1))[..., None, None, None]
        hh, K = _rel_h_and_K(eps, p)
        outer_hh = hh[..., :, None] * hh[..., None, :]
        sym = hh[..., :, None] * q[..., None, :] + q[..., :, None] * hh[..., None, :]
        return 3.0 * A1 * (2.0 * h * outer_hh + h**2 * K) + eps * (K * s + sym)

    return SmoothObservable("V_rel_multi", val, gq, gp, hp)


def V_classical(state, potentials, m: float, eps1: Optional[float] = None):
    if eps1 is None:
        eps1 = default_eps1(m, potentials)
    q, p = _as_arrays(state)
    return lyapunov_classical(potentials, m, eps1).value(q, p)


def V_relativistic_single(state, potentials, eps: float, eps1: float, kappa1: float = 0.0):
    q, p = _as_arrays(state)
    return lyapunov_relativistic_single(potentials, eps, eps1, kappa1).value(q, p)


def V_relativistic_multi(state, potentials, eps: float, A1: float = 10.0,
                         A2: float = 10.0, kappaN: float = 0.0):
    q, p = _as_arrays(state)
    return lyapunov_relativistic_multi(potentials, eps, A1, A2, kappaN).value(q, p)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _generator_forces(potentials, q, cfg):
    """-grad U - pair sum (with the N = 1 relativistic G convention)."""
    f = -pot.grad_U(potentials, q) - _pair_grad_sum(potentials, q)
    if cfg.requires_epsilon and q.shape[-2] == 1 and potentials.pairwise is not None:
        f = f - pot.grad_G(potentials, q[..., 0, :])[..., None, :]
    return f


def apply_generator(f: SmoothObservable, state, cfg: ModelConfig, potentials,
                    diffusion=None):
    """Exact generator action L f at the state; classical or relativistic."""
    q, p = _as_arrays(state)
    if cfg.is_truncated or cfg.is_overdamped or cfg.model_kind == "classical_limit":
        raise ValueError("generators are provided for the classical and relativistic models")
    gq = f.grad_q(q, p)
    gp = f.grad_p(q, p)
    hp = f.hess_p(q, p)
    forces = _generator_forces(potentials, q, cfg)
    if cfg.model_kind == "classical":
        m = cfg.mass
        if diffusion is None:
            diffusion = dfn.ConstantDiffusion(1.0)
        g = dfn.scalar_field(diffusion, q)
        first = np.sum(p * gq, axis=(-2, -1))
        first += np.sum((forces - g[..., None] * p) * gp, axis=(-2, -1)) / m
        trace = np.einsum("...ii->...", hp)
        second = np.sum(g * trace, axis=-1) / m**2
        return first + second
    eps = cfg.epsilon
    root = _kinetic_root(eps, p)[..., None]
    ptilde = p / root
    a, b = dfn._rel_D_coeffs(eps, p)
    friction = -dfn.apply_iso_outer(a, b, p, ptilde)
    divd = dfn.div_D(dfn.RelativisticDiffusion(eps), p)
    first = np.sum(ptilde * gq, axis=(-2, -1))
    first += np.sum((friction + divd + forces) * gp, axis=(-2, -1))
    trace = np.einsum("...ii->...", hp)
    php = np.einsum("...i,...ij,...j->...", p, hp, p)
    second = np.sum(a * trace + b * php, axis=-1)
    return first + second


def generator_oracle(f_value, state, cfg: ModelConfig, potentials, diffusion=None,
                     steps=(1e-3, 5e-4), nodes: int = 15):
    """Short-time quadrature oracle for L f, independent of f's derivatives.

    Evaluates (E[f(X_h)] - f(x))/h for one Euler-Maruyama step with the
    Gaussian expectation taken by tensor Gauss-Hermite quadrature, then
    Richardson-extrapolates the two step sizes to kill the O(h) bias.  Only
    f's plain evaluator is used.
    """
    q, p = _as_arrays(state)
    system = build_system(cfg, potentials, diffusion)
    n, d = q.shape[-2:]
    if q.ndim != 2:
        raise ValueError("oracle expects a single unbatched state")
    dim = n * d
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    xi = np.stack([g.ravel() for g in grids], axis=-1).reshape(-1, n, d)
    wprod = np.ones(xi.shape[0])
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    for g in wgrids:
        wprod = wprod * g.ravel()
    h1, h2 = max(steps), min(steps)
    f0 = f_value(q, p)

    def e_of(h):
        dq, dp = system.drift(q, p)
        nq, npp = system.noise(q, p, np.sqrt(h) * xi)
        q1 = q + h * dq + nq
        p1 = p + h * dp + npp
        vals = f_value(q1, p1)
        return (np.sum(wprod * vals) - f0) / h

    e1, e2 = e_of(h1), e_of(h2)
    return 2.0 * e2 - e1  # exact when h1 = 2 h2


# ---------------------------------------------------------------------------
# Drift certification
# ---------------------------------------------------------------------------

@dataclass
class SamplePlan:
    """Where to probe the drift inequality.

    Radial grids are logarithmic; near-collision families place one pair at
    separations down to ``sep_lo`` with the rest of the configuration
    random.  The plan is embedded in the certificate for reproducibility.
    """

    q_radii: tuple = tuple(np.geomspace(0.05, 1e3, 16))
    p_radii: tuple = tuple(np.geomspace(0.05, 1e2, 12))
    directions: int = 8
    sep_lo: float = 1e-3
    sep_hi: float = 1.0
    near_collision: int = 10
    seed: int = 2024

    def describe(self) -> dict:
        return {
            "q_radii": [float(r) for r in self.q_radii],
            "p_radii": [float(r) for r in self.p_radii],
            "directions": self.directions,
            "sep_range": [self.sep_lo, self.sep_hi],
            "near_collision": self.near_collision,
            "seed": self.seed,
        }


def _plan_states(plan: SamplePlan, n: int, d: int):
    rng = np.random.default_rng(plan.seed)
    qs, ps = [], []

    def rand_dir(count):
        v = rng.standard_normal((count, d))
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def spread_config(scale):
        base = rng.standard_normal((n, d))
        if d == 1:
            base = np.sort(base, axis=0)
            gaps = np.diff(base[:, 0])
            if n > 1 and gaps.min() < 0.2:
                base[:, 0] = np.arange(n) - 0.5 * (n - 1)
        return scale * base

    for rq in plan.q_radii:
        for rp in plan.p_radii:
            for _ in range(plan.directions):
                qcfg = spread_config(1.0)
                qcfg *= rq / max(np.linalg.norm(qcfg, axis=-1).max(), 1e-12)
                pcfg = rp * rand_dir(n)
                qs.append(qcfg)
                ps.append(pcfg)
    seps = np.geomspace(plan.sep_lo, plan.sep_hi, plan.near_collision) if n > 1 else []
    for s in seps:
        for rp in (plan.p_radii[0], plan.p_radii[-1]):
            qcfg = spread_config(1.0)
            u = rand_dir(1)[0] if d > 1 else np.array([1.0])
            qcfg[1] = qcfg[0] + s * u
            if d == 1:
                qcfg = np.sort(qcfg, axis=0)
                if np.diff(qcfg[:, 0]).min() <= 0:
                    continue
            qs.append(qcfg)
            ps.append(rp * rand_dir(n))
    return np.array(qs), np.array(ps)


@dataclass
class DriftCertificate:
    alpha: float
    c: float
    C: float
    kappa: float
    valid: bool
    n_samples: int
    core_bound: float       # V_0, boundary of the compact core
    core_max_LV: float      # C_0
    max_residual: float
    params: dict
    plan: dict

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "c": self.c, "C": self.C, "kappa": self.kappa,
            "valid": self.valid, "n_samples": self.n_samples,
            "core_bound": self.core_bound, "core_max_LV": self.core_max_LV,
            "max_residual": self.max_residual, "params": self.params, "plan": self.plan,
        }


_V_KINDS = ("classical", "relativistic_single", "relativistic_multi")
_ALPHA_DEFAULT = {"classical": 1.0, "relativistic_single": 0.5, "relativistic_multi": 2.0 / 3.0}


def _certify_once(obs: SmoothObservable, cfg, potentials, diffusion, alpha, plan):
    qs, ps = _plan_states(plan, cfg.particle_count, cfg.dimension)
    v_raw = obs.value(qs, ps)
    lv = apply_generator(obs, (qs, ps), cfg, potentials, diffusion)
    kappa = 1.0 + max(0.0, -float(np.min(v_raw)))
    v = v_raw + kappa
    v0 = float(np.quantile(v, 0.9))
    core = v <= v0
    c0 = float(np.max(lv[core])) if np.any(core) else 0.0
    outside = ~core
    if not np.any(outside):
        return kappa, v0, c0, 0.0, c0, 0.0, len(v), True
    ratios = (c0 - lv[outside]) / v[outside] ** alpha
    c = float(np.min(ratios))
    big_c = c0 + max(c, 0.0) * v0**alpha
    resid = float(np.max(lv + max(c, 0.0) * v**alpha - big_c))
    return kappa, v0, c0, c, big_c, resid, len(v), c > 0.0


def certify_drift(v_kind: str, cfg: ModelConfig, potentials, diffusion=None,
                  alpha: Optional[float] = None, plan: Optional[SamplePlan] = None,
                  eps1: Optional[float] = None, A1: float = 10.0, A2: float = 10.0,
                  eps1_floor: float = 1e-6) -> DriftCertificate:
    """Empirically certify L V <= -c V^alpha + C on the sample plan.

    The compact core is the sampled 0.9-quantile of V, where C absorbs the
    generator; outside it the fitted c is the worst-case margin.  An invalid
    certificate (c <= 0) is a reported outcome, not an exception.  For the
    single-particle relativistic function, eps1 = None sweeps downward by
    decades from the default until the certificate validates or the floor is
    reached; the value used is recorded.
    """
    if v_kind not in _V_KINDS:
        raise ValueError(f"v_kind must be one of {_V_KINDS}")
    if alpha is None:
        alpha = _ALPHA_DEFAULT[v_kind]
    if plan is None:
        plan = SamplePlan()

    sweep: list
    if v_kind == "classical":
        e1 = eps1 if eps1 is not None else default_eps1(cfg.mass, potentials)
        sweep = [e1]
    elif v_kind == "relativistic_single":
        e1 = eps1 if eps1 is not None else min(1e-2, 0.25 * cfg.epsilon)
        sweep = [e1] if eps1 is not None else list(_decades(e1, eps1_floor))
    else:
        sweep = [None]

    last = None
    for e1 in sweep:
        if v_kind == "classical":
            obs = lyapunov_classical(potentials, cfg.mass, e1)
            params = {"eps1": e1, "m": cfg.mass}
        elif v_kind == "relativistic_single":
            obs = lyapunov_relativistic_single(potentials, cfg.epsilon, e1, 0.0)
            params = {"eps1": e1, "epsilon": cfg.epsilon}
        else:
            obs = lyapunov_relativistic_multi(potentials, cfg.epsilon, A1, A2, 0.0)
            params = {"A1": A1, "A2": A2, "epsilon": cfg.epsilon,
                      "beta1": potentials.beta1}
        kappa, v0, c0, c, big_c, resid, n, ok = _certify_once(
            obs, cfg, potentials, diffusion, alpha, plan)
        last = DriftCertificate(alpha, c, big_c, kappa, ok, n, v0, c0, resid,
                                params, plan.describe())
        if ok:
            return last
    return last


def _decades(start: float, floor: float):
    x = start
    while x >= floor * (1 - 1e-12):
        yield x
        x /= 10.0
