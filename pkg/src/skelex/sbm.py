"""Particle-system approximation of the measure-valued branching diffusion.

Particles of mass eps branch at rate rho = psi'(1/eps) with offspring
generating function

    g_eps(s) = s + (eps / rho) psi((1 - s) / eps),

which has g_eps(0) >= 0, no single-offspring mass, and mean 1 + 1/rho, so the
log-Laplace functional of the empirical mass measure converges to the
semilinear-equation solution as eps -> 0. The residual eps-bias is measured
against the analytic oracle, never assumed.

For a quadratic mechanism the offspring table is {0, 2} and the population is
a linear birth-death process; a pruned-genealogy sampler (only lineages with
descendants at the horizon are simulated, with the exact time-inhomogeneous
split rate) produces terminal populations at a fraction of the full event
cost. It samples from the identical law and is validated against the full
simulator in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from ._engine import SQRT2, EnsembleResult, run_branching_ensemble
from .errors import ConditionA3Required, InvalidEps
from .mechanism import (
    BranchingMechanism,
    check_conditions,
    eval_psi,
    eval_psi_deriv,
    require_normalized,
)
from .point_process import PointMeasure
from .skeleton import OffspringLaw

_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class ApproxConfig:
    eps: float
    rho: float
    offspring: OffspringLaw       # allows k = 0; k = 1 absent by construction
    horizon: float
    observation_times: tuple[float, ...]
    seed: int
    max_particles: int = 5_000_000
    chunk_size: int = 1024


@dataclass
class MassMeasure:
    """Equal-mass atoms; total mass is eps times the atom count."""
    positions: np.ndarray
    eps: float
    t: float

    def total_mass(self) -> float:
        return self.eps * self.positions.shape[0]

    def to_point_measure(self) -> PointMeasure:
        return PointMeasure(positions=self.positions,
                            masses=np.full(self.positions.shape[0], self.eps))


def derive_particle_approximation(mech: BranchingMechanism, eps: float,
                                  subcritical_shift: float = 0.0
                                  ) -> tuple[float, OffspringLaw]:
    """Branching rate and offspring table of the mass-eps particle system.

    With psi_r = psi(. + shift) (shift = root for the subcritical variant):
    rho = psi_r'(1/eps), p_0 = psi_r(1/eps) eps / rho, p_1 = 0 and
    p_k = (-1)^k psi_r^(k)(1/eps) eps^(1-k) / (rho k!) for k >= 2.
    """
    require_normalized(mech, "particle approximation")
    if not 0 < eps < 1.0 / mech.lambda_star:
        raise InvalidEps(f"eps must lie in (0, {1.0 / mech.lambda_star})")
    lam0 = 1.0 / eps + subcritical_shift
    rho = eval_psi_deriv(mech, lam0, 1)
    if rho <= 0:
        raise InvalidEps("psi'(1/eps) must be positive; decrease eps")
    # psi vanishes at the root, so the shifted variant needs no constant term
    p0 = eval_psi(mech, lam0) * eps / rho
    pairs = [(0, p0)]
    cum = p0
    log_kfact = math.log(2.0)
    k = 2
    while 1.0 - cum > _TAIL_TOL and k < 4096:
        mk = eval_psi_deriv(mech, lam0, k) * (1.0 if k % 2 == 0 else -1.0)
        pk = 0.0
        if mk > 0:
            log_pk = (math.log(mk) + (1.0 - k) * math.log(eps)
                      - math.log(rho) - log_kfact)
            pk = math.exp(log_pk)
        pairs.append((k, pk))
        cum += pk
        if pk < 1e-17 and k > 4:
            break
        k += 1
        log_kfact += math.log(k)
    law = OffspringLaw.from_probs(rho, pairs, truncation_tail=max(0.0, 1.0 - cum))
    return rho, law


def make_sbm_config(mech: BranchingMechanism, eps: float, horizon: float,
                    observation_times, seed: int, subcritical: bool = False,
                    max_particles: int = 5_000_000,
                    chunk_size: int = 1024) -> ApproxConfig:
    shift = mech.lambda_star if subcritical else 0.0
    rho, law = derive_particle_approximation(mech, eps, subcritical_shift=shift)
    return ApproxConfig(eps=eps, rho=rho, offspring=law, horizon=horizon,
                        observation_times=tuple(observation_times), seed=seed,
                        max_particles=max_particles, chunk_size=chunk_size)


def _delta_init(x: float, eps: float) -> tuple[_engine.InitFn, int]:
    """Unit mass at x represented by ceil(1/eps) particles; rounding reported."""
    n0 = int(math.ceil(1.0 / eps))
    return _engine.single_point_init(x), n0


def run_sbm_ensemble(cfg: ApproxConfig, n_replicas: int, initial_x: float = 0.0,
                     initial_mass: float = 1.0, phi=None,
                     keep_final_particles: bool = False,
                     keep_all_particles: bool = False) -> EnsembleResult:
    """Ensemble of particle systems started from initial_mass at a point."""
    n0 = int(round(initial_mass / cfg.eps))

    def init(rng, n):
        rid = np.repeat(np.arange(n, dtype=np.int64), n0)
        return rid, np.full(n * n0, float(initial_x))

    law = cfg.offspring
    return run_branching_ensemble(
        n_replicas=n_replicas,
        seed=cfg.seed,
        rate=cfg.rho,
        sample_counts=lambda rng, n: law.ks[
            np.minimum(np.searchsorted(law.cdf, rng.random(n), side="right"),
                       len(law.ks) - 1)],
        init=init,
        obs_times=np.asarray(cfg.observation_times, dtype=float),
        mass=cfg.eps,
        phi=phi,
        keep_final_particles=keep_final_particles,
        keep_all_particles=keep_all_particles,
        max_particles=cfg.max_particles,
        chunk_size=cfg.chunk_size,
    )


def simulate_sbm(cfg: ApproxConfig, initial: MassMeasure | None = None,
                 initial_x: float = 0.0, initial_mass: float = 1.0
                 ) -> list[MassMeasure]:
    """One replica; snapshots of the mass measure at each observation time."""
    if initial is not None:
        if initial.positions.size == 0:
            return [MassMeasure(np.empty(0), cfg.eps, t)
                    for t in cfg.observation_times]
        if not np.allclose(initial.positions, initial.positions[0]):
            raise ValueError("point-supported initial measure expected")
        initial_x = float(initial.positions[0])
        initial_mass = initial.eps * initial.positions.size
    res = run_sbm_ensemble(cfg, 1, initial_x=initial_x, initial_mass=initial_mass,
                           keep_all_particles=True)
    return [MassMeasure(res.particles_all[it][1], cfg.eps, float(t))
            for it, t in enumerate(cfg.observation_times)]


# ---------------------------------------------------------------------------
# pruned-genealogy sampler for quadratic mechanisms, single horizon
# ---------------------------------------------------------------------------

def _require_quadratic(mech: BranchingMechanism):
    if not mech.levy.is_zero() or mech.beta <= 0:
        raise ValueError("pruned-genealogy sampling requires a quadratic mechanism")
    require_normalized(mech, "pruned-genealogy sampling")


def survival_marks_quadratic(mech: BranchingMechanism, eps: float, T: float,
                             n_replicas: int, seed: int,
                             initial_mass: float = 1.0) -> np.ndarray:
    """Number of initial particles with descendants at T, per replica.

    This is the root-marking stage of the pruned-genealogy sampler on its own:
    extinction by T is exactly {no marked roots}, so the extinction law can be
    sampled without expanding any genealogy.
    """
    _require_quadratic(mech)
    v0 = 1.0 / eps
    n0 = int(round(initial_mass / eps))
    p_mark = math.exp(T) / (1.0 + v0 * math.expm1(T))
    rng = _engine._chunk_stream(seed, 0)
    return rng.binomial(n0, p_mark, n_replicas)


def run_sbm_terminal_quadratic(mech: BranchingMechanism, eps: float, T: float,
                               n_replicas: int, seed: int,
                               initial_x: float = 0.0, initial_mass: float = 1.0,
                               keep_particles: bool = False,
                               chunk_size: int = 64) -> EnsembleResult:
    """Exact terminal-time population of the quadratic particle system.

    Lineages without descendants at T are pruned at birth using the survival
    probability eps*v(tau), v' = v - v^2, v(0) = 1/eps; surviving lineages
    split binarily at the time-inhomogeneous rate v(T - s), sampled by exact
    hazard inversion. Single-survivor branch events leave no spatial trace and
    are skipped, so the work scales with the terminal population, not the
    event count.
    """
    _require_quadratic(mech)
    if not 0 < eps < 1:
        raise InvalidEps("eps in (0,1) required")
    v0 = 1.0 / eps
    n0 = int(round(initial_mass / eps))
    # A(tau) = 1 + v0 (e^tau - 1); survival prob of one particle over tau is
    # eps * v(tau) = e^tau / A(tau); integrated split hazard from s is log A(T-s)
    A_T = 1.0 + v0 * math.expm1(T)
    p_mark = math.exp(T) / A_T

    obs = np.asarray([T], dtype=float)
    n_times = 1
    chunks = [(i, lo, min(lo + chunk_size, n_replicas))
              for i, lo in enumerate(range(0, n_replicas, chunk_size))]

    count = np.zeros((n_times, n_replicas), dtype=np.int64)
    dmart = np.zeros((n_times, n_replicas))
    amart = np.zeros((n_times, n_replicas))
    max_pos = np.full((n_times, n_replicas), -np.inf)
    kept_r, kept_p = [], []

    for ci, lo, hi in chunks:
        n = hi - lo
        rng = _engine._chunk_stream(seed, ci)
        acc = _engine._Accum(n, T, eps, keep=keep_particles)
        marked = rng.random(n * n0) < p_mark
        rid = np.repeat(np.arange(n, dtype=np.int64), n0)[marked]
        pos = np.full(rid.shape[0], float(initial_x))
        s = np.zeros(rid.shape[0])
        while rid.size:
            E = rng.standard_exponential(rid.size)
            A_rem = 1.0 + v0 * np.expm1(T - s)
            A_next = A_rem * np.exp(-E)
            leaf = A_next < 1.0
            l_n = int(np.count_nonzero(leaf))
            if l_n:
                l_pos = pos[leaf] + rng.standard_normal(l_n) * np.sqrt(T - s[leaf])
                acc.add(rid[leaf], l_pos)
            br = ~leaf
            if not np.any(br):
                break
            tau_next = np.log1p((A_next[br] - 1.0) / v0)   # T - sigma
            sigma = T - tau_next
            step = sigma - s[br]
            b_pos = pos[br] + rng.standard_normal(step.shape[0]) * np.sqrt(
                np.maximum(step, 0.0))
            rid = np.repeat(rid[br], 2)
            pos = np.repeat(b_pos, 2)
            s = np.repeat(sigma, 2)
        count[0, lo:hi] = acc.count
        dmart[0, lo:hi] = acc.dmart
        amart[0, lo:hi] = acc.amart
        max_pos[0, lo:hi] = acc.max_pos
        if keep_particles:
            r, p = acc.kept()
            kept_r.append(r + lo)
            kept_p.append(p)

    res = EnsembleResult(obs_times=obs, n_replicas=n_replicas, mass=eps,
                         count=count, dmart=dmart, amart=amart, max_pos=max_pos,
                         prod=None, capped=np.zeros(n_replicas, dtype=bool))
    if keep_particles:
        res.particles = (
            np.concatenate(kept_r) if kept_r else np.empty(0, dtype=np.int64),
            np.concatenate(kept_p) if kept_p else np.empty(0))
    return res


# ---------------------------------------------------------------------------
# skeleton Poissonization and derivative martingale
# ---------------------------------------------------------------------------

def poissonize_skeleton(x_positions: np.ndarray, eps: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Poisson number of unit skeleton atoms given a mass snapshot.

    Under the standing normalization the conditional skeleton is a Poisson
    random measure with the mass measure itself as intensity: N ~ Poisson of
    the total mass, atom positions drawn uniformly among equal-mass particles.
    """
    n = x_positions.shape[0]
    if n == 0:
        return np.empty(0)
    N = int(rng.poisson(eps * n))
    if N == 0:
        return np.empty(0)
    idx = rng.integers(0, n, N)
    return x_positions[idx]


def poissonize_batch(rid: np.ndarray, pos: np.ndarray, n_replicas: int, eps: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Poissonization across replicas given flattened particles.

    rid must be sorted; returns (z_rid, z_pos) of skeleton atoms per replica.
    """
    counts = np.bincount(rid, minlength=n_replicas)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    draws = rng.poisson(eps * counts)
    total = int(draws.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    z_rid = np.repeat(np.arange(n_replicas, dtype=np.int64), draws)
    base = np.repeat(offsets[:-1], draws)
    span = np.repeat(counts, draws)
    idx = base + (rng.random(total) * span).astype(np.int64)
    return z_rid, pos[idx]


def derivative_martingale_values(positions: np.ndarray, t: float, eps: float
                                 ) -> tuple[float, float]:
    """(dW_t, W_t) of one mass snapshot."""
    w = np.exp(SQRT2 * (positions - SQRT2 * t))
    return (float(eps * np.sum((SQRT2 * t - positions) * w)),
            float(eps * np.sum(w)))


# ---------------------------------------------------------------------------
# conditioned sampling (requires the polynomial lower-bound condition)
# ---------------------------------------------------------------------------

@dataclass
class ConditionedSbmSample:
    mass_decoration: PointMeasure      # X_t - max X_t (eps masses)
    skeleton_decoration: PointMeasure  # poissonized Z_t - max X_t (unit masses)
    overshoot: float                   # max X_t - sqrt2 t - z_shift


@dataclass
class ConditionedSbmRun:
    accepted: list[ConditionedSbmSample]
    n_replicas: int
    acceptance_rate: float
    t: float
    z_shift: float

    def overshoots(self) -> np.ndarray:
        return np.array([s.overshoot for s in self.accepted])


def sample_conditioned_sbm(mech: BranchingMechanism, eps: float, t: float,
                           z_shift: float, n_replicas: int, seed: int,
                           initial_mass: float = 1.0, max_bank: int = 4000,
                           use_pruned: bool = True) -> ConditionedSbmRun:
    """Rejection sampling of the recentred mass measure and its skeleton.

    Refused when the polynomial lower-bound condition fails: in that regime
    the support maximum is infinite and the sampler would silently measure the
    particle cap instead. The support maximum is approximated by the top
    particle position.
    """
    report = check_conditions(mech)
    if not report.poly_lower_bound.holds:
        raise ConditionA3Required(
            "conditioned sampling needs the polynomial lower-bound condition")
    if use_pruned and mech.levy.is_zero() and mech.beta > 0:
        res = run_sbm_terminal_quadratic(mech, eps, t, n_replicas, seed,
                                         initial_mass=initial_mass,
                                         keep_particles=True)
    else:
        cfg = make_sbm_config(mech, eps, t, (t,), seed)
        res = run_sbm_ensemble(cfg, n_replicas, initial_mass=initial_mass,
                               keep_final_particles=True)
    maxima = res.max_pos[-1]
    overshoot = maxima - SQRT2 * t - z_shift
    accepted_ids = np.flatnonzero(overshoot > 0)
    rate = accepted_ids.size / n_replicas
    rid, pos = res.particles
    order = np.argsort(rid, kind="stable")
    rid, pos = rid[order], pos[order]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(0xC0FFEE,)))
    samples = []
    starts = np.searchsorted(rid, accepted_ids, side="left")
    stops = np.searchsorted(rid, accepted_ids, side="right")
    for i, (a, b) in enumerate(zip(starts, stops)):
        if len(samples) >= max_bank:
            break
        r = accepted_ids[i]
        xpos = pos[a:b]
        zpos = poissonize_skeleton(xpos, eps, rng)
        samples.append(ConditionedSbmSample(
            mass_decoration=PointMeasure(positions=xpos - maxima[r],
                                         masses=np.full(xpos.shape[0], eps)),
            skeleton_decoration=PointMeasure.unit_atoms(zpos - maxima[r])
            if zpos.size else PointMeasure.empty(),
            overshoot=float(overshoot[r])))
    return ConditionedSbmRun(accepted=samples, n_replicas=n_replicas,
                             acceptance_rate=rate, t=t, z_shift=z_shift)
