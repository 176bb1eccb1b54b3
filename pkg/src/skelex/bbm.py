"""Skeleton branching Brownian motion: exact simulation and functionals.

Particles live Exp(q) lifetimes, move as standard Brownian motions and are
replaced in place by k >= 2 offspring drawn from the skeleton offspring law.
The derivative and additive martingales at the critical slope sqrt(2) are

    dM_t = sum_u (sqrt2 t - z_u) e^(sqrt2 (z_u - sqrt2 t)),
    M_t  = sum_u e^(sqrt2 (z_u - sqrt2 t)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _engine
from ._engine import SQRT2, EnsembleResult, run_branching_ensemble
from .errors import RangeViolation, SkelexError
from .point_process import PointMeasure
from .skeleton import OffspringLaw, sample_offspring_counts


@dataclass(frozen=True)
class SinglePoint:
    x: float = 0.0


@dataclass(frozen=True)
class PoissonField:
    """Poisson numbers of initial particles at each (location, intensity)."""
    pairs: tuple[tuple[float, float], ...]

    @classmethod
    def at_point(cls, x: float, intensity: float) -> "PoissonField":
        return cls(pairs=((float(x), float(intensity)),))


@dataclass(frozen=True)
class BbmConfig:
    law: OffspringLaw
    initial: SinglePoint | PoissonField
    horizon: float
    observation_times: tuple[float, ...]
    seed: int
    max_particles: int = 5_000_000
    chunk_size: int = 1024

    def __post_init__(self):
        ts = self.observation_times
        if any(t < 0 or t > self.horizon for t in ts):
            raise ValueError("observation times must lie in [0, horizon]")
        if list(ts) != sorted(ts):
            raise ValueError("observation times must be sorted")
        if self.max_particles < 1:
            raise ValueError("max_particles >= 1")


@dataclass
class SnapshotFunctionals:
    dM: float
    M: float
    max: float
    count: int


@dataclass
class BbmSnapshot:
    time: float
    particles: PointMeasure | None
    functionals: SnapshotFunctionals


def _init_fn(initial):
    if isinstance(initial, SinglePoint):
        return _engine.single_point_init(initial.x)
    if isinstance(initial, PoissonField):
        return _engine.poisson_field_init(list(initial.pairs))
    raise TypeError(f"unsupported initial condition {initial!r}")


def martingale_pair(positions: np.ndarray, t: float, mass: float = 1.0) -> tuple[float, float]:
    """(dM_t, M_t) recomputed from particle positions."""
    w = np.exp(SQRT2 * (positions - SQRT2 * t))
    return float(mass * np.sum((SQRT2 * t - positions) * w)), float(mass * np.sum(w))


def run_bbm_ensemble(cfg: BbmConfig, n_replicas: int,
                     phi: Callable[[np.ndarray], np.ndarray] | None = None,
                     keep_final_particles: bool = False,
                     keep_all_particles: bool = False) -> EnsembleResult:
    """Simulate n_replicas independent copies; see EnsembleResult for outputs."""
    times = cfg.observation_times if cfg.observation_times else (cfg.horizon,)
    return run_branching_ensemble(
        n_replicas=n_replicas,
        seed=cfg.seed,
        rate=cfg.law.q,
        sample_counts=lambda rng, n: sample_offspring_counts(cfg.law, rng, n),
        init=_init_fn(cfg.initial),
        obs_times=np.asarray(times, dtype=float),
        mass=1.0,
        phi=phi,
        keep_final_particles=keep_final_particles,
        keep_all_particles=keep_all_particles,
        max_particles=cfg.max_particles,
        chunk_size=cfg.chunk_size,
    )


def simulate_bbm(cfg: BbmConfig) -> list[BbmSnapshot]:
    """One replica with full particle snapshots at every observation time."""
    times = list(cfg.observation_times) if cfg.observation_times else [cfg.horizon]
    res = run_bbm_ensemble(cfg, n_replicas=1, keep_all_particles=True)
    snaps = []
    for it, t in enumerate(times):
        _, pos = res.particles_all[it]
        pm = PointMeasure(positions=pos, masses=np.ones(pos.shape[0]))
        snaps.append(BbmSnapshot(
            time=float(t),
            particles=pm,
            functionals=SnapshotFunctionals(
                dM=float(res.dmart[it, 0]),
                M=float(res.amart[it, 0]),
                max=float(res.max_pos[it, 0]),
                count=int(res.count[it, 0]),
            )))
    return snaps


def kpp_duality_estimate(cfg: BbmConfig, phi: Callable[[np.ndarray], np.ndarray],
                         t: float, n_replicas: int) -> tuple[float, float]:
    """Monte Carlo estimate of 1 - E prod_u (1 - phi(z_u(t))) with stderr."""
    probe = phi(np.linspace(-30, 30, 2001))
    if np.any(probe < -1e-12) or np.any(probe > 1.0 + 1e-12):
        raise RangeViolation("phi must map into [0, 1]")
    cfg2 = BbmConfig(law=cfg.law, initial=cfg.initial, horizon=t,
                     observation_times=(t,), seed=cfg.seed,
                     max_particles=cfg.max_particles, chunk_size=cfg.chunk_size)
    res = run_bbm_ensemble(cfg2, n_replicas, phi=phi)
    vals = 1.0 - res.prod[-1]
    est = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_replicas))
    return est, stderr


def martingale_trajectories(cfg: BbmConfig, n_replicas: int) -> dict[str, np.ndarray]:
    """Per-replica time series of (dM_t, M_t) at the observation times."""
    if len(cfg.observation_times) < 2:
        raise ValueError("need at least two observation times")
    res = run_bbm_ensemble(cfg, n_replicas)
    return {"times": res.obs_times, "dM": res.dmart, "M": res.amart,
            "max": res.max_pos, "count": res.count}


@dataclass
class ConditionedSample:
    """Recentred population and overshoot for one accepted replica."""
    decoration: PointMeasure      # Z_t - max Z_t, support in (-inf, 0]
    overshoot: float              # max Z_t - sqrt2 t - z_shift


@dataclass
class DecorationRun:
    accepted: list[ConditionedSample]
    n_replicas: int
    acceptance_rate: float
    t: float
    z_shift: float

    def overshoots(self) -> np.ndarray:
        return np.array([s.overshoot for s in self.accepted])


def sample_conditioned_decorations(cfg: BbmConfig, t: float, z_shift: float,
                                   n_replicas: int,
                                   want_immigration_proxy: bool = False,
                                   max_bank: int = 4000,
                                   block: int = 4000) -> DecorationRun:
    """Rejection sampling of the population seen from its maximum.

    A replica is accepted when max Z_t - sqrt2 t - z_shift > 0; accepted
    replicas contribute (Z_t - max Z_t) and the overshoot. Aggregated samples
    form the empirical decoration bank. Replicas are simulated in blocks so
    only accepted populations stay in memory.
    """
    if want_immigration_proxy:
        raise SkelexError("pathwise immigration is not simulated; use the "
                          "analytic immigration functional instead")
    if t < 1.0:
        raise ValueError("decoration sampling requires t >= 1")
    samples: list[ConditionedSample] = []
    n_accepted = 0
    done = 0
    block_index = 0
    while done < n_replicas:
        m = min(block, n_replicas - done)
        cfg2 = BbmConfig(law=cfg.law, initial=cfg.initial, horizon=t,
                         observation_times=(t,),
                         seed=cfg.seed + 977 * block_index,
                         max_particles=cfg.max_particles,
                         chunk_size=cfg.chunk_size)
        res = run_bbm_ensemble(cfg2, m, keep_final_particles=True)
        maxima = res.max_pos[-1]
        overshoot = maxima - SQRT2 * t - z_shift
        accepted_ids = np.flatnonzero(overshoot > 0)
        n_accepted += accepted_ids.size
        rid, pos = res.particles
        order = np.argsort(rid, kind="stable")
        rid, pos = rid[order], pos[order]
        starts = np.searchsorted(rid, accepted_ids, side="left")
        stops = np.searchsorted(rid, accepted_ids, side="right")
        for i, (a, b) in enumerate(zip(starts, stops)):
            if len(samples) >= max_bank:
                break
            r = accepted_ids[i]
            rel = pos[a:b] - maxima[r]
            samples.append(ConditionedSample(
                decoration=PointMeasure(positions=rel.copy(),
                                        masses=np.ones(rel.shape[0])),
                overshoot=float(overshoot[r])))
        done += m
        block_index += 1
    return DecorationRun(accepted=samples, n_replicas=n_replicas,
                         acceptance_rate=n_accepted / n_replicas,
                         t=t, z_shift=z_shift)


def functionals_to_csv(res: EnsembleResult, path) -> None:
    """CSV dump: replica_id, time, dM, M, max, count."""
    with open(path, "w") as fh:
        fh.write("replica_id,time,dM,M,max,count\n")
        for it, t in enumerate(res.obs_times):
            for r in range(res.n_replicas):
                fh.write(f"{r},{t},{float(res.dmart[it, r])!r},"
                         f"{float(res.amart[it, r])!r},"
                         f"{float(res.max_pos[it, r])!r},{int(res.count[it, r])}\n")


def particles_to_csv(res: EnsembleResult, path) -> None:
    """CSV dump of final-time particles: replica_id, time, position."""
    if res.particles is None:
        raise ValueError("run with keep_final_particles=True")
    rid, pos = res.particles
    t = res.obs_times[-1]
    with open(path, "w") as fh:
        fh.write("replica_id,time,position\n")
        for r, p in zip(rid, pos):
            fh.write(f"{int(r)},{t},{float(p)!r}\n")
