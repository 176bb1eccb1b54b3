"""Vectorized event-driven simulation of branching Brownian particle systems.

Replicas are flattened into shared arrays and processed in replica chunks.
Within an observation interval, particles are handled in branching rounds:
each particle draws an exponential lifetime; those outliving the interval are
moved to the observation time and folded into per-replica statistics, the rest
branch in place and their offspring feed the next round. Exponential
memorylessness makes restarting lifetimes at observation times exact, so the
scheme has no time-discretization error.

Each chunk owns a child stream of the run seed, so output is reproducible for
a fixed (seed, chunk_size) and chunks may be dispatched to worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SQRT2 = math.sqrt(2.0)

InitFn = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]
# init(rng, n_replicas_in_chunk) -> (local replica ids int64 sorted, positions)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SKELEX_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class EnsembleResult:
    """Per-replica snapshot functionals for every observation time.

    dmart/amart are the derivative and additive martingale sums with the
    supplied mass factor; max is -inf for an empty replica.
    """
    obs_times: np.ndarray
    n_replicas: int
    mass: float
    count: np.ndarray        # (n_times, n_replicas) particle counts
    dmart: np.ndarray        # sum mass*(sqrt2 t - z) e^(sqrt2 (z - sqrt2 t))
    amart: np.ndarray        # sum mass*e^(sqrt2 (z - sqrt2 t))
    max_pos: np.ndarray      # max particle position, -inf if empty
    prod: np.ndarray | None  # per-time product of (1 - phi(z)) if requested
    capped: np.ndarray = field(default=None)  # replicas that hit the cap
    particles: tuple[np.ndarray, np.ndarray] | None = None
    # particles = (replica_id, position) at the final observation time
    particles_all: list[tuple[np.ndarray, np.ndarray]] | None = None

    def mass_norm(self, it: int) -> np.ndarray:
        return self.mass * self.count[it]


class _Accum:
    """Per-chunk, per-observation-time fold of emitted particle groups."""

    def __init__(self, n: int, t: float, mass: float, phi=None, keep: bool = False):
        self.t = t
        self.mass = mass
        self.count = np.zeros(n, dtype=np.int64)
        self.dmart = np.zeros(n)
        self.amart = np.zeros(n)
        self.max_pos = np.full(n, -np.inf)
        self.phi = phi
        self.prod = np.ones(n) if phi is not None else None
        self.keep = keep
        self._kept: list[tuple[np.ndarray, np.ndarray]] = []

    def add(self, rid: np.ndarray, pos: np.ndarray):
        """rid is blockwise nondecreasing (sorted within this emission)."""
        if rid.size == 0:
            return
        n = self.count.shape[0]
        w = np.exp(SQRT2 * (pos - SQRT2 * self.t))
        self.count += np.bincount(rid, minlength=n)
        self.amart += self.mass * np.bincount(rid, weights=w, minlength=n)
        self.dmart += self.mass * np.bincount(
            rid, weights=(SQRT2 * self.t - pos) * w, minlength=n)
        # run-grouped max (rid sorted within the emission)
        starts = np.flatnonzero(np.diff(rid)) + 1
        starts = np.concatenate(([0], starts))
        gmax = np.maximum.reduceat(pos, starts)
        np.fmax.at(self.max_pos, rid[starts], gmax)
        if self.phi is not None:
            vals = 1.0 - self.phi(pos)
            gprod = np.multiply.reduceat(vals, starts)
            np.multiply.at(self.prod, rid[starts], gprod)
        if self.keep:
            self._kept.append((rid, pos))

    def kept(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._kept:
            return np.empty(0, dtype=np.int64), np.empty(0)
        return (np.concatenate([r for r, _ in self._kept]),
                np.concatenate([p for _, p in self._kept]))


def _chunk_stream(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(chunk_index,)))


def single_point_init(x: float) -> InitFn:
    def init(rng: np.random.Generator, n: int):
        rid = np.arange(n, dtype=np.int64)
        return rid, np.full(n, float(x))
    return init


def poisson_field_init(pairs: list[tuple[float, float]]) -> InitFn:
    """Independent Poisson numbers of particles at each (location, intensity)."""
    def init(rng: np.random.Generator, n: int):
        rids, poss = [], []
        for loc, inten in pairs:
            counts = rng.poisson(inten, n)
            rids.append(np.repeat(np.arange(n, dtype=np.int64), counts))
            poss.append(np.full(int(counts.sum()), float(loc)))
        rid = np.concatenate(rids) if rids else np.empty(0, dtype=np.int64)
        pos = np.concatenate(poss) if poss else np.empty(0)
        order = np.argsort(rid, kind="stable")
        return rid[order], pos[order]
    return init


def run_branching_ensemble(
    n_replicas: int,
    seed: int,
    rate: float,
    sample_counts: Callable[[np.random.Generator, int], np.ndarray],
    init: InitFn,
    obs_times: np.ndarray,
    mass: float = 1.0,
    phi=None,
    keep_final_particles: bool = False,
    keep_all_particles: bool = False,
    max_particles: int = 50_000_000,
    chunk_size: int = 1024,
) -> EnsembleResult:
    """Simulate an ensemble and fold per-replica snapshot functionals."""
    obs_times = np.asarray(obs_times, dtype=float)
    if obs_times.ndim != 1 or np.any(np.diff(obs_times) <= 0):
        raise ValueError("observation times must be strictly increasing")
    n_times = obs_times.shape[0]

    chunks = [(i, lo, min(lo + chunk_size, n_replicas))
              for i, lo in enumerate(range(0, n_replicas, chunk_size))]

    def run_chunk(args):
        ci, lo, hi = args
        n = hi - lo
        rng = _chunk_stream(seed, ci)
        rid, pos = init(rng, n)
        capped = np.zeros(n, dtype=bool)
        out = []
        t_prev = 0.0
        for it, t_obs in enumerate(obs_times):
            # raw emissions are retained whenever they seed a further interval
            keep = it < n_times - 1 or keep_final_particles or keep_all_particles
            acc = _Accum(n, t_obs, mass, phi=phi, keep=keep)
            a_rid, a_pos = rid, pos
            a_birth = np.full(a_rid.shape, t_prev)
            while a_rid.size:
                if a_rid.size > 4 * max_particles * n:
                    raise MemoryError("chunk particle load exploded")
                life = rng.standard_exponential(a_rid.size) / rate
                death = a_birth + life
                leaf = death >= t_obs
                l_rid = a_rid[leaf]
                if l_rid.size:
                    dtv = t_obs - a_birth[leaf]
                    l_pos = a_pos[leaf] + rng.standard_normal(l_rid.size) * np.sqrt(dtv)
                    acc.add(l_rid, l_pos)
                br = ~leaf
                b_rid = a_rid[br]
                if b_rid.size == 0:
                    break
                b_pos = a_pos[br] + rng.standard_normal(b_rid.size) * np.sqrt(life[br])
                counts = sample_counts(rng, b_rid.size)
                a_rid = np.repeat(b_rid, counts)
                a_pos = np.repeat(b_pos, counts)
                a_birth = np.repeat(death[br], counts)
                if a_rid.size:
                    loads = np.bincount(a_rid, minlength=n)
                    over = loads > max_particles
                    if np.any(over):
                        capped |= over
                        keep_mask = ~over[a_rid]
                        a_rid = a_rid[keep_mask]
                        a_pos = a_pos[keep_mask]
                        a_birth = a_birth[keep_mask]
            out.append(acc)
            # survivors at t_obs are the entrants of the next interval
            if it < n_times - 1:
                rid, pos = acc.kept()
            t_prev = t_obs
        return ci, out, capped

    result = EnsembleResult(
        obs_times=obs_times,
        n_replicas=n_replicas,
        mass=mass,
        count=np.zeros((n_times, n_replicas), dtype=np.int64),
        dmart=np.zeros((n_times, n_replicas)),
        amart=np.zeros((n_times, n_replicas)),
        max_pos=np.full((n_times, n_replicas), -np.inf),
        prod=np.ones((n_times, n_replicas)) if phi is not None else None,
        capped=np.zeros(n_replicas, dtype=bool),
    )
    kept_r, kept_p = [], []
    kept_all = [([], []) for _ in range(n_times)] if keep_all_particles else None

    workers = worker_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            chunk_results = list(ex.map(run_chunk, chunks))
        chunk_results.sort(key=lambda r: r[0])
    else:
        chunk_results = [run_chunk(c) for c in chunks]

    for ci, accs, capped in chunk_results:
        lo = ci * chunk_size
        hi = lo + capped.shape[0]
        result.capped[lo:hi] = capped
        for it, acc in enumerate(accs):
            result.count[it, lo:hi] = acc.count
            result.dmart[it, lo:hi] = acc.dmart
            result.amart[it, lo:hi] = acc.amart
            result.max_pos[it, lo:hi] = acc.max_pos
            if phi is not None:
                result.prod[it, lo:hi] = acc.prod
            if keep_final_particles and it == len(accs) - 1:
                r, p = acc.kept()
                kept_r.append(r + lo)
                kept_p.append(p)
            if keep_all_particles:
                r, p = acc.kept()
                kept_all[it][0].append(r + lo)
                kept_all[it][1].append(p)
    if keep_final_particles:
        result.particles = (np.concatenate(kept_r) if kept_r else np.empty(0, dtype=np.int64),
                            np.concatenate(kept_p) if kept_p else np.empty(0))
    if keep_all_particles:
        result.particles_all = [
            (np.concatenate(rs) if rs else np.empty(0, dtype=np.int64),
             np.concatenate(ps) if ps else np.empty(0))
            for rs, ps in kept_all]
        result.particles = result.particles_all[-1]
    return result
