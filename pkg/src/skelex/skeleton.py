"""Skeleton branching law: rate q and offspring probabilities {p_k, k >= 2}.

For a normalized mechanism the skeleton branching Brownian motion branches at
rate q = psi'(1) with generating function F(s) = s + psi(1-s)/q, which forces
p_0 = p_1 = 0 and p_k = (-1)^k psi^(k)(1) / (q k!) for k >= 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveRate, TruncationFailure
from .mechanism import (
    BranchingMechanism,
    eval_psi,
    eval_psi_deriv,
    require_normalized,
)

_MAX_K = 10 ** 6


@dataclass(frozen=True)
class OffspringLaw:
    """Branching rate plus truncated, renormalized offspring distribution."""

    q: float
    ks: np.ndarray          # offspring counts, k >= 2
    probs: np.ndarray       # renormalized probabilities, same length
    truncation_tail: float  # mass beyond the last k before renormalization
    cdf: np.ndarray

    def mean_offspring(self) -> float:
        return float(np.sum(self.ks * self.probs))

    def max_k(self) -> int:
        return int(self.ks[-1])

    def to_json(self) -> dict:
        return {"q": self.q,
                "p": [[int(k), float(p)] for k, p in zip(self.ks, self.probs)]}

    @classmethod
    def from_probs(cls, q: float, pairs: list[tuple[int, float]],
                   truncation_tail: float = 0.0) -> "OffspringLaw":
        ks = np.array([k for k, _ in pairs], dtype=np.int64)
        probs = np.array([p for _, p in pairs], dtype=float)
        if np.any(probs < 0):
            raise ValueError("negative offspring probability")
        probs = probs / probs.sum()
        return cls(q=float(q), ks=ks, probs=probs,
                   truncation_tail=float(truncation_tail),
                   cdf=np.cumsum(probs))

    @classmethod
    def from_json(cls, blob: dict) -> "OffspringLaw":
        return cls.from_probs(blob["q"], [(int(k), float(p)) for k, p in blob["p"]])


def derive_offspring_law(mech: BranchingMechanism, tail_tol: float = 1e-12) -> OffspringLaw:
    """Expand psi around its root into the skeleton rate and offspring table."""
    require_normalized(mech, "offspring-law derivation")
    q = eval_psi_deriv(mech, 1.0, 1)
    if q <= 0:
        raise NonPositiveRate(f"psi'(1) = {q} <= 0")
    ks, probs = [], []
    log_kfact = math.log(2.0)
    cum = 0.0
    k = 2
    while True:
        if k > _MAX_K:
            raise TruncationFailure(
                f"offspring tail still {1.0 - cum:.3e} beyond k = {_MAX_K}")
        mk = eval_psi_deriv(mech, 1.0, k) * (1.0 if k % 2 == 0 else -1.0)
        if mk < -1e-300:
            raise ValueError(f"negative derivative moment at k = {k}")
        pk = math.exp(math.log(mk) - math.log(q) - log_kfact) if mk > 0 else 0.0
        ks.append(k)
        probs.append(pk)
        cum += pk
        if 1.0 - cum <= tail_tol:
            break
        if pk < 1e-17 and k > 4:
            # cum can no longer move at double precision
            if 1.0 - cum > tail_tol:
                raise TruncationFailure(
                    f"tail stalled at {1.0 - cum:.3e} (k = {k})")
            break
        if k >= 128 and pk > 1e-15:
            # subgeometric tail: reaching tail_tol would need k far beyond reach
            raise TruncationFailure(
                f"subgeometric offspring tail (p_{k} = {pk:.3e})")
        k += 1
        log_kfact += math.log(k)
    tail = max(0.0, 1.0 - cum)
    return OffspringLaw.from_probs(q, list(zip(ks, probs)), truncation_tail=tail)


def sample_offspring(law: OffspringLaw, rng: np.random.Generator) -> int:
    """Single inverse-CDF draw."""
    return int(law.ks[np.searchsorted(law.cdf, rng.random(), side="right")])


def sample_offspring_counts(law: OffspringLaw, rng: np.random.Generator,
                            size: int) -> np.ndarray:
    """Vectorized inverse-CDF draws, deterministic given the stream state."""
    idx = np.searchsorted(law.cdf, rng.random(size), side="right")
    idx = np.minimum(idx, len(law.ks) - 1)
    return law.ks[idx]


def generating_function(law: OffspringLaw, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.sum(law.probs[None, :] * np.power(s[:, None], law.ks[None, :]), axis=1)


def verify_generating_identity(law: OffspringLaw, mech: BranchingMechanism,
                               grid: np.ndarray | None = None) -> float:
    """Max residual of q (F(s) - s) = psi(1 - s) over an s-grid in [0, 1)."""
    if grid is None:
        grid = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99])
    grid = np.asarray(grid, dtype=float)
    F = generating_function(law, grid)
    lhs = law.q * (F - grid)
    rhs = np.array([eval_psi(mech, 1.0 - s) for s in grid])
    return float(np.max(np.abs(lhs - rhs)))
