"""Point measures and Poisson-type samplers.

Covers plain Poisson random measures, the exponential-intensity point process
c * sqrt2 * e^(-sqrt2 z) dz appearing in the limiting extremal process, and
decorated versions built from empirical decoration banks.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyBank, InfiniteIntensity

SQRT2 = math.sqrt(2.0)


@dataclass
class PointMeasure:
    """Finite list of (position, mass) atoms."""
    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.positions.shape != self.masses.shape:
            raise ValueError("positions/masses shape mismatch")
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")

    @classmethod
    def empty(cls) -> "PointMeasure":
        return cls(positions=np.empty(0), masses=np.empty(0))

    @classmethod
    def unit_atoms(cls, positions) -> "PointMeasure":
        positions = np.asarray(positions, dtype=float)
        return cls(positions=positions, masses=np.ones(positions.shape[0]))

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def integrate(self, phi) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.sum(self.masses * phi(self.positions)))

    def max_position(self) -> float:
        return float(np.max(self.positions)) if len(self) else -math.inf

    def shifted(self, x: float) -> "PointMeasure":
        return PointMeasure(positions=self.positions + x, masses=self.masses.copy())


@dataclass
class DecorationBank:
    """Empirical bank of decoration samples, each with its top atom at 0."""
    samples: list[PointMeasure]
    tag: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.samples:
            raise EmptyBank("decoration bank must be nonempty")
        for s in self.samples:
            if len(s) == 0 or abs(s.max_position()) > 1e-9:
                raise ValueError("every decoration must have its maximum atom at 0")
        # flattened view for vectorized gathering
        self._flat_pos = np.concatenate([s.positions for s in self.samples])
        self._flat_mass = np.concatenate([s.masses for s in self.samples])
        sizes = np.array([len(s) for s in self.samples], dtype=np.int64)
        self._offsets = np.concatenate(([0], np.cumsum(sizes)))
        self._sizes = sizes

    def __len__(self) -> int:
        return len(self.samples)

    def draw(self, rng: np.random.Generator) -> PointMeasure:
        return self.samples[int(rng.integers(0, len(self.samples)))]

    def gather(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened (owner, position, mass) arrays of the selected samples."""
        sizes = self._sizes[idx]
        total = int(sizes.sum())
        owner = np.repeat(np.arange(idx.shape[0]), sizes)
        base = np.repeat(self._offsets[idx], sizes)
        intra = np.arange(total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
        flat = base + intra
        return owner, self._flat_pos[flat], self._flat_mass[flat]

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("sample_id,position,mass\n")
            for i, s in enumerate(self.samples):
                for p, m in zip(s.positions, s.masses):
                    fh.write(f"{i},{float(p)!r},{float(m)!r}\n")
        meta = {"tag": self.tag, "n_samples": len(self.samples), **self.meta}
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path, tag: str = "") -> "DecorationBank":
        rows = np.loadtxt(path, delimiter=",", skiprows=1)
        rows = np.atleast_2d(rows)
        samples = []
        for sid in np.unique(rows[:, 0]):
            sel = rows[rows[:, 0] == sid]
            samples.append(PointMeasure(positions=sel[:, 1], masses=sel[:, 2]))
        return cls(samples=samples, tag=tag)


def sample_exponential_ppp(c: float, left_truncation: float,
                           rng: np.random.Generator) -> PointMeasure:
    """Poisson point process with intensity c sqrt2 e^(-sqrt2 z) dz on (L, inf).

    Total intensity above L is c e^(-sqrt2 L); atom positions are L plus
    independent Exp(sqrt2) variables (exact inverse CDF).
    """
    if c < 0:
        raise ValueError("intensity scale must be >= 0")
    if c == 0.0:
        return PointMeasure.empty()
    total = c * math.exp(-SQRT2 * left_truncation)
    n = int(rng.poisson(total))
    if n == 0:
        return PointMeasure.empty()
    z = left_truncation - np.log1p(-rng.random(n)) / SQRT2
    return PointMeasure.unit_atoms(z)


def sample_prm(intensity: PointMeasure, rng: np.random.Generator) -> PointMeasure:
    """Poisson random measure with a finite atomic intensity measure."""
    total = intensity.total_mass()
    if not math.isfinite(total):
        raise InfiniteIntensity("total intensity must be finite")
    if total == 0.0:
        return PointMeasure.empty()
    n = int(rng.poisson(total))
    if n == 0:
        return PointMeasure.empty()
    probs = intensity.masses / total
    idx = rng.choice(len(intensity), size=n, p=probs)
    return PointMeasure.unit_atoms(intensity.positions[idx])


def sample_prm_from_grid(x: np.ndarray, density: np.ndarray,
                         rng: np.random.Generator) -> PointMeasure:
    """Poisson random measure whose intensity is a gridded density."""
    x = np.asarray(x, dtype=float)
    density = np.maximum(np.asarray(density, dtype=float), 0.0)
    cell = np.diff(x)
    cell_mass = 0.5 * (density[1:] + density[:-1]) * cell
    total = float(np.sum(cell_mass))
    if not math.isfinite(total):
        raise InfiniteIntensity("gridded intensity must be finite")
    if total == 0.0:
        return PointMeasure.empty()
    n = int(rng.poisson(total))
    if n == 0:
        return PointMeasure.empty()
    cdf = np.cumsum(cell_mass) / total
    u = rng.random(n)
    cells = np.searchsorted(cdf, u, side="right")
    frac = rng.random(n)
    pos = x[cells] + frac * cell[cells]
    return PointMeasure.unit_atoms(pos)


def sample_dppp(c: float, shift_randomizer, bank: DecorationBank,
                left_truncation: float, window_low: float,
                rng: np.random.Generator) -> PointMeasure:
    """Decorated Poisson point process restricted to a reporting window.

    Draws a mixture weight from shift_randomizer (an array of derivative
    martingale samples or a scalar), lays down the exponential PPP with scale
    c * weight above left_truncation, attaches an independent bank decoration
    shifted to each atom, and reports atoms above window_low. The caller keeps
    window_low well above left_truncation plus the bank support depth so the
    truncation cannot influence window statistics.
    """
    if len(bank) == 0:
        raise EmptyBank("empty decoration bank")
    w = np.asarray(shift_randomizer, dtype=float)
    weight = float(w[rng.integers(0, w.shape[0])]) if w.ndim else float(w)
    if weight < 0:
        raise ValueError("negative shift weight")
    if weight == 0.0:
        return PointMeasure.empty()
    ppp = sample_exponential_ppp(c * weight, left_truncation, rng)
    if len(ppp) == 0:
        return PointMeasure.empty()
    idx = rng.integers(0, len(bank), len(ppp))
    owner, pos, mass = bank.gather(idx)
    pos = pos + ppp.positions[owner]
    keep = pos >= window_low
    if not np.any(keep):
        return PointMeasure.empty()
    return PointMeasure(positions=pos[keep], masses=mass[keep].copy())


def dppp_laplace_closed_form(c: float, weight: float, bank: DecorationBank,
                             phi, y_lo: float = -12.0, y_hi: float = 12.0,
                             n_y: int = 2001) -> float:
    """Quadrature evaluation of E e^(-<phi, DPPP>) for a degenerate weight.

    Poisson computation: exp(-c w Int sqrt2 e^(-sqrt2 y) E[1 - e^(-<phi, D + y>)] dy),
    with the bank average standing in for the decoration expectation.
    """
    y = np.linspace(y_lo, y_hi, n_y)
    inner = np.zeros_like(y)
    for deco in bank.samples:
        # <phi, D + y> for all y at once
        vals = phi(deco.positions[None, :] + y[:, None]) * deco.masses[None, :]
        inner += 1.0 - np.exp(-np.sum(vals, axis=1))
    inner /= len(bank.samples)
    integrand = SQRT2 * np.exp(-SQRT2 * y) * inner
    return float(np.exp(-c * weight * np.trapezoid(integrand, y)))
