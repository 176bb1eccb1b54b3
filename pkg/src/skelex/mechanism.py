"""Branching mechanisms: evaluation, root finding, normalization, condition checks.

A mechanism is the convex function

    psi(lam) = -alpha*lam + beta*lam^2 + integral (e^(-lam*y) - 1 + lam*y) pi(dy)

with alpha > 0, beta >= 0 and pi a jump measure on (0, inf) integrating y ^ y^2.
The standing normalization used by the simulation modules is psi'(0) = -1 with
the positive root of psi at 1.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import (
    ConditionA1Violated,
    IndeterminateClassification,
    MomentDivergence,
    NegativeArgument,
    NonIntegrableLevyMeasure,
    NotNormalized,
    NotSupercritical,
)

_QUAD_EPSREL = 1e-11
_QUAD_EPSABS = 1e-14


# ---------------------------------------------------------------------------
# jump measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyMeasure:
    """Jump measure pi restricted to three representable kinds.

    kind "zero":     pi = 0.
    kind "atomic":   finite sum of weighted atoms w_i * delta_{y_i}, y_i > 0.
    kind "exp_poly": density c * y^(-1-a) * e^(-b*y) on (y_min, y_max).
    """

    kind: str
    weights: tuple[float, ...] = ()
    locations: tuple[float, ...] = ()
    c: float = 0.0
    a: float = 0.0
    b: float = 0.0
    y_min: float = 0.0
    y_max: float = math.inf

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls) -> "LevyMeasure":
        return cls(kind="zero")

    @classmethod
    def atomic(cls, atoms: Sequence[tuple[float, float]]) -> "LevyMeasure":
        w = tuple(float(p[0]) for p in atoms)
        y = tuple(float(p[1]) for p in atoms)
        return cls(kind="atomic", weights=w, locations=y)

    @classmethod
    def exp_poly(cls, c: float, a: float, b: float,
                 y_min: float = 0.0, y_max: float = math.inf) -> "LevyMeasure":
        return cls(kind="exp_poly", c=float(c), a=float(a), b=float(b),
                   y_min=float(y_min), y_max=float(y_max))

    def __post_init__(self):
        if self.kind not in ("zero", "atomic", "exp_poly"):
            raise ValueError(f"unknown LevyMeasure kind {self.kind!r}")
        if self.kind == "atomic":
            if len(self.weights) != len(self.locations):
                raise ValueError("weights/locations length mismatch")
            if any(w <= 0 for w in self.weights) or any(y <= 0 for y in self.locations):
                raise NonIntegrableLevyMeasure("atomic weights and locations must be > 0")
        if self.kind == "exp_poly":
            if self.c <= 0:
                raise NonIntegrableLevyMeasure("exp_poly density needs c > 0")
            if not (0 <= self.y_min < self.y_max):
                raise NonIntegrableLevyMeasure("need 0 <= y_min < y_max")
            if self.b < 0:
                raise NonIntegrableLevyMeasure("need b >= 0")
            # y ^ y^2 integrability: y^(1-a) near 0, y^(-a) e^(-by) near inf
            if self.y_min == 0.0 and self.a >= 2.0:
                raise NonIntegrableLevyMeasure("y^2 moment diverges at 0 (a >= 2)")
            if math.isinf(self.y_max) and self.b == 0.0 and self.a <= 1.0:
                raise NonIntegrableLevyMeasure("y moment diverges at infinity (b = 0, a <= 1)")

    # -- basic integrals ----------------------------------------------------

    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "atomic" and not self.weights)

    def _density(self, y: np.ndarray) -> np.ndarray:
        return self.c * np.power(y, -1.0 - self.a) * np.exp(-self.b * y)

    def _quad(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of fn against the exp_poly density, adaptive quadrature."""
        lo, hi = self.y_min, self.y_max
        f = lambda y: fn(np.asarray(y)) * float(self._density(np.asarray(y)))
        pieces = []
        cut = min(1.0, hi)
        if lo < cut:
            pieces.append((lo, cut))
        if hi > cut:
            pieces.append((cut, hi))
        total = 0.0
        for (p, q) in pieces:
            val, _ = integrate.quad(f, p, q, epsrel=_QUAD_EPSREL, epsabs=_QUAD_EPSABS,
                                    limit=400)
            total += val
        return total

    def small_big_moment(self) -> float:
        """integral of (y ^ y^2) pi(dy); finite by construction, returned as evidence."""
        if self.is_zero():
            return 0.0
        if self.kind == "atomic":
            y = np.asarray(self.locations)
            w = np.asarray(self.weights)
            return float(np.sum(w * np.minimum(y, y * y)))
        return self._quad(lambda y: np.minimum(y, y * y))

    def compensated(self, lam: float) -> float:
        """integral of (e^(-lam y) - 1 + lam y) pi(dy)."""
        if self.is_zero() or lam == 0.0:
            return 0.0
        if self.kind == "atomic":
            y = np.asarray(self.locations)
            w = np.asarray(self.weights)
            return float(np.sum(w * (np.exp(-lam * y) - 1.0 + lam * y)))
        # expm1 keeps precision for small lam*y
        return self._quad(lambda y: np.expm1(-lam * y) + lam * y)

    def compensated_vec(self, u: np.ndarray) -> np.ndarray:
        """Vectorized compensated integral; exact for zero/atomic kinds."""
        u = np.asarray(u, dtype=float)
        if self.is_zero():
            return np.zeros_like(u)
        if self.kind == "atomic":
            y = np.asarray(self.locations)
            w = np.asarray(self.weights)
            out = np.zeros_like(u)
            for wi, yi in zip(w, y):
                out += wi * (np.expm1(-u * yi) + u * yi)
            return out
        return self._interp_compensated(u)

    # cached monotone interpolant for the density kind (used by PDE kernels)
    _interp_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def _interp_compensated(self, u: np.ndarray) -> np.ndarray:
        from scipy.interpolate import PchipInterpolator

        umax = float(np.max(u)) if u.size else 1.0
        umax = max(umax, 1e-6)
        key = None
        for cap in self._interp_cache:
            if cap >= umax:
                key = cap
                break
        if key is None:
            cap = 10.0 ** math.ceil(math.log10(umax) + 0.5)
            grid = np.concatenate([[0.0], np.geomspace(1e-8, cap, 600)])
            vals = np.array([self.compensated(g) for g in grid])
            self._interp_cache[cap] = PchipInterpolator(grid, vals, extrapolate=True)
            key = cap
        out = self._interp_cache[key](np.maximum(u, 0.0))
        return np.asarray(out, dtype=float)

    def deriv_integral(self, lam: float, k: int) -> float:
        """integral y^k e^(-lam y) pi(dy) for k >= 2, or y (1 - e^(-lam y)) for k = 1."""
        if self.is_zero():
            return 0.0
        if self.kind == "atomic":
            y = np.asarray(self.locations)
            w = np.asarray(self.weights)
            if k == 1:
                return float(np.sum(w * y * (1.0 - np.exp(-lam * y))))
            return float(np.sum(w * np.power(y, k) * np.exp(-lam * y)))
        if k == 1:
            return self._quad(lambda y: y * (-np.expm1(-lam * y)))
        # divergence only possible at lam = 0 with an unbounded tail
        if lam == 0.0 and math.isinf(self.y_max) and self.b == 0.0 and k >= self.a:
            raise MomentDivergence(f"y^{k} moment of pi diverges at lam = 0")
        return self._quad(lambda y: np.power(y, k) * np.exp(-lam * y))

    def tail_increments(self, power: float, log_power: int = 0,
                        lo: float = 1.0, n_doublings: int = 40
                        ) -> tuple[np.ndarray, np.ndarray]:
        """Increments of integral_{lo}^{2^k lo} y^power (log y)^log_power pi(dy)."""
        cuts = lo * 2.0 ** np.arange(n_doublings + 1)
        incs = np.zeros(n_doublings)
        if self.is_zero():
            return cuts, incs
        if self.kind == "atomic":
            y = np.asarray(self.locations)
            w = np.asarray(self.weights)
            vals = w * np.power(y, power) * np.power(np.log(np.maximum(y, 1.0)), log_power)
            for i in range(n_doublings):
                m = (y >= cuts[i]) & (y < cuts[i + 1])
                incs[i] = float(np.sum(vals[m]))
            return cuts, incs
        fn = lambda y: np.power(y, power) * np.power(np.log(np.maximum(y, 1.0)), log_power)
        for i in range(n_doublings):
            a = max(cuts[i], self.y_min)
            b = min(cuts[i + 1], self.y_max)
            if a < b:
                val, _ = integrate.quad(
                    lambda y: float(fn(np.asarray(y)) * self._density(np.asarray(y))),
                    a, b, epsrel=1e-9, limit=200)
                incs[i] = val
        return cuts, incs

    def to_json(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "atomic":
            return {"kind": "atomic",
                    "atoms": [[w, y] for w, y in zip(self.weights, self.locations)]}
        out = {"kind": "exp_poly", "c": self.c, "a": self.a, "b": self.b,
               "y_min": self.y_min}
        if not math.isinf(self.y_max):
            out["y_max"] = self.y_max
        return out

    @classmethod
    def from_json(cls, blob: dict) -> "LevyMeasure":
        kind = blob.get("kind", "zero")
        if kind == "zero":
            return cls.zero()
        if kind == "atomic":
            return cls.atomic([(float(w), float(y)) for w, y in blob["atoms"]])
        if kind == "exp_poly":
            return cls.exp_poly(blob["c"], blob["a"], blob["b"],
                                blob.get("y_min", 0.0), blob.get("y_max", math.inf))
        raise ValueError(f"unknown pi kind {kind!r}")


def classify_increments(incs: np.ndarray, ratio_lo: float = 0.9,
                        ratio_hi: float = 1.1, tiny: float = 1e-12) -> str:
    """Classify a series of partial-integral increments as finite/infinite.

    Returns "finite", "infinite" or "indeterminate" together with the usual
    geometric reasoning: decaying increments with ratio < ratio_lo sum to a
    finite tail, sustained ratios >= ratio_hi (or non-decaying) diverge.
    """
    incs = np.asarray(incs, dtype=float)
    if incs.size == 0:
        return "finite"
    total = float(np.sum(incs))
    # a dead tail (several vanishing increments in a row) settles it
    k = min(3, incs.size)
    if np.all(incs[-k:] < tiny * (1.0 + total)):
        return "finite"
    incs = incs[incs > 0]
    if incs.size == 0:
        return "finite"
    if incs[-1] < tiny * (1.0 + total):
        return "finite"
    tail = incs[-6:] if incs.size >= 6 else incs
    ratios = tail[1:] / tail[:-1]
    if ratios.size == 0:
        return "indeterminate"
    med = float(np.median(ratios))
    if med <= ratio_lo:
        return "finite"
    if med >= ratio_hi or (med > 0.97 and float(np.min(ratios)) > 0.95):
        return "infinite"
    return "indeterminate"


# ---------------------------------------------------------------------------
# mechanisms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchingMechanism:
    alpha: float
    beta: float
    levy: LevyMeasure
    lambda_star: float

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "pi": self.levy.to_json()}


@dataclass(frozen=True)
class ScaleRecord:
    """Space/time/mass factors mapping a normalized process back to the original."""
    time_factor: float
    space_factor: float
    mass_factor: float

    def is_identity(self, tol: float = 1e-12) -> bool:
        return (abs(self.time_factor - 1) < tol and abs(self.space_factor - 1) < tol
                and abs(self.mass_factor - 1) < tol)


def _psi_raw(alpha: float, beta: float, levy: LevyMeasure, lam: float) -> float:
    return -alpha * lam + beta * lam * lam + levy.compensated(lam)


def find_lambda_star(alpha: float, beta: float, levy: LevyMeasure) -> float:
    """Unique positive root of psi, by bracket doubling plus brentq polish."""
    psi = lambda lam: _psi_raw(alpha, beta, levy, lam)
    hi = 1.0
    while psi(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise ConditionA1Violated("psi stays <= 0 up to lambda = 1e12")
    # find a strictly negative point to bracket from below
    lo = hi / 2.0
    while psi(lo) >= 0.0:
        lo /= 2.0
        if lo < 1e-300:
            raise NotSupercritical("psi has no negative region; psi'(0) >= 0")
    root = optimize.brentq(psi, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=200)
    return float(root)


def mechanism(alpha: float, beta: float, levy: LevyMeasure | None = None) -> BranchingMechanism:
    """Build a mechanism, validating supercriticality and caching the root."""
    if alpha <= 0:
        raise NotSupercritical("alpha must be > 0 so that psi'(0) = -alpha < 0")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    levy = levy if levy is not None else LevyMeasure.zero()
    lam_star = find_lambda_star(alpha, beta, levy)
    return BranchingMechanism(alpha=float(alpha), beta=float(beta), levy=levy,
                              lambda_star=lam_star)


def mechanism_from_json(blob: dict) -> BranchingMechanism:
    return mechanism(float(blob["alpha"]), float(blob["beta"]),
                     LevyMeasure.from_json(blob.get("pi", {"kind": "zero"})))


def eval_psi(mech: BranchingMechanism, lam: float) -> float:
    if lam < 0:
        raise NegativeArgument(f"lam = {lam} < 0")
    return _psi_raw(mech.alpha, mech.beta, mech.levy, lam)


def psi_vec(mech: BranchingMechanism, u: np.ndarray) -> np.ndarray:
    """Vectorized psi; tolerates slightly negative entries (PDE transients)."""
    u = np.asarray(u, dtype=float)
    return -mech.alpha * u + mech.beta * u * u + mech.levy.compensated_vec(u)


def eval_psi_deriv(mech: BranchingMechanism, lam: float, k: int) -> float:
    """k-th derivative of psi at lam >= 0."""
    if lam < 0:
        raise NegativeArgument(f"lam = {lam} < 0")
    if k < 1:
        raise ValueError("k >= 1")
    if k == 1:
        return -mech.alpha + 2.0 * mech.beta * lam + mech.levy.deriv_integral(lam, 1)
    if k == 2:
        return 2.0 * mech.beta + mech.levy.deriv_integral(lam, 2)
    sign = -1.0 if k % 2 else 1.0
    return sign * mech.levy.deriv_integral(lam, k)


def normalize_mechanism(mech: BranchingMechanism) -> tuple[BranchingMechanism, ScaleRecord]:
    """Rescale so that psi'(0) = -1 and the root sits at 1.

    The normalized mechanism is psi(lam* . lam) / (alpha lam*); the record carries
    the time factor alpha, space factor alpha^(1/2) and mass factor lam*.
    """
    if eval_psi_deriv(mech, 0.0, 1) >= 0:
        raise NotSupercritical("psi'(0) >= 0")
    a, ls = mech.alpha, mech.lambda_star
    lv = mech.levy
    if lv.is_zero():
        new_levy = LevyMeasure.zero()
    elif lv.kind == "atomic":
        new_levy = LevyMeasure.atomic([(w / (a * ls), y * ls)
                                       for w, y in zip(lv.weights, lv.locations)])
    else:
        new_levy = LevyMeasure.exp_poly(lv.c * ls ** (lv.a - 1.0) / a, lv.a, lv.b / ls,
                                        lv.y_min * ls,
                                        lv.y_max * ls if not math.isinf(lv.y_max) else math.inf)
    new = mechanism(1.0, mech.beta * ls / a, new_levy)
    rec = ScaleRecord(time_factor=a, space_factor=math.sqrt(a), mass_factor=ls)
    return new, rec


def is_normalized(mech: BranchingMechanism, tol: float = 1e-8) -> bool:
    return (abs(eval_psi_deriv(mech, 0.0, 1) + 1.0) < tol
            and abs(mech.lambda_star - 1.0) < tol)


def require_normalized(mech: BranchingMechanism, what: str = "operation"):
    if not is_normalized(mech):
        raise NotNormalized(f"{what} requires psi'(0) = -1 and root at 1")


# ---------------------------------------------------------------------------
# condition checks
# ---------------------------------------------------------------------------

@dataclass
class ConditionEntry:
    name: str
    holds: bool | None        # None = indeterminate
    evidence: dict

    def to_json(self) -> dict:
        return {"name": self.name, "holds": self.holds, "evidence": self.evidence}


@dataclass
class ConditionReport:
    """Numeric classification of the five regularity conditions.

    root:             psi reaches +inf, unique positive root exists.
    tail_power:       some beta in (0,1) with finite (1+beta)-tail moment of pi.
    poly_lower_bound: constants a, b > 0, gamma in (0,1] with
                      psi(lam) >= -a lam + b lam^(1+gamma) on a log grid.
    x_log2_moment:    finite x (log x)^2 tail moment of pi.
    growth_integral:  integral_z^inf dy / sqrt(integral_1^y psi) converges.
    """
    root: ConditionEntry
    tail_power: ConditionEntry
    poly_lower_bound: ConditionEntry
    x_log2_moment: ConditionEntry
    growth_integral: ConditionEntry

    def entries(self) -> list[ConditionEntry]:
        return [self.root, self.tail_power, self.poly_lower_bound,
                self.x_log2_moment, self.growth_integral]

    def to_json(self) -> dict:
        return {e.name: e.to_json() for e in self.entries()}


_A2_PROBES = (0.1, 0.25, 0.5, 0.9)


def _check_root(mech: BranchingMechanism) -> ConditionEntry:
    try:
        root = find_lambda_star(mech.alpha, mech.beta, mech.levy)
        return ConditionEntry("root", True, {"lambda_star": root})
    except (ConditionA1Violated, NotSupercritical) as exc:
        return ConditionEntry("root", False, {"reason": str(exc)})


def _check_tail_power(mech: BranchingMechanism) -> ConditionEntry:
    witnesses, diagnoses = [], {}
    for b in _A2_PROBES:
        _, incs = mech.levy.tail_increments(power=1.0 + b)
        cls = classify_increments(incs)
        diagnoses[str(b)] = cls
        if cls == "finite":
            witnesses.append(b)
    holds = bool(witnesses) if "indeterminate" not in diagnoses.values() or witnesses else None
    if witnesses:
        holds = True
    return ConditionEntry("tail_power", holds,
                          {"witnesses": witnesses, "per_beta": diagnoses})


def _check_poly_lower_bound(mech: BranchingMechanism) -> ConditionEntry:
    lam = np.geomspace(1e-6, 1e6, 121)
    g = psi_vec(mech, lam) + mech.alpha * lam          # >= 0 by convexity
    top = lam >= 1e4
    if np.any(g[top] <= 0):
        return ConditionEntry("poly_lower_bound", False, {"reason": "psi + alpha*lam not positive at large lam"})
    slope = np.polyfit(np.log(lam[top]), np.log(g[top]), 1)[0]
    gamma = min(float(slope) - 1.0, 1.0)
    if gamma < 0.05:
        return ConditionEntry("poly_lower_bound", False,
                              {"reason": "psi grows at most linearly", "top_slope": float(slope)})
    pos = g > 0
    b = float(np.min(g[pos] / lam[pos] ** (1.0 + gamma)))
    ok = b > 0 and np.all(g[pos] + 1e-12 >= b * lam[pos] ** (1.0 + gamma))
    return ConditionEntry("poly_lower_bound", bool(ok),
                          {"a": mech.alpha, "b": b, "gamma": gamma})


def _check_x_log2(mech: BranchingMechanism) -> ConditionEntry:
    _, incs = mech.levy.tail_increments(power=1.0, log_power=2)
    cls = classify_increments(incs)
    holds = {"finite": True, "infinite": False}.get(cls, None)
    return ConditionEntry("x_log2_moment", holds, {"classification": cls})


def _check_growth_integral(mech: BranchingMechanism) -> ConditionEntry:
    """Convergence of integral_z^inf dy / sqrt(integral_1^y psi(u) du), z > 1."""
    # cumulative inner integral on a log grid up to 2^60
    ygrid = np.concatenate([[1.0], np.geomspace(1.0 + 1e-9, 2.0 ** 60, 4000)])
    psi_vals = psi_vec(mech, ygrid)
    inner = integrate.cumulative_trapezoid(psi_vals, ygrid, initial=0.0)
    z = max(2.0, mech.lambda_star + 1.0)
    if np.any(inner[ygrid >= z] <= 0):
        return ConditionEntry("growth_integral", None,
                              {"reason": "inner integral non-positive above z", "z": z})
    integrand = np.where(inner > 0, 1.0 / np.sqrt(np.maximum(inner, 1e-300)), 0.0)
    incs = []
    hi = 2.0 * z
    lo = z
    total_prev = 0.0
    for _ in range(56):
        m = (ygrid >= lo) & (ygrid <= hi)
        if m.sum() >= 2:
            incs.append(float(np.trapezoid(integrand[m], ygrid[m])))
        else:
            incs.append(0.0)
        if incs[-1] < 1e-8 and len(incs) > 3:
            return ConditionEntry("growth_integral", True,
                                  {"value": total_prev + incs[-1], "z": z,
                                   "cutoff": hi})
        total_prev += incs[-1]
        lo, hi = hi, hi * 2.0
    cls = classify_increments(np.asarray(incs))
    holds = {"finite": True, "infinite": False}.get(cls, None)
    return ConditionEntry("growth_integral", holds,
                          {"classification": cls, "z": z, "partial": total_prev})


def check_conditions(mech: BranchingMechanism) -> ConditionReport:
    return ConditionReport(
        root=_check_root(mech),
        tail_power=_check_tail_power(mech),
        poly_lower_bound=_check_poly_lower_bound(mech),
        x_log2_moment=_check_x_log2(mech),
        growth_integral=_check_growth_integral(mech),
    )


# ---------------------------------------------------------------------------
# tail-moment equivalence (two-sided integral test)
# ---------------------------------------------------------------------------

@dataclass
class EquivalenceReport:
    beta: float
    tail_side: str        # "finite" | "infinite"
    integral_side: str
    agree: bool
    evidence: dict

    def to_json(self) -> dict:
        return {"beta": self.beta, "tail_side": self.tail_side,
                "integral_side": self.integral_side, "agree": self.agree,
                "evidence": self.evidence}


def check_tail_moment_equivalence(mech: BranchingMechanism, beta: float) -> EquivalenceReport:
    """Compare the (1+beta)-tail moment of pi against the companion integral
    integral_0^1 (1 + psi'(s)) s^(-1-beta) ds; the two must share one
    finite/infinite classification.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if abs(eval_psi_deriv(mech, 0.0, 1) + 1.0) > 1e-8:
        raise NotNormalized("equivalence check requires psi'(0) = -1")

    _, tail_incs = mech.levy.tail_increments(power=1.0 + beta)
    tail_cls = classify_increments(tail_incs)

    def integrand(s: float) -> float:
        return (1.0 + eval_psi_deriv(mech, s, 1)) * s ** (-1.0 - beta)

    cutoffs = [10.0 ** (-k) for k in range(2, 9)]
    incs = []
    hi = 1.0
    for lo in cutoffs:
        val, _ = integrate.quad(integrand, lo, hi, epsrel=1e-9, limit=200)
        incs.append(val)
        hi = lo
    incs = np.asarray(incs)
    pos = incs[incs > 0]
    if pos.size < 2:
        int_cls = "finite"
        ratios = []
    else:
        ratios = (pos[1:] / pos[:-1]).tolist()
        med = float(np.median(ratios[-4:] if len(ratios) >= 4 else ratios))
        if med <= 0.9:
            int_cls = "finite"
        elif med >= 1.1 or med > 0.97:
            int_cls = "infinite"
        else:
            raise IndeterminateClassification(
                f"increment ratios {ratios} stay in [0.9, 1.1] without settling")
    if tail_cls == "indeterminate":
        raise IndeterminateClassification("tail moment increments did not settle")
    agree = tail_cls == int_cls
    return EquivalenceReport(beta=beta, tail_side=tail_cls, integral_side=int_cls,
                             agree=agree,
                             evidence={"tail_increments": tail_incs[tail_incs > 0][:8].tolist(),
                                       "integral_increments": incs.tolist(),
                                       "integral_ratios": ratios})


# ---------------------------------------------------------------------------
# built-in mechanisms
# ---------------------------------------------------------------------------

def atom_location() -> float:
    """Root y0 of e^(-y) = 2 - y on (1, 2)."""
    return float(optimize.brentq(lambda y: math.exp(-y) - 2.0 + y, 1.0, 2.0,
                                 xtol=1e-15, rtol=8.9e-16))


def binary_mechanism() -> BranchingMechanism:
    """Quadratic mechanism lam^2 - lam; skeleton is binary at unit rate."""
    return mechanism(1.0, 1.0, LevyMeasure.zero())


def linear_growth_mechanism() -> BranchingMechanism:
    """Single-atom mechanism tuned so the root is 1 while psi grows linearly.

    The atom location solves e^(-y) = 2 - y, which makes psi(1) = 0 with
    alpha = 1, beta = 0; the polynomial lower-bound condition fails.
    """
    return mechanism(1.0, 0.0, LevyMeasure.atomic([(1.0, atom_location())]))


def mixture_mechanism() -> BranchingMechanism:
    """Half quadratic, half atom at the same tuned location; still normalized."""
    return mechanism(1.0, 0.5, LevyMeasure.atomic([(0.5, atom_location())]))


def power_tail_mechanism(a: float = 1.5) -> BranchingMechanism:
    """Density y^(-1-a) on (1, inf); psi'(0) = -1 but the root is below 1."""
    return mechanism(1.0, 0.0, LevyMeasure.exp_poly(1.0, a, 0.0, 1.0, math.inf))


def mechanism_bank() -> dict[str, BranchingMechanism]:
    """The three normalized mechanisms exercised throughout the test suite."""
    return {
        "binary": binary_mechanism(),
        "linear_growth": linear_growth_mechanism(),
        "mixture": mixture_mechanism(),
    }
