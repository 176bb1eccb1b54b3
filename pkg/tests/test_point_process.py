"""Poisson samplers, decorated point processes, banks."""
import math

import numpy as np
import pytest

from skelex.errors import EmptyBank, InfiniteIntensity
from skelex.point_process import (
    DecorationBank,
    PointMeasure,
    dppp_laplace_closed_form,
    sample_dppp,
    sample_exponential_ppp,
    sample_prm,
    sample_prm_from_grid,
)

SQRT2 = math.sqrt(2.0)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestExponentialPpp:
    def test_void_probabilities(self):
        c, L, n = 1.3, -5.0, 100000
        g = rng(1)
        empties = np.zeros(2)
        for i in range(n):
            pm = sample_exponential_ppp(c, L, g)
            for j, x in enumerate((0.0, 1.0)):
                if len(pm) == 0 or pm.max_position() <= x:
                    empties[j] += 1
        for j, x in enumerate((0.0, 1.0)):
            p = math.exp(-c * math.exp(-SQRT2 * x))
            sigma = math.sqrt(p * (1 - p) / n)
            assert abs(empties[j] / n - p) < 3 * sigma

    def test_expected_count_in_window(self):
        c, n = 2.0, 100000
        g = rng(2)
        counts = np.empty(n)
        for i in range(n):
            pm = sample_exponential_ppp(c, -3.0, g)
            counts[i] = np.sum((pm.positions > 0.0) & (pm.positions <= 1.0))
        target = c * (1.0 - math.exp(-SQRT2))
        se = counts.std(ddof=1) / math.sqrt(n)
        assert abs(counts.mean() - target) < 3 * se

    def test_max_law_gumbel(self):
        c, n = 1.0, 100000
        g = rng(3)
        maxima = np.empty(n)
        for i in range(n):
            pm = sample_exponential_ppp(c, -4.0, g)
            maxima[i] = pm.max_position() if len(pm) else -math.inf
        from skelex.stats import ks_distance
        cdf = lambda x: np.exp(-c * np.exp(-SQRT2 * np.asarray(x)))
        assert ks_distance(maxima[np.isfinite(maxima)], cdf) < 0.01


class TestPrm:
    def test_zero_intensity_empty(self):
        assert len(sample_prm(PointMeasure.empty(), rng())) == 0

    def test_mean_count(self):
        inten = PointMeasure(positions=np.array([0.0, 5.0]),
                             masses=np.array([1.0, 2.0]))
        g = rng(4)
        counts = np.array([len(sample_prm(inten, g)) for _ in range(100000)])
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 3.0) < 3 * se

    def test_location_frequencies(self):
        inten = PointMeasure(positions=np.array([0.0, 5.0]),
                             masses=np.array([1.0, 2.0]))
        g = rng(5)
        at0 = at5 = 0
        for _ in range(30000):
            pm = sample_prm(inten, g)
            at0 += int(np.sum(pm.positions == 0.0))
            at5 += int(np.sum(pm.positions == 5.0))
        tot = at0 + at5
        sigma = math.sqrt((1 / 3) * (2 / 3) / tot)
        assert abs(at0 / tot - 1 / 3) < 3 * sigma

    def test_infinite_intensity_rejected(self):
        with pytest.raises(InfiniteIntensity):
            sample_prm(PointMeasure(positions=np.array([0.0]),
                                    masses=np.array([math.inf])), rng())

    def test_gridded_intensity(self):
        x = np.linspace(-1, 1, 501)
        dens = np.where(x > 0, 3.0, 0.0)
        g = rng(6)
        counts = np.array([len(sample_prm_from_grid(x, dens, g))
                           for _ in range(20000)])
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 3.0) < 3 * se + 0.02   # trapezoid edge bias


def trivial_bank():
    return DecorationBank(samples=[PointMeasure.unit_atoms(np.array([0.0]))],
                          tag="point decoration")


def two_atom_bank():
    return DecorationBank(
        samples=[PointMeasure.unit_atoms(np.array([0.0, -1.0])),
                 PointMeasure.unit_atoms(np.array([0.0, -0.5, -2.0]))],
        tag="toy bank")


class TestDppp:
    def test_trivial_decoration_is_plain_ppp(self):
        # a point decoration at 0 leaves the PPP max law untouched; compare the
        # conditional max law on the reporting window against the closed form
        g = rng(7)
        c, lo, n = 1.0, -3.0, 50000
        maxima = np.empty(n)
        for i in range(n):
            pm = sample_dppp(c, np.array([1.0]), trivial_bank(), -5.0, lo, g)
            maxima[i] = pm.max_position() if len(pm) else -math.inf
        from skelex.stats import ks_distance
        F = lambda x: np.exp(-c * np.exp(-SQRT2 * np.asarray(x, dtype=float)))
        Flo = float(F(lo))
        cond_cdf = lambda x: (F(np.maximum(x, lo)) - Flo) / (1.0 - Flo)
        xs = maxima[maxima > lo]
        assert ks_distance(xs, cond_cdf) < 0.02

    def test_zero_weight_empty(self):
        pm = sample_dppp(1.0, np.array([0.0]), two_atom_bank(), -5.0, -3.0, rng(8))
        assert len(pm) == 0

    def test_decoration_cannot_raise_max(self):
        g = rng(9)
        for _ in range(200):
            ppp_seed = g.integers(0, 2 ** 31)
            g1 = np.random.default_rng(ppp_seed)
            g2 = np.random.default_rng(ppp_seed)
            base = sample_exponential_ppp(1.5, -4.0, g1)
            deco = sample_dppp(1.5, np.array([1.0]), two_atom_bank(), -4.0, -20.0, g2)
            if len(base) and len(deco):
                assert deco.max_position() == pytest.approx(base.max_position())

    def test_empty_bank_rejected(self):
        with pytest.raises(EmptyBank):
            DecorationBank(samples=[], tag="empty")

    def test_laplace_functional_vs_closed_form(self):
        g = rng(10)
        bank = two_atom_bank()
        c, w = 0.8, 1.0
        phi = lambda x: 0.4 * ((np.asarray(x) > -2.0) & (np.asarray(x) <= 1.0))
        # window at -5 sits 3 units below phi's support, so truncation bias
        # in the Laplace comparison is ~e^(-sqrt2*3) relative
        n = 40000
        vals = np.empty(n)
        for i in range(n):
            pm = sample_dppp(c, np.array([w]), bank, -5.0, -5.0, g)
            vals[i] = math.exp(-pm.integrate(phi)) if len(pm) else 1.0
        closed = dppp_laplace_closed_form(c, w, bank, phi)
        se = vals.std(ddof=1) / math.sqrt(n)
        assert abs(vals.mean() - closed) < 3 * se + 1e-3


class TestBankIo:
    def test_csv_roundtrip(self, tmp_path):
        bank = two_atom_bank()
        path = tmp_path / "bank.csv"
        bank.to_csv(path)
        again = DecorationBank.from_csv(path, tag="toy bank")
        assert len(again) == len(bank)
        for a, b in zip(again.samples, bank.samples):
            np.testing.assert_allclose(a.positions, b.positions)

    def test_bank_requires_atom_at_zero(self):
        with pytest.raises(ValueError):
            DecorationBank(samples=[PointMeasure.unit_atoms(np.array([-1.0]))],
                           tag="bad")
