"""Shared fixtures: expensive sample banks are built once per session."""
import time

import numpy as np
import pytest

from skelex.bbm import BbmConfig, PoissonField, SinglePoint, run_bbm_ensemble
from skelex.kpp import c_star
from skelex.mechanism import binary_mechanism
from skelex.sbm import run_sbm_terminal_quadratic
from skelex.skeleton import derive_offspring_law

ACCEPTANCE_SEED = 20260808
FIXTURE_TIMES: dict[str, float] = {}


def _timed(name):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            FIXTURE_TIMES[name] = time.perf_counter() - self.t0
    return _Timer()


@pytest.fixture(scope="session")
def binary_mech():
    return binary_mechanism()


@pytest.fixture(scope="session")
def binary_law(binary_mech):
    return derive_offspring_law(binary_mech)


@pytest.fixture(scope="session")
def bbm_bank(binary_law):
    """1e5 single-ancestor replicas, snapshots at t = 1, 2, 5, 10."""
    cfg = BbmConfig(law=binary_law, initial=SinglePoint(0.0), horizon=10.0,
                    observation_times=(1.0, 2.0, 5.0, 10.0),
                    seed=ACCEPTANCE_SEED, chunk_size=512)
    with _timed("bbm_bank"):
        res = run_bbm_ensemble(cfg, 100000)
    return res


@pytest.fixture(scope="session")
def cstar_front(binary_mech):
    """Front-constant table for the half-line indicator, dyadic to r = 40."""
    with _timed("cstar_front"):
        est = c_star(binary_mech, r_schedule=(5.0, 10.0, 20.0, 40.0))
    return est


@pytest.fixture(scope="session")
def dw_bank(binary_mech):
    """Terminal mass-derivative-martingale samples at T = 10, eps = 0.05."""
    with _timed("dw_bank"):
        res = run_sbm_terminal_quadratic(binary_mech, 0.05, 10.0, 3000,
                                         seed=ACCEPTANCE_SEED + 1)
    return res.dmart[-1]


@pytest.fixture(scope="session")
def poisson_dm_bank(bbm_bank):
    """Derivative-martingale samples under the unit Poisson initial condition.

    The branching property makes the Poisson-start martingale an independent
    Poisson(1)-fold sum of single-ancestor copies, exactly in law at each t.
    """
    rng = np.random.default_rng(ACCEPTANCE_SEED + 2)
    n = 30000
    counts = rng.poisson(1.0, n)
    picks = rng.integers(0, bbm_bank.dmart.shape[1], int(counts.sum()))
    owner = np.repeat(np.arange(n), counts)
    return np.bincount(owner, weights=bbm_bank.dmart[-1][picks], minlength=n)
