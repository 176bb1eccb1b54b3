"""Skeleton-decomposition toolkit for extremal behaviour of super-Brownian motion.

Modules:
    mechanism      branching mechanisms, roots, normalization, condition checks
    skeleton       skeleton branching rate and offspring law
    bbm            exact skeleton branching Brownian motion simulation
    kpp            semilinear-PDE oracle and analytic front functionals
    sbm            particle-system approximation of the measure-valued process
    point_process  Poisson/decorated-Poisson samplers and point measures
    stats          Monte Carlo comparison machinery
    cli            named experiment recipes
"""
from . import bbm, cli, kpp, mechanism, point_process, sbm, skeleton, stats  # noqa: F401

__version__ = "0.1.0"
