"""Numerical laboratory for ballistic 2D Schrodinger transport.

Builds periodic approximants of limit-periodic and quasi-periodic
potentials, computes their quasi-plane-wave dispersion branch, maps
non-resonant momentum sets and isoenergetic curves, synthesizes regularized
eigenfunction wave packets, and measures the quadratic-in-time growth of
Abel-averaged second moments under split-step spectral propagation.
"""

from .fields import WaveField
from .numbers import Alpha
from .potentials import (
    A1Report,
    A2Report,
    LimitPeriodicPotential,
    PeriodicLayer,
    PotentialField,
    QuasiPeriodicPotential,
    ValidationReport,
    check_A1,
    check_A2,
    sample_potential,
    truncate,
    validate_limit_periodic,
)

__all__ = [
    "Alpha",
    "A1Report",
    "A2Report",
    "LimitPeriodicPotential",
    "PeriodicLayer",
    "PotentialField",
    "QuasiPeriodicPotential",
    "ValidationReport",
    "WaveField",
    "check_A1",
    "check_A2",
    "sample_potential",
    "truncate",
    "validate_limit_periodic",
]

__version__ = "0.1.0"
