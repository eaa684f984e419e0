"""Physical constants (CODATA 2018) and species definitions.

All quantities are SI. Every other module imports its constants from here so
that unit conventions cannot drift between subsystems.
"""
from __future__ import annotations

from dataclasses import dataclass

# CODATA 2018
ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
EPSILON_0 = 8.8541878128e-12         # F/m
HBAR = 1.054571817e-34               # J s
PLANCK = 6.62607015e-34              # J s (exact)
BOLTZMANN = 1.380649e-23             # J/K (exact)
SPEED_OF_LIGHT = 299792458.0         # m/s (exact)
ATOMIC_MASS = 1.66053906660e-27      # kg

# 1 debye in C m
DEBYE = 1e-21 / SPEED_OF_LIGHT


@dataclass(frozen=True)
class IonSpecies:
    """A trapped-ion species: mass in kg, net charge in coulombs."""

    mass: float
    charge: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"ion mass must be positive, got {self.mass}")
        if self.charge == 0:
            raise ValueError("ion charge must be nonzero")


# Singly charged calcium-40. The electron-mass correction to the neutral
# atomic mass is ~1e-5 relative and irrelevant at our tolerances.
CA40 = IonSpecies(mass=39.9625909 * ATOMIC_MASS, charge=ELEMENTARY_CHARGE)

SPECIES = {"ca40": CA40}


def get_species(name: str) -> IonSpecies:
    try:
        return SPECIES[name.lower()]
    except KeyError:
        raise KeyError(
            f"unknown species {name!r}; known: {sorted(SPECIES)}"
        ) from None
