"""Simulator of Stark-tuned two- and three-body Förster resonances between
cold Rb Rydberg atoms.

The package models a linear chain of three Rydberg atoms in a dc electric
field, locates the field-tuned crossings where a three-body
fine-structure-changing energy transfer becomes resonant, integrates the
open-system (non-Hermitian) Schrödinger dynamics over a few-hundred-state
collective basis, and composes the result into a three-qubit Toffoli gate
whose average fidelity over 216 input states is evaluated and optimized.

Modules
-------
atomic_data   single-atom energies (quantum defects) and lifetimes
dipole        radial dipole integrals (quasiclassical + Numerov oracle),
              Clebsch-Gordan / Wigner coefficients, full matrix elements
collective    three-atom collective states, Stark maps, basis construction,
              resonance-crossing search
interaction   dipole-dipole couplings and non-Hermitian Hamiltonian assembly
dynamics      time evolution, populations, phases, transfer fractions
gate          Toffoli pulse sequence, Uhlmann fidelity, Nelder-Mead optimizer
cli           command-line front end emitting reproducible CSV outputs
"""

from .errors import (
    FoersterError,
    InvalidPairError,
    NumericalError,
    OutOfRegimeError,
    SelectionRuleError,
    ToleranceError,
    UnknownSeriesError,
    ValidationError,
)

__all__ = [
    "FoersterError",
    "ValidationError",
    "NumericalError",
    "UnknownSeriesError",
    "SelectionRuleError",
    "OutOfRegimeError",
    "InvalidPairError",
    "ToleranceError",
]

__version__ = "0.1.0"
