"""Hamiltonian assembly: Stark diagonal, decay, and dipole-dipole couplings.

The model Hamiltonian over a collective basis is

    H[a,a] = collective_energy(a, E)  -  i * (Gamma_a / 2pi) / 2
    H[a,b] = sum over atom pairs (i,j) of the dipole-dipole coupling,
             nonzero only when a and b differ in exactly the two atoms
             of one pair, each by a dipole-allowed transition, with
             total M conserved.

All energies are h*MHz. Decay rates Gamma (1/us) enter the diagonal as
widths in frequency units — Gamma/(2pi) MHz — halved, so that populations
decay as exp(-Gamma*t) under the e^(-i*2pi*H*t) propagator.

The pair coupling for two atoms separated by R (um) along the quantization
axis is

    V = -(sqrt(6) * kappa / R^3) * sum_q C(1 q, 1 -q; 2 0) d_q(i) d_-q(j)

with d_q in e*a0 and kappa the dipole-dipole prefactor in MHz*um^3/(e*a0)^2;
only the (q, -q) component pairs survive in the collinear geometry, which
is what conserves total M. Dipole moments are evaluated at zero field
(field dependence enters only through the diagonal Stark shifts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .atomic_data import LifetimeModel, QuantumDefectTable, default_defects, default_lifetimes
from .collective import BasisSet, CollectiveState, collective_energy, total_decay_rate
from .constants import KAPPA_DD, TWO_PI
from .dipole import cg, dipole_component
from .errors import InvalidPairError, ValidationError

__all__ = [
    "Geometry",
    "HamiltonianModel",
    "pair_coupling",
    "coupling",
    "assemble",
]

# -sqrt(6) * C(1 q, 1 -q; 2 0) for q = -1, 0, +1: the closed-form weights
# of the three surviving spherical component pairs. Evaluated once from the
# exact Clebsch-Gordan coefficients at import time; equals (-1, -2, -1).
_Q_WEIGHTS = {q: -math.sqrt(6.0) * cg(1, q, 1, -q, 2, 0) for q in (-1, 0, 1)}


@dataclass(frozen=True)
class Geometry:
    """Collinear trap positions along the quantization axis Z, in um."""

    positions: tuple[float, ...]

    def __post_init__(self) -> None:
        pos = tuple(float(z) for z in self.positions)
        object.__setattr__(self, "positions", pos)
        if len(pos) not in (2, 3):
            raise ValidationError(f"geometry needs 2 or 3 positions, got {len(pos)}")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValidationError(f"positions must be strictly increasing, got {pos}")

    @classmethod
    def equidistant(cls, spacing_um: float, n_atoms: int = 3) -> "Geometry":
        """Equidistant chain 0, R, 2R, ... (the default arrangement)."""
        if spacing_um <= 0:
            raise ValidationError(f"spacing must be > 0 um, got {spacing_um}")
        return cls(tuple(i * spacing_um for i in range(n_atoms)))

    def __len__(self) -> int:
        return len(self.positions)

    def distance(self, i: int, j: int) -> float:
        return abs(self.positions[j] - self.positions[i])


def _differing_atoms(a: CollectiveState, b: CollectiveState) -> tuple[int, ...]:
    return tuple(k for k in range(len(a)) if a[k] != b[k])


def pair_coupling(a: CollectiveState, b: CollectiveState, pair: tuple[int, int],
                  geometry: Geometry,
                  defects: QuantumDefectTable | None = None) -> float:
    """Dipole-dipole matrix element <a| V_(i,j) |b| in h*MHz for one atom pair.

    ``a`` and ``b`` must agree on every atom outside ``pair`` (otherwise the
    caller has mislabeled the pair: :class:`InvalidPairError`). Returns 0
    when the dipole selection rules kill every spherical component.
    """
    i, j = pair
    if i == j:
        raise InvalidPairError(f"pair must name two distinct atoms, got {pair}")
    if i > j:
        i, j = j, i
    n_atoms = len(a)
    if len(b) != n_atoms:
        raise InvalidPairError("states have different atom counts")
    if not (0 <= i < n_atoms and 0 <= j < n_atoms):
        raise InvalidPairError(f"pair {pair} out of range for {n_atoms} atoms")
    outside = [k for k in range(n_atoms) if k not in (i, j)]
    for k in outside:
        if a[k] != b[k]:
            raise InvalidPairError(
                f"states differ in atom {k}, which is not in the pair {pair}"
            )
    table = defects if defects is not None else default_defects()
    r = geometry.distance(i, j)
    total = 0.0
    for q in (-1, 0, 1):
        di = dipole_component(a[i], b[i], q, table).value
        if di == 0.0:
            continue
        dj = dipole_component(a[j], b[j], -q, table).value
        if dj == 0.0:
            continue
        total += _Q_WEIGHTS[q] * di * dj
    return KAPPA_DD * total / r**3


def coupling(a: CollectiveState, b: CollectiveState, geometry: Geometry,
             defects: QuantumDefectTable | None = None) -> float:
    """Total interaction matrix element <a| V |b> in h*MHz.

    The dipole-dipole operator is two-body: the element is nonzero only
    when the states differ in exactly two atoms (three-body transfer is
    second order, mediated by the basis, never a direct element). Identical
    or one-atom-differing states also return 0 — diagonal energies and
    single-atom physics live elsewhere.
    """
    diff = _differing_atoms(a, b)
    if len(diff) != 2:
        return 0.0
    return pair_coupling(a, b, (diff[0], diff[1]), geometry, defects)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """Dense non-Hermitian Hamiltonian over a basis at one field value.

    ``matrix`` is complex, in h*MHz: real part symmetric (Hermitian when
    all decay rates vanish), imaginary part diagonal and non-positive,
    equal to -(Gamma/2pi)/2 per state with Gamma the summed single-atom
    decay rate in 1/us (so populations decay as exp(-Gamma t) with t in us).
    Immutable and shareable across threads.
    """

    basis: BasisSet
    matrix: np.ndarray
    field_v_per_cm: float
    geometry: Geometry

    def __post_init__(self) -> None:
        n = len(self.basis)
        if self.matrix.shape != (n, n):
            raise ValidationError(
                f"matrix shape {self.matrix.shape} does not match basis size {n}"
            )
        self.matrix.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def has_decay(self) -> bool:
        return bool(np.any(self.matrix.diagonal().imag != 0.0))

    @property
    def initial_diagonal_mhz(self) -> float:
        """Real diagonal energy of the basis initial state (index 0), h*MHz."""
        return float(self.matrix[0, 0].real)


@lru_cache(maxsize=16)
def _offdiagonal(basis: BasisSet, geometry: Geometry,
                 table: QuantumDefectTable) -> np.ndarray:
    """Field-independent real coupling matrix (zero diagonal), h*MHz."""
    n = len(basis)
    v = np.zeros((n, n))
    states = basis.states
    for a in range(n):
        sa = states[a]
        for b in range(a + 1, n):
            el = coupling(sa, states[b], geometry, table)
            if el != 0.0:
                v[a, b] = el
                v[b, a] = el
    v.setflags(write=False)
    return v


def assemble(basis: BasisSet, field_v_per_cm: float, geometry: Geometry,
             lifetimes: LifetimeModel | None = None,
             defects: QuantumDefectTable | None = None) -> HamiltonianModel:
    """Assemble the full Hamiltonian at one dc field value.

    Diagonal: collective energies relative to the basis initial state at
    zero field, minus i/2 times the per-state decay width. Off-diagonal:
    pairwise dipole-dipole couplings over all atom pairs (field-independent,
    cached per basis/geometry). Pass ``lifetimes=None`` for the default
    room-temperature model; use a zero-temperature-free model via
    ``LifetimeModel`` directly if decay must be switched off.
    """
    if len(basis) == 0:
        raise ValidationError("basis is empty")
    if len(geometry) != len(basis.initial):
        raise ValidationError(
            f"geometry has {len(geometry)} positions but states have "
            f"{len(basis.initial)} atoms"
        )
    table = defects if defects is not None else default_defects()
    life = lifetimes if lifetimes is not None else default_lifetimes()
    n = len(basis)
    h = np.array(_offdiagonal(basis, geometry, table), dtype=complex)
    for k, cs in enumerate(basis.states):
        energy = collective_energy(cs, field_v_per_cm, basis.initial, table)
        gamma = total_decay_rate(cs, life, table)  # 1/us
        h[k, k] = energy - 0.5j * (gamma / TWO_PI)
    return HamiltonianModel(basis=basis, matrix=h, field_v_per_cm=field_v_per_cm,
                            geometry=geometry)
