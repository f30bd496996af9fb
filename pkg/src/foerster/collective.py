"""Collective few-atom states, Stark-shifted energies, and resonance finding.

A :class:`CollectiveState` is an ordered tuple of single-atom Rydberg states;
the index of an atom identifies its trap position along the quantization
axis Z. The dc electric field (also along Z) tunes collective energies
through second-order Stark shifts; a Förster resonance is a crossing of two
collective energy curves, located here by bracketing plus bisection.

Energies are reported in h*MHz relative to a reference collective state at
zero field (the reference is the zero of energy everywhere, matching the
relative presentation of collective Stark maps).

The basis around an initial state is built by breadth-first expansion:
each hop applies one two-atom dipole-dipole transition (exactly two atoms
change, each by one dipole step), keeping states with ``|zero-field energy
defect| <= cutoff``. Total projection M is conserved exactly because the
collinear geometry restricts couplings to spherical components (q, -q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .atomic_data import (
    LifetimeModel,
    QuantumDefectTable,
    RydbergState,
    decay_rate,
    default_defects,
    level_energy,
)
from .constants import KAPPA_E
from .dipole import dipole_component, dipole_reachable
from .errors import OutOfRegimeError, ValidationError

__all__ = [
    "FIELD_GUARD_V_PER_CM",
    "DEFAULT_HOPS",
    "DEFAULT_DEFECT_CUTOFF_GHZ",
    "DEFAULT_STEP_WINDOW",
    "CollectiveState",
    "BasisSet",
    "StarkMap",
    "single_atom_stark_shift",
    "polarizability",
    "collective_energy",
    "zero_field_defect",
    "build_basis",
    "compute_stark_map",
    "find_resonances",
]

# Quadratic-regime guard: second-order perturbation theory is the Stark
# model here, valid while states stay far from manifold mixing.
FIELD_GUARD_V_PER_CM = 0.5

# Default basis-construction parameters. With these, the basis around
# (70P3/2(1/2))^3 contains 343 states (recorded in provenance; the target
# band for the default is 300-450).
DEFAULT_HOPS = 2
DEFAULT_DEFECT_CUTOFF_GHZ = 2.0
DEFAULT_STEP_WINDOW = 4

# Perturbation-sum window in principal quantum number for Stark shifts.
DEFAULT_STARK_WINDOW = 6


# --------------------------------------------------------------------------
# Collective states
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CollectiveState:
    """Ordered tuple of single-atom Rydberg states; index = trap position.

    The primary case is three atoms (one per trap). Two-atom instances are
    supported for reduced configurations in which one atom of the trio sits
    in the ground state and does not participate in Rydberg dynamics.
    """

    atoms: tuple[RydbergState, ...]

    def __post_init__(self) -> None:
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if len(atoms) not in (2, 3):
            raise ValidationError(
                f"a collective state needs 2 or 3 atoms, got {len(atoms)}"
            )
        for a in atoms:
            if not isinstance(a, RydbergState):
                raise ValidationError(f"atoms must be RydbergState, got {type(a).__name__}")

    def __len__(self) -> int:
        return len(self.atoms)

    def __getitem__(self, i: int) -> RydbergState:
        return self.atoms[i]

    @property
    def total_m2(self) -> int:
        """Twice the total projection M (exact integer arithmetic)."""
        return sum(a.m2 for a in self.atoms)

    @property
    def m_total(self) -> float:
        """Total angular momentum projection M = sum of m_j."""
        return self.total_m2 / 2.0

    def label(self) -> str:
        """Semicolon-joined atom labels, e.g. ``70S1/2(1/2);71S1/2(1/2);70P1/2(1/2)``."""
        return ";".join(a.label() for a in self.atoms)

    def sort_key(self) -> tuple:
        """Lexicographic quantum-number key for deterministic ordering."""
        return tuple((a.n, a.l, a.j2, a.m2) for a in self.atoms)

    def replace_atoms(self, updates: dict[int, RydbergState]) -> "CollectiveState":
        atoms = list(self.atoms)
        for i, s in updates.items():
            atoms[i] = s
        return CollectiveState(tuple(atoms))

    def count_atoms(self, predicate: Callable[[RydbergState], bool]) -> int:
        return sum(1 for a in self.atoms if predicate(a))


# --------------------------------------------------------------------------
# Stark shifts (second-order perturbation theory, field along Z => q = 0)
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _quadratic_coefficient(table: QuantumDefectTable, n: int, l: int, j2: int,
                           m2_abs: int, window: int) -> float:
    """Coefficient c such that shift(E) = c * E^2, in MHz/(V/cm)^2.

    Second-order perturbation sum over dipole-coupled states with
    |Delta n| <= window and the same m (q = 0 for a field along Z). The
    shift depends on |m| only, so the cache key uses |2m|.
    """
    state = RydbergState(n, l, j2 / 2.0, m2_abs / 2.0)
    e0 = level_energy(state, table) * 1e3  # h*MHz
    c = 0.0
    for other, q in dipole_reachable(state, window, table):
        if q != 0:
            continue
        d = dipole_component(state, other, 0, table).value  # e*a0
        de = e0 - level_energy(other, table) * 1e3  # h*MHz
        c += (KAPPA_E * d) ** 2 / de
    return c


def single_atom_stark_shift(state: RydbergState, field_v_per_cm: float,
                            defects: QuantumDefectTable | None = None,
                            window: int = DEFAULT_STARK_WINDOW) -> float:
    """Second-order Stark shift of one atom in a dc field along Z, in h*MHz.

    Exactly zero at zero field and quadratic in the field to leading order.
    Valid only in the quadratic regime: fields above
    :data:`FIELD_GUARD_V_PER_CM` raise :class:`OutOfRegimeError`.
    """
    if field_v_per_cm < 0:
        raise OutOfRegimeError(f"field must be >= 0 V/cm, got {field_v_per_cm}")
    if field_v_per_cm > FIELD_GUARD_V_PER_CM:
        raise OutOfRegimeError(
            f"field {field_v_per_cm} V/cm exceeds the quadratic-regime guard "
            f"({FIELD_GUARD_V_PER_CM} V/cm)"
        )
    table = defects if defects is not None else default_defects()
    c = _quadratic_coefficient(table, state.n, state.l, state.j2, abs(state.m2), window)
    return c * field_v_per_cm * field_v_per_cm


def polarizability(state: RydbergState,
                   defects: QuantumDefectTable | None = None,
                   window: int = DEFAULT_STARK_WINDOW) -> float:
    """Scalar polarizability alpha in MHz/(V/cm)^2, with shift = alpha*E^2/2."""
    table = defects if defects is not None else default_defects()
    return 2.0 * _quadratic_coefficient(table, state.n, state.l, state.j2,
                                        abs(state.m2), window)


# --------------------------------------------------------------------------
# Collective energies
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _level_mhz(table: QuantumDefectTable, n: int, l: int, j2: int) -> float:
    return 1e3 * level_energy(RydbergState(n, l, j2 / 2.0, j2 / 2.0), table)


def _bare_energy_mhz(cs: CollectiveState, table: QuantumDefectTable) -> float:
    return sum(_level_mhz(table, a.n, a.l, a.j2) for a in cs.atoms)


def collective_energy(cs: CollectiveState, field_v_per_cm: float,
                      reference: CollectiveState,
                      defects: QuantumDefectTable | None = None,
                      window: int = DEFAULT_STARK_WINDOW) -> float:
    """Collective energy in h*MHz: sum of level energies plus Stark shifts,
    relative to ``reference`` at zero field (the zero of energy).
    """
    table = defects if defects is not None else default_defects()
    e = _bare_energy_mhz(cs, table)
    for a in cs.atoms:
        e += single_atom_stark_shift(a, field_v_per_cm, table, window)
    return e - _bare_energy_mhz(reference, table)


def zero_field_defect(cs: CollectiveState, reference: CollectiveState,
                      defects: QuantumDefectTable | None = None) -> float:
    """Zero-field energy defect of ``cs`` relative to ``reference``, in h*GHz."""
    table = defects if defects is not None else default_defects()
    return (_bare_energy_mhz(cs, table) - _bare_energy_mhz(reference, table)) * 1e-3


def total_decay_rate(cs: CollectiveState, lifetimes: LifetimeModel,
                     defects: QuantumDefectTable | None = None) -> float:
    """Sum of single-atom decay rates over the collective state, in 1/us."""
    table = defects if defects is not None else default_defects()
    return sum(decay_rate(a, lifetimes, table) for a in cs.atoms)


# --------------------------------------------------------------------------
# Basis construction
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _steps_by_q(state: RydbergState, window: int,
                table: QuantumDefectTable) -> dict[int, tuple[RydbergState, ...]]:
    """Single-atom dipole steps grouped by spherical component q."""
    groups: dict[int, list[RydbergState]] = {-1: [], 0: [], 1: []}
    for other, q in dipole_reachable(state, window, table):
        groups[q].append(other)
    return {q: tuple(v) for q, v in groups.items()}


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Deterministic, duplicate-free ordered basis of collective states.

    The initial state sits at index 0; the remaining states are ordered by
    (|zero-field defect|, lexicographic quantum numbers). ``provenance``
    records the construction parameters so every output file can carry them.
    Instances hash by identity (the states tuple makes value hashing
    pointless at this size) and are immutable after construction.
    """

    states: tuple[CollectiveState, ...]
    provenance: dict

    def __post_init__(self) -> None:
        index = {cs: i for i, cs in enumerate(self.states)}
        if len(index) != len(self.states):
            raise ValidationError("basis contains duplicate collective states")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i: int) -> CollectiveState:
        return self.states[i]

    @property
    def initial(self) -> CollectiveState:
        return self.states[0]

    def index(self, cs: CollectiveState) -> int:
        try:
            return self._index[cs]  # type: ignore[attr-defined]
        except KeyError:
            raise ValidationError(f"state {cs.label()} is not in the basis") from None

    def __contains__(self, cs: CollectiveState) -> bool:
        return cs in self._index  # type: ignore[attr-defined]

    def labels(self) -> list[str]:
        return [cs.label() for cs in self.states]


def _pair_indices(n_atoms: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_atoms) for j in range(i + 1, n_atoms)]


def build_basis(initial: CollectiveState,
                hops: int = DEFAULT_HOPS,
                defect_cutoff_ghz: float = DEFAULT_DEFECT_CUTOFF_GHZ,
                step_window: int = DEFAULT_STEP_WINDOW,
                defects: QuantumDefectTable | None = None) -> BasisSet:
    """Breadth-first basis expansion around ``initial``.

    Each hop applies one two-atom dipole-dipole transition: exactly two
    atoms change, each by one dipole step with |Delta n| <= step_window,
    with opposite spherical components (q, -q) so total M is conserved.
    A state joins the basis only if its zero-field defect magnitude is
    within ``defect_cutoff_ghz``. Ordering is deterministic: initial state
    first, the rest by (|defect|, lexicographic quantum numbers).
    """
    if hops < 0:
        raise ValidationError(f"hops must be >= 0, got {hops}")
    if defect_cutoff_ghz <= 0:
        raise ValidationError(f"defect cutoff must be > 0 h*GHz, got {defect_cutoff_ghz}")
    if step_window < 1:
        raise ValidationError(f"step window must be >= 1, got {step_window}")
    table = defects if defects is not None else default_defects()

    pairs = _pair_indices(len(initial))
    seen: set[CollectiveState] = {initial}
    frontier: list[CollectiveState] = [initial]
    for _ in range(hops):
        next_frontier: list[CollectiveState] = []
        for cs in frontier:
            for i, j in pairs:
                steps_i = _steps_by_q(cs[i], step_window, table)
                steps_j = _steps_by_q(cs[j], step_window, table)
                for q in (-1, 0, 1):
                    for si in steps_i[q]:
                        for sj in steps_j[-q]:
                            cand = cs.replace_atoms({i: si, j: sj})
                            if cand in seen:
                                continue
                            if abs(zero_field_defect(cand, initial, table)) > defect_cutoff_ghz:
                                continue
                            seen.add(cand)
                            next_frontier.append(cand)
        frontier = next_frontier

    rest = sorted(
        (cs for cs in seen if cs != initial),
        key=lambda cs: (abs(zero_field_defect(cs, initial, table)), cs.sort_key()),
    )
    states = (initial, *rest)
    m0 = initial.total_m2
    if any(cs.total_m2 != m0 for cs in states):
        raise ValidationError("basis construction produced a state with Delta M != 0")
    provenance = {
        "initial": initial.label(),
        "hops": hops,
        "defect_cutoff_ghz": defect_cutoff_ghz,
        "step_window": step_window,
        "size": len(states),
        "species": table.species,
        "data_sha256": table.sha256,
    }
    return BasisSet(states=states, provenance=provenance)


# --------------------------------------------------------------------------
# Stark maps and resonance finding
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StarkMap:
    """Collective energy curves vs dc field.

    ``energies[k, s]`` is the energy of ``states[s]`` at ``fields[k]``,
    in h*MHz relative to ``reference`` at zero field.
    """

    fields: np.ndarray
    states: tuple[CollectiveState, ...]
    energies: np.ndarray
    reference: CollectiveState

    def __post_init__(self) -> None:
        if self.fields.ndim != 1 or np.any(np.diff(self.fields) <= 0):
            raise ValidationError("field grid must be one-dimensional and strictly increasing")
        if self.energies.shape != (self.fields.size, len(self.states)):
            raise ValidationError(
                f"energies shape {self.energies.shape} does not match "
                f"{self.fields.size} grid points x {len(self.states)} states"
            )


def compute_stark_map(states: Sequence[CollectiveState],
                      fields: Iterable[float],
                      reference: CollectiveState,
                      defects: QuantumDefectTable | None = None) -> StarkMap:
    """Evaluate collective energies for ``states`` over a field grid."""
    table = defects if defects is not None else default_defects()
    grid = np.asarray(list(fields), dtype=float)
    states_t = tuple(states)
    energies = np.empty((grid.size, len(states_t)))
    for s, cs in enumerate(states_t):
        for k, e_field in enumerate(grid):
            energies[k, s] = collective_energy(cs, float(e_field), reference, table)
    return StarkMap(fields=grid, states=states_t, energies=energies, reference=reference)


def find_resonances(initial: CollectiveState, final: CollectiveState,
                    field_min: float, field_max: float,
                    grid_step: float = 1e-3,
                    defects: QuantumDefectTable | None = None) -> list[float]:
    """Fields (V/cm) where the ``final`` energy curve crosses ``initial``'s.

    Sign-change bracketing on a uniform grid followed by bisection to
    1e-6 V/cm; results sorted ascending. Energies are bare collective
    curves (no interaction-induced repulsion). Returns an empty list when
    no crossing exists in the range.
    """
    if grid_step <= 0:
        raise ValidationError(f"grid step must be > 0, got {grid_step}")
    if not (0.0 <= field_min < field_max <= FIELD_GUARD_V_PER_CM):
        raise OutOfRegimeError(
            f"field range [{field_min}, {field_max}] must sit inside "
            f"[0, {FIELD_GUARD_V_PER_CM}] V/cm with min < max"
        )
    table = defects if defects is not None else default_defects()

    def gap(e_field: float) -> float:
        return collective_energy(final, e_field, initial, table) - collective_energy(
            initial, e_field, initial, table
        )

    n_steps = int(math.ceil((field_max - field_min) / grid_step))
    grid = [min(field_min + k * grid_step, field_max) for k in range(n_steps + 1)]
    values = [gap(e) for e in grid]
    crossings: list[float] = []
    for k in range(len(grid) - 1):
        f_lo, f_hi = values[k], values[k + 1]
        if f_lo == 0.0:
            crossings.append(grid[k])
            continue
        if f_lo * f_hi < 0.0:
            lo, hi = grid[k], grid[k + 1]
            v_lo = f_lo
            while hi - lo > 1e-6:
                mid = 0.5 * (lo + hi)
                v_mid = gap(mid)
                if v_mid == 0.0:
                    lo = hi = mid
                    break
                if v_lo * v_mid < 0.0:
                    hi = mid
                else:
                    lo, v_lo = mid, v_mid
            crossings.append(0.5 * (lo + hi))
    if values and values[-1] == 0.0:
        crossings.append(grid[-1])
    crossings.sort()
    deduped: list[float] = []
    for c in crossings:
        if not deduped or c - deduped[-1] > 2e-6:
            deduped.append(c)
    return deduped
