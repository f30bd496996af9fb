"""Collective basis construction, Stark shifts, and resonance finding.

Frozen oracles: second-order polarizabilities for the working levels,
the zero-field three-body energy defect, and the bisection-located
crossing fields for all four fine-structure variants of the initial
triple. Structural invariants (determinism, projection conservation,
cutoff enforcement, monotone growth with the step window) are asserted
directly.
"""

import numpy as np
import pytest

from foerster.atomic_data import RydbergState
from foerster.collective import (
    DEFAULT_DEFECT_CUTOFF_GHZ,
    FIELD_GUARD_V_PER_CM,
    CollectiveState,
    StarkMap,
    build_basis,
    collective_energy,
    compute_stark_map,
    find_resonances,
    polarizability,
    single_atom_stark_shift,
    total_decay_rate,
    zero_field_defect,
)
from foerster.errors import OutOfRegimeError, ValidationError


class TestCollectiveStateValidation:
    def test_needs_two_or_three_atoms(self, p_state):
        with pytest.raises(ValidationError):
            CollectiveState(atoms=(p_state,))
        with pytest.raises(ValidationError):
            CollectiveState(atoms=(p_state,) * 4)

    def test_atoms_must_be_rydberg_states(self, p_state):
        with pytest.raises(ValidationError):
            CollectiveState(atoms=(p_state, p_state, "70P3/2"))

    def test_total_projection_is_exact(self, initial_triple):
        assert initial_triple.total_m2 == 3
        assert initial_triple.m_total == 1.5


class TestStarkShifts:
    # alpha in MHz/(V/cm)^2 with shift = alpha * E^2 / 2, window 6 in n
    FROZEN_ALPHA = [
        ((70, 0, 0.5, 0.5), -520.7),
        ((71, 0, 0.5, 0.5), -574.5),
        ((70, 1, 1.5, 0.5), -4134.7),
        ((70, 1, 1.5, 1.5), -3484.0),
        ((70, 1, 0.5, 0.5), -3428.0),
    ]

    @pytest.mark.parametrize("qn,alpha", FROZEN_ALPHA)
    def test_polarizability_frozen(self, defects, qn, alpha):
        s = RydbergState(n=qn[0], l=qn[1], j=qn[2], m_j=qn[3])
        assert polarizability(s, defects) == pytest.approx(alpha, rel=1e-3)

    def test_shift_consistent_with_polarizability(self, defects, p_state):
        e_field = 0.14
        shift = single_atom_stark_shift(p_state, e_field, defects)
        alpha = polarizability(p_state, defects)
        assert shift == pytest.approx(alpha * e_field**2 / 2.0, rel=1e-12)
        assert shift < 0.0

    def test_zero_field_zero_shift(self, defects, p_state):
        assert single_atom_stark_shift(p_state, 0.0, defects) == 0.0

    def test_shift_depends_on_abs_m_only(self, defects):
        up = RydbergState(n=70, l=1, j=1.5, m_j=1.5)
        down = RydbergState(n=70, l=1, j=1.5, m_j=-1.5)
        assert polarizability(up, defects) == polarizability(down, defects)

    def test_field_guard(self, defects, p_state):
        with pytest.raises(OutOfRegimeError):
            single_atom_stark_shift(p_state, FIELD_GUARD_V_PER_CM * 1.2, defects)
        with pytest.raises(OutOfRegimeError):
            single_atom_stark_shift(p_state, -0.1, defects)


class TestCollectiveEnergies:
    def test_zero_field_defect_frozen(self, defects, initial_triple, final_triple):
        # three-body channel PPP -> S,S',P' sits 75.04 MHz below at zero
        # field; the defect is a ~75 MHz difference of ~2e6 MHz level sums,
        # so sub-Hz (1e-6 MHz) agreement is the meaningful bound
        defect_ghz = zero_field_defect(final_triple, initial_triple, defects)
        assert defect_ghz * 1e3 == pytest.approx(-75.04286711719033, abs=1e-6)

    def test_reference_state_is_energy_zero(self, defects, initial_triple):
        e = collective_energy(initial_triple, 0.0, initial_triple, defects)
        assert e == 0.0

    def test_total_decay_rate_sums_atoms(self, defects, lifetimes, initial_triple):
        rate = total_decay_rate(initial_triple, lifetimes, defects)
        assert rate == pytest.approx(3 * 0.0053479690158538176, rel=1e-12)


class TestBasisConstruction:
    def test_default_basis_size(self, triple_basis):
        assert len(triple_basis) == 343

    def test_initial_state_first(self, triple_basis, initial_triple):
        assert triple_basis[0] == initial_triple
        assert triple_basis.initial == initial_triple
        assert triple_basis.index(initial_triple) == 0

    def test_contains_final_channel_state(self, triple_basis, final_triple):
        assert final_triple in triple_basis

    def test_deterministic_rebuild(self, defects, initial_triple, triple_basis):
        again = build_basis(initial_triple, defects=defects)
        assert again.labels() == triple_basis.labels()

    def test_projection_conserved(self, triple_basis, initial_triple):
        m0 = initial_triple.total_m2
        assert all(cs.total_m2 == m0 for cs in triple_basis)

    def test_no_duplicates(self, triple_basis):
        assert len(set(triple_basis.labels())) == len(triple_basis)

    def test_cutoff_enforced(self, defects, triple_basis, initial_triple):
        worst = max(
            abs(zero_field_defect(cs, initial_triple, defects)) for cs in triple_basis
        )
        assert worst <= DEFAULT_DEFECT_CUTOFF_GHZ

    def test_zero_hops_is_initial_only(self, defects, initial_triple):
        basis = build_basis(initial_triple, hops=0, defects=defects)
        assert len(basis) == 1
        assert basis[0] == initial_triple

    def test_wider_window_grows_superset(self, defects, initial_triple, triple_basis):
        wider = build_basis(initial_triple, step_window=5, defects=defects)
        assert len(wider) > len(triple_basis)
        assert set(triple_basis.labels()) <= set(wider.labels())

    def test_invalid_parameters(self, defects, initial_triple):
        with pytest.raises(ValidationError):
            build_basis(initial_triple, hops=-1, defects=defects)
        with pytest.raises(ValidationError):
            build_basis(initial_triple, defect_cutoff_ghz=0.0, defects=defects)
        with pytest.raises(ValidationError):
            build_basis(initial_triple, step_window=0, defects=defects)

    def test_lookup_of_foreign_state_fails(self, triple_basis):
        foreign = CollectiveState(
            atoms=(
                RydbergState(n=40, l=0, j=0.5, m_j=0.5),
                RydbergState(n=40, l=0, j=0.5, m_j=0.5),
                RydbergState(n=40, l=0, j=0.5, m_j=0.5),
            )
        )
        with pytest.raises(ValidationError):
            triple_basis.index(foreign)


def _triple(ms: tuple[float, float, float]) -> CollectiveState:
    return CollectiveState(
        atoms=tuple(RydbergState(n=70, l=1, j=1.5, m_j=m) for m in ms)
    )


class TestResonances:
    # Bisection-located crossings of the four |m| compositions of the
    # initial PPP triple against the S,S',P' channel curve (V/cm).
    FROZEN_CROSSINGS = [
        ((0.5, 0.5, 0.5), 0.13800146484375003),
        ((0.5, 0.5, 1.5), 0.14407763671875),
        ((0.5, 1.5, 1.5), 0.15103369140625),
        ((1.5, 1.5, 1.5), 0.15910693359375),
    ]

    @pytest.mark.parametrize("ms,crossing", FROZEN_CROSSINGS)
    def test_variant_crossings_frozen(self, defects, final_triple, ms, crossing):
        found = find_resonances(_triple(ms), final_triple, 0.10, 0.20, defects=defects)
        assert len(found) == 1
        assert found[0] == pytest.approx(crossing, abs=2e-6)

    def test_crossings_ordered_by_m_composition(self, defects, final_triple):
        fields = [
            find_resonances(_triple(ms), final_triple, 0.10, 0.20, defects=defects)[0]
            for ms, _ in self.FROZEN_CROSSINGS
        ]
        assert fields == sorted(fields)

    def test_no_crossing_below_band(self, defects, initial_triple, final_triple):
        assert find_resonances(initial_triple, final_triple, 0.001, 0.05,
                               defects=defects) == []

    def test_range_validation(self, defects, initial_triple, final_triple):
        with pytest.raises(OutOfRegimeError):
            find_resonances(initial_triple, final_triple, 0.2, 0.1, defects=defects)
        with pytest.raises(OutOfRegimeError):
            find_resonances(initial_triple, final_triple, 0.1,
                            FIELD_GUARD_V_PER_CM * 2, defects=defects)
        with pytest.raises(ValidationError):
            find_resonances(initial_triple, final_triple, 0.1, 0.2,
                            grid_step=0.0, defects=defects)


class TestStarkMapObject:
    def test_shapes_and_reference_zero(self, defects, initial_triple, final_triple):
        fields = np.linspace(0.0, 0.2, 21)
        smap = compute_stark_map([initial_triple, final_triple], fields,
                                 initial_triple, defects)
        assert smap.energies.shape == (21, 2)
        assert smap.energies[0, 0] == 0.0  # reference curve starts at zero
        # final channel starts 75.04 MHz below and both curves fall with field
        assert smap.energies[0, 1] == pytest.approx(-75.04286711719033, rel=1e-9)
        assert np.all(np.diff(smap.energies[:, 0]) < 0)

    def test_curves_cross_inside_band(self, defects, initial_triple, final_triple):
        fields = np.linspace(0.10, 0.20, 101)
        smap = compute_stark_map([initial_triple, final_triple], fields,
                                 initial_triple, defects)
        gap = smap.energies[:, 1] - smap.energies[:, 0]
        signs = np.sign(gap)
        assert signs[0] != signs[-1]

    def test_monotone_field_grid_required(self, defects, initial_triple):
        with pytest.raises(ValidationError):
            StarkMap(
                fields=np.array([0.2, 0.1]),
                states=(initial_triple,),
                energies=np.zeros((2, 1)),
                reference=initial_triple,
            )
