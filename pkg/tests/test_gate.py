"""Gate algebra, fidelity measures, and the parameter optimizer.

Oracles: the exact Toffoli permutation matrix, closed-form fidelity
reductions (pure match, orthogonal states, uniform leakage), the general
Uhlmann formula against its pure-etalon reduction, and a quadratic
self-test objective with a known minimum for the simplex search. The
ideal-phase injection (unit amplitudes with a sign flip on the
all-excited configuration) must reproduce a perfect gate end to end.
"""

import math

import numpy as np
import pytest

from foerster.errors import ValidationError
from foerster.gate import (
    RYDBERG_ROUND_TRIP_PHASE,
    TARGET_POST_ROTATION,
    TARGET_PRE_ROTATION,
    GateParameters,
    QubitInputState,
    all_input_states,
    average_fidelity,
    config_amplitudes,
    ideal_ccz,
    ideal_toffoli,
    optimize,
    simulate_gate,
    state_fidelity,
    uhlmann_fidelity,
)

OPTIMUM = dict(spacing_um=10.0, field_v_per_cm=0.1434042301503033,
               duration_us=1.1845729091580368)

IDEAL_PHASES = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0)

COMPUTATIONAL = [QubitInputState((a, b, c))
                 for a in ("0", "1") for b in ("0", "1") for c in ("0", "1")]


def _toffoli_permutation(target: int) -> np.ndarray:
    """Toffoli as an explicit permutation: flip ``target`` iff both others are 1."""
    u = np.zeros((8, 8), dtype=complex)
    for c in range(8):
        bits = [(c >> 2) & 1, (c >> 1) & 1, c & 1]
        if all(bits[k] for k in range(3) if k != target):
            bits[target] ^= 1
        u[(bits[0] << 2) | (bits[1] << 1) | bits[2], c] = 1.0
    return u


class TestIdealGates:
    def test_ccz_diagonal(self):
        u = ideal_ccz()
        assert np.array_equal(u, np.diag([1, 1, 1, 1, 1, 1, 1, -1]).astype(complex))

    @pytest.mark.parametrize("target", [0, 1, 2])
    def test_toffoli_is_exact_permutation(self, target):
        assert np.max(np.abs(ideal_toffoli(target) - _toffoli_permutation(target))) <= 1e-14

    def test_toffoli_truth_table_middle_target(self):
        u = ideal_toffoli(1)
        # |101> (controls set) -> |111>, and back
        assert abs(u[0b111, 0b101]) == pytest.approx(1.0, abs=1e-14)
        assert abs(u[0b101, 0b111]) == pytest.approx(1.0, abs=1e-14)
        for c in (0b000, 0b001, 0b010, 0b011, 0b100, 0b110):
            assert abs(u[c, c]) == pytest.approx(1.0, abs=1e-14)

    def test_rotation_sandwich_constants(self):
        assert TARGET_PRE_ROTATION == -math.pi / 2.0
        assert TARGET_POST_ROTATION == +math.pi / 2.0
        assert RYDBERG_ROUND_TRIP_PHASE == 0.0

    def test_invalid_target(self):
        with pytest.raises(ValidationError):
            ideal_toffoli(3)


class TestInputStates:
    def test_full_set_is_216_unique(self):
        inputs = all_input_states()
        assert len(inputs) == 216
        assert len({inp.label() for inp in inputs}) == 216
        for inp in inputs[:12]:
            assert np.linalg.norm(inp.vector()) == pytest.approx(1.0, abs=1e-12)

    def test_vector_ordering_is_qubit0_most_significant(self):
        vec = QubitInputState(("1", "0", "1")).vector()
        expected = np.zeros(8)
        expected[0b101] = 1.0
        assert np.array_equal(vec, expected.astype(complex))

    def test_label_validation(self):
        with pytest.raises(ValidationError):
            QubitInputState(("0", "1"))
        with pytest.raises(ValidationError):
            QubitInputState(("0", "1", "up"))


class TestGateParametersValidation:
    def test_rejects_nonpositive_scales(self):
        with pytest.raises(ValidationError):
            GateParameters(spacing_um=0.0, field_v_per_cm=0.14, duration_us=1.0)
        with pytest.raises(ValidationError):
            GateParameters(spacing_um=10.0, field_v_per_cm=0.14, duration_us=0.0)
        with pytest.raises(ValidationError):
            GateParameters(spacing_um=10.0, field_v_per_cm=-0.1, duration_us=1.0)

    def test_excitation_stage_must_pair_field_and_time(self):
        with pytest.raises(ValidationError):
            GateParameters(spacing_um=10.0, field_v_per_cm=0.14, duration_us=1.0,
                           excitation_field_v_per_cm=0.2)
        with pytest.raises(ValidationError):
            GateParameters(spacing_um=10.0, field_v_per_cm=0.14, duration_us=1.0,
                           excitation_time_us=0.05)
        params = GateParameters(spacing_um=10.0, field_v_per_cm=0.14, duration_us=1.0,
                                excitation_field_v_per_cm=0.2, excitation_time_us=0.05)
        assert params.has_excitation_stage

    def test_target_index_range(self):
        with pytest.raises(ValidationError):
            GateParameters(spacing_um=10.0, field_v_per_cm=0.14, duration_us=1.0,
                           target=5)


class TestFidelityMeasures:
    def test_pure_match_is_one(self):
        psi = np.array([1, 1j, 0, 0, 1, 0, 0, -1]) / 2.0
        rho = np.outer(psi, psi.conj())
        assert state_fidelity(rho, psi) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_is_zero(self):
        psi = np.zeros(8, dtype=complex)
        psi[0] = 1.0
        phi = np.zeros(8, dtype=complex)
        phi[3] = 1.0
        assert state_fidelity(np.outer(psi, psi.conj()), phi) == 0.0

    def test_uniform_leakage_takes_square_root(self):
        # an unnormalized pure state with 81% survival scores 0.9
        psi = np.zeros(4, dtype=complex)
        psi[2] = 1.0
        rho = 0.81 * np.outer(psi, psi.conj())
        assert state_fidelity(rho, psi) == pytest.approx(0.9, abs=1e-12)

    def test_validation_errors(self):
        psi = np.array([1.0, 0.0], dtype=complex)
        good = np.diag([0.5, 0.25]).astype(complex)
        with pytest.raises(ValidationError):
            state_fidelity(np.eye(3, dtype=complex) / 3.0, psi)  # shape mismatch
        with pytest.raises(ValidationError):
            state_fidelity(good, 2.0 * psi)  # etalon not normalized
        with pytest.raises(ValidationError):
            state_fidelity(np.array([[0.5, 1.0], [0.0, 0.25]]), psi)  # not Hermitian
        with pytest.raises(ValidationError):
            state_fidelity(np.diag([1.0, -0.5]).astype(complex), psi)  # negative
        with pytest.raises(ValidationError):
            state_fidelity(np.diag([1.0, 0.5]).astype(complex), psi)  # trace > 1

    def test_uhlmann_reduces_to_pure_form(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            rho = a @ a.conj().T
            rho /= np.trace(rho).real * 1.25  # trace 0.8 < 1
            psi = rng.normal(size=4) + 1j * rng.normal(size=4)
            psi /= np.linalg.norm(psi)
            general = uhlmann_fidelity(rho, np.outer(psi, psi.conj()))
            reduced = state_fidelity(rho, psi)
            # sqrtm noise dominates the general route; the reduction is exact
            assert general == pytest.approx(reduced, abs=5e-8)


class TestGateWithInjectedAmplitudes:
    def test_ideal_phase_pattern_gives_unit_fidelity(self):
        params = GateParameters(**OPTIMUM)
        res = average_fidelity(params, amplitude_override=IDEAL_PHASES)
        assert res.mean_fidelity == pytest.approx(1.0, abs=1e-12)
        assert res.min_fidelity == pytest.approx(1.0, abs=1e-12)
        assert np.max(res.leakages) <= 1e-12

    def test_unit_amplitudes_give_identity_gate(self):
        # without the collective phase the sandwich collapses to identity:
        # fidelity 1 where the ideal gate acts trivially, 0 on |101>,|111>
        params = GateParameters(**OPTIMUM)
        res = average_fidelity(params, inputs=COMPUTATIONAL,
                               amplitude_override=np.ones(8))
        assert res.mean_fidelity == pytest.approx(0.75, abs=1e-12)
        fids = dict(zip(res.input_labels, res.fidelities))
        assert fids["1;0;1"] == pytest.approx(0.0, abs=1e-12)
        assert fids["1;1;1"] == pytest.approx(0.0, abs=1e-12)
        assert fids["0;0;0"] == pytest.approx(1.0, abs=1e-12)

    def test_override_shape_checked(self):
        params = GateParameters(**OPTIMUM)
        with pytest.raises(ValidationError):
            simulate_gate(params, QubitInputState(("0", "0", "0")),
                          amplitude_override=np.ones(4))


class TestConfigAmplitudes:
    def test_mirror_symmetry_and_structure(self, defects, no_decay):
        params = GateParameters(**OPTIMUM)
        amps = config_amplitudes(params, defects, lifetimes=no_decay)
        assert amps[0b000] == 1.0
        # single-excitation amplitudes are pure decay factors: exactly 1 here
        for c in (0b100, 0b010, 0b001):
            assert amps[c] == pytest.approx(1.0, abs=1e-12)
        # the two adjacent pairs are mirror images about the middle trap
        assert amps[0b110] == pytest.approx(amps[0b011], abs=1e-12)
        # every amplitude is a return amplitude: inside the unit disk
        assert np.all(np.abs(amps) <= 1.0 + 1e-9)

    def test_far_pair_interacts_less(self, defects, no_decay):
        params = GateParameters(**OPTIMUM)
        amps = config_amplitudes(params, defects, lifetimes=no_decay)
        assert abs(amps[0b101]) > abs(amps[0b110])
        # the far pair stays close to unit return; the triple does not
        assert abs(amps[0b101]) > 0.95
        assert abs(amps[0b111]) < 0.99

    def test_decay_shrinks_single_amplitude(self, defects, lifetimes):
        params = GateParameters(**OPTIMUM)
        amps = config_amplitudes(params, defects, lifetimes=lifetimes)
        gamma = 0.0053479690158538176  # 1/us for the Rydberg level at 300 K
        expected = math.exp(-0.5 * gamma * params.duration_us)
        assert abs(amps[0b010]) == pytest.approx(expected, rel=1e-9)


class TestSimulatedGate:
    def test_control_zeros_input_is_exact_without_decay(self, defects, no_decay):
        # with both controls in |0> only the 0- and 1-excitation amplitudes
        # enter, and without decay both are exactly 1: a perfect identity
        params = GateParameters(**OPTIMUM)
        res = average_fidelity(params, defects, lifetimes=no_decay,
                               inputs=[QubitInputState(("0", "+", "0")),
                                       QubitInputState(("0", "1", "0")),
                                       QubitInputState(("0", "-i", "0"))])
        assert res.min_fidelity == pytest.approx(1.0, abs=1e-12)

    def test_simulate_gate_consistent_with_scoring(self, defects, lifetimes):
        params = GateParameters(**OPTIMUM)
        inputs = [QubitInputState(("1", "0", "1")), QubitInputState(("+", "-i", "1"))]
        res = average_fidelity(params, defects, lifetimes=lifetimes, inputs=inputs)
        toffoli = ideal_toffoli(params.target)
        for k, inp in enumerate(inputs):
            rho = simulate_gate(params, inp, defects, lifetimes=lifetimes)
            etalon = toffoli @ inp.vector()
            assert state_fidelity(rho, etalon) == pytest.approx(
                res.fidelities[k], abs=1e-12)

    def test_mirrored_controls_score_identically(self, defects, lifetimes):
        params = GateParameters(**OPTIMUM)
        pairs = [(("1", "+", "0"), ("0", "+", "1")),
                 (("1", "-i", "0"), ("0", "-i", "1"))]
        for fwd, rev in pairs:
            res = average_fidelity(params, defects, lifetimes=lifetimes,
                                   inputs=[QubitInputState(fwd), QubitInputState(rev)])
            assert res.fidelities[0] == pytest.approx(res.fidelities[1], abs=1e-9)

    def test_disabling_decay_raises_fidelity(self, defects, lifetimes, no_decay):
        params = GateParameters(**OPTIMUM)
        with_decay = average_fidelity(params, defects, lifetimes=lifetimes,
                                      inputs=COMPUTATIONAL)
        without = average_fidelity(params, defects, lifetimes=no_decay,
                                   inputs=COMPUTATIONAL)
        assert without.mean_fidelity > with_decay.mean_fidelity
        # decay only ever adds loss on top of the coherent non-return
        assert np.all(with_decay.leakages >= without.leakages - 1e-12)
        # |000> never excites; a lone excitation returns exactly when
        # nothing decays. Multi-excitation configs leak even without decay:
        # population genuinely stays behind in other collective states.
        labels = list(without.input_labels)
        leak = dict(zip(labels, without.leakages))
        assert leak["0;0;0"] == 0.0
        assert leak["0;1;0"] <= 1e-12
        assert leak["1;1;1"] > 1e-3

    def test_short_excitation_stage_barely_moves_fidelity(self, defects, lifetimes):
        plain = GateParameters(**OPTIMUM)
        staged = GateParameters(**OPTIMUM, excitation_field_v_per_cm=0.2,
                                excitation_time_us=0.01)
        f_plain = average_fidelity(plain, defects, lifetimes=lifetimes,
                                   inputs=COMPUTATIONAL).mean_fidelity
        f_staged = average_fidelity(staged, defects, lifetimes=lifetimes,
                                    inputs=COMPUTATIONAL).mean_fidelity
        assert f_staged != f_plain
        assert abs(f_staged - f_plain) < 0.01


class TestOptimize:
    @staticmethod
    def _quadratic(t, e):
        return (t - 1.0) ** 2 + ((e - 0.15) / 0.02) ** 2

    def test_finds_quadratic_minimum(self):
        start = GateParameters(spacing_um=10.0, field_v_per_cm=0.12, duration_us=0.5)
        out = optimize(start, objective=self._quadratic)
        assert out.params.duration_us == pytest.approx(1.0, abs=1e-3)
        assert out.params.field_v_per_cm == pytest.approx(0.15, abs=1e-4)
        assert out.converged
        assert out.evaluations <= 200
        assert out.simplex_diameter < 1e-3

    def test_deterministic_given_seed(self):
        start = GateParameters(spacing_um=10.0, field_v_per_cm=0.12, duration_us=0.5)
        a = optimize(start, seed=3, objective=self._quadratic)
        b = optimize(start, seed=3, objective=self._quadratic)
        assert a.params.duration_us == b.params.duration_us
        assert a.params.field_v_per_cm == b.params.field_v_per_cm
        assert a.evaluations == b.evaluations
        c = optimize(start, seed=4, objective=self._quadratic)
        assert (c.params.duration_us, c.params.field_v_per_cm) != (
            a.params.duration_us, a.params.field_v_per_cm)

    def test_budget_exhaustion_returns_best_so_far(self):
        start = GateParameters(spacing_um=10.0, field_v_per_cm=0.12, duration_us=0.5)
        out = optimize(start, max_evaluations=12, objective=self._quadratic)
        assert not out.converged
        assert out.evaluations >= 12
        assert out.params.duration_us > 0

    def test_validation(self):
        start = GateParameters(spacing_um=10.0, field_v_per_cm=0.12, duration_us=0.5)
        with pytest.raises(ValidationError):
            optimize(start, duration_bounds_us=(2.0, 1.0), objective=self._quadratic)
        with pytest.raises(ValidationError):
            optimize(start, field_bounds_v_per_cm=(0.13, 0.20),
                     objective=self._quadratic)  # start outside bounds
        with pytest.raises(ValidationError):
            optimize(start, max_evaluations=5, objective=self._quadratic)
