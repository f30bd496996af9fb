"""Time evolution under the non-Hermitian Hamiltonian and trace extraction.

The Schrödinger equation for the amplitude vector, with H in h*MHz and t
in us, is integrated as psi(t) = exp(-i*2pi*H*t) psi(0). For a fixed
matrix (piecewise-constant pulses) the propagator is evaluated by
eigendecomposition, cross-checked against scaling-and-squaring matrix
exponentiation at the final time; if the two disagree beyond the requested
tolerance, evolution falls back to verified exponential stepping. The
contract is the error bound, not the method.

Decayed population is removed, never returned: lost norm is leakage, and
trajectory norms are non-increasing whenever all decay rates are >= 0
(asserted on every trajectory).

Phases of the initial basis state are reported in the rotating frame of
its own Stark-shifted diagonal energy (gate phase shifts are defined
relative to non-interacting evolution), wrapped to (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .atomic_data import RydbergState
from .collective import BasisSet, CollectiveState
from .constants import TWO_PI
from .errors import NumericalError, ToleranceError, ValidationError
from .interaction import HamiltonianModel

__all__ = [
    "Trajectory",
    "InitialStateTrace",
    "basis_vector",
    "evolve",
    "propagator",
    "transfer_fraction",
    "initial_state_population_phase",
]

# Below this population the phase of an amplitude is numerically meaningless.
PHASE_POPULATION_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Amplitudes over the basis at each time point.

    ``amplitudes[k, s]`` is the complex amplitude of basis state ``s`` at
    ``times[k]``; ``times[0] = 0`` with a unit-norm start. ``h00_mhz`` is
    the real diagonal energy of the basis initial state, kept for
    rotating-frame phase extraction. ``contractive`` records whether the
    generating Hamiltonian had only non-positive imaginary diagonal.
    """

    times: np.ndarray
    amplitudes: np.ndarray
    basis: BasisSet
    h00_mhz: float
    contractive: bool

    def __post_init__(self) -> None:
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValidationError("trajectory needs a non-empty 1-D time grid")
        if self.amplitudes.shape != (self.times.size, len(self.basis)):
            raise ValidationError(
                f"amplitude array shape {self.amplitudes.shape} does not match "
                f"{self.times.size} times x {len(self.basis)} basis states"
            )
        norms = np.linalg.norm(self.amplitudes, axis=1)
        if abs(norms[0] - 1.0) > 1e-9:
            raise ValidationError(f"||psi(0)|| = {norms[0]!r}, expected 1")
        if self.contractive and np.any(np.diff(norms) > 1e-9):
            raise NumericalError(
                "norm increased along a trajectory with non-negative decay rates"
            )
        self.times.setflags(write=False)
        self.amplitudes.setflags(write=False)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.amplitudes, axis=1)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def final_amplitudes(self) -> np.ndarray:
        return self.amplitudes[-1]


def basis_vector(basis: BasisSet, state: CollectiveState | int = 0) -> np.ndarray:
    """Unit amplitude vector pointing at one basis state (default: initial)."""
    idx = state if isinstance(state, int) else basis.index(state)
    if not (0 <= idx < len(basis)):
        raise ValidationError(f"basis index {idx} out of range for size {len(basis)}")
    psi = np.zeros(len(basis), dtype=complex)
    psi[idx] = 1.0
    return psi


def _eig_propagate(matrix: np.ndarray, psi0: np.ndarray,
                   times: np.ndarray) -> np.ndarray | None:
    """Propagate via eigendecomposition; None if the matrix is too
    ill-conditioned to diagonalize reliably."""
    try:
        w, v = scipy.linalg.eig(matrix)
        coeff = scipy.linalg.solve(v, psi0)
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    phases = np.exp(-1j * TWO_PI * np.outer(times, w))
    return (phases * coeff) @ v.T


def _expm_step_propagate(matrix: np.ndarray, psi0: np.ndarray,
                         times: np.ndarray, substeps: int) -> np.ndarray:
    """Propagate along the grid with scaling-and-squaring exponentials,
    ``substeps`` equal sub-intervals per grid interval."""
    amps = np.empty((times.size, psi0.size), dtype=complex)
    amps[0] = psi0
    psi = psi0
    for k in range(times.size - 1):
        dt = (times[k + 1] - times[k]) / substeps
        u = scipy.linalg.expm(-1j * TWO_PI * matrix * dt)
        for _ in range(substeps):
            psi = u @ psi
        amps[k + 1] = psi
    return amps


def evolve(model: HamiltonianModel, psi0: np.ndarray, duration_us: float,
           tolerance: float = 1e-9, samples: int = 201) -> Trajectory:
    """Integrate i psi_dot = 2pi H psi from 0 to ``duration_us``.

    ``psi0`` must be unit norm. The result is sampled on a uniform grid of
    ``samples`` points including both endpoints. The terminal state is
    verified to ``tolerance`` (relative) by comparing two independent
    propagation methods; a :class:`ToleranceError` is raised if no method
    pair agrees.
    """
    if duration_us <= 0:
        raise ValidationError(f"duration must be > 0 us, got {duration_us}")
    if tolerance <= 0:
        raise ValidationError(f"tolerance must be > 0, got {tolerance}")
    if samples < 2:
        raise ValidationError(f"samples must be >= 2, got {samples}")
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (model.size,):
        raise ValidationError(
            f"psi0 has shape {psi0.shape}, expected ({model.size},)"
        )
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ValidationError("||psi0|| must be 1")

    matrix = model.matrix
    times = np.linspace(0.0, duration_us, samples)
    contractive = bool(np.all(matrix.diagonal().imag <= 0.0))

    reference = scipy.linalg.expm(-1j * TWO_PI * matrix * duration_us) @ psi0
    ref_norm = max(float(np.linalg.norm(reference)), 1e-300)

    amps = _eig_propagate(matrix, psi0, times)
    if amps is not None:
        err = float(np.linalg.norm(amps[-1] - reference)) / ref_norm
        if err <= tolerance:
            return Trajectory(times=times, amplitudes=amps, basis=model.basis,
                              h00_mhz=model.initial_diagonal_mhz,
                              contractive=contractive)

    # Fallback: verified exponential stepping with sub-interval refinement.
    for substeps in (1, 2, 4):
        amps = _expm_step_propagate(matrix, psi0, times, substeps)
        err = float(np.linalg.norm(amps[-1] - reference)) / ref_norm
        if err <= tolerance:
            return Trajectory(times=times, amplitudes=amps, basis=model.basis,
                              h00_mhz=model.initial_diagonal_mhz,
                              contractive=contractive)
    raise ToleranceError(
        f"no propagation method pair agreed to relative tolerance {tolerance} "
        f"(best mismatch {err:.3e})"
    )


def propagator(model: HamiltonianModel, duration_us: float,
               tolerance: float = 1e-9) -> np.ndarray:
    """Verified propagator U = exp(-i*2pi*H*t) as a dense matrix.

    Computed by scaling-and-squaring exponentiation and cross-checked
    against eigendecomposition (or, if the matrix resists diagonalization,
    against a composed half-step exponential). Raises
    :class:`ToleranceError` when no method pair agrees to ``tolerance``.
    """
    if duration_us <= 0:
        raise ValidationError(f"duration must be > 0 us, got {duration_us}")
    if tolerance <= 0:
        raise ValidationError(f"tolerance must be > 0, got {tolerance}")
    matrix = model.matrix
    u_expm = scipy.linalg.expm(-1j * TWO_PI * matrix * duration_us)
    scale = max(float(np.linalg.norm(u_expm)), 1e-300)
    try:
        w, v = scipy.linalg.eig(matrix)
        u_eig = (v * np.exp(-1j * TWO_PI * w * duration_us)) @ scipy.linalg.inv(v)
        err = float(np.linalg.norm(u_eig - u_expm)) / scale
    except (scipy.linalg.LinAlgError, ValueError):
        err = np.inf
    if err <= tolerance:
        return u_expm
    u_half = scipy.linalg.expm(-1j * TWO_PI * matrix * (0.5 * duration_us))
    err = float(np.linalg.norm(u_half @ u_half - u_expm)) / scale
    if err <= tolerance:
        return u_expm
    raise ToleranceError(
        f"no propagator method pair agreed to relative tolerance {tolerance} "
        f"(best mismatch {err:.3e})"
    )


def _as_predicate(target) -> Callable[[RydbergState], bool]:
    if callable(target):
        return target
    try:
        n, l, j = target
        n = int(n)
        l = int(l)
        j2 = round(2 * float(j))
    except (TypeError, ValueError):
        raise ValidationError(
            "target must be a predicate or an (n, l, j) triple"
        ) from None
    return lambda a: a.n == n and a.l == l and a.j2 == j2


def transfer_fraction(traj: Trajectory, target) -> np.ndarray:
    """Fraction of atoms in the target single-atom state vs time.

    ``target`` is an (n, l, j) triple (any m) or a per-atom predicate.
    rho(t) = sum over basis states of (matching atoms / total atoms) times
    the state's population; rho is in [0, 1] and counts only population
    still inside the basis (decayed population is gone).
    """
    pred = _as_predicate(target)
    weights = np.array(
        [cs.count_atoms(pred) / len(cs) for cs in traj.basis.states]
    )
    return traj.populations() @ weights


@dataclass(frozen=True, eq=False)
class InitialStateTrace:
    """Population and rotating-frame phase of the basis initial state.

    ``phase_rad`` is in (-pi, pi] with the free-evolution phase of the
    initial state's Stark-shifted diagonal energy subtracted; samples where
    the population is below ``PHASE_POPULATION_FLOOR`` carry NaN phase and
    are flagged False in ``phase_defined``.
    """

    times: np.ndarray
    population: np.ndarray
    phase_rad: np.ndarray
    phase_defined: np.ndarray


def initial_state_population_phase(traj: Trajectory) -> InitialStateTrace:
    """P0(t) and phi0(t) for the basis initial state (index 0)."""
    amp0 = traj.amplitudes[:, 0]
    p0 = np.abs(amp0) ** 2
    rotated = amp0 * np.exp(1j * TWO_PI * traj.h00_mhz * traj.times)
    defined = p0 >= PHASE_POPULATION_FLOOR
    phase = np.where(defined, np.angle(rotated), np.nan)
    # np.angle returns values in (-pi, pi]; map an exact -pi (possible from
    # rounding at the branch cut) onto +pi for a consistent half-open range.
    phase = np.where(phase == -np.pi, np.pi, phase)
    return InitialStateTrace(times=traj.times, population=p0,
                             phase_rad=phase, phase_defined=defined)
