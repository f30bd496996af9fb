"""Single-atom Rydberg data: states, quantum-defect energies, lifetimes.

Energies use the Rydberg-Ritz parametrization
``E(n,l,j) = -Ry / (n - delta(n))**2`` with
``delta(n) = delta0 + delta2/(n - delta0)**2``; per-series coefficients ship
in a versioned TOML data file whose sha256 checksum is recorded in every
output for reproducibility.

Lifetimes follow the standard two-part scaling model: a 0 K radiative part
``tau_s * nstar**gamma`` plus a blackbody-radiation part with per-series
fitted coefficients; series without a fitted blackbody table fall back to
the universal low-frequency form ``4 alpha^3 kT / (3 nstar^2)`` (atomic
units). The ambient temperature defaults to 300 K and is configurable.

Unit note: :func:`level_energy` returns h*GHz (relative to the ionization
limit, hence negative); downstream modules work in h*MHz.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):  # pragma: no cover - version shim
    import tomllib as _toml
else:  # pragma: no cover - version shim
    import tomli as _toml

from .errors import UnknownSeriesError, ValidationError

__all__ = [
    "RydbergState",
    "QuantumDefectTable",
    "LifetimeModel",
    "level_energy",
    "decay_rate",
    "default_data_path",
    "data_file_sha256",
    "load_species_data",
    "default_defects",
    "default_lifetimes",
    "SERIES_LETTERS",
]

SERIES_LETTERS = "SPDFGHIKLM"

# Universal low-frequency blackbody rate, 4 alpha^3 k_B T / (3 nstar^2) in
# atomic units, converted to 1/s:  4/3 * alpha^3 * (k_B/E_h) * (1/t_au)
# = 4/3 * (1/137.035999)^3 * 3.1668115e-6 * 4.1341373e16  [1/(s K)]
_UNIVERSAL_BBR_PER_K = (
    4.0 / 3.0 * (1.0 / 137.035999084) ** 3 * 3.1668115634556e-6 * 4.134137333518e16
)


def _is_half_integer(x: float) -> bool:
    return abs(2.0 * x - round(2.0 * x)) < 1e-9


@dataclass(frozen=True, order=True)
class RydbergState:
    """A single-atom Rydberg state |n, l, j, m_j>.

    ``j`` and ``m_j`` are half-integers stored as floats; equality and
    hashing are exact because construction validates half-integrality.
    """

    n: int
    l: int
    j: float
    m_j: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 5:
            raise ValidationError(f"principal quantum number must be an integer >= 5, got {self.n!r}")
        if not isinstance(self.l, int) or self.l < 0 or self.l >= self.n:
            raise ValidationError(f"orbital momentum must satisfy 0 <= l < n, got l={self.l!r}, n={self.n}")
        if not (_is_half_integer(self.j) and _is_half_integer(self.m_j)):
            raise ValidationError(f"j and m_j must be half-integers, got j={self.j}, m_j={self.m_j}")
        j2 = round(2 * self.j)
        if j2 not in (2 * self.l - 1, 2 * self.l + 1) or j2 < 1:
            raise ValidationError(f"j must be l +- 1/2 (and >= 1/2), got l={self.l}, j={self.j}")
        if abs(round(2 * self.m_j)) > j2 or (round(2 * self.m_j) - j2) % 2 != 0:
            raise ValidationError(f"m_j must be in {{-j, -j+1, ..., j}}, got j={self.j}, m_j={self.m_j}")
        # normalize float representation so hash/eq are exact
        object.__setattr__(self, "j", round(2 * self.j) / 2.0)
        object.__setattr__(self, "m_j", round(2 * self.m_j) / 2.0)

    @property
    def j2(self) -> int:
        """2j as an exact integer."""
        return round(2 * self.j)

    @property
    def m2(self) -> int:
        """2m_j as an exact integer."""
        return round(2 * self.m_j)

    @property
    def series(self) -> tuple[int, int]:
        """(l, 2j) key identifying the fine-structure series."""
        return (self.l, self.j2)

    def label(self, with_m: bool = True) -> str:
        """Human-readable label like ``70P3/2(1/2)``."""
        letter = SERIES_LETTERS[self.l] if self.l < len(SERIES_LETTERS) else f"l={self.l}"
        base = f"{self.n}{letter}{self.j2}/2"
        if not with_m:
            return base
        sign = "-" if self.m2 < 0 else ""
        return f"{base}({sign}{abs(self.m2)}/2)"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.label()


def _load_toml(path: Path) -> dict:
    with open(path, "rb") as fh:
        return _toml.load(fh)


def default_data_path() -> Path:
    """Path of the packaged species data file."""
    return Path(str(resources.files("foerster").joinpath("data/rb.toml")))


def data_file_sha256(path: Path | str | None = None) -> str:
    """Checksum of the species data file, recorded in output provenance."""
    p = Path(path) if path is not None else default_data_path()
    return hashlib.sha256(p.read_bytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class QuantumDefectTable:
    """Per-series Rydberg-Ritz coefficients plus species metadata.

    Instances hash by identity so they can key memoization caches; two
    tables loaded from the same file are distinguished by their sha256.
    """

    species: str
    rydberg_constant_ghz: float
    entries: Mapping[tuple[int, int], tuple[float, float]]
    schema_version: int = 1
    source_path: str = ""
    sha256: str = ""

    def __post_init__(self) -> None:
        required = {(0, 1), (1, 1), (1, 3), (2, 3), (2, 5)}
        missing = required - set(self.entries)
        if missing:
            raise ValidationError(f"defect table must contain the S1/2..D5/2 series; missing {sorted(missing)}")
        for key, (d0, _d2) in self.entries.items():
            if not (0.0 <= d0 < 5.0):
                raise ValidationError(f"delta0 out of range (0, 5) for series {key}: {d0}")

    def has_series(self, l: int, j2: int) -> bool:
        return (l, j2) in self.entries

    def delta(self, n: int, l: int, j2: int) -> float:
        """Rydberg-Ritz quantum defect delta(n) for the (l, j) series."""
        try:
            d0, d2 = self.entries[(l, j2)]
        except KeyError:
            raise UnknownSeriesError(f"no quantum-defect data for series (l={l}, 2j={j2})") from None
        return d0 + d2 / (n - d0) ** 2

    def n_star(self, n: int, l: int, j2: int) -> float:
        """Effective principal quantum number n - delta(n)."""
        return n - self.delta(n, l, j2)


@dataclass(frozen=True, eq=False)
class LifetimeModel:
    """Radiative + blackbody lifetime scaling model.

    ``entries`` maps (l, 2j) to (tau_s_ns, gamma, bbr) where ``bbr`` is
    either a 4-tuple (A, B, C, D) of fitted blackbody coefficients or
    ``None`` for the universal low-frequency fallback. Returned rates are
    1/us.
    """

    entries: Mapping[tuple[int, int], tuple[float, float, tuple[float, float, float, float] | None]]
    temperature_k: float = 300.0
    fallback: tuple[float, float] = (0.76, 2.94)

    def __post_init__(self) -> None:
        if self.temperature_k < 0:
            raise ValidationError(f"temperature must be >= 0 K, got {self.temperature_k}")

    def with_temperature(self, temperature_k: float) -> "LifetimeModel":
        return LifetimeModel(entries=self.entries, temperature_k=temperature_k, fallback=self.fallback)

    @classmethod
    def disabled(cls) -> "LifetimeModel":
        """Model with every decay rate identically zero (closed-system limit)."""
        model = cls(entries={}, temperature_k=0.0)
        object.__setattr__(model, "_disabled", True)
        return model

    def rate(self, n_star: float, l: int, j2: int) -> float:
        """Total decay rate (radiative + blackbody) in 1/us."""
        if getattr(self, "_disabled", False):
            return 0.0
        entry = self.entries.get((l, j2))
        if entry is None:
            if l < 3:
                raise UnknownSeriesError(f"no lifetime data for series (l={l}, 2j={j2})")
            tau_s_ns, gamma, bbr = self.fallback[0], self.fallback[1], None
        else:
            tau_s_ns, gamma, bbr = entry
        rate_rad = 1.0 / (tau_s_ns * n_star**gamma * 1e-3)  # 1/us
        if self.temperature_k == 0.0:
            return rate_rad
        if bbr is not None:
            a, b, c, d = bbr
            rate_bbr = (
                a * 2.14e10
                / (n_star**d * math.expm1(315780.0 * b / (n_star**c * self.temperature_k)))
                * 1e-6
            )  # 1/us
        else:
            rate_bbr = _UNIVERSAL_BBR_PER_K * self.temperature_k / n_star**2 * 1e-6
        return rate_rad + rate_bbr


def load_species_data(path: Path | str | None = None) -> tuple[QuantumDefectTable, LifetimeModel]:
    """Load (defect table, lifetime model) from a species TOML file."""
    p = Path(path) if path is not None else default_data_path()
    if not p.exists():
        raise ValidationError(f"species data file not found: {p}")
    raw = _load_toml(p)
    try:
        species = raw["species"]
        ry_ghz = float(raw["rydberg_constant_ghz"])
        series = raw["series"]
    except KeyError as exc:
        raise ValidationError(f"species data file {p} missing required key: {exc}") from exc
    defects: dict[tuple[int, int], tuple[float, float]] = {}
    lifetimes: dict[tuple[int, int], tuple[float, float, tuple[float, float, float, float] | None]] = {}
    for name, sec in series.items():
        try:
            key = (int(sec["l"]), int(sec["j2"]))
            defects[key] = (float(sec["delta0"]), float(sec["delta2"]))
            lt = sec.get("lifetime")
            if lt is not None:
                bbr_sec = lt.get("bbr")
                bbr = None
                if bbr_sec is not None:
                    bbr = (float(bbr_sec["A"]), float(bbr_sec["B"]), float(bbr_sec["C"]), float(bbr_sec["D"]))
                lifetimes[key] = (float(lt["tau_s_ns"]), float(lt["gamma"]), bbr)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed series section [{name}] in {p}: {exc}") from exc
    table = QuantumDefectTable(
        species=species,
        rydberg_constant_ghz=ry_ghz,
        entries=defects,
        schema_version=int(raw.get("schema_version", 1)),
        source_path=str(p),
        sha256=data_file_sha256(p),
    )
    model = LifetimeModel(entries=lifetimes)
    return table, model


@lru_cache(maxsize=1)
def _default_data() -> tuple[QuantumDefectTable, LifetimeModel]:
    return load_species_data(None)


def default_defects() -> QuantumDefectTable:
    """The packaged Rb-87 defect table (loaded once)."""
    return _default_data()[0]


def default_lifetimes() -> LifetimeModel:
    """The packaged Rb lifetime model at 300 K (loaded once)."""
    return _default_data()[1]


def level_energy(state: RydbergState, defects: QuantumDefectTable | None = None) -> float:
    """Level energy in h*GHz relative to the ionization limit (negative).

    Deterministic Rydberg-Ritz evaluation with the species-specific
    Rydberg constant.
    """
    table = defects if defects is not None else default_defects()
    ns = table.n_star(state.n, state.l, state.j2)
    return -table.rydberg_constant_ghz / (ns * ns)


def decay_rate(state: RydbergState, model: LifetimeModel | None = None,
               defects: QuantumDefectTable | None = None) -> float:
    """Total decay rate Gamma (1/us) of a state at the model's temperature."""
    lifetime_model = model if model is not None else default_lifetimes()
    table = defects if defects is not None else default_defects()
    ns = table.n_star(state.n, state.l, state.j2)
    return lifetime_model.rate(ns, state.l, state.j2)
