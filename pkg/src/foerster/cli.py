"""Command-line front end.

Loads a TOML run configuration, applies flag overrides, orchestrates the
simulation commands and writes plot-ready CSV (plus optional gnuplot
scripts). Every output embeds the fully resolved configuration and the
species-data checksum in a ``#`` header block, so re-running a command
with the same config and data reproduces the file byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import difflib
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

from . import __version__
from .atomic_data import (
    LifetimeModel,
    QuantumDefectTable,
    RydbergState,
    SERIES_LETTERS,
    data_file_sha256,
    load_species_data,
)
from .collective import (
    BasisSet,
    CollectiveState,
    build_basis,
    compute_stark_map,
    find_resonances,
)
from .dipole import radial_numerov, radial_qc
from .dynamics import (
    basis_vector,
    evolve,
    initial_state_population_phase,
    transfer_fraction,
)
from .errors import NumericalError, SelectionRuleError, ValidationError
from .gate import GateParameters, GateResult, average_fidelity, optimize
from .interaction import Geometry, assemble

__all__ = ["RunConfig", "load_config", "main"]


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

_DEFAULTS: dict[str, dict[str, Any]] = {
    "data": {
        "species": None,            # path to a species TOML; None = packaged table
        "temperature_k": 300.0,     # ambient temperature for the lifetime model
    },
    "geometry": {
        "spacing_um": 10.0,         # adjacent-trap distance R (atoms at 0, R, 2R)
        "positions_um": None,       # explicit trap coordinates (overrides spacing)
    },
    "channel": {
        "initial": [[70, "P", 1.5, 0.5], [70, "P", 1.5, 0.5], [70, "P", 1.5, 0.5]],
        "final": [[70, "S", 0.5, 0.5], [71, "S", 0.5, 0.5], [70, "P", 0.5, 0.5]],
    },
    "basis": {
        "hops": 2,
        "defect_cutoff_ghz": 2.0,
        "step_window": 4,
    },
    "integrator": {
        "tolerance": 1e-9,
    },
    "output": {
        "directory": "out",
    },
    "stark_map": {
        "field_min": 0.0,
        "field_max": 0.20,
        "points": 201,
    },
    "resonance_scan": {
        "field_min": 0.10,
        "field_max": 0.20,
        "points": 200,
        "duration_us": 1.15,
        "target": [70, "S", 0.5],   # single-atom level whose occupation defines rho
    },
    "dynamics": {
        "field_v_per_cm": 0.143399,
        "duration_us": 1.1846,
        "samples": 401,
    },
    "gate": {
        "field_v_per_cm": 0.143399,
        "duration_us": 1.1846,
        "target_qubit": 1,
        "excitation_field_v_per_cm": None,
        "excitation_time_us": 0.0,
    },
    "fidelity": {
        "field_min": 0.1419,
        "field_max": 0.1449,
        "points": 31,
    },
    "optimize": {
        "duration_bounds_us": [0.05, 3.0],
        "field_bounds_v_per_cm": [0.10, 0.20],
        "max_evaluations": 600,
        "seed": None,
        "start_duration_us": None,      # None = [gate].duration_us
        "start_field_v_per_cm": None,   # None = [gate].field_v_per_cm
    },
}


def _merge_config(raw: dict, config_path: Path | None) -> dict:
    """Overlay a parsed TOML dict onto the defaults, rejecting unknown keys."""
    merged = copy.deepcopy(_DEFAULTS)
    where = f" in {config_path}" if config_path is not None else ""
    for section, body in raw.items():
        if section not in merged:
            hint = difflib.get_close_matches(section, merged.keys(), n=1)
            extra = f" (did you mean [{hint[0]}]?)" if hint else ""
            raise ValidationError(f"unknown config section [{section}]{where}{extra}")
        if not isinstance(body, dict):
            raise ValidationError(f"config section [{section}]{where} must be a table")
        for key, value in body.items():
            if key not in merged[section]:
                hint = difflib.get_close_matches(key, merged[section].keys(), n=1)
                extra = f" (did you mean {section}.{hint[0]}?)" if hint else ""
                raise ValidationError(f"unknown config key {section}.{key}{where}{extra}")
            merged[section][key] = value
    return merged


def _as_float(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"config key {key} must be a number, got {value!r}")
    return float(value)


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"config key {key} must be an integer, got {value!r}")
    return int(value)


def _as_optional_int(value: Any, key: str) -> int | None:
    return None if value is None else _as_int(value, key)


def _as_optional_float(value: Any, key: str) -> float | None:
    return None if value is None else _as_float(value, key)


def _series_index(letter: Any, key: str) -> int:
    if not isinstance(letter, str) or len(letter) != 1 or letter.upper() not in SERIES_LETTERS:
        raise ValidationError(
            f"config key {key}: orbital series must be one letter of "
            f"{SERIES_LETTERS!r}, got {letter!r}"
        )
    return SERIES_LETTERS.index(letter.upper())


def _as_state(value: Any, key: str) -> RydbergState:
    """Parse ``[n, "P", j, m]`` into a RydbergState."""
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValidationError(
            f"config key {key} must be [n, series_letter, j, m], got {value!r}"
        )
    n = _as_int(value[0], key + "[0]")
    l = _series_index(value[1], key + "[1]")
    j = _as_float(value[2], key + "[2]")
    m = _as_float(value[3], key + "[3]")
    return RydbergState(n=n, l=l, j=j, m_j=m)


def _as_level(value: Any, key: str) -> tuple[int, int, float]:
    """Parse ``[n, "S", j]`` into an (n, l, j) level triple."""
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ValidationError(
            f"config key {key} must be [n, series_letter, j], got {value!r}"
        )
    n = _as_int(value[0], key + "[0]")
    l = _series_index(value[1], key + "[1]")
    j = _as_float(value[2], key + "[2]")
    return (n, l, j)


def _as_collective(value: Any, key: str) -> CollectiveState:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValidationError(f"config key {key} must be a nonempty list of states")
    atoms = tuple(_as_state(v, f"{key}[{i}]") for i, v in enumerate(value))
    return CollectiveState(atoms=atoms)


def _grid(section: dict, prefix: str) -> np.ndarray:
    lo = _as_float(section["field_min"], prefix + ".field_min")
    hi = _as_float(section["field_max"], prefix + ".field_max")
    points = _as_int(section["points"], prefix + ".points")
    if points < 1:
        raise ValidationError(f"config key {prefix}.points must be >= 1, got {points}")
    if points == 1:
        if hi < lo:
            raise ValidationError(f"{prefix}: field_max must be >= field_min")
        return np.array([lo])
    if hi <= lo:
        raise ValidationError(
            f"{prefix}: field grid must be increasing (field_min < field_max), "
            f"got [{lo}, {hi}]"
        )
    return np.linspace(lo, hi, points)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration (defaults + file + flag overrides)."""

    raw: dict
    config_path: Path | None
    species_path: Path | None
    temperature_k: float
    positions_um: tuple[float, ...]
    initial: CollectiveState
    final: CollectiveState
    hops: int
    defect_cutoff_ghz: float
    step_window: int
    tolerance: float
    out_dir: Path
    jobs: int
    seed: int | None
    gnuplot: bool

    def load_data(self) -> tuple[QuantumDefectTable, LifetimeModel]:
        table, model = load_species_data(self.species_path)
        return table, model.with_temperature(self.temperature_k)

    @property
    def data_sha256(self) -> str:
        return data_file_sha256(self.species_path)

    @property
    def spacing_um(self) -> float:
        return self.positions_um[1] - self.positions_um[0]

    def gate_parameters(self, **overrides: Any) -> GateParameters:
        sec = self.raw["gate"]
        kwargs: dict[str, Any] = dict(
            spacing_um=self.spacing_um,
            field_v_per_cm=_as_float(sec["field_v_per_cm"], "gate.field_v_per_cm"),
            duration_us=_as_float(sec["duration_us"], "gate.duration_us"),
            excitation_field_v_per_cm=_as_optional_float(
                sec["excitation_field_v_per_cm"], "gate.excitation_field_v_per_cm"),
            excitation_time_us=_as_float(sec["excitation_time_us"], "gate.excitation_time_us"),
            target=_as_int(sec["target_qubit"], "gate.target_qubit"),
        )
        kwargs.update(overrides)
        return GateParameters(**kwargs)

    def header_lines(self, command: str, columns: Sequence[tuple[str, str]]) -> list[str]:
        lines = [
            f"producer: foerster {__version__} {command}",
            f"data_sha256: {self.data_sha256}",
        ]
        for dotted, value in sorted(_flatten(self.raw).items()):
            lines.append(f"config.{dotted} = {value!r}")
        for name, desc in columns:
            lines.append(f"column {name}: {desc}")
        return lines


def _flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def load_config(config_path: str | None,
                out: str | None = None,
                jobs: int | None = None,
                tolerance: float | None = None,
                seed: int | None = None,
                gnuplot: bool = False) -> RunConfig:
    """Load the TOML config file (if any) and apply flag overrides."""
    path = Path(config_path) if config_path is not None else None
    raw: dict = {}
    if path is not None:
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"config file {path}: {exc}") from exc
    merged = _merge_config(raw, path)

    if tolerance is not None:
        merged["integrator"]["tolerance"] = tolerance
    if out is not None:
        merged["output"]["directory"] = out
    if seed is not None:
        merged["optimize"]["seed"] = seed

    species = merged["data"]["species"]
    species_path = None
    if species is not None:
        species_path = Path(str(species))
        if not species_path.exists():
            raise ValidationError(f"species data file not found: {species_path}")

    positions = merged["geometry"]["positions_um"]
    if positions is None:
        spacing = _as_float(merged["geometry"]["spacing_um"], "geometry.spacing_um")
        if spacing <= 0:
            raise ValidationError(f"geometry.spacing_um must be > 0, got {spacing}")
        positions_t = (0.0, spacing, 2.0 * spacing)
    else:
        if not isinstance(positions, (list, tuple)) or len(positions) < 2:
            raise ValidationError("geometry.positions_um must list at least two positions")
        positions_t = tuple(
            _as_float(p, f"geometry.positions_um[{i}]") for i, p in enumerate(positions)
        )

    tol = _as_float(merged["integrator"]["tolerance"], "integrator.tolerance")
    if tol <= 0:
        raise ValidationError(f"integrator.tolerance must be > 0, got {tol}")

    return RunConfig(
        raw=merged,
        config_path=path,
        species_path=species_path,
        temperature_k=_as_float(merged["data"]["temperature_k"], "data.temperature_k"),
        positions_um=positions_t,
        initial=_as_collective(merged["channel"]["initial"], "channel.initial"),
        final=_as_collective(merged["channel"]["final"], "channel.final"),
        hops=_as_int(merged["basis"]["hops"], "basis.hops"),
        defect_cutoff_ghz=_as_float(merged["basis"]["defect_cutoff_ghz"], "basis.defect_cutoff_ghz"),
        step_window=_as_int(merged["basis"]["step_window"], "basis.step_window"),
        tolerance=tol,
        out_dir=Path(str(merged["output"]["directory"])),
        jobs=jobs if jobs is not None else 1,
        seed=_as_optional_int(merged["optimize"]["seed"], "optimize.seed"),
        gnuplot=gnuplot,
    )


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def _fmt(value: Any) -> str:
    """Full-precision, locale-independent number formatting.

    ``repr`` of a Python float is the shortest string that round-trips
    exactly, so CSV consumers recover bit-identical values.
    """
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header_lines: Iterable[str], names: Sequence[str],
               rows: Iterable[Sequence[float]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_gnuplot(csv_path: Path, n_columns: int, ylabel: str) -> Path:
    gp_path = csv_path.with_suffix(".gp")
    plots = ", ".join(
        f"'{csv_path.name}' using 1:{i} with lines" for i in range(2, n_columns + 1)
    )
    gp_path.write_text(
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        f"set ylabel '{ylabel}'\n"
        f"plot {plots}\n"
    )
    return gp_path


def _write_gate_result(path: Path, cfg: RunConfig, command: str, result: GateResult,
                       extra_summary: Sequence[str] = ()) -> None:
    params = result.params
    lines = cfg.header_lines(command, [
        ("input_label", "product input state, one label per qubit (most significant first)"),
        ("fidelity", "state fidelity against the ideal Toffoli output"),
        ("leakage", "1 - norm^2 of the simulated output state"),
    ])
    lines.append(
        "parameters: "
        f"spacing_um={_fmt(params.spacing_um)} "
        f"field_v_per_cm={_fmt(params.field_v_per_cm)} "
        f"duration_us={_fmt(params.duration_us)} "
        f"target_qubit={params.target}"
    )
    if params.has_excitation_stage:
        lines.append(
            "excitation_stage: "
            f"field_v_per_cm={_fmt(params.excitation_field_v_per_cm)} "
            f"time_us={_fmt(params.excitation_time_us)}"
        )
    for key, value in sorted(result.provenance.items()):
        lines.append(f"provenance {key}: {value}")
    lines.append(
        f"summary: mean_fidelity={_fmt(result.mean_fidelity)} "
        f"min_fidelity={_fmt(result.min_fidelity)} n_inputs={len(result.input_labels)}"
    )
    lines.extend(extra_summary)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in lines:
            fh.write(f"# {line}\n")
        fh.write("input_label,fidelity,leakage\n")
        for label, fid, leak in zip(result.input_labels, result.fidelities, result.leakages):
            fh.write(f"{label},{_fmt(fid)},{_fmt(leak)}\n")


# --------------------------------------------------------------------------
# Worker pool
# --------------------------------------------------------------------------

_WORKER_CTX: dict[str, Any] = {}


def _pool_map(worker: Callable[[Any], Any], items: Sequence[Any], jobs: int,
              initializer: Callable[..., None], initargs: tuple) -> list[Any]:
    """Map ``worker`` over ``items`` preserving order, optionally in parallel."""
    if jobs <= 1 or len(items) <= 1:
        initializer(*initargs)
        return [worker(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items)),
                             initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(worker, items, chunksize=max(1, len(items) // (4 * jobs))))


def _scan_init(payload: dict) -> None:
    cfg: RunConfig = payload["cfg"]
    table, lifetimes = cfg.load_data()
    basis = build_basis(cfg.initial, cfg.hops, cfg.defect_cutoff_ghz,
                        cfg.step_window, table)
    n_atoms = len(cfg.initial.atoms)
    geometry = Geometry(positions=cfg.positions_um[:n_atoms])
    _WORKER_CTX.clear()
    _WORKER_CTX.update(payload)
    _WORKER_CTX.update(table=table, lifetimes=lifetimes, basis=basis, geometry=geometry)


def _rho_worker(field: float) -> float:
    ctx = _WORKER_CTX
    model = assemble(ctx["basis"], field, ctx["geometry"],
                     lifetimes=ctx["lifetimes"], defects=ctx["table"])
    traj = evolve(model, basis_vector(ctx["basis"]), ctx["duration_us"],
                  tolerance=ctx["cfg"].tolerance, samples=2)
    return float(transfer_fraction(traj, ctx["target"])[-1])


def _fidelity_init(payload: dict) -> None:
    _WORKER_CTX.clear()
    _WORKER_CTX.update(payload)
    table, lifetimes = payload["cfg"].load_data()
    _WORKER_CTX.update(table=table, lifetimes=lifetimes)


def _fidelity_worker(field: float) -> tuple[float, float]:
    ctx = _WORKER_CTX
    params = replace(ctx["params"], field_v_per_cm=field)
    result = average_fidelity(params, ctx["table"], ctx["lifetimes"], ctx["cfg"].tolerance)
    return result.mean_fidelity, result.min_fidelity


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _m_variants(initial: CollectiveState) -> list[CollectiveState]:
    """Distinct |m|-composition variants of the initial collective state.

    For identical atoms the variants enumerate every multiset of magnetic
    projections drawn from {1/2, ..., j}; quadratic Stark shifts depend on
    |m| only, so these are exactly the distinct field-vs-energy curves of
    the initial fine-structure manifold.
    """
    atoms = initial.atoms
    if len(set(atoms)) != 1 or atoms[0].j < 1.0:
        return [initial]
    from itertools import combinations_with_replacement

    base = atoms[0]
    choices = [base.j - k for k in range(int(base.j + 0.5))][::-1]  # 1/2 ... j
    variants = []
    for combo in combinations_with_replacement(choices, len(atoms)):
        variants.append(CollectiveState(
            atoms=tuple(replace(base, m_j=m) for m in combo)))
    return variants


def cmd_stark_map(cfg: RunConfig) -> int:
    table, _ = cfg.load_data()
    sec = cfg.raw["stark_map"]
    fields = _grid(sec, "stark_map")
    variants = _m_variants(cfg.initial)
    states = variants + [cfg.final]
    smap = compute_stark_map(states, fields, cfg.initial, table)

    columns = [("field_Vcm", "dc electric field in V/cm")]
    names = ["field_Vcm"]
    for i, state in enumerate(states):
        kind = "final" if i == len(states) - 1 else f"initial variant {i + 1}"
        name = f"E_mhz_{i + 1}"
        columns.append((name, f"collective energy (h*MHz) of {kind}: {state.label()}"))
        names.append(name)
    header = cfg.header_lines("stark-map", columns)
    lo, hi = float(fields[0]), float(fields[-1])
    for i, variant in enumerate(variants):
        crossings = find_resonances(variant, cfg.final, lo, hi, defects=table)
        shown = ", ".join(_fmt(x) for x in crossings) if crossings else "none"
        header.append(f"crossing variant {i + 1} x final (V/cm): {shown}")

    rows = np.column_stack([fields, smap.energies])
    out_path = cfg.out_dir / "stark_map.csv"
    _write_csv(out_path, header, names, rows)
    print(f"wrote {out_path} ({len(fields)} field points, {len(states)} curves)")
    if cfg.gnuplot:
        print(f"wrote {_write_gnuplot(out_path, len(names), 'collective energy (h*MHz)')}")
    return 0


def cmd_resonance_scan(cfg: RunConfig) -> int:
    sec = cfg.raw["resonance_scan"]
    fields = _grid(sec, "resonance_scan")
    duration = _as_float(sec["duration_us"], "resonance_scan.duration_us")
    if duration <= 0:
        raise ValidationError(f"resonance_scan.duration_us must be > 0, got {duration}")
    target = _as_level(sec["target"], "resonance_scan.target")

    payload = dict(cfg=cfg, duration_us=duration, target=target)
    rho = _pool_map(_rho_worker, [float(f) for f in fields], cfg.jobs,
                    _scan_init, (payload,))

    n, l, j = target
    header = cfg.header_lines("resonance-scan", [
        ("field_Vcm", "dc electric field in V/cm"),
        ("rho", f"per-atom transfer fraction to {n}{SERIES_LETTERS[l]}(j={j}) "
                f"after {duration} us"),
    ])
    out_path = cfg.out_dir / "resonance_scan.csv"
    _write_csv(out_path, header, ["field_Vcm", "rho"], zip(fields, rho))
    print(f"wrote {out_path} ({len(fields)} field points, max rho={max(rho):.4f})")
    if cfg.gnuplot:
        print(f"wrote {_write_gnuplot(out_path, 2, 'transfer fraction rho')}")
    return 0


_TRACE_CONFIGS: tuple[tuple[str, tuple[int, ...]], ...] = (
    ("rrr", (0, 1, 2)),   # all three atoms excited
    ("rgr", (0, 2)),      # outer pair excited, middle in ground state
    ("grr", (1, 2)),      # adjacent pair excited (left atom in ground state)
    ("rrg", (0, 1)),      # adjacent pair excited (right atom in ground state)
)


def cmd_dynamics(cfg: RunConfig) -> int:
    table, lifetimes = cfg.load_data()
    sec = cfg.raw["dynamics"]
    field = _as_float(sec["field_v_per_cm"], "dynamics.field_v_per_cm")
    duration = _as_float(sec["duration_us"], "dynamics.duration_us")
    samples = _as_int(sec["samples"], "dynamics.samples")
    if len(cfg.initial.atoms) != 3:
        raise ValidationError("dynamics traces need a three-atom initial state")

    for tag, excited in _TRACE_CONFIGS:
        atoms = tuple(cfg.initial.atoms[i] for i in excited)
        positions = tuple(cfg.positions_um[i] for i in excited)
        basis = build_basis(CollectiveState(atoms=atoms), cfg.hops,
                            cfg.defect_cutoff_ghz, cfg.step_window, table)
        model = assemble(basis, field, Geometry(positions=positions),
                         lifetimes=lifetimes, defects=table)
        traj = evolve(model, basis_vector(basis), duration,
                      tolerance=cfg.tolerance, samples=samples)
        trace = initial_state_population_phase(traj)
        header = cfg.header_lines("dynamics", [
            ("t_us", "evolution time in us"),
            ("P0", "population of the initial collective state"),
            ("phi0_rad", "phase of the initial-state amplitude in the rotating "
                         "frame of its bare Stark-shifted energy (nan where the "
                         "population is too small to define a phase)"),
        ])
        header.append(f"configuration {tag}: excited atoms at traps {excited}, "
                      f"positions_um={positions}, basis size {len(basis)}")
        out_path = cfg.out_dir / f"dynamics_{tag}.csv"
        _write_csv(out_path, header, ["t_us", "P0", "phi0_rad"],
                   zip(trace.times, trace.population, trace.phase_rad))
        print(f"wrote {out_path} (P0(T)={trace.population[-1]:.5f})")
        if cfg.gnuplot:
            _write_gnuplot(out_path, 3, "P0 / phi0")
    return 0


def cmd_fidelity(cfg: RunConfig) -> int:
    fields = _grid(cfg.raw["fidelity"], "fidelity")
    params = cfg.gate_parameters()
    payload = dict(cfg=cfg, params=params)
    scores = _pool_map(_fidelity_worker, [float(f) for f in fields], cfg.jobs,
                       _fidelity_init, (payload,))
    means = [s[0] for s in scores]
    mins = [s[1] for s in scores]

    header = cfg.header_lines("fidelity", [
        ("field_Vcm", "dc electric field in V/cm"),
        ("mean_fidelity", "mean gate fidelity over all 216 input states"),
        ("min_fidelity", "worst-case input-state fidelity"),
    ])
    out_path = cfg.out_dir / "fidelity_vs_field.csv"
    _write_csv(out_path, header, ["field_Vcm", "mean_fidelity", "min_fidelity"],
               zip(fields, means, mins))
    print(f"wrote {out_path} ({len(fields)} field points)")
    if cfg.gnuplot:
        print(f"wrote {_write_gnuplot(out_path, 3, 'gate fidelity')}")

    best_idx = int(np.argmax(means))
    table, lifetimes = cfg.load_data()
    best = average_fidelity(replace(params, field_v_per_cm=float(fields[best_idx])),
                            table, lifetimes, cfg.tolerance)
    result_path = cfg.out_dir / "gate_result.txt"
    _write_gate_result(result_path, cfg, "fidelity", best)
    print(f"wrote {result_path} (best grid point: E={_fmt(fields[best_idx])} V/cm, "
          f"mean F={best.mean_fidelity:.5f})")
    return 0


def cmd_optimize(cfg: RunConfig) -> int:
    table, lifetimes = cfg.load_data()
    sec = cfg.raw["optimize"]

    def _bounds(key: str) -> tuple[float, float]:
        value = sec[key]
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ValidationError(f"config key optimize.{key} must be [low, high]")
        return (_as_float(value[0], f"optimize.{key}[0]"),
                _as_float(value[1], f"optimize.{key}[1]"))

    start = cfg.gate_parameters()
    start_t = _as_optional_float(sec["start_duration_us"], "optimize.start_duration_us")
    start_e = _as_optional_float(sec["start_field_v_per_cm"], "optimize.start_field_v_per_cm")
    if start_t is not None:
        start = replace(start, duration_us=start_t)
    if start_e is not None:
        start = replace(start, field_v_per_cm=start_e)

    outcome = optimize(
        start,
        duration_bounds_us=_bounds("duration_bounds_us"),
        field_bounds_v_per_cm=_bounds("field_bounds_v_per_cm"),
        seed=cfg.seed,
        max_evaluations=_as_int(sec["max_evaluations"], "optimize.max_evaluations"),
        defects=table,
        lifetimes=lifetimes,
        tolerance=cfg.tolerance,
    )
    extra = [
        f"optimizer: start_duration_us={_fmt(start.duration_us)} "
        f"start_field_v_per_cm={_fmt(start.field_v_per_cm)} seed={cfg.seed}",
        f"optimizer: evaluations={outcome.evaluations} converged={outcome.converged} "
        f"simplex_diameter={_fmt(outcome.simplex_diameter)}",
    ]
    out_path = cfg.out_dir / "optimize_report.txt"
    _write_gate_result(out_path, cfg, "optimize", outcome.result, extra)
    print(f"wrote {out_path}")
    print(f"optimum: T={_fmt(outcome.params.duration_us)} us, "
          f"E={_fmt(outcome.params.field_v_per_cm)} V/cm, "
          f"mean F={outcome.result.mean_fidelity:.5f}, "
          f"converged={outcome.converged}, evaluations={outcome.evaluations}")
    return 0


def cmd_dump_matrix_elements(cfg: RunConfig) -> int:
    table, _ = cfg.load_data()
    basis = build_basis(cfg.initial, cfg.hops, cfg.defect_cutoff_ghz,
                        cfg.step_window, table)
    levels = sorted({(a.n, a.l, a.j) for cs in basis.states for a in cs.atoms})
    rows = []
    for i, (n1, l1, j1) in enumerate(levels):
        for n2, l2, j2 in levels[i + 1:]:
            if abs(l1 - l2) != 1 or abs(j1 - j2) > 1.0:
                continue
            s1 = RydbergState(n=n1, l=l1, j=j1, m_j=min(j1, j2))
            s2 = RydbergState(n=n2, l=l2, j=j2, m_j=min(j1, j2))
            try:
                qc = radial_qc(s1, s2, table)
                num = radial_numerov(s1, s2, table)
            except SelectionRuleError:
                continue
            rel = abs(qc - num) / max(abs(num), 1e-300)
            rows.append((n1, l1, j1, n2, l2, j2, qc, num, rel))

    header = cfg.header_lines("dump-matrix-elements", [
        ("n1,l1,j1", "bra level quantum numbers"),
        ("n2,l2,j2", "ket level quantum numbers"),
        ("radial_qc_ea0", "quasiclassical radial matrix element (e*a0)"),
        ("radial_numerov_ea0", "Numerov radial matrix element (e*a0)"),
        ("rel_diff", "relative difference |qc - numerov| / |numerov|"),
    ])
    header.append(f"basis: size={len(basis)} levels={len(levels)} pairs={len(rows)}")
    out_path = cfg.out_dir / "matrix_elements.csv"
    _write_csv(out_path, header,
               ["n1", "l1", "j1", "n2", "l2", "j2",
                "radial_qc_ea0", "radial_numerov_ea0", "rel_diff"],
               rows)
    worst = max((r[-1] for r in rows), default=0.0)
    print(f"wrote {out_path} ({len(rows)} dipole-allowed level pairs, "
          f"worst rel_diff={worst:.2e})")
    return 0


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

_COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "stark-map": cmd_stark_map,
    "resonance-scan": cmd_resonance_scan,
    "dynamics": cmd_dynamics,
    "fidelity": cmd_fidelity,
    "optimize": cmd_optimize,
    "dump-matrix-elements": cmd_dump_matrix_elements,
}

_COMMAND_HELP = {
    "stark-map": "collective Stark structure: energy-vs-field curves and crossings",
    "resonance-scan": "transfer fraction rho vs dc field",
    "dynamics": "population/phase traces for the rrr, rgr, grr, rrg configurations",
    "fidelity": "mean gate fidelity vs dc field, plus a per-input report",
    "optimize": "Nelder-Mead search for the best (duration, field)",
    "dump-matrix-elements": "radial dipole matrix elements, quasiclassical vs Numerov",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foerster",
        description="Simulator of Stark-tuned Foerster resonances between "
                    "cold Rydberg atoms, and of the three-qubit phase gate "
                    "built on them.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=_COMMAND_HELP[name])
        p.add_argument("--config", metavar="PATH", default=None,
                       help="TOML run configuration (defaults are used when omitted)")
        p.add_argument("--out", metavar="DIR", default=None,
                       help="output directory (overrides output.directory)")
        p.add_argument("--jobs", metavar="N", type=int, default=None,
                       help="worker processes for scan points (default 1)")
        p.add_argument("--tolerance", metavar="X", type=float, default=None,
                       help="integrator tolerance (overrides integrator.tolerance)")
        p.add_argument("--seed", metavar="N", type=int, default=None,
                       help="optimizer start jitter seed (overrides optimize.seed)")
        p.add_argument("--gnuplot", action="store_true",
                       help="also write a gnuplot script next to each CSV")
        p.set_defaults(fn=fn)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = load_config(args.config, out=args.out, jobs=args.jobs,
                          tolerance=args.tolerance, seed=args.seed,
                          gnuplot=args.gnuplot)
        return args.fn(cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
