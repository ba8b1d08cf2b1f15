"""YAML configuration for problem instances and solver settings.

Every diagnostic carries the dotted path of the offending key so a config
error points at the exact field.  Complex matrix entries are written either
as plain numbers or as two-element [re, im] lists.
"""

from __future__ import annotations

import numpy as np
import yaml

from .ocp import DEFAULT_REG_SCHEDULE, ProblemSpec
from .solver import SolverConfig
from .superop import DensityState, LindbladSpec

_MISSING = object()


class ConfigError(ValueError):
    """Malformed configuration; the message names the dotted field path."""


class _Section:
    """One mapping node; tracks its path and rejects unknown keys."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping")
        self.data = dict(data)
        self.path = path

    def _label(self, key: str) -> str:
        return f"{self.path}.{key}"

    def take(self, key: str, default=_MISSING):
        if key in self.data:
            return self.data.pop(key)
        if default is _MISSING:
            raise ConfigError(f"{self._label(key)}: required key is missing")
        return default

    def _present(self, key: str, default) -> bool:
        if key in self.data:
            return True
        if default is _MISSING:
            raise ConfigError(f"{self._label(key)}: required key is missing")
        return False

    def number(self, key: str, default=_MISSING) -> float:
        if not self._present(key, default):
            return default
        value = self.data.pop(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{self._label(key)}: expected a number, "
                              f"got {value!r}")
        return float(value)

    def integer(self, key: str, default=_MISSING) -> int:
        if not self._present(key, default):
            return default
        value = self.data.pop(key)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{self._label(key)}: expected an integer, "
                              f"got {value!r}")
        return value

    def boolean(self, key: str, default=_MISSING) -> bool:
        if not self._present(key, default):
            return default
        value = self.data.pop(key)
        if not isinstance(value, bool):
            raise ConfigError(f"{self._label(key)}: expected true/false, "
                              f"got {value!r}")
        return value

    def string(self, key: str, default=_MISSING) -> str:
        if not self._present(key, default):
            return default
        value = self.data.pop(key)
        if not isinstance(value, str):
            raise ConfigError(f"{self._label(key)}: expected a string, "
                              f"got {value!r}")
        return value

    def numbers(self, key: str, default=_MISSING) -> tuple:
        if not self._present(key, default):
            return default
        value = self.data.pop(key)
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{self._label(key)}: expected a nonempty list "
                              f"of numbers")
        out = []
        for i, entry in enumerate(value):
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise ConfigError(f"{self._label(key)}[{i}]: expected a number, "
                                  f"got {entry!r}")
            out.append(float(entry))
        return tuple(out)

    def section(self, key: str, required: bool = False):
        value = self.take(key, _MISSING if required else None)
        if value is None:
            return _Section({}, self._label(key))
        return _Section(value, self._label(key))

    def finish(self):
        if self.data:
            extra = ", ".join(sorted(map(str, self.data)))
            raise ConfigError(f"{self.path}: unknown keys: {extra}")


def _complex_entry(value, path: str) -> complex:
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number or [re, im] pair")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
            isinstance(x, (int, float)) and not isinstance(x, bool)
            for x in value):
        return complex(value[0], value[1])
    raise ConfigError(f"{path}: expected a number or [re, im] pair, "
                      f"got {value!r}")


def _complex_matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{path}: expected a matrix (list of rows)")
    rows = []
    width = None
    for i, row in enumerate(value):
        if not isinstance(row, (list, tuple)) or not row:
            raise ConfigError(f"{path}[{i}]: expected a list of entries")
        entries = [_complex_entry(x, f"{path}[{i}][{j}]")
                   for j, x in enumerate(row)]
        if width is None:
            width = len(entries)
        elif len(entries) != width:
            raise ConfigError(f"{path}[{i}]: ragged row (expected {width} "
                              f"entries)")
        rows.append(entries)
    return np.array(rows, dtype=complex)


def _parse_system(section: _Section) -> LindbladSpec:
    kind = section.string("kind", "two_level")
    try:
        if kind == "two_level":
            spec = LindbladSpec.two_level(
                energy=section.number("energy", 1.0),
                gamma=section.number("gamma", 0.1),
            )
        elif kind == "explicit":
            energies = section.numbers("energies")
            h_drift = np.diag(np.asarray(energies, dtype=complex))
            controls = tuple(
                _complex_matrix(mat, f"{section.path}.controls[{i}]")
                for i, mat in enumerate(section.take("controls"))
            )
            dissipators = []
            raw = section.take("dissipators", [])
            if not isinstance(raw, (list, tuple)):
                raise ConfigError(f"{section.path}.dissipators: expected a list")
            for i, entry in enumerate(raw):
                sub = _Section(entry, f"{section.path}.dissipators[{i}]")
                op = _complex_matrix(sub.take("operator"), f"{sub.path}.operator")
                rate = sub.number("rate")
                sub.finish()
                dissipators.append((op, rate))
            spec = LindbladSpec(h_drift, controls, tuple(dissipators))
        else:
            raise ConfigError(f"{section.path}.kind: unknown system kind "
                              f"{kind!r}")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section.path}: {exc}") from exc
    section.finish()
    return spec


def _parse_state(value, path: str, dim: int) -> DensityState:
    section = _Section(value, path)
    pure = section.take("pure", None)
    matrix = section.take("matrix", None)
    section.finish()
    if (pure is None) == (matrix is None):
        raise ConfigError(f"{path}: give exactly one of 'pure' or 'matrix'")
    try:
        if pure is not None:
            if isinstance(pure, bool) or not isinstance(pure, int):
                raise ConfigError(f"{path}.pure: expected a basis index")
            if not 0 <= pure < dim:
                raise ConfigError(f"{path}.pure: index {pure} outside "
                                  f"0..{dim - 1}")
            return DensityState.pure(pure, dim)
        return DensityState(_complex_matrix(matrix, f"{path}.matrix"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_problem(section: _Section, lindblad: LindbladSpec,
                   rho0: DensityState, rhof: DensityState) -> ProblemSpec:
    kwargs = dict(
        time_weight=section.number("time_weight", 1.0),
        energy_weight=section.number("energy_weight", 0.1),
        u_min=section.number("u_min", -3.0),
        u_max=section.number("u_max", 3.0),
        slope_c=section.number("slope_c", 10.0),
        purity_floor_fraction=section.number("purity_floor_fraction", 0.9),
        purity_constrained=section.boolean("purity_constrained", True),
        reg_schedule=section.numbers("reg_schedule", DEFAULT_REG_SCHEDULE),
    )
    w_reg = section.number("w_reg", None)
    if w_reg is None:
        w_reg = kwargs["reg_schedule"][-1]
    kwargs["w_reg"] = w_reg
    section.finish()
    try:
        return ProblemSpec(lindblad=lindblad, rho0=rho0, rhof=rhof, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section.path}: {exc}") from exc


def _parse_solver(section: _Section) -> SolverConfig:
    kwargs = dict(
        neurons=section.integer("neurons", 60),
        collocation_points=section.integer("collocation_points", 80),
        grid=section.string("grid", "chebyshev"),
        seed=section.integer("seed", 7),
        basis_scale=section.number("basis_scale", 4.0),
        initial_c=section.number("initial_c", 1.0),
        mu_init=section.number("mu_init", 0.05),
        feasibility_sharpness=section.number("feasibility_sharpness", 1e3),
        ls_method=section.string("ls_method", "normal"),
        damping_init=section.number("damping_init", 1e-3),
        damping_floor=section.number("damping_floor", 1e-12),
        damping_max=section.number("damping_max", 1e10),
        max_iterations=section.integer("max_iterations", 250),
        loss_target=section.number("loss_target", 1e-7),
        stall_rel_decrease=section.number("stall_rel_decrease", 1e-5),
        stall_patience=section.integer("stall_patience", 10),
        fd_step=section.number("fd_step", 1e-7),
        resimulation_substeps=section.integer("resimulation_substeps", 40),
    )
    section.finish()
    try:
        return SolverConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section.path}: {exc}") from exc


def parse_config(raw, path_label: str = "config"):
    """Parse an already-loaded YAML document into problem + solver settings."""
    root = _Section(raw if raw is not None else {}, path_label)
    lindblad = _parse_system(root.section("system"))
    rho0 = _parse_state(root.take("initial_state"), f"{path_label}.initial_state",
                        lindblad.dim)
    rhof = _parse_state(root.take("target_state"), f"{path_label}.target_state",
                        lindblad.dim)
    problem = _parse_problem(root.section("problem"), lindblad, rho0, rhof)
    solver = _parse_solver(root.section("solver"))
    root.finish()
    return problem, solver


def load_config(path):
    """Read a YAML file into (ProblemSpec, SolverConfig)."""
    with open(path, "r") as handle:
        try:
            raw = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(raw, path_label=str(path))
