"""Run configuration: flat dotted-key JSON plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .constitutive import GrowthSpec, MobilitySpec, PotentialSpec
from .mesh import Grid
from .noise import NoiseSpec
from .stepper import ModelParams


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


# key -> default; the type of the default (or ``_TYPES``) fixes the accepted type
DEFAULTS: dict[str, Any] = {
    "mode": "run",
    "name": "",
    "grid.nx": 100,
    "grid.ny": 100,
    "grid.lx": 1.0,
    "grid.ly": 1.0,
    "model.epsilon": 0.01,
    "model.chi": 5.0,
    "model.alpha": 1.0,
    "model.beta": 15.0,
    "model.delta": 100.0,
    "model.m1.kind": "quartic_interface",
    "model.m1.value": 1e-16,
    "model.m2.kind": "constant",
    "model.m2.value": 10.0,
    "model.f.kind": "logistic",
    "model.potential.kind": "quartic",
    "model.potential.c_psi": 0.25,
    "model.sigma_dirichlet": 1.0,
    "model.sigma_chemotaxis": "m1",
    "noise.nu": 0.5,
    "noise.sigma_amp": 1.0,
    "noise.modes": "nodal",
    "noise.decay": 1.0,
    "noise.mass_project": True,
    "time.dt": 0.01,
    "time.t_end": 1.0,
    "numerics.splitting": "convex",
    "numerics.scheme": "monolithic",
    "numerics.solver": "auto",
    "numerics.solver_tol": 1e-10,
    "numerics.lumped_mass": False,
    "ensemble.n_samples": 50,
    "ensemble.base_seed": 0,
    "sweep.nu_list": [0.0, 0.5, 1.0, 2.5],
    "output.snapshot_times": [],
    "output.qoi_every": 1,
    "output.log_noise": False,
}

_NULLABLE = {"model.sigma_dirichlet"}


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if value is None:
        if key in _NULLABLE:
            return None
        raise ConfigError(f"{key}: null not allowed")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    raise ConfigError(f"{key}: unsupported value {value!r}")


def _flatten(obj: Mapping, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class RunConfig:
    values: dict[str, Any]

    @classmethod
    def from_mapping(cls, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        values = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS.items()}
        for key, val in _flatten(overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = _coerce(key, val)
        cfg = cls(values)
        cfg.validate()
        return cfg

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def updated(self, overrides: Mapping[str, Any]) -> "RunConfig":
        merged = dict(self.values)
        merged.update(overrides)
        return RunConfig.from_mapping(merged)

    def validate(self) -> None:
        if self["mode"] not in ("run", "ensemble", "sweep", "verify"):
            raise ConfigError(f"mode: unknown mode {self['mode']!r}")
        if self["ensemble.n_samples"] < 2 and self["mode"] == "ensemble":
            raise ConfigError("ensemble.n_samples: need at least 2 samples")
        if self["output.qoi_every"] < 1:
            raise ConfigError("output.qoi_every: must be positive")
        try:
            self.grid()
            self.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def grid(self) -> Grid:
        return Grid(self["grid.nx"], self["grid.ny"], self["grid.lx"], self["grid.ly"])

    def params(self) -> ModelParams:
        v = self.values
        return ModelParams(
            epsilon=v["model.epsilon"], chi=v["model.chi"], alpha=v["model.alpha"],
            beta=v["model.beta"], delta=v["model.delta"],
            m1=MobilitySpec(v["model.m1.kind"], v["model.m1.value"]),
            m2=MobilitySpec(v["model.m2.kind"], v["model.m2.value"]),
            f=GrowthSpec(v["model.f.kind"]),
            potential=PotentialSpec(v["model.potential.kind"], v["model.potential.c_psi"]),
            noise=NoiseSpec(nu=v["noise.nu"], sigma_amp=v["noise.sigma_amp"],
                            mass_project=v["noise.mass_project"], modes=v["noise.modes"],
                            decay=v["noise.decay"]),
            sigma_dirichlet=v["model.sigma_dirichlet"],
            dt=v["time.dt"], t_end=v["time.t_end"],
            splitting=v["numerics.splitting"], scheme=v["numerics.scheme"],
            solver=v["numerics.solver"], solver_tol=v["numerics.solver_tol"],
            lumped_mass=v["numerics.lumped_mass"],
            sigma_chemotaxis=v["model.sigma_chemotaxis"],
        )

    def to_json(self) -> str:
        """Canonical echo: sorted keys, fixed indentation, trailing newline."""
        return json.dumps(self.values, sort_keys=True, indent=2) + "\n"


def load_config_file(path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def parse_config(path=None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (flags)."""
    merged: dict[str, Any] = {}
    if path is not None:
        merged.update(_flatten(load_config_file(path)))
    merged.update(overrides or {})
    return RunConfig.from_mapping(merged)
