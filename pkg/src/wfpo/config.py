"""Run-configuration files: INI-style blocks, strictly validated.

A configuration has five blocks.  `model` and `pulse` are required; `grids`,
`experiment` and `output` are optional.  Unknown blocks or keys are errors,
so a typo cannot silently fall back to a default in the middle of a
parameter study.  Numeric values are validated by the owning constructors
(for example gamma must be non-negative).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .experiments import PulseParams
from .quantum_core import SystemModel

MODEL_KEYS = ("omega_g", "omega_e", "detuning", "mu", "gamma",
              "f14", "f23", "f24", "f13")
PULSE_KEYS = ("bandwidth", "chirp", "carrier")
GRID_KEYS = ("frame", "dt", "stride", "time_halfwidth")
EXPERIMENT_KEYS = ("target", "mu_min", "mu_max", "mu_points",
                   "gamma_min", "gamma_max", "gamma_points",
                   "masks", "mask_seed", "sensitivity_bins", "sensitivity_step")
OUTPUT_KEYS = ("directory",)

_SCHEMA = {
    "model": MODEL_KEYS,
    "pulse": PULSE_KEYS,
    "grids": GRID_KEYS,
    "experiment": EXPERIMENT_KEYS,
    "output": OUTPUT_KEYS,
}


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class GridConfig:
    frame: str = "rotating"
    dt: float | None = None          # None: min(0.01, tau_ch/2000)
    stride: int = 0                  # 0: choose so ~4000 states are stored
    time_halfwidth: float = 8.0


@dataclass(frozen=True)
class ExperimentConfig:
    target: str = "excited_surface"
    mu_min: float = 1e-4
    mu_max: float = 3e-3
    mu_points: int = 8
    gamma_min: float = 1e-3
    gamma_max: float = 1.0
    gamma_points: int = 10
    masks: int = 100
    mask_seed: int = 0
    sensitivity_bins: int = 5
    sensitivity_step: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    model: SystemModel
    pulse: PulseParams
    grids: GridConfig = field(default_factory=GridConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output_dir: str | None = None
    source: str = "<memory>"

    def resolved_items(self) -> list[tuple[str, str]]:
        """Flat (block.key, value) pairs of every effective setting."""
        out = []
        for key in MODEL_KEYS:
            out.append((f"model.{key}", repr(getattr(self.model, key))))
        for key in PULSE_KEYS:
            out.append((f"pulse.{key}", repr(getattr(self.pulse, key))))
        for key in GRID_KEYS:
            out.append((f"grids.{key}", repr(getattr(self.grids, key))))
        for key in EXPERIMENT_KEYS:
            out.append((f"experiment.{key}", repr(getattr(self.experiment, key))))
        out.append(("output.directory", repr(self.output_dir)))
        return out


def _get_float(section, key, default, where):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}.{key}: {raw!r} is not a number") from None


def _get_int(section, key, default, where):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}.{key}: {raw!r} is not an integer") from None


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse and fully validate a configuration file.

    `overrides` maps "block.key" strings to replacement raw values (the
    command line's --chirp flag uses this); they are applied before
    validation.

    Raises
    ------
    ConfigError
        On parse errors (with line numbers), unknown blocks/keys, missing
        required blocks, non-numeric values, or values the model rejects.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown block [{section}] in {path}")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in block [{section}] of {path}")
    for required in ("model", "pulse"):
        if required not in parser:
            raise ConfigError(f"missing required block [{required}] in {path}")

    if overrides:
        for dotted, value in overrides.items():
            block, _, key = dotted.partition(".")
            if block not in _SCHEMA or key not in _SCHEMA[block]:
                raise ConfigError(f"unknown override {dotted!r}")
            if block not in parser:
                parser.add_section(block)
            parser[block][key] = str(value)

    msec = parser["model"]
    try:
        model = SystemModel(**{k: _get_float(msec, k, getattr(SystemModel, k), "model")
                               for k in MODEL_KEYS})
    except ValueError as exc:
        raise ConfigError(f"model block of {path}: {exc}") from exc

    psec = parser["pulse"]
    pulse = PulseParams(
        bandwidth=_get_float(psec, "bandwidth", 1.0, "pulse"),
        chirp=_get_float(psec, "chirp", 80.0, "pulse"),
        carrier=_get_float(psec, "carrier", 0.0, "pulse"),
    )
    if pulse.bandwidth <= 0:
        raise ConfigError("pulse.bandwidth must be positive")

    gsec = parser["grids"] if "grids" in parser else {}
    frame = gsec.get("frame", "rotating") if gsec else "rotating"
    if frame not in ("rotating", "lab"):
        raise ConfigError("grids.frame must be 'rotating' or 'lab'")
    dt_raw = gsec.get("dt", "auto") if gsec else "auto"
    dt = None if dt_raw in ("auto", "", None) else float(dt_raw)
    if dt is not None and dt <= 0:
        raise ConfigError("grids.dt must be positive (or 'auto')")
    grids = GridConfig(
        frame=frame,
        dt=dt,
        stride=_get_int(gsec, "stride", 0, "grids") if gsec else 0,
        time_halfwidth=_get_float(gsec, "time_halfwidth", 8.0, "grids") if gsec else 8.0,
    )
    if grids.stride < 0:
        raise ConfigError("grids.stride must be >= 0")

    esec = parser["experiment"] if "experiment" in parser else {}
    defaults = ExperimentConfig()
    experiment = ExperimentConfig(
        target=esec.get("target", defaults.target) if esec else defaults.target,
        mu_min=_get_float(esec, "mu_min", defaults.mu_min, "experiment") if esec else defaults.mu_min,
        mu_max=_get_float(esec, "mu_max", defaults.mu_max, "experiment") if esec else defaults.mu_max,
        mu_points=_get_int(esec, "mu_points", defaults.mu_points, "experiment") if esec else defaults.mu_points,
        gamma_min=_get_float(esec, "gamma_min", defaults.gamma_min, "experiment") if esec else defaults.gamma_min,
        gamma_max=_get_float(esec, "gamma_max", defaults.gamma_max, "experiment") if esec else defaults.gamma_max,
        gamma_points=_get_int(esec, "gamma_points", defaults.gamma_points, "experiment") if esec else defaults.gamma_points,
        masks=_get_int(esec, "masks", defaults.masks, "experiment") if esec else defaults.masks,
        mask_seed=_get_int(esec, "mask_seed", defaults.mask_seed, "experiment") if esec else defaults.mask_seed,
        sensitivity_bins=_get_int(esec, "sensitivity_bins", defaults.sensitivity_bins, "experiment") if esec else defaults.sensitivity_bins,
        sensitivity_step=_get_float(esec, "sensitivity_step", defaults.sensitivity_step, "experiment") if esec else defaults.sensitivity_step,
    )
    if experiment.target not in ("excited_surface", "level2"):
        raise ConfigError("experiment.target must be 'excited_surface' or 'level2'")

    out_dir = parser["output"].get("directory") if "output" in parser else None
    return RunConfig(model, pulse, grids, experiment, out_dir, source=str(path))


def bundled_config_path(name: str) -> Path:
    """Filesystem path of a configuration shipped with the package."""
    ref = resources.files("wfpo.data").joinpath(f"{name}.cfg")
    with resources.as_file(ref) as concrete:
        return Path(concrete)


def resolve_config_arg(arg: str) -> Path:
    """Interpret --config as a path, or as a bundled configuration name."""
    p = Path(arg)
    if p.is_file():
        return p
    name = arg.removesuffix(".cfg")
    try:
        bundled = bundled_config_path(name)
    except (FileNotFoundError, ModuleNotFoundError):
        bundled = None
    if bundled is not None and bundled.is_file():
        return bundled
    raise ConfigError(f"config {arg!r} is neither a file nor a bundled name")
