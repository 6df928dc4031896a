"""Run configuration: INI files, ``--set`` overrides and the environment fallback.

A configuration file has up to six sections::

    [params]   omega_ph, delta_omega_ph, omega_m, gamma, tau, n_modes, grid_span, hbar, regime_factor
    [bouncer]  z0, mass, gravity, z_max, n_points, n_levels, epsilon
    [micro]    n_reservoir_modes, band_low, band_high, spacing, margin, g, dt, check_interval,
               rate_tolerance, deviation_tolerance
    [engine]   mode, cycles, bright_work
    [output]   path, format, precision
    [run]      seed, jobs, n_times

Keys missing from ``[params]`` fall back to the defaults of the subcommand
being run (the weak-value and backward subcommands start from
``Params.weak_value_defaults``, the oracle from its small grid).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields

from .bouncer import BouncerConfig
from .errors import ValidationError
from .reservoir import MicroReservoirSpec
from .statespace import Params

ENV_CONFIG = "IFM_SIM_DEFAULT_CONFIG"

SECTIONS: dict[str, dict[str, type]] = {
    "params": {f.name: f.type for f in fields(Params)},
    "bouncer": {"z0": "float", "mass": "float", "gravity": "float", "z_max": "float", "n_points": "int",
                "n_levels": "int", "epsilon": "float"},
    "micro": {"n_reservoir_modes": "int", "band_low": "float", "band_high": "float", "spacing": "float",
              "margin": "float", "g": "float", "dt": "float", "check_interval": "float",
              "rate_tolerance": "float", "deviation_tolerance": "float"},
    "engine": {"mode": "str", "cycles": "int", "bright_work": "str"},
    "output": {"path": "str", "format": "str", "precision": "int"},
    "run": {"seed": "int", "jobs": "int", "n_times": "int"},
}


def _convert(section: str, key: str, raw: str):
    kind = SECTIONS[section][key]
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ValidationError(f"{section}.{key}: cannot parse {raw!r} as {kind}") from exc
    return raw.strip()


@dataclass(frozen=True)
class OutputSpec:
    path: str | None = None
    format: str = "csv"
    precision: int = 12

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ValidationError("format must be csv or json")
        if not 6 <= self.precision <= 17:
            raise ValidationError("precision must lie in [6, 17]")


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs, after files and overrides are merged."""

    params: Params
    bouncer: BouncerConfig
    micro: MicroReservoirSpec | None
    output: OutputSpec
    seed: int = 0
    jobs: int = 1
    n_times: int = 201
    epsilon: float = 1e-3
    engine: dict = field(default_factory=dict)
    micro_options: dict = field(default_factory=dict)


def read_sections(path: str | None) -> dict[str, dict[str, object]]:
    """Parse an INI file into typed values; unknown sections or keys are errors."""
    values: dict[str, dict[str, object]] = {s: {} for s in SECTIONS}
    if not path:
        return values
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in SECTIONS:
            raise ValidationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ValidationError(f"unknown key {section}.{key}")
            values[section][key] = _convert(section, key, raw)
    return values


def apply_overrides(values: dict[str, dict[str, object]], overrides: list[str]) -> None:
    """Apply ``section.key=value`` (or bare ``key=value`` when unambiguous) in place."""
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS or name not in SECTIONS[section]:
                raise ValidationError(f"unknown key {key}")
        else:
            matches = [s for s in SECTIONS if key in SECTIONS[s]]
            if not matches:
                raise ValidationError(f"unknown key {key}")
            if len(matches) > 1:
                raise ValidationError(f"ambiguous key {key}; qualify it as one of " + ", ".join(f"{s}.{key}" for s in matches))
            section, name = matches[0], key
        values[section][name] = _convert(section, name, raw)


def build_config(
    values: dict[str, dict[str, object]],
    base_params: Params,
    micro_default: bool = False,
) -> RunConfig:
    params = base_params.with_(**values["params"])

    b = values["bouncer"]
    z0 = float(b.get("z0", 1.0))
    bouncer = BouncerConfig.uniform(
        z0=z0,
        z_max_over_z0=float(b.get("z_max", 12.0)),
        n_points=int(b.get("n_points", 4096)),
        mass=float(b.get("mass", 1.0)),
        gravity=float(b.get("gravity", 1.0)),
        n_levels=int(b.get("n_levels", 2)),
    )
    epsilon = float(b.get("epsilon", 1e-3))

    m = dict(values["micro"])
    micro_options = {
        "rate_tolerance": float(m.pop("rate_tolerance", 0.10)),
        "deviation_tolerance": float(m.pop("deviation_tolerance", 5e-2)),
    }
    micro = None
    if m or micro_default:
        extra = {k: m[k] for k in ("g", "dt", "check_interval") if k in m}
        if "band_low" in m or "band_high" in m or "n_reservoir_modes" in m:
            try:
                band = (float(m["band_low"]), float(m["band_high"]))
                n_res = int(m["n_reservoir_modes"])
            except KeyError as exc:
                raise ValidationError("micro needs band_low, band_high and n_reservoir_modes together") from exc
            micro = MicroReservoirSpec(n_reservoir_modes=n_res, band=band, **extra)
        else:
            shape = {k: float(m[k]) for k in ("spacing", "margin") if k in m}
            micro = MicroReservoirSpec.for_params(params, **shape, **extra)

    o = values["output"]
    output = OutputSpec(path=o.get("path"), format=str(o.get("format", "csv")), precision=int(o.get("precision", 12)))
    r = values["run"]
    jobs = int(r.get("jobs", 1))
    if jobs < 1:
        raise ValidationError("jobs must be >= 1")
    n_times = int(r.get("n_times", 201))
    return RunConfig(
        params=params,
        bouncer=bouncer,
        micro=micro,
        output=output,
        seed=int(r.get("seed", 0)),
        jobs=jobs,
        n_times=n_times,
        epsilon=epsilon,
        engine=dict(values["engine"]),
        micro_options=micro_options,
    )


def config_path(explicit: str | None) -> str | None:
    return explicit or os.environ.get(ENV_CONFIG) or None
