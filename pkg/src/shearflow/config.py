"""Run configuration: key schema, INI parsing, overrides and resolution.

Config files are INI; a key ``section.name`` lives under ``[section]`` as
``name``, so ``spatial.perturb.amplitude`` is written

    [spatial]
    perturb.amplitude = 0.1
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "SHEARFLOW_OUTPUT_ROOT"
MODES = ("predict", "moments", "homogeneous", "self-similar", "inhomogeneous", "analyze")


@dataclass(frozen=True)
class Key:
    name: str
    type: type
    default: object
    owner: str
    help: str
    choices: tuple = ()


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(";", ",").split(",") if x.strip())


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


SCHEMA = [
    Key("run.mode", str, "homogeneous", "cli", "subcommand being run (set automatically)", MODES),
    Key("run.N", int, 100_000, "dsmc", "number of particles"),
    Key("run.alpha", float, 0.1, "dsmc", "shear rate"),
    Key("run.dt", float, 0.01, "dsmc", "time step"),
    Key("run.t_end", float, 10.0, "dsmc", "final time"),
    Key("run.seed", int, 0, "dsmc", "root random seed"),
    Key("run.splitting", str, "strang", "dsmc", "operator splitting", ("strang", "lie")),
    Key("run.threads", int, 0, "cli", "worker threads; 0 = single-thread deterministic mode"),
    Key("run.partitions", int, 0, "dsmc", "virtual collision sub-cells (0 = one cell)"),
    Key("run.normalize_energy", _bool, False, "dsmc", "rescale the initial sample to energy 3"),
    Key("run.shear_perturbation", float, 0.0, "dsmc", "initial anisotropy: v1 += eps*v2"),
    Key("kernel.id", str, "cutoff-maxwell", "kernel", "angular kernel", ("cutoff-maxwell", "tabulated")),
    Key("kernel.amplitude", float, 1.0, "kernel", "kernel amplitude c"),
    Key("kernel.table_path", str, "", "kernel", "two-column z,B0 table for kernel.id=tabulated"),
    Key("frame.kind", str, "physical", "dsmc", "velocity frame", ("physical", "self_similar")),
    Key("frame.beta_policy", str, "dynamic", "dsmc", "self-similar rate policy", ("fixed", "dynamic")),
    Key("frame.beta", _optional_float, None, "dsmc", "fixed beta (auto = exact closure value)"),
    Key("collision.count_policy", str, "carry", "dsmc", "pair-count rounding", ("carry", "poisson")),
    Key("output.cadence", float, 0.1, "dsmc", "time between recorded rows"),
    Key("output.dir", str, "", "cli", f"output directory (default ${OUTPUT_ROOT_ENV}/<subcommand>)"),
    Key("output.histograms", _bool, False, "dsmc", "write time-averaged hist_*.csv"),
    Key("output.hist_from", float, 5.0, "dsmc", "start time of histogram accumulation"),
    Key("output.hist_bins", int, 32, "dsmc", "bins per axis of hist_xy.csv"),
    Key("output.hist_half_width", float, 4.0, "dsmc", "hist_xy.csv covers [-w, w]^2"),
    Key("output.moment_orders", _floats, (), "dsmc", "orders p of <|xi|^p> columns, comma separated"),
    Key("output.save_final", _bool, False, "dsmc", "write final_velocities.npy"),
    Key("spatial.n_cells", int, 32, "spatial", "collision cells"),
    Key("spatial.L", float, 2 * math.pi, "spatial", "periodic box length"),
    Key("spatial.perturb.mode_k", int, 1, "spatial", "perturbed density mode"),
    Key("spatial.perturb.amplitude", float, 0.1, "spatial", "density perturbation amplitude"),
    Key("spatial.k_max", int, 4, "spatial", "highest recorded Fourier mode"),
    Key("analysis.input", str, "", "analysis", "run directory to analyse"),
    Key("analysis.transient", float, 5.0, "analysis", "start of the steady window"),
    Key("analysis.beta_min_span", _optional_float, None, "analysis",
        "required fit span for beta (auto = 5/beta)"),
    Key("analysis.beta_rel_tol", float, 0.05, "analysis", "pass if |beta_hat/beta - 1| <= tol"),
    Key("analysis.flux_sigma", float, 3.0, "analysis", "pass if |flux - exact| <= k sigma"),
    Key("analysis.hist_l", float, 1.0, "analysis", "weight exponent l of the profile distance"),
    Key("analysis.tail_k_fraction", float, 0.01, "analysis", "Hill estimator tail fraction"),
]
KEYS = {k.name: k for k in SCHEMA}

MODE_DEFAULTS = {
    "self-similar": {"frame.kind": "self_similar", "run.normalize_energy": True},
    "homogeneous": {"frame.kind": "physical"},
}


def coerce(key: str, value):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}", key=key)
    spec = KEYS[key]
    try:
        out = spec.type(value) if value is not None else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}", key=key) from exc
    if spec.choices and out not in spec.choices:
        raise ConfigError(f"{key} must be one of {list(spec.choices)}", key=key, value=out)
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config file not found", path=str(path))
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}", path=str(path)) from exc
    raw = {}
    for section in parser.sections():
        for name, value in parser.items(section):
            raw[f"{section}.{name}"] = value
    return raw


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"override must look like key=value: {pair!r}")
        out[key.strip()] = value.strip()
    return out


def resolve(mode: str, file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults < subcommand defaults < config file < flag overrides."""
    cfg = {k.name: k.default for k in SCHEMA}
    cfg.update(MODE_DEFAULTS.get(mode, {}))
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            cfg[key] = coerce(key, value)
    cfg["run.mode"] = mode
    if mode in ("homogeneous", "self-similar"):
        cfg["frame.kind"] = MODE_DEFAULTS[mode]["frame.kind"]
    return cfg


def output_dir(cfg: dict) -> Path:
    if cfg["output.dir"]:
        return Path(cfg["output.dir"])
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / cfg["run.mode"]


def resolved_document(cfg: dict) -> dict:
    doc = {"schema_version": SCHEMA_VERSION}
    doc.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()})
    return doc


def describe_keys() -> str:
    width = max(len(k.name) for k in SCHEMA)
    lines = ["config keys (owner module, default):"]
    for k in SCHEMA:
        default = "auto" if k.default is None else k.default
        if isinstance(default, tuple):
            default = ",".join(map(str, default)) or "none"
        lines.append(f"  {k.name:<{width}}  [{k.owner}] default={default}  {k.help}")
    return "\n".join(lines)
