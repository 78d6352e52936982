"""Run configuration: JSON files, named presets and command-line overrides.

A configuration is a nested mapping.  Sources are merged in the order
preset → config file → flags, the result is checked against the schema
below (unknown keys are rejected with their dotted path) and defaults are
filled in.  Parameter admissibility is delegated to :func:`params.validate`.
"""

from __future__ import annotations

import copy
import enum
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError, OutOfRange
from .params import Params, validate

OUTPUT_ROOT_ENV = "PMESHRINK_OUTPUT_ROOT"
ACCEPTANCE_PRESET = "high-sum"  # parameters of the PDE criteria when none are given


class Task(str, enum.Enum):
    SHOOT = "shoot"
    VERIFY_PROFILE = "verify-profile"
    SIMULATE = "simulate"
    SWEEP = "sweep"
    ACCEPTANCE = "acceptance"


# Section name -> {key: default}.  ``None`` marks an optional entry whose type
# is listed in OPTIONAL_TYPES; the defaults of those are resolved at run time
# (for instance ``simulate.dt`` defaults to the cell width).
SCHEMA: dict[str, dict[str, Any]] = {
    "shoot": {
        "a_seed": 1.0, "bracket_tol": 1e-10, "max_doublings": 400, "max_retries": 2,
        "tail_stages": 2, "tail_target": 1e-24, "time_budget": 30.0, "backward_tail": True,
        "xi_init": None,
    },
    "verify": {
        "window_decades": 3.0, "bounds_rtol": 1e-10, "ordering_pairs": 50,
        "series_points": 5, "pme_points": 8, "profile": None, "phase_csv": True,
    },
    "simulate": {
        "r_max": 2.0, "n_cells": 1024, "t0": 0.0, "t_end": 1.0, "dt": None, "kappa": 0.0,
        "dt_max": math.inf, "n_log": 51, "log_spacing": "linear", "eps_supp": None,
        "rescaled_error": False, "snapshots": False,
    },
    "initial": {"kind": "bump", "delta": 1.0, "r0": 1.0, "c": 1.0, "cap": 1.0},
    "sweep": {"parameter": "sigma", "values": None},
    "acceptance": {"criteria": None, "fast": False},
}
OPTIONAL_TYPES = {
    "shoot.xi_init": float, "verify.profile": str, "simulate.dt": float,
    "simulate.eps_supp": float, "sweep.values": list, "acceptance.criteria": list,
}
TOP_LEVEL = {"task", "preset", "params", "seed", "output", "jobs", "description",
             "m", "q", "sigma", "N", "dim", *SCHEMA}
PARAM_KEYS = {"m", "q", "sigma", "N", "dim"}
INITIAL_KINDS = ("bump", "constant", "selfsimilar", "capped-stationary")
SWEEP_PARAMETERS = ("m", "q", "sigma", "N")

_TYPES = {
    bool: (bool,),
    int: (int,),
    float: (int, float),
    str: (str,),
}


@dataclass
class RunConfig:
    """Validated configuration of one command."""

    params: Params
    task: Task
    options: dict = field(default_factory=dict)
    output: Path = Path("out")
    seed: int = 12345
    jobs: int = 1
    preset: str | None = None

    def section(self, name: str) -> dict:
        return self.options[name]

    def effective(self) -> dict:
        """Fully expanded configuration (the echo written next to the results)."""
        out = {"task": self.task.value, "params": self.params.as_dict(), "seed": self.seed,
               "output": str(self.output), "jobs": self.jobs}
        if self.preset is not None:
            out["preset"] = self.preset
        out.update(copy.deepcopy(self.options))
        return out


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def preset_names() -> list[str]:
    root = resources.files("pmeshrink") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("pmeshrink") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}",
                          field="preset")
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Merging and validation
# ---------------------------------------------------------------------------


def merge(base: Mapping, over: Mapping) -> dict:
    """Recursive dictionary merge; values of ``over`` win."""
    out = copy.deepcopy(dict(base))
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_type(value, default, path: str):
    if default is None:
        kind = OPTIONAL_TYPES.get(path)
        if value is None or kind is None:
            return value
        if kind is list:
            if not isinstance(value, list):
                raise ConfigError(f"expected a list, got {type(value).__name__}", field=path)
            return value
        default = kind()
    kind = type(default)
    if kind is float and isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"expected {kind.__name__}, got a boolean", field=path)
    if not isinstance(value, _TYPES[kind]):
        if kind is float and value is None and path.endswith("time_budget"):
            return None
        raise ConfigError(f"expected {kind.__name__}, got {type(value).__name__} ({value!r})",
                          field=path)
    return float(value) if kind is float else value


def _section(raw: Mapping, name: str, prefix: str = "") -> dict:
    path = f"{prefix}{name}"
    given = raw.get(name, {})
    if not isinstance(given, Mapping):
        raise ConfigError("expected a mapping", field=path)
    defaults = SCHEMA[name]
    for k in given:
        if k not in defaults:
            raise ConfigError(f"unknown key {k!r} (allowed: {', '.join(sorted(defaults))})",
                              field=f"{path}.{k}")
    return {k: _check_type(given[k], d, f"{path}.{k}") if k in given else d
            for k, d in defaults.items()}


def _params(raw: Mapping) -> Params:
    block = dict(raw.get("params", {}) or {})
    if not isinstance(block, Mapping):
        raise ConfigError("expected a mapping", field="params")
    for k in block:
        if k not in PARAM_KEYS:
            raise ConfigError(f"unknown key {k!r} (allowed: m, q, sigma, N, dim)",
                              field=f"params.{k}")
    if "dim" in block:
        if "N" in block and block["N"] != block["dim"]:
            raise ConfigError("both N and dim given with different values", field="params.dim")
        block["N"] = block.pop("dim")
    if "dim" in raw and "N" in raw and raw["N"] != raw["dim"]:
        raise ConfigError("both N and dim given with different values", field="dim")
    for k in PARAM_KEYS:  # flat keys at top level take precedence
        if k in raw:
            block["N" if k == "dim" else k] = raw[k]
    missing = [k for k in ("m", "q", "sigma") if k not in block]
    if missing:
        raise ConfigError(f"missing required parameter(s) {', '.join(missing)}", field="params")
    values = {}
    for k in ("m", "q", "sigma"):
        values[k] = _check_type(block[k], 1.0, f"params.{k}")
    N = block.get("N", 1)
    if isinstance(N, float) and N.is_integer():
        N = int(N)
    values["N"] = _check_type(N, 1, "params.N")
    p = Params(values["m"], values["q"], values["sigma"], values["N"])
    try:
        return validate(p)
    except OutOfRange as exc:
        name = "sigma" if "sigma" in str(exc) else ("q" if "q <" in str(exc) else
                                                    "m" if "m >" in str(exc) else "N")
        raise ConfigError(f"{exc} (admissible range: m > 1, 0 < q < 1, "
                          f"sigma > 2(1-q)/(m-1), N >= 1)", field=f"params.{name}") from exc


def output_dir(out: str | os.PathLike | None, task: Task) -> Path:
    """Output directory; relative paths are resolved under ``$PMESHRINK_OUTPUT_ROOT`` if set."""
    path = Path(out) if out else Path("out") / task.value
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def build_config(raw: Mapping, task: Task | str | None = None) -> RunConfig:
    """Validate a raw (already merged) mapping and fill defaults."""
    if not isinstance(raw, Mapping):
        raise ConfigError("configuration must be a mapping", field="<root>")
    preset = raw.get("preset")
    if preset is not None:
        if not isinstance(preset, str):
            raise ConfigError("expected a preset name", field="preset")
        raw = merge(load_preset(preset), raw)
    for k in raw:
        if k not in TOP_LEVEL:
            raise ConfigError(f"unknown key {k!r}", field=k)
    task_raw = task if task is not None else raw.get("task")
    if task_raw is None:
        raise ConfigError("no task given", field="task")
    try:
        task_v = Task(task_raw.value if isinstance(task_raw, Task) else task_raw)
    except ValueError:
        raise ConfigError(f"unknown task {task_raw!r}; expected one of "
                          f"{', '.join(t.value for t in Task)}", field="task") from None
    if task_v is Task.ACCEPTANCE and not PARAM_KEYS & (set(raw) | set(raw.get("params") or {})):
        raw = merge(load_preset(ACCEPTANCE_PRESET), raw)
    params = _params(raw)
    sim = raw.get("simulate", {})
    if not isinstance(sim, Mapping):
        raise ConfigError("expected a mapping", field="simulate")
    init_raw = {"initial": sim.get("initial", {})}
    raw = dict(raw, simulate={k: v for k, v in sim.items() if k != "initial"})
    options = {name: _section(raw, name) for name in SCHEMA if name != "initial"}
    options["simulate"]["initial"] = _section(init_raw, "initial", prefix="simulate.")
    _check_options(options, params)
    seed = _check_type(raw.get("seed", 12345), 1, "seed")
    jobs = _check_type(raw.get("jobs", 1), 1, "jobs")
    if jobs < 1:
        raise ConfigError("must be >= 1", field="jobs")
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise ConfigError("expected a path string", field="output")
    return RunConfig(params=params, task=task_v, options=options,
                     output=output_dir(out, task_v), seed=seed, jobs=jobs,
                     preset=preset)


def _positive(options, section, key):
    if not options[section][key] > 0:
        raise ConfigError(f"must be positive, got {options[section][key]!r}",
                          field=f"{section}.{key}")


def _check_options(options: dict, params: Params) -> None:
    for key in ("a_seed", "bracket_tol", "tail_target"):
        _positive(options, "shoot", key)
    for key in ("r_max", "n_cells", "n_log"):
        _positive(options, "simulate", key)
    for section, key in (("simulate", "dt"), ("simulate", "eps_supp"), ("shoot", "xi_init")):
        if options[section][key] is not None:
            _positive(options, section, key)
    prof = options["verify"]["profile"]
    if prof is not None and not (Path(prof) / "profile.csv").is_file():
        raise ConfigError(f"no profile.csv in {prof!r}", field="verify.profile")
    sim = options["simulate"]
    if sim["n_cells"] < 4:
        raise ConfigError("need at least 4 cells", field="simulate.n_cells")
    if not sim["t_end"] > sim["t0"] >= 0.0:
        raise ConfigError(f"need t_end > t0 >= 0 (t0={sim['t0']}, t_end={sim['t_end']})",
                          field="simulate.t_end")
    if sim["log_spacing"] not in ("linear", "log"):
        raise ConfigError("expected 'linear' or 'log'", field="simulate.log_spacing")
    if sim["log_spacing"] == "log" and sim["t0"] <= 0.0:
        raise ConfigError("log spacing needs t0 > 0", field="simulate.log_spacing")
    kind = sim["initial"]["kind"]
    if kind not in INITIAL_KINDS:
        raise ConfigError(f"unknown initial datum {kind!r}; expected one of "
                          f"{', '.join(INITIAL_KINDS)}", field="simulate.initial.kind")
    if kind == "selfsimilar" and sim["t0"] <= 0.0:
        raise ConfigError("the self-similar datum needs t0 > 0", field="simulate.t0")
    sweep = options["sweep"]
    if sweep["parameter"] not in SWEEP_PARAMETERS:
        raise ConfigError(f"expected one of {', '.join(SWEEP_PARAMETERS)}",
                          field="sweep.parameter")
    if sweep["values"] is not None:
        vals = sweep["values"]
        if not isinstance(vals, list) or not vals or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError("expected a non-empty list of numbers", field="sweep.values")
        for i, v in enumerate(vals):
            trial = dict(params.as_dict(), **{sweep["parameter"]: v})
            try:
                validate(Params(**trial))
            except OutOfRange as exc:
                raise ConfigError(str(exc), field=f"sweep.values[{i}]") from exc
    crit = options["acceptance"]["criteria"]
    if crit is not None:
        if not isinstance(crit, list) or not all(isinstance(c, int) and 1 <= c <= 13 for c in crit):
            raise ConfigError("expected a list of criterion numbers in 1..13",
                              field="acceptance.criteria")


def read_config_file(path: str | os.PathLike) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} does not exist", field="config")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", field="config") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", field="config")
    return data


def parse_config(source: str | os.PathLike | Mapping | None = None,
                 overrides: Mapping | None = None, task: Task | str | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig`.

    Parameters
    ----------
    source : path, mapping or None
        JSON config file or an already parsed mapping.
    overrides : mapping, optional
        Values that take precedence over ``source`` (command-line flags).
    task : Task or str, optional
        Overrides the ``task`` entry.

    Raises
    ------
    ConfigError
        With ``field`` set to the dotted path of the offending entry.
    """
    if source is None:
        raw: dict = {}
    elif isinstance(source, Mapping):
        raw = copy.deepcopy(dict(source))
    else:
        raw = read_config_file(source)
    if overrides:
        raw = merge(raw, overrides)
    return build_config(raw, task)
