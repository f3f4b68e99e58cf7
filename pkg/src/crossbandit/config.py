"""Experiment config files: one human-editable INI per experiment.

Sections are flat key-value tables; unknown sections or keys are rejected
with their full path so typos never silently change an experiment. Seeds are
mandatory. Example:

    [run]
    algo = unknown
    horizon = 16384
    seed = 7
    replicates = 20

    [graph]
    spec = cliques:4x4

    [env]
    contexts = 8
    nu = uniform
    oracle = stochastic_gap
    gap = 0.2
    base = 0.4
    best_stride = 5

    [params]
    mode = auto
    tuned_scale = 0.02

    [output]
    dir = out
    trace = light
    diagnostics = false
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .graph import GraphSpec
from .harness import ConfigError, OracleSpec, RunConfig, validate_config

_SECTION_KEYS = {
    "run": {"algo", "horizon", "seed", "replicates"},
    "graph": {"spec"},
    "env": {"contexts", "nu", "oracle", "base", "gap", "best_stride", "low",
            "high", "table", "value_grid", "bid_grid", "bids_file"},
    "params": {"mode", "tuned_scale", "eta", "gamma", "epoch_len", "iota",
               "eta_scale", "gamma_ix"},
    "output": {"dir", "trace", "diagnostics"},
}
_REQUIRED = (("run", "algo"), ("run", "horizon"), ("run", "seed"),
             ("graph", "spec"), ("env", "contexts"), ("env", "oracle"))


def _get(parser: configparser.ConfigParser, section: str, key: str,
         cast, default=None):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.split(","))


def parse_config(path: str | Path) -> RunConfig:
    """Load and fully validate a run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key in parser.options(section):
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key {section}.{key} in {path}")
    for section, key in _REQUIRED:
        if not parser.has_option(section, key):
            raise ConfigError(f"missing required key {section}.{key} in {path}"
                              + (" (seeds are mandatory)" if key == "seed" else ""))

    graph_spec = GraphSpec.parse(parser.get("graph", "spec"))

    oracle_kind = parser.get("env", "oracle").strip()
    oracle = OracleSpec(
        kind=oracle_kind,
        base=_get(parser, "env", "base", float, 0.4),
        gap=_get(parser, "env", "gap", float, 0.2),
        best_stride=_get(parser, "env", "best_stride", int, 5),
        low=_get(parser, "env", "low", float, 0.2),
        high=_get(parser, "env", "high", float, 0.8),
        table_path=_get(parser, "env", "table", str),
        value_grid=_get(parser, "env", "value_grid", _floats),
        bid_grid=_get(parser, "env", "bid_grid", _floats),
        bids_path=_get(parser, "env", "bids_file", str),
    )

    nu_raw = _get(parser, "env", "nu", str, "uniform")
    nu = None if nu_raw.strip().lower() == "uniform" else _floats(nu_raw)

    config = RunConfig(
        graph=graph_spec,
        oracle=oracle,
        num_contexts=_get(parser, "env", "contexts", int),
        horizon=_get(parser, "run", "horizon", int),
        algo=parser.get("run", "algo").strip(),
        seed=_get(parser, "run", "seed", int),
        nu=nu,
        replicates=_get(parser, "run", "replicates", int, 1),
        param_mode=_get(parser, "params", "mode", str, "auto"),
        tuned_scale=_get(parser, "params", "tuned_scale", float, 1.0),
        eta=_get(parser, "params", "eta", float),
        gamma=_get(parser, "params", "gamma", float),
        epoch_len=_get(parser, "params", "epoch_len", int),
        iota=_get(parser, "params", "iota", float),
        eta_scale=_get(parser, "params", "eta_scale", float, 1.0),
        gamma_ix=_get(parser, "params", "gamma_ix", float),
        trace_level=_get(parser, "output", "trace", str, "light"),
        diagnostics=_get(parser, "output", "diagnostics", _bool, False),
        output_dir=_get(parser, "output", "dir", str),
    )
    validate_config(config)
    return config
