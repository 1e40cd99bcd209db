"""Experiment configuration: INI files parsed into exact, typed values.

Every value is kept twice: the raw string (echoed into certificates so a run can
be replayed) and the parsed value (rationals as ``Fraction``, elements as group
elements). Unknown sections and keys are rejected.
"""

from __future__ import annotations

import configparser
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from castellan.config import (
    DEFAULT_LATTICE_RANK,
    ORACLE_TRIALS,
    PIPELINES,
    RANDOMIZED_PIPELINES,
    SUPPORTED_BASE_GROUPS,
)
from castellan.exceptions import ConfigError, ElementParseError, RationalParseError
from castellan.group_core import INTEGERS, Group, LatticeGroup, WreathProduct
from castellan.models import parse_rational

logger = logging.getLogger(__name__)

LIST_SEPARATOR = ";"

# key -> (kind, default); a default of ``REQUIRED`` marks a mandatory key
REQUIRED = object()

SECTION_KEYS: dict[str, dict[str, tuple[str, Any]]] = {
    "experiment": {"pipeline": ("text", REQUIRED), "rng_seed": ("int", None)},
    "group": {"kind": ("text", None), "d": ("int", DEFAULT_LATTICE_RANK), "lambda": ("text", "Z")},
    "folner": {"K": ("elements", REQUIRED), "eps": ("rational", REQUIRED), "cap": ("int", None)},
    "action": {"kind": ("text", "cyclic"), "states": ("int", REQUIRED), "cells": ("int", None)},
    "castle": {
        "S": ("elements", None),
        "K": ("elements", None),
        "eps": ("rational", REQUIRED),
        "delta": ("rational", None),
        "cap": ("int", None),
        "Y": ("ints", None),
        "Z": ("ints", None),
    },
    "essfree": {"g": ("elements", REQUIRED), "eps_prime": ("rational", None)},
    "joseph": {
        "gammas": ("elements", REQUIRED),
        "prime_floor": ("int", 1),
        "eps_budget": ("rational", 1),
        "exponent_boost": ("int", 0),
        "trials": ("int", ORACLE_TRIALS),
        "levels": ("int", 3),
    },
    "probes": {"count": ("int", 20), "gammas": ("elements", None), "radius": ("int", 4)},
    "zstab": {
        "n": ("int", REQUIRED),
        "eps": ("rational", REQUIRED),
        "F": ("elements", REQUIRED),
        "prime_floor": ("int", 1),
        "lambda0": ("ints", "1;-1"),
        "indicator": ("ints", "0"),
        "lamps": ("ints", None),
        "a": ("ints", None),
        "ms": ("ints", None),
        "e_seeds": ("elements", None),
    },
}

PIPELINE_SECTIONS: dict[str, tuple[frozenset[str], frozenset[str]]] = {
    # pipeline -> (required sections, optional sections)
    "folner": (frozenset({"folner"}), frozenset()),
    "castle-l33": (frozenset({"action", "castle"}), frozenset()),
    "castle-t34": (frozenset({"action", "castle"}), frozenset({"essfree"})),
    "joseph-build": (frozenset({"joseph"}), frozenset()),
    "fixed-fractions": (frozenset({"joseph", "probes"}), frozenset()),
    "zstab-witness": (frozenset({"zstab"}), frozenset()),
}

PIPELINE_KEYS: dict[str, tuple[tuple[str, str], ...]] = {
    "castle-l33": (("castle", "S"),),
    "castle-t34": (("castle", "K"),),
}


def _split(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(LIST_SEPARATOR) if item.strip()]


def _parse_int(raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise ValueError(f"'{raw}' is not an integer") from exc


def _converters(group: Group) -> dict[str, Callable[[str], Any]]:
    return {
        "text": str.strip,
        "int": _parse_int,
        "rational": parse_rational,
        "ints": lambda raw: tuple(_parse_int(item) for item in _split(raw)),
        "elements": lambda raw: tuple(group.parse(item) for item in _split(raw)),
    }


def _group_for(pipeline: str, section: Mapping[str, str]) -> Group:
    base = section.get("lambda", "Z").strip()
    if base not in SUPPORTED_BASE_GROUPS:
        raise ConfigError("group.lambda", f"unsupported base group '{base}'")
    try:
        d = int(section.get("d", DEFAULT_LATTICE_RANK))
    except ValueError as exc:
        raise ConfigError("group.d", "not an integer") from exc
    if d < 1:
        raise ConfigError("group.d", "rank must be positive")
    default = "wreath" if pipeline in {"joseph-build", "fixed-fractions", "zstab-witness"} else "Z"
    kind = section.get("kind", default).strip()
    if pipeline.startswith("castle") and kind != "Z":
        raise ConfigError("group.kind", "castle pipelines act through Z")
    if default == "wreath" and kind != "wreath":
        raise ConfigError("group.kind", f"{pipeline} needs the wreath product")
    if kind == "Z":
        return INTEGERS
    if kind == "lattice":
        return LatticeGroup(d)
    if kind == "wreath":
        return WreathProduct(d)
    raise ConfigError("group.kind", f"unknown group kind '{kind}'")


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment.

    Attributes:
        pipeline: One of ``PIPELINES``.
        rng_seed: Seed for randomized pipelines, if given.
        group: The group named by ``[group]`` (or the pipeline default).
        values: Parsed values per section, defaults filled in.
        raw: The raw strings as written, for the certificate echo.
    """

    pipeline: str
    rng_seed: int | None
    group: Group
    values: Mapping[str, Mapping[str, Any]]
    raw: Mapping[str, Mapping[str, str]]

    def get(self, section: str, key: str) -> Any:
        return self.values.get(section, {}).get(key)

    def has_section(self, section: str) -> bool:
        return section in self.values

    @property
    def needs_seed(self) -> bool:
        if self.pipeline == "castle-l33":
            return self.get("action", "kind") == "random"
        return self.pipeline in RANDOMIZED_PIPELINES

    def inputs(self) -> dict[str, dict[str, str]]:
        """The echo written into certificates; ``from_mapping`` replays it."""
        return {section: dict(sorted(keys.items())) for section, keys in sorted(self.raw.items())}


def from_mapping(data: Mapping[str, Mapping[str, str]]) -> ExperimentConfig:
    """Validate section → key → raw string data.

    Raises:
        ConfigError: On unknown sections or keys, missing required values and
            malformed values.
    """
    raw = {str(s): {str(k): str(v).strip() for k, v in keys.items()} for s, keys in data.items()}
    if "experiment" not in raw or "pipeline" not in raw["experiment"]:
        raise ConfigError("experiment.pipeline", "missing required key")
    pipeline = raw["experiment"]["pipeline"]
    if pipeline not in PIPELINES:
        raise ConfigError("experiment.pipeline", f"unknown pipeline '{pipeline}'")

    required, optional = PIPELINE_SECTIONS[pipeline]
    allowed = required | optional | {"experiment", "group"}
    for section in raw:
        if section not in allowed:
            raise ConfigError(section, f"section not used by pipeline '{pipeline}'")
    for section in required:
        if section not in raw:
            raise ConfigError(section, "missing required section")

    group = _group_for(pipeline, raw.get("group", {}))
    converters = _converters(group)
    values: dict[str, dict[str, Any]] = {}
    for section, keys in raw.items():
        schema = SECTION_KEYS[section]
        for key in keys:
            if key not in schema:
                raise ConfigError(f"{section}.{key}", "unknown key")
        parsed: dict[str, Any] = {}
        for key, (kind, default) in schema.items():
            path = f"{section}.{key}"
            if key in keys:
                text = keys[key]
            elif default is REQUIRED:
                raise ConfigError(path, "missing required key")
            elif isinstance(default, str) and kind != "text":
                text = default
            else:
                parsed[key] = default
                continue
            try:
                parsed[key] = converters[kind](text)
            except (RationalParseError, ElementParseError, ValueError) as exc:
                raise ConfigError(path, str(exc)) from exc
        values[section] = parsed

    for section, key in PIPELINE_KEYS.get(pipeline, ()):
        if values[section].get(key) is None:
            raise ConfigError(f"{section}.{key}", "missing required key")

    config = ExperimentConfig(
        pipeline=pipeline,
        rng_seed=values["experiment"]["rng_seed"],
        group=group,
        values=values,
        raw=raw,
    )
    if config.needs_seed and config.rng_seed is None:
        raise ConfigError("experiment.rng_seed", f"pipeline '{pipeline}' is randomized")
    logger.debug("parsed %s config with sections %s", pipeline, sorted(values))
    return config


def parse_experiment(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str  # keys such as K, S and F are case-sensitive
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(source, f"unreadable INI: {exc}") from exc
    return from_mapping({s: dict(parser.items(s)) for s in parser.sections()})


def load_experiment(path: str | Path) -> ExperimentConfig:
    """Read and validate an experiment file.

    Raises:
        ConfigError: If the file cannot be read or is invalid.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file: {exc.strerror}") from exc
    logger.info("loading experiment %s", path)
    return parse_experiment(text, source=str(path))
