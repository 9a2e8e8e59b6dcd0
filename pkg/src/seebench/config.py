"""Run configuration: YAML in, fully-defaulted plain dict out.

One file determines one run. Unknown keys are rejected (with a close-match
suggestion) and every field is type-checked, so a typo never silently falls
back to a default.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import yaml

from .distance import DEFAULT_COSINE_BIN_WIDTH
from .gateway import DEFAULT_SEEDS, EDIT_MODES, SINGLE_CALL
from .verifiers import CLASSIFY, DEFAULT_SUITE, VQA

MOCK = "mock"
SUBPROCESS = "subprocess"
ORACLE = "oracle"
HASHING = "hashing"
DIMENSION_NAMES = ("neighbors", "evasion", "leakage", "schedule", "attention")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# Field spec: (type, default) for scalars; nested dicts are sub-schemas;
# ``[schema]`` is a list of mappings with that schema.
_INT, _FLOAT, _BOOL, _STR = "int", "float", "bool", "str"
_INT_LIST, _STR_LIST, _OPT_STR_LIST = "int_list", "str_list", "opt_str_list"

_CET = {
    "name": (_STR, None),
    "label": (_STR, ""),
    "kind": (_STR, MOCK),
    "mode": (_STR, SINGLE_CALL),
    "radius": (_INT, 0),
    "probability": (_FLOAT, 0.0),
    "rng_seed": (_INT, 0),
    "closure": (_BOOL, False),
    "transfer_attributes": (_BOOL, False),
    "single_call": (_STR, "all"),
}

_VERIFIER = {
    "id": (_STR, None),
    "family": (_STR, None),
    "backend": (_STR, ORACLE),
    "version": (_STR, "1"),
    "max_concurrent_requests": (_INT, 8),
}

_SCHEMA: dict[str, Any] = {
    "run_id": (_STR, ""),
    "out_dir": (_STR, "runs"),
    "seeds": (_INT_LIST, list(DEFAULT_SEEDS)),
    "parallelism": (_INT, 1),
    "adapter_command": (_STR, ""),
    "corpus": {
        "objects": (_OPT_STR_LIST, None),
    },
    "binning": {
        "cosine_width": (_FLOAT, DEFAULT_COSINE_BIN_WIDTH),
    },
    "embedder": {
        "backend": (_STR, HASHING),
        "model_id": (_STR, "hashing-256"),
        "dim": (_INT, 256),
    },
    "backend": {
        "kind": (_STR, MOCK),
        "model_id": (_STR, "mock-sd"),
        "grid": (_INT_LIST, [8, 8]),
        "returns_attention_maps": (_BOOL, True),
        "max_concurrent_requests": (_INT, 8),
        "attention_extraction": (_STR, "mock: one synthetic map per object token"),
    },
    "cets": [_CET],
    "verifiers": [_VERIFIER],
    "neighbors": {
        "targets": (_STR_LIST, ["cup"]),
    },
    "evasion": {
        "targets": (_OPT_STR_LIST, None),
    },
    "leakage": {
        "targets": (_STR_LIST, ["couch"]),
        "partners_per_target": (_INT, 3),
        "partners": ("partners", None),
        "attributes": (_OPT_STR_LIST, None),
    },
    "schedule": {
        "targets": (_STR_LIST, ["cup"]),
        "cet": (_STR, ""),
        "steps": ("opt_int_list", None),
    },
    "attention": {
        "targets": (_STR_LIST, ["cup"]),
    },
}

_DEFAULT_CETS = [{"name": "mock-cet", "kind": MOCK}]
_DEFAULT_VERIFIERS = [{"id": vid, "family": fam} for vid, fam in DEFAULT_SUITE]


def _join(path: str, key: str | int) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _reject_unknown(data: Mapping, schema: Mapping, path: str) -> None:
    for key in data:
        if key not in schema:
            hint = difflib.get_close_matches(str(key), list(schema), n=1, cutoff=0.6)
            extra = f"; did you mean {hint[0]!r}?" if hint else f"; expected one of {sorted(schema)}"
            raise ConfigError(_join(path, str(key)), f"unknown key{extra}")


def _scalar(kind: str, value: Any, path: str) -> Any:
    def bad(expected: str):
        return ConfigError(path, f"expected {expected}, got {type(value).__name__} {value!r}")

    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise bad("true/false")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind in (_INT_LIST, "opt_int_list"):
        if value is None and kind == "opt_int_list":
            return None
        if not isinstance(value, list):
            raise bad("a list of integers")
        return [_scalar(_INT, v, _join(path, i)) for i, v in enumerate(value)]
    if kind in (_STR_LIST, _OPT_STR_LIST):
        if value is None and kind == _OPT_STR_LIST:
            return None
        if not isinstance(value, list):
            raise bad("a list of strings")
        return [_scalar(_STR, v, _join(path, i)) for i, v in enumerate(value)]
    if kind == "partners":
        if value is None:
            return None
        if not isinstance(value, Mapping):
            raise bad("a mapping of target -> list of preserve objects")
        return {str(k): _scalar(_STR_LIST, v, _join(path, str(k))) for k, v in value.items()}
    raise AssertionError(kind)


def _apply(schema: Mapping, data: Any, path: str) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    _reject_unknown(data, schema, path)
    out = {}
    for key, spec in schema.items():
        sub = _join(path, key)
        if isinstance(spec, dict):
            out[key] = _apply(spec, data.get(key), sub)
        elif isinstance(spec, list):
            items = data.get(key)
            if items is None:
                items = _DEFAULT_CETS if key == "cets" else _DEFAULT_VERIFIERS
            if not isinstance(items, list) or not items:
                raise ConfigError(sub, "expected a non-empty list")
            out[key] = [_apply(spec[0], item, _join(sub, i)) for i, item in enumerate(items)]
        else:
            kind, default = spec
            if key in data:
                out[key] = _scalar(kind, data[key], sub)
            elif default is None and kind in (_STR, _INT, _FLOAT, _BOOL):
                raise ConfigError(sub, "required")
            else:
                out[key] = copy.deepcopy(default)
    return out


def _check_semantics(cfg: dict) -> None:
    if not cfg["seeds"]:
        raise ConfigError("seeds", "at least one seed is required")
    if len(set(cfg["seeds"])) != len(cfg["seeds"]):
        raise ConfigError("seeds", "seeds must be distinct")
    if cfg["parallelism"] < 1:
        raise ConfigError("parallelism", "must be >= 1")
    if cfg["binning"]["cosine_width"] <= 0:
        raise ConfigError("binning.cosine_width", "must be > 0")
    if cfg["backend"]["kind"] not in (MOCK, SUBPROCESS):
        raise ConfigError("backend.kind", f"must be {MOCK!r} or {SUBPROCESS!r}")
    grid = cfg["backend"]["grid"]
    if len(grid) != 2 or min(grid) < 1:
        raise ConfigError("backend.grid", "must be [H, W] with H, W >= 1")
    if cfg["backend"]["max_concurrent_requests"] < 1:
        raise ConfigError("backend.max_concurrent_requests", "must be >= 1")
    if cfg["embedder"]["backend"] not in (HASHING, SUBPROCESS):
        raise ConfigError("embedder.backend", f"must be {HASHING!r} or {SUBPROCESS!r}")
    names = set()
    for i, cet in enumerate(cfg["cets"]):
        p = f"cets[{i}]"
        if cet["name"] in names:
            raise ConfigError(f"{p}.name", f"duplicate CET name {cet['name']!r}")
        names.add(cet["name"])
        if cet["kind"] not in (MOCK, SUBPROCESS):
            raise ConfigError(f"{p}.kind", f"must be {MOCK!r} or {SUBPROCESS!r}")
        if cet["mode"] not in EDIT_MODES:
            raise ConfigError(f"{p}.mode", f"must be one of {list(EDIT_MODES)}")
        if cet["single_call"] not in ("all", "first"):
            raise ConfigError(f"{p}.single_call", "must be 'all' or 'first'")
        if cet["radius"] < 0:
            raise ConfigError(f"{p}.radius", "must be >= 0")
        if not 0.0 <= cet["probability"] <= 1.0:
            raise ConfigError(f"{p}.probability", "must lie in [0, 1]")
        if cet["kind"] == MOCK and cfg["backend"]["kind"] != MOCK:
            raise ConfigError(f"{p}.kind", "mock CETs need the mock backend")
    ids = set()
    for i, ver in enumerate(cfg["verifiers"]):
        p = f"verifiers[{i}]"
        if ver["id"] in ids:
            raise ConfigError(f"{p}.id", f"duplicate verifier id {ver['id']!r}")
        ids.add(ver["id"])
        if ver["family"] not in (CLASSIFY, VQA):
            raise ConfigError(f"{p}.family", f"must be {CLASSIFY!r} or {VQA!r}")
        if ver["backend"] not in (ORACLE, SUBPROCESS):
            raise ConfigError(f"{p}.backend", f"must be {ORACLE!r} or {SUBPROCESS!r}")
        if ver["backend"] == ORACLE and cfg["backend"]["kind"] != MOCK:
            raise ConfigError(f"{p}.backend", "the oracle verifier only reads mock payloads")
        if ver["max_concurrent_requests"] < 1:
            raise ConfigError(f"{p}.max_concurrent_requests", "must be >= 1")
    sched = cfg["schedule"]["cet"]
    if sched and sched not in names:
        raise ConfigError("schedule.cet", f"unknown CET {sched!r}; registered: {sorted(names)}")
    if cfg["leakage"]["partners_per_target"] < 1:
        raise ConfigError("leakage.partners_per_target", "must be >= 1")


def normalize_config(data: Mapping | None) -> dict:
    """Apply defaults and validate a parsed config mapping."""
    cfg = _apply(_SCHEMA, data, "")
    _check_semantics(cfg)
    return cfg


def validate_config(path: str | Path) -> dict:
    """Read, validate and normalize a YAML config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path} is not valid YAML: {exc}") from exc
    return normalize_config(data)


def config_digest(cfg: Mapping) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
