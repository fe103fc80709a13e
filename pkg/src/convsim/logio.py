"""On-disk formats: event logs, experiment config files and model matrices.

Event log: one JSON object per line, keys in this fixed order::

    organic / conversion: schema_version, t, user_id, kind, product_id
    bandit:               schema_version, t, user_id, kind, recommended_id, clicked

Timelines are written one after another in corpus order; users without any
event produce no lines.

Model file: a ``rows cols`` header line followed by ``rows`` lines of
space-separated decimals (shortest round-trip representation).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np

from .agents import AgentSpec, PolicyModel, TrainingConfig
from .attribution import AttributionConfig
from .config import ExperimentSpec
from .env import EnvConfig
from .events import BANDIT, KINDS, Event, Timeline
from .scenario import BiasScenario

SCHEMA_VERSION = 1
PathLike = Union[str, os.PathLike]

_EVENT_KEYS = ("schema_version", "t", "user_id", "kind", "product_id")
_BANDIT_KEYS = ("schema_version", "t", "user_id", "kind", "recommended_id", "clicked")


class LogFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# --- event logs -------------------------------------------------------------


def event_to_record(e: Event) -> dict:
    if e.kind == BANDIT:
        return {
            "schema_version": SCHEMA_VERSION,
            "t": e.t,
            "user_id": e.user_id,
            "kind": e.kind,
            "recommended_id": e.product,
            "clicked": e.clicked,
        }
    return {"schema_version": SCHEMA_VERSION, "t": e.t, "user_id": e.user_id, "kind": e.kind, "product_id": e.product}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def record_to_event(rec: Any) -> Event:
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    version = rec.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r} (this reader handles {SCHEMA_VERSION})")
    kind = rec.get("kind")
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    keys = _BANDIT_KEYS if kind == BANDIT else _EVENT_KEYS
    if set(rec) != set(keys):
        extra, missing = set(rec) - set(keys), set(keys) - set(rec)
        raise ValueError(f"fields do not match schema (unexpected {sorted(extra)}, missing {sorted(missing)})")
    for key in keys[1:3] + keys[4:5]:
        if not _is_int(rec[key]) or rec[key] < 0:
            raise ValueError(f"{key} must be a non-negative integer, got {rec[key]!r}")
    if kind == BANDIT:
        if not isinstance(rec["clicked"], bool):
            raise ValueError(f"clicked must be a boolean, got {rec['clicked']!r}")
        return Event.bandit(rec["t"], rec["user_id"], rec["recommended_id"], rec["clicked"])
    return Event(rec["t"], rec["user_id"], kind, rec["product_id"])


def format_log(corpus: Iterable[Timeline]) -> str:
    lines = []
    for tl in corpus:
        for e in tl.events:
            lines.append(json.dumps(event_to_record(e), separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def write_log(corpus: Iterable[Timeline], path: PathLike) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(format_log(corpus))
    except OSError as exc:
        raise OSError(f"cannot write log {path}: {exc}") from exc


def read_log(path: PathLike) -> list[Timeline]:
    """Parse a log written by :func:`write_log` back into timelines."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read log {path}: {exc}") from exc
    corpus: list[Timeline] = []
    finished: set[int] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            event = record_to_event(json.loads(line))
        except ValueError as exc:  # json.JSONDecodeError is a ValueError
            raise LogFormatError(f"{path}: line {lineno}: {exc}") from None
        if not corpus or corpus[-1].user_id != event.user_id:
            if event.user_id in finished:
                raise LogFormatError(f"{path}: line {lineno}: user {event.user_id} appears in two separate blocks")
            if corpus:
                finished.add(corpus[-1].user_id)
            corpus.append(Timeline(event.user_id))
        tl = corpus[-1]
        if tl.events and event.t < tl.events[-1].t:
            raise LogFormatError(f"{path}: line {lineno}: step {event.t} precedes step {tl.events[-1].t}")
        tl.events.append(event)
    return corpus


# --- model files ------------------------------------------------------------


def format_matrix(matrix: np.ndarray) -> str:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    out = [f"{rows} {cols}"]
    out += [" ".join(repr(float(v)) for v in row) for row in matrix]
    return "\n".join(out) + "\n"


def save_matrix(matrix: np.ndarray, path: PathLike) -> None:
    path = Path(path)
    try:
        path.write_text(format_matrix(matrix), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write matrix {path}: {exc}") from exc


def load_matrix(path: PathLike) -> np.ndarray:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    try:
        rows, cols = (int(v) for v in lines[0].split())
    except (IndexError, ValueError):
        raise LogFormatError(f"{path}: line 1: expected a 'rows cols' header") from None
    if len(lines) != rows + 1:
        raise LogFormatError(f"{path}: expected {rows} rows, found {len(lines) - 1}")
    out = np.empty((rows, cols))
    for i, line in enumerate(lines[1:]):
        try:
            values = [float(v) for v in line.split()]
        except ValueError:
            raise LogFormatError(f"{path}: line {i + 2}: not a list of decimals") from None
        if len(values) != cols or not all(math.isfinite(v) for v in values):
            raise LogFormatError(f"{path}: line {i + 2}: expected {cols} finite values")
        out[i] = values
    return out


def save_model(model: PolicyModel, path: PathLike) -> None:
    save_matrix(model.weights, path)


def load_model(path: PathLike, hyper: TrainingConfig = TrainingConfig()) -> PolicyModel:
    weights = load_matrix(path)
    if weights.shape[1] != weights.shape[0] + 1:
        raise LogFormatError(f"{path}: model matrix must be P x (P+1), got {weights.shape}")
    return PolicyModel(weights, hyper)


# --- config files -----------------------------------------------------------


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _fields(cls) -> dict:
    return {f.name: f for f in dataclasses.fields(cls)}


def _build(cls, data: Any, path: str, convert=None):
    """Instantiate dataclass ``cls`` from a JSON object, naming bad keys by path."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = _fields(cls)
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key")
    kwargs = {}
    for key, value in data.items():
        if convert and key in convert:
            value = convert[key](value, f"{path}.{key}")
        kwargs[key] = value
    for key, value in kwargs.items():
        _check_type(known[key], value, f"{path}.{key}")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        key = next((k for k in known if msg.startswith(k)), None)
        where = f"{path}.{key}" if key else path
        raise ConfigError(f"{where}: {msg}") from None


_NUMBER_FIELDS = {
    "kappa", "ctr_offset", "sale_offset", "sale_scale", "lambda_corr", "gamma", "epsilon",
    "learning_rate", "l2", "fan_click", "clicky_click", "incremental_click", "incremental_norm", "organic_scale",
}
_INT_FIELDS = {
    "num_products", "embed_dim", "max_steps", "master_seed", "epochs", "batch_size", "seed",
    "n_train_users", "n_eval_users", "n_bootstrap", "n_contexts",
}
_BOOL_FIELDS = {"match_product", "common_random_numbers"}


def _check_type(field, value, path):
    name = field.name
    if name in _NUMBER_FIELDS:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        expected = "a number"
    elif name in _INT_FIELDS or (name in ("window", "train_seed", "eval_seed") and value is not None):
        ok = _is_int(value)
        expected = "an integer"
    elif name in _BOOL_FIELDS:
        ok = isinstance(value, bool)
        expected = "a boolean"
    elif name == "baseline":
        ok = value is None or (isinstance(value, (int, float)) and not isinstance(value, bool))
        expected = 'a number or "auto"'
    elif name in ("scheme", "kind", "catalog", "output_dir"):
        ok = isinstance(value, str)
        expected = "a string"
    else:
        return
    if not ok:
        raise ConfigError(f"{path}: expected {expected}, got {value!r}")


def _chain(value, path):
    if isinstance(value, dict):
        extra = set(value) - {"organic", "bandit"}
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}: unknown key")
        try:
            value = [value["organic"], value["bandit"]]
        except KeyError as exc:
            raise ConfigError(f"{path}.{exc.args[0]}: missing required key") from None
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise ConfigError(f"{path}: expected rows of transition probabilities")
    return tuple(tuple(r) for r in value)


def _baseline(value, path):
    if value == "auto":
        return None
    if value is None:
        raise ConfigError(f'{path}: use "auto" to estimate the baseline from logs')
    return value


def _attribution(value, path):
    return _build(AttributionConfig, value, path, {"baseline": _baseline})


def _agent(value, path):
    return _build(AgentSpec, value, path, {"attribution": _attribution})


def _agents(value, path):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of agents")
    return tuple(_agent(v, f"{path}[{i}]") for i, v in enumerate(value))


_SPEC_CONVERT = {
    "env": lambda v, p: _build(EnvConfig, v, p, {"event_chain": _chain}),
    "scenario": lambda v, p: _build(BiasScenario, v, p),
    "logging_policy": _agent,
    "agents": _agents,
    "attribution": _attribution,
    "training": lambda v, p: _build(TrainingConfig, v, p),
}
REQUIRED_KEYS = ("n_train_users", "n_eval_users")


def spec_from_dict(data: Any) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object at top level")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(f"config.{key}: missing required key")
    return _build(ExperimentSpec, data, "config", _SPEC_CONVERT)


def loads_config(text: str) -> ExperimentSpec:
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return spec_from_dict(data)


def parse_config(path: PathLike) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        return loads_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Inverse of :func:`spec_from_dict` (``"auto"`` marks estimated baselines)."""
    data = _plain(spec)
    for section in [data["attribution"], data["logging_policy"]["attribution"], *(a["attribution"] for a in data["agents"])]:
        if section is not None and section["baseline"] is None:
            section["baseline"] = "auto"
    if data["logging_policy"]["attribution"] is None:
        del data["logging_policy"]["attribution"]
    for agent in data["agents"]:
        if agent["attribution"] is None:
            del agent["attribution"]
    return data


def dumps_config(spec: ExperimentSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n"


def config_hash(spec: ExperimentSpec) -> str:
    canonical = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
