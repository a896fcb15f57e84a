"""YAML pipeline configuration with dotted-key overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import yaml


def default_config() -> dict:
    text = resources.files("proxy_align").joinpath("data/default_config.yaml").read_text()
    return yaml.safe_load(text)


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ValueError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise ValueError(f"empty key in override {item!r}")
    return keys, yaml.safe_load(raw) if raw.strip() else ""


def set_path(cfg: dict, keys: list[str], value) -> None:
    node = cfg
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = node[k] = {}
        node = nxt
    node[keys[-1]] = value


def get_path(cfg: dict, dotted: str, default=None):
    node = cfg
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            return default
        node = node[k]
    return node


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> dict:
    cfg = default_config()
    if path is not None:
        user = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(user, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        cfg = deep_merge(cfg, user)
    for item in overrides:
        keys, value = parse_override(item)
        set_path(cfg, keys, value)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    t = cfg["text"]
    if not 1 <= int(t["max_n"]) <= 10:
        raise ValueError("text.max_n must be in 1..10")
    if not 0 <= float(t["min_df"]) < float(t["max_df"]) <= 1:
        raise ValueError("need 0 <= text.min_df < text.max_df <= 1")
    if int(t["min_votes"]) < 1 or int(t["window_years"]) < 1:
        raise ValueError("text.min_votes and text.window_years must be positive")
    s = cfg["svr"]
    lo, hi = s["c_exponents"]
    if lo > hi:
        raise ValueError("svr.c_exponents must be [low, high]")
    if float(s["epsilon"]) < 0 or int(s["folds"]) < 2:
        raise ValueError("svr.epsilon must be >= 0 and svr.folds >= 2")


def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]
