"""Run configuration: one JSON document with sections ``gen``,
``pipeline``, ``similarity``, ``cluster`` and ``eval`` plus a top-level
``seed``. Unknown keys anywhere are rejected.

Overrides use dotted paths (``pipeline.rounds=3``,
``pipeline.sgd_inter.lr_base=0.01``); values are parsed as JSON when
possible and kept as strings otherwise. ``IICS_SEED`` in the environment
replaces the seed after all overrides.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .clustering import LINKAGES
from .nn import SgdConfig
from .pipeline import PipelineConfig
from .similarity import InterSimConfig
from .synthgen import GenConfig

SEED_ENV = "IICS_SEED"
SECTIONS = ("gen", "pipeline", "similarity", "cluster", "eval")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    query_fraction: float = 0.25
    bins: int = 20

    def __post_init__(self) -> None:
        if not 0.0 < self.query_fraction < 1.0:
            raise ValueError(f"invalid eval field 'query_fraction': {self.query_fraction!r}")
        if self.bins < 1:
            raise ValueError(f"invalid eval field 'bins': {self.bins!r}")


@dataclass(frozen=True)
class ClusterSection:
    linkage: str = "average"

    def __post_init__(self) -> None:
        if self.linkage not in LINKAGES:
            raise ValueError(f"invalid cluster field 'linkage': {self.linkage!r}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    gen: GenConfig = field(default_factory=GenConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    similarity: InterSimConfig = field(default_factory=InterSimConfig)
    cluster: ClusterSection = field(default_factory=ClusterSection)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        for name in SECTIONS:
            out[name] = _section_dict(getattr(self, name))
        return out


def _section_dict(obj) -> dict:
    d = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, SgdConfig):
            v = _section_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        d[f.name] = v
    return d


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]}")
    kwargs = {}
    for k, v in data.items():
        if k in ("sgd_intra", "sgd_inter") and cls is PipelineConfig:
            v = _build(SgdConfig, v, f"{where}.{k}")
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def from_dict(data: dict, env: dict | None = None) -> RunConfig:
    """Validate a raw config mapping. The seed (top-level or ``IICS_SEED``)
    is copied into the generator and pipeline sections."""
    env = os.environ if env is None else env
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    seed = data.get("seed", 0)
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"invalid seed {seed!r}")
    gen = dict(data.get("gen", {}), seed=seed)
    cluster = _build(ClusterSection, data.get("cluster", {}), "cluster")
    pipe = dict(data.get("pipeline", {}), seed=seed)
    pipe.setdefault("linkage", cluster.linkage)
    return RunConfig(
        seed=seed,
        gen=_build(GenConfig, gen, "gen"),
        pipeline=_build(PipelineConfig, pipe, "pipeline"),
        similarity=_build(InterSimConfig, data.get("similarity", {}), "similarity"),
        cluster=cluster,
        eval=_build(EvalConfig, data.get("eval", {}), "eval"),
    )


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` strings to a raw config mapping."""
    out = json.loads(json.dumps(data))
    for item in overrides:
        key, sep, value = item.partition("=")
        key = key.lstrip("-")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        path = key.split(".")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-object")
        node[path[-1]] = parse_value(value)
    return out


def load(path: str | Path | None, overrides: list[str] = (), env: dict | None = None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(apply_overrides(data, list(overrides)), env)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(
        cfg, seed=seed, gen=replace(cfg.gen, seed=seed), pipeline=replace(cfg.pipeline, seed=seed)
    )
