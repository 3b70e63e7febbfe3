"""Run configuration: one YAML file wires a whole experiment together.

Component sections (`provider`, `taggers`, `analyzer`) name a registered
implementation plus its constructor options; `table` options are paths
to JSON lookup files, resolved relative to the config file.  Everything
has a default except the corpus location and the lookup tables, which
have no sensible ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .candidates import (ANALYZERS, AnalyzerInterface, TAGGERS,
                         TaggerInterface, morph_from_obj)
from .encoding import (EmbeddingProviderInterface, PROVIDERS, VARIANTS,
                       VariantFlags)
from .model import TrainingConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    corpus_dir: Path
    out_dir: Path
    provider: EmbeddingProviderInterface
    taggers: list[TaggerInterface]
    analyzer: AnalyzerInterface
    training: TrainingConfig
    split_ratio: float = 0.7
    split_seed: int = 0
    baselines: tuple[str, ...] = ("knn", "logistic", "svm")
    variants: list[tuple[str, VariantFlags]] = field(default_factory=list)


def _load_table(value, base_dir: Path, section: str) -> dict:
    if isinstance(value, dict):
        return value
    path = (base_dir / value).resolve() if not Path(value).is_absolute() \
        else Path(value)
    if not path.exists():
        raise ConfigError(f"{section}: table file {path} does not exist")
    return json.loads(path.read_text(encoding="utf-8"))


def _build_component(spec: dict, registry: dict, kind: str, base_dir: Path):
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(f"{kind} section needs a 'name' key")
    name = spec["name"]
    if name not in registry:
        raise ConfigError(
            f"unknown {kind} {name!r}; registered: {sorted(registry)}")
    options = {k: v for k, v in spec.items() if k != "name"}
    if "table" in options:
        options["table"] = _load_table(options["table"], base_dir, kind)
        if kind == "analyzer":
            options["table"] = {surface: morph_from_obj(obj)
                                for surface, obj in options["table"].items()}
    try:
        return registry[name](**options)
    except TypeError as exc:
        raise ConfigError(f"{kind} {name!r}: {exc}") from exc


def _parse_variant(value) -> VariantFlags:
    if isinstance(value, str):
        if value not in VARIANTS:
            raise ConfigError(
                f"unknown variant {value!r}; choose from {sorted(VARIANTS)}")
        return VARIANTS[value]
    if isinstance(value, dict):
        try:
            return VariantFlags.from_json(value)
        except KeyError as exc:
            raise ConfigError(
                f"variant needs append/mask/filter keys, missing {exc}")
    raise ConfigError(f"cannot parse variant from {value!r}")


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    base_dir = path.parent
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    def resolve(key, default=None):
        value = raw.get(key, default)
        if value is None:
            raise ConfigError(f"{path}: missing required key {key!r}")
        p = Path(value)
        return p if p.is_absolute() else (base_dir / p)

    corpus_dir = resolve("corpus_dir")
    out_dir = resolve("out_dir", "runs")

    provider = _build_component(
        raw.get("provider", {"name": "hash"}), PROVIDERS, "provider",
        base_dir)
    tagger_specs = raw.get("taggers", [])
    if not isinstance(tagger_specs, list) or not tagger_specs:
        raise ConfigError(f"{path}: 'taggers' must be a non-empty list")
    taggers = [_build_component(spec, TAGGERS, "tagger", base_dir)
               for spec in tagger_specs]
    analyzer = _build_component(
        raw.get("analyzer", {"name": "lookup", "table": {}}), ANALYZERS,
        "analyzer", base_dir)

    training_raw = dict(raw.get("training", {}))
    if "variant" in training_raw:
        training_raw["variant"] = _parse_variant(training_raw["variant"])
    try:
        training = TrainingConfig(**training_raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: training section: {exc}") from exc

    split = raw.get("split", {})
    variant_names = raw.get("variants", [name for name, _ in VARIANTS.items()])
    variants = [(name, _parse_variant(name)) for name in variant_names]

    baselines = tuple(raw.get("baselines", ("knn", "logistic", "svm")))
    from .baselines import BASELINES
    unknown = [b for b in baselines if b not in BASELINES]
    if unknown:
        raise ConfigError(
            f"{path}: unknown baselines {unknown}; "
            f"registered: {sorted(BASELINES)}")

    return RunConfig(
        corpus_dir=corpus_dir,
        out_dir=out_dir,
        provider=provider,
        taggers=taggers,
        analyzer=analyzer,
        training=training,
        split_ratio=float(split.get("ratio", 0.7)),
        split_seed=int(split.get("seed", 0)),
        baselines=baselines,
        variants=variants,
    )
