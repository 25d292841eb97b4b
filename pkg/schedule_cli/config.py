"""
Run configuration: YAML file merged over defaults, then ``--set`` overrides.
"""

import copy
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Iterable, Optional

import yaml

from schedule_attention import EncoderConfig
from schedule_domain import activity_alphabet, mobility_alphabet
from schedule_io import PersonaCell, SyntheticPersonaSpec, default_persona_cells
from schedule_models import ModelConfig, TrainingConfig

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "OCCUPANCY_SCHEDULES_OUTPUT_ROOT"

_MODEL_DEFAULTS = {
    "layers": 2,
    "d_model": 64,
    "heads": 4,
    "d_ff": None,
    "dropout": 0.1,
    "norm": "post",
    "state_embed_dim": 16,
    "weekday_embed_dim": 4,
    "age_embed_dim": 4,
    "occupation_embed_dim": 4,
}

DEFAULTS = {
    "alphabets": {"mobility": None, "activities": None},
    "corpus": {
        "persons": 1000,
        "sigma": 6.0,
        "max_shift": 18,
        "deterministic_activities": False,
        "seed": 0,
        "cells": None,
    },
    "model": {"generator": dict(_MODEL_DEFAULTS), "imputer": dict(_MODEL_DEFAULTS)},
    "training": {
        "learning_rate": 0.001,
        "batch_size": 64,
        "micro_batch": 4,
        "max_epochs": 200,
        "patience": 5,
        "reveal": "prefix",
        "fold": 0,
        "split_seed": 0,
        "seed": 0,
    },
    "markov": {"alpha": 0.5, "stratify": True, "min_persons": 30},
    "evaluation": {"n": 2000, "seed": 0, "temperature": 1.0},
    "grid": {
        "model.generator.layers": [1, 4, 8],
        "model.generator.d_model": [64, 128],
        "training.learning_rate": [0.001, 0.0005],
        "training.batch_size": [64, 128, 256],
    },
    "grid_imputer": {
        "model.imputer.layers": [1, 2, 4],
        "model.imputer.d_model": [32, 64],
        "training.learning_rate": [0.001, 0.0005],
    },
    "output": {"root": None},
}

ENCODER_KEYS = ("layers", "d_model", "heads", "d_ff", "dropout", "norm")
EMBED_KEYS = ("state_embed_dim", "weekday_embed_dim", "age_embed_dim", "occupation_embed_dim")
TRAINING_KEYS = ("learning_rate", "batch_size", "micro_batch", "max_epochs", "patience", "reveal")

# sweep section -> model section its keys must not name
GRID_SECTIONS = {"grid": "model.imputer.", "grid_imputer": "model.generator."}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ValueError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and where not in GRID_SECTIONS:
            if not isinstance(value, dict):
                raise ValueError(f"configuration key {where!r} must be a mapping")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def _blocks(rows):
    return tuple(tuple(row) for row in rows) if rows else None


def set_dotted(config: dict, dotted: str, value) -> None:
    """Assign ``value`` at a dotted key such as ``training.learning_rate``."""
    parts = dotted.split(".")
    node = config
    for i, part in enumerate(parts[:-1]):
        if part not in node or not isinstance(node[part], dict):
            raise ValueError(f"unknown configuration key {'.'.join(parts[: i + 1])!r}")
        node = node[part]
        if i == 0 and part in GRID_SECTIONS:
            node[".".join(parts[i + 1 :])] = value
            return
    if parts[-1] not in node:
        raise ValueError(f"unknown configuration key {dotted!r}")
    node[parts[-1]] = value


def parse_override(text: str):
    """``key=value`` with the value parsed as YAML."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ValueError(f"override must look like section.key=value, got {text!r}")
    return key.strip(), yaml.safe_load(raw)


class RunConfig:
    """
    Resolved configuration of one command.

    :param data: nested mapping with the sections of ``DEFAULTS``
    """

    def __init__(self, data: Optional[dict] = None):
        self.data = _merge(copy.deepcopy(DEFAULTS), data or {})
        self.validate()

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Iterable[str] = ()) -> "RunConfig":
        data = {}
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
            if not isinstance(data, dict):
                raise ValueError(f"{path}: configuration must be a mapping")
        config = cls(data)
        for text in overrides:
            key, value = parse_override(text)
            set_dotted(config.data, key, value)
        config.validate()
        return config

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def validate(self) -> None:
        self.model_config("generator")
        self.model_config("imputer")
        self.persona_spec()
        self.alphabets()
        if self.data["evaluation"]["n"] < 1:
            raise ValueError("evaluation.n must be positive")
        for section, foreign in GRID_SECTIONS.items():
            for key, values in self.data[section].items():
                if not isinstance(values, list) or not values:
                    raise ValueError(f"{section} entry {key!r} must be a non-empty list")
                if key.startswith(foreign):
                    raise ValueError(f"{section} entry {key!r} belongs to the other model's sweep")

    def alphabets(self):
        """
        (mobility, activity) alphabets named in the ``alphabets`` section. An
        alphabet left unset there is None, so corpora keep their own labels.
        """
        labels = self.data["alphabets"]
        mobility = mobility_alphabet(labels["mobility"]) if labels["mobility"] else None
        if not (labels["mobility"] or labels["activities"]):
            return mobility, None
        return mobility, activity_alphabet(labels["activities"], mobility)

    def model_config(self, kind: str, max_len: int = 1008) -> ModelConfig:
        section = self.data["model"][kind]
        unknown = set(section) - set(ENCODER_KEYS) - set(EMBED_KEYS)
        if unknown:
            raise ValueError(f"unknown keys in model.{kind}: {sorted(unknown)}")
        encoder = EncoderConfig(max_len=max_len, **{k: section[k] for k in ENCODER_KEYS if k in section})
        training = TrainingConfig(**{k: self.data["training"][k] for k in TRAINING_KEYS})
        return ModelConfig(encoder=encoder, training=training, **{k: section[k] for k in EMBED_KEYS if k in section})

    def persona_spec(self) -> SyntheticPersonaSpec:
        corpus = self.data["corpus"]
        if corpus["cells"]:
            cells = tuple(
                PersonaCell(
                    age_class=c["age_class"],
                    occupation_class=c["occupation_class"],
                    weekday_segments=tuple(tuple(s) for s in c["weekday_segments"]),
                    weekend_segments=tuple(tuple(s) for s in c.get("weekend_segments", ())),
                    car_probability=c.get("car_probability", 0.5),
                    weight=c.get("weight", 1.0),
                    activity_profile=_blocks(c.get("activity_profile")),
                )
                for c in corpus["cells"]
            )
        else:
            cells = default_persona_cells()
        labels = self.data["alphabets"]["mobility"]
        activities = self.data["alphabets"]["activities"]
        return SyntheticPersonaSpec(
            cells=cells,
            sigma=float(corpus["sigma"]),
            max_shift=int(corpus["max_shift"]),
            deterministic_activities=bool(corpus["deterministic_activities"]),
            mobility_labels=tuple(labels) if labels else None,
            activity_labels=tuple(activities) if activities else None,
        )

    def output_root(self) -> Path:
        root = self.data["output"]["root"] or os.environ.get(OUTPUT_ROOT_ENV) or "runs"
        return Path(root)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=False)

    def config_hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def with_overrides(self, overrides: dict) -> "RunConfig":
        clone = RunConfig(copy.deepcopy(self.data))
        for key, value in overrides.items():
            set_dotted(clone.data, key, value)
        clone.validate()
        return clone

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(data)
