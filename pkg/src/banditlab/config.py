"""Experiment configuration: arms, horizon, assignment weights, protocol knobs.

Loaded from a JSON document; defaults reproduce the reference study setup
(T=50, K=5, 10-second dwell, 70% attention pass bar, epsilon 0.1, ETC
constant 0.5, assignment weights 0.25 self-selected / 0.125 each other).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import policies
from .errors import ConfigError

ASSIGNABLE_POLICIES = ("self_selected", "ucb", "ts", "etc", "eps_greedy", "cycle", "repeat")

DEFAULT_ASSIGNMENT_WEIGHTS = {
    "self_selected": 0.25,
    "ucb": 0.125,
    "ts": 0.125,
    "etc": 0.125,
    "eps_greedy": 0.125,
    "cycle": 0.125,
    "repeat": 0.125,
}


@dataclass
class ExperimentConfig:
    K: int = 5
    T: int = 50
    arm_labels: Optional[list[str]] = None
    assignment_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_ASSIGNMENT_WEIGHTS))
    min_dwell_seconds: float = 10.0
    attention_pass_threshold: float = 0.70
    likert_max: int = 9
    etc_constant: float = 0.5
    epsilon: float = 0.1
    fixed_sequences: Optional[dict[str, list[int]]] = None
    reading_memory_questions: int = 3
    rating_memory_questions: int = 3
    rating_memory_threshold: int = 5
    gate_question: str = "What is 3 + 4?"
    gate_answer: int = 7
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.K < 2:
            raise ConfigError("K must be >= 2")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.likert_max < 2:
            raise ConfigError("likert_max must be >= 2")
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.min_dwell_seconds < 0:
            raise ConfigError("min_dwell_seconds must be >= 0")
        if not (0.0 <= self.attention_pass_threshold <= 1.0):
            raise ConfigError("attention_pass_threshold must lie in [0, 1]")
        unknown = set(self.assignment_weights) - set(ASSIGNABLE_POLICIES)
        if unknown:
            raise ConfigError(f"unknown policies in assignment_weights: {sorted(unknown)}")
        if any(w < 0 for w in self.assignment_weights.values()):
            raise ConfigError("assignment weights must be non-negative")
        total = sum(self.assignment_weights.values())
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ConfigError(f"assignment weights must sum to 1, got {total}")
        if self.arm_labels is not None and len(self.arm_labels) != self.K:
            raise ConfigError("arm_labels length must equal K")
        for name, seq in (self.fixed_sequences or {}).items():
            if len(seq) != self.T:
                raise ConfigError(f"fixed sequence {name!r} has length {len(seq)}, expected T={self.T}")
            if any(a < 1 or a > self.K for a in seq):
                raise ConfigError(f"fixed sequence {name!r} has arms outside [1, {self.K}]")

    def sequence_for(self, name: str) -> list[int]:
        """The pull sequence for a fixed-sequence policy label ('cycle' or 'repeat')."""
        if self.fixed_sequences and name in self.fixed_sequences:
            return list(self.fixed_sequences[name])
        if name == "cycle":
            return policies.cycle_sequence(self.T, self.K)
        if name == "repeat":
            return policies.repeat_sequence(self.T, self.K)
        raise ConfigError(f"no fixed sequence named {name!r}")

    @property
    def m(self) -> Optional[int]:
        return self.T // self.K if self.T % self.K == 0 else None


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "K": config.K,
        "T": config.T,
        "arm_labels": config.arm_labels,
        "assignment_weights": config.assignment_weights,
        "min_dwell_seconds": config.min_dwell_seconds,
        "attention_pass_threshold": config.attention_pass_threshold,
        "likert_max": config.likert_max,
        "etc_constant": config.etc_constant,
        "epsilon": config.epsilon,
        "fixed_sequences": config.fixed_sequences,
        "reading_memory_questions": config.reading_memory_questions,
        "rating_memory_questions": config.rating_memory_questions,
        "rating_memory_threshold": config.rating_memory_threshold,
        "gate_question": config.gate_question,
        "gate_answer": config.gate_answer,
        "rng_seed": config.rng_seed,
    }


def config_from_dict(doc: dict) -> ExperimentConfig:
    known = set(config_to_dict(ExperimentConfig()))
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return ExperimentConfig(**doc)


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
