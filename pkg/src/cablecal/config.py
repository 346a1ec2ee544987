"""Workbench run configuration: profiles, JSON round-trip, validation.

A profile bundles every knob that trades fidelity for wall time.  The
default "desk" profile finishes the full study on a laptop in minutes;
"paper" matches the published training recipe and dataset scale; "micro"
is deliberately tiny so the command-line round-trip tests run in
seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .calibrator import CalibratorConfig
from .errors import ConfigError
from .mlp import TrainConfig
from .protocol import CollectionPlan

PROFILES = ("desk", "paper", "micro")


@dataclass(frozen=True)
class WorkbenchConfig:
    """Everything a full study run needs besides the output directory."""

    profile: str = "desk"
    sparsity_denominators: tuple = (2, 3, 4, 5, 6)
    sweep_velocity: float = 0.15
    test_duration: float = 1200.0
    segment_count: int = 4
    segment_duration: float = 300.0
    hidden_sizes: tuple = (128, 64)
    epochs: int = 150
    batch_size: int = 1024
    learning_rate: float = 0.001
    seeds: tuple = (0, 1, 2)
    baseline_seeds: tuple = (0, 1, 2, 3, 4)
    load_mass: float = 0.5

    def validated(self) -> "WorkbenchConfig":
        if not self.sparsity_denominators:
            raise ConfigError("at least one sparsity denominator is required")
        if any(int(n) < 1 for n in self.sparsity_denominators):
            raise ConfigError("sparsity denominators must be positive integers")
        if self.test_duration <= 0 or self.segment_duration <= 0:
            raise ConfigError("test durations must be positive")
        if self.segment_count < 1:
            raise ConfigError("need at least one test segment")
        if not self.hidden_sizes or any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden layer sizes must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if not self.seeds or not self.baseline_seeds:
            raise ConfigError("seed lists must be non-empty")
        if self.load_mass < 0:
            raise ConfigError("load mass cannot be negative")
        return self

    def plan(self) -> CollectionPlan:
        return CollectionPlan(
            sparsity_denominators=tuple(int(n) for n in self.sparsity_denominators),
            sweep_velocity=self.sweep_velocity,
            test_duration=self.test_duration,
            segment_count=self.segment_count,
            segment_duration=self.segment_duration,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
        )

    def calibrator_config(self, **kwargs) -> CalibratorConfig:
        return CalibratorConfig.for_groups(
            hidden_sizes=tuple(int(h) for h in self.hidden_sizes),
            train=self.train_config(),
            seeds=tuple(int(s) for s in self.seeds),
            **kwargs,
        )

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "sparsity_denominators": list(self.sparsity_denominators),
            "sweep_velocity": self.sweep_velocity,
            "test_duration": self.test_duration,
            "segment_count": self.segment_count,
            "segment_duration": self.segment_duration,
            "hidden_sizes": list(self.hidden_sizes),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seeds": list(self.seeds),
            "baseline_seeds": list(self.baseline_seeds),
            "load_mass": self.load_mass,
        }

    @staticmethod
    def from_dict(d: dict) -> "WorkbenchConfig":
        known = set(WorkbenchConfig.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("sparsity_denominators", "hidden_sizes", "seeds", "baseline_seeds"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return WorkbenchConfig(**kwargs).validated()


def profile_config(name: str) -> WorkbenchConfig:
    if name == "desk":
        return WorkbenchConfig()
    if name == "paper":
        return WorkbenchConfig(
            profile="paper",
            sweep_velocity=0.041,
            hidden_sizes=(256, 128, 64),
            epochs=600,
            learning_rate=0.0005,
            seeds=(0, 1, 2, 3, 4),
        )
    if name == "micro":
        return WorkbenchConfig(
            profile="micro",
            sparsity_denominators=(2,),
            test_duration=30.0,
            segment_count=2,
            segment_duration=12.0,
            hidden_sizes=(16, 8),
            epochs=8,
            batch_size=256,
            seeds=(0,),
            baseline_seeds=(0, 1),
        )
    raise ConfigError(f"unknown profile {name!r}; choose from {PROFILES}")


def load_config(path: str | None, profile: str | None) -> WorkbenchConfig:
    """Resolve the effective config from an optional file and profile name."""
    if path is None:
        return profile_config(profile or "desk")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    if profile:
        base = profile_config(profile).to_dict()
        base.update(raw)
        raw = base
    return WorkbenchConfig.from_dict(raw)


def save_config(config: WorkbenchConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
