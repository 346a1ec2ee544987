"""Experiment grid over the calibrator: feature removal, test-time noise
injection, torque modification, per-joint groups, and the homing studies.

Two ablation methods exist.  Removal retrains from scratch with the
target channels dropped from training and testing alike, shrinking the
network input.  Inaccurate keeps the trained baseline model and corrupts
the target channels at evaluation time only, with fresh per-record noise
scaled by each channel's training-set spread; training artifacts are
shared bit for bit with the baseline.

Results are kept as one record per (cell, seed) plus a per-cell seed
aggregate, serialized to JSON by the result store helpers.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import calibrator as cal
from .calibrator import (
    AggregateMetrics,
    Calibrator,
    CalibratorConfig,
    JointMetrics,
    aggregate,
)
from .errors import IoError, UnknownGroup
from .seeding import derive_seed
from .statestream import DEFAULT_REGISTRY, Dataset, FeatureGroupRegistry

METHODS = ("removal", "inaccurate")
TORQUE_OPS = ("none", "noise", "neg", "x3")
NOISE_KINDS = ("uniform", "gaussian")


@dataclass(frozen=True)
class AblationSpec:
    """One cell of the ablation matrix."""

    method: str
    target: str = ""  # feature-group name; empty reproduces the baseline
    noise_scale: float = 2.0
    noise_kind: str = "uniform"

    def validated(self, registry: FeatureGroupRegistry = DEFAULT_REGISTRY):
        if self.method not in METHODS:
            raise ValueError(f"ablation method must be one of {METHODS}")
        if self.target:
            registry.indices(self.target)  # raises UnknownGroup
        if self.method == "inaccurate" and self.noise_scale <= 0:
            raise ValueError("inaccurate ablation needs a positive noise scale")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}")
        return self

    def label(self) -> str:
        return f"{self.method}:{self.target or 'baseline'}"


@dataclass
class RunResult:
    """Per-seed metrics and their aggregate for one experiment cell."""

    label: str
    per_seed: list
    agg: AggregateMetrics
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "per_seed": [m.display() for m in self.per_seed],
            "aggregate": self.agg.display(),
            "meta": self.meta,
        }


def noise_corruption(channels, sigmas, scale, rng, kind="uniform"):
    """Additive per-record noise on the given channels.

    Uniform noise spans [-scale*sigma, +scale*sigma] per channel (the
    "range of 2 times the standard deviation" reading); the gaussian
    switch uses scale*sigma as the standard deviation instead.
    """
    channels = np.asarray(channels, dtype=int)
    sigmas = np.asarray(sigmas, dtype=float)

    def corrupt(x):
        shape = (x.shape[0], channels.size)
        if kind == "gaussian":
            noise = rng.normal(0.0, scale * sigmas, size=shape)
        else:
            noise = rng.uniform(-scale * sigmas, scale * sigmas, size=shape)
        x[:, channels] += noise
        return x

    return corrupt


def torque_corruption(op, channels, sigmas, rng):
    """Test-time modification of the torque channels."""
    if op not in TORQUE_OPS:
        raise ValueError(f"torque op must be one of {TORQUE_OPS}")
    if op == "none":
        return None
    channels = np.asarray(channels, dtype=int)
    sigmas = np.asarray(sigmas, dtype=float)

    def corrupt(x):
        if op == "noise":
            x[:, channels] += rng.uniform(
                -sigmas, sigmas, size=(x.shape[0], channels.size)
            )
        elif op == "neg":
            x[:, channels] *= -1.0
        else:
            x[:, channels] *= 3.0
        return x

    return corrupt


def train_seeds(
    train: Dataset,
    config: CalibratorConfig,
    seeds,
    meta: dict | None = None,
) -> tuple:
    """Train one calibrator per seed; returns (calibrators, histories)."""
    calibrators = []
    histories = []
    for seed in seeds:
        c, h = cal.train_calibrator(train, config, seed=seed, meta=dict(meta or {}))
        calibrators.append(c)
        histories.append(h)
    return calibrators, histories


def evaluate_seeds(calibrators, test: Dataset, label: str, corrupt_for=None, meta=None):
    """Evaluate each seed's model; corrupt_for(k) builds seed k's corruption."""
    per_seed = []
    for k, c in enumerate(calibrators):
        corrupt = corrupt_for(k, c) if corrupt_for is not None else None
        per_seed.append(cal.evaluate(c, test, corrupt=corrupt))
    return RunResult(
        label=label, per_seed=per_seed, agg=aggregate(per_seed), meta=dict(meta or {})
    )


def removal_run(
    train: Dataset,
    test: Dataset,
    config: CalibratorConfig,
    group: str,
    seeds,
    registry: FeatureGroupRegistry = DEFAULT_REGISTRY,
) -> tuple:
    """Retrain without a feature group; returns (result, histories)."""
    spec = AblationSpec(method="removal", target=group).validated(registry)
    cfg = config.with_extra_exclusions([group], registry) if group else config
    calibrators, histories = train_seeds(train, cfg, seeds, meta={"cell": spec.label()})
    result = evaluate_seeds(
        calibrators, test, spec.label(), meta={"method": "removal", "target": group}
    )
    return result, histories


def inaccurate_run(
    calibrators,
    test: Dataset,
    group: str,
    noise_seed: int,
    scale: float = 2.0,
    kind: str = "uniform",
    registry: FeatureGroupRegistry = DEFAULT_REGISTRY,
) -> RunResult:
    """Corrupt a group at test time only, on the already-trained models."""
    spec = AblationSpec(
        method="inaccurate", target=group, noise_scale=scale, noise_kind=kind
    ).validated(registry)

    def corrupt_for(k, c):
        if not group:
            return None
        channels = registry.indices(group)
        sigmas = c.channel_sigma(channels)
        rng = np.random.default_rng(derive_seed(noise_seed, spec.label(), str(k)))
        return noise_corruption(channels, sigmas, scale, rng, kind=kind)

    return evaluate_seeds(
        calibrators,
        test,
        spec.label(),
        corrupt_for=corrupt_for,
        meta={"method": "inaccurate", "target": group, "noise_scale": scale},
    )


def torque_run(
    calibrators,
    test: Dataset,
    op: str,
    noise_seed: int,
    registry: FeatureGroupRegistry = DEFAULT_REGISTRY,
) -> RunResult:
    """Apply one torque modification at test time on the baseline models."""
    label = f"torque:{op}"

    def corrupt_for(k, c):
        channels = registry.indices("torque")
        sigmas = c.channel_sigma(channels)
        rng = np.random.default_rng(derive_seed(noise_seed, label, str(k)))
        return torque_corruption(op, channels, sigmas, rng)

    return evaluate_seeds(
        calibrators, test, label, corrupt_for=corrupt_for, meta={"torque_op": op}
    )


def homing_series(calibrators, segments, label: str) -> list:
    """Aggregate metrics per homing-separated test segment."""
    rows = []
    for k, segment in enumerate(segments):
        result = evaluate_seeds(calibrators, segment, f"{label}:segment{k}")
        rows.append(
            {
                "segment": k,
                "homings": segment.meta.get("homings_seen", k),
                "aggregate": result.agg,
            }
        )
    return rows


# Default experiment matrix mirroring the published study layout.
REMOVAL_GROUPS = (
    "operating_status",
    "joint_poses",
    "end_effector",
    "all_poses",
    "velocity",
    "torque",
    "jacobian",
    "joint_1",
    "joint_2",
    "joint_3",
)
INACCURATE_GROUPS = (
    "joint_poses",
    "end_effector",
    "all_poses",
    "velocity",
    "torque",
    "jacobian",
    "joint_1",
    "joint_2",
    "joint_3",
)


def default_manifest() -> list:
    """Every cell of the removal and inaccurate studies, as plain dicts."""
    cells = [{"method": "removal", "target": ""}]
    cells += [{"method": "removal", "target": g} for g in REMOVAL_GROUPS]
    cells += [
        {"method": "inaccurate", "target": g, "noise_scale": 2.0}
        for g in INACCURATE_GROUPS
    ]
    return cells


def write_manifest(path, cells) -> None:
    with open(path, "w") as fh:
        json.dump({"cells": cells}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> list:
    with open(path) as fh:
        return json.load(fh)["cells"]


class ResultStore:
    """One JSON file per (cell, seed) plus one aggregate per cell."""

    def __init__(self, root):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.root, name.replace(":", "_") + ".json")

    def put(self, result: RunResult, seeds) -> None:
        for k, metrics in enumerate(result.per_seed):
            payload = {
                "label": result.label,
                "seed": int(seeds[k]),
                "metrics": metrics.display(),
                "meta": result.meta,
            }
            self._write(self._path(f"{result.label}_seed{seeds[k]}"), payload)
        self._write(self._path(f"{result.label}_aggregate"), result.to_dict())

    def put_series(self, label: str, rows) -> None:
        payload = {
            "label": label,
            "rows": [
                {
                    "segment": r["segment"],
                    "homings": r["homings"],
                    "aggregate": r["aggregate"].display(),
                }
                for r in rows
            ],
        }
        self._write(self._path(label), payload)

    def _write(self, path, payload) -> None:
        try:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise IoError(f"cannot write result file {path}: {exc}") from exc

    def read_all(self) -> dict:
        out = {}
        for name in sorted(os.listdir(self.root)):
            if not name.endswith(".json"):
                continue
            with open(os.path.join(self.root, name)) as fh:
                out[name[: -len(".json")]] = json.load(fh)
        return out
