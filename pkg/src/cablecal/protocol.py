"""Data-collection protocol: which plant sessions produce which datasets.

Three session recipes cover the whole study:

* `collect_standard` - zigzag training rasters at several sparsities, then
  one long random-sinusoid test run.  Used for the unloaded and loaded
  dataset pairs.
* `collect_homing_suite` - the standard session continued with K short
  test segments separated by re-homing events.  Training data contains no
  homing, so homing effects are strictly a test-time surprise.
* `collect_homed_suite` - a second independent session where every
  training raster starts with a homing, so the training set itself spans
  several encoder-offset regimes, plus its own homing-separated segments.

Each recipe derives all of its internal seeds from a single integer, so
one seed reproduces the session byte for byte.
"""

from __future__ import annotations

import numpy as np

from . import trajectories
from .kinematics import KinematicParams
from .plant import CablePlant, PlantParams
from .seeding import derive_seed
from .statestream import Dataset, SessionCollector
from .trajectories import SinusoidSpec, ZigzagSpec


class CollectionPlan:
    """Trajectory mix and sizes for one dataset family."""

    def __init__(
        self,
        sparsity_denominators=(2, 3, 4, 5, 6),
        limits=trajectories.DEFAULT_LIMITS,
        sweep_velocity=0.15,
        step_velocity=0.35,
        insert_velocity=0.05,
        test_duration=1200.0,
        segment_count=4,
        segment_duration=300.0,
    ):
        self.sparsity_denominators = tuple(sparsity_denominators)
        self.limits = limits
        self.sweep_velocity = sweep_velocity
        self.step_velocity = step_velocity
        self.insert_velocity = insert_velocity
        self.test_duration = test_duration
        self.segment_count = segment_count
        self.segment_duration = segment_duration

    def to_dict(self) -> dict:
        return {
            "sparsity_denominators": list(self.sparsity_denominators),
            "limits": [list(pair) for pair in self.limits],
            "sweep_velocity": self.sweep_velocity,
            "step_velocity": self.step_velocity,
            "insert_velocity": self.insert_velocity,
            "test_duration": self.test_duration,
            "segment_count": self.segment_count,
            "segment_duration": self.segment_duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CollectionPlan":
        d = dict(d)
        d["limits"] = tuple(tuple(pair) for pair in d["limits"])
        return cls(**d)

    def zigzag_specs(self):
        return [
            ZigzagSpec(
                sparsity=1.0 / d,
                limits=self.limits,
                sweep_velocity=self.sweep_velocity,
                step_velocity=self.step_velocity,
                insert_velocity=self.insert_velocity,
            )
            for d in self.sparsity_denominators
        ]

    def _train_meta(self, seed: int, load_mass: float) -> dict:
        return {
            "kind": "train",
            "seed": seed,
            "load_mass": load_mass,
            "trajectories": {
                "type": "zigzag",
                "sparsities": [f"1/{d}" for d in self.sparsity_denominators],
            },
        }

    def _test_meta(self, seed: int, load_mass: float, **extra) -> dict:
        meta = {
            "kind": "test",
            "seed": seed,
            "load_mass": load_mass,
            "trajectories": {"type": "random_sinusoid"},
        }
        meta.update(extra)
        return meta


def _open_session(
    plan: CollectionPlan,
    params: PlantParams,
    kin: KinematicParams,
    seed: int,
    load_mass: float,
) -> SessionCollector:
    plant = CablePlant(params, kin, seed=derive_seed(seed, "plant"))
    plant.set_load(load_mass)
    rng = np.random.default_rng(derive_seed(seed, "sensor"))
    return SessionCollector(plant, rng)


def _run_training_rasters(col: SessionCollector, plan: CollectionPlan, home_each: bool):
    for spec in plan.zigzag_specs():
        if home_each:
            col.home()
        col.run(trajectories.zigzag(spec))


def _run_segments(col: SessionCollector, plan: CollectionPlan, seed: int, load_mass: float):
    segments = []
    for k in range(plan.segment_count):
        if k > 0:
            col.home()
        col.run(
            trajectories.random_sinusoid(
                SinusoidSpec(
                    duration=plan.segment_duration,
                    seed=derive_seed(seed, "segment", str(k)),
                    limits=plan.limits,
                )
            )
        )
        segments.append(
            col.harvest(
                plan._test_meta(seed, load_mass, segment=k, homings_seen=k)
            )
        )
    return segments


def collect_standard(
    plan: CollectionPlan,
    params: PlantParams,
    kin: KinematicParams,
    seed: int,
    load_mass: float = 0.0,
) -> tuple:
    """One session: zigzag training rasters, then a sinusoid test run."""
    col = _open_session(plan, params, kin, seed, load_mass)
    _run_training_rasters(col, plan, home_each=False)
    train = col.harvest(plan._train_meta(seed, load_mass))
    col.run(
        trajectories.random_sinusoid(
            SinusoidSpec(
                duration=plan.test_duration,
                seed=derive_seed(seed, "test"),
                limits=plan.limits,
            )
        )
    )
    test = col.harvest(plan._test_meta(seed, load_mass))
    return train, test


def collect_homing_suite(
    plan: CollectionPlan,
    params: PlantParams,
    kin: KinematicParams,
    seed: int,
    load_mass: float = 0.0,
) -> tuple:
    """Standard session continued with homing-separated test segments.

    Returns (train, test, segments); segment k has seen k homings, and
    the training data none at all.
    """
    col = _open_session(plan, params, kin, seed, load_mass)
    _run_training_rasters(col, plan, home_each=False)
    train = col.harvest(plan._train_meta(seed, load_mass))
    col.run(
        trajectories.random_sinusoid(
            SinusoidSpec(
                duration=plan.test_duration,
                seed=derive_seed(seed, "test"),
                limits=plan.limits,
            )
        )
    )
    test = col.harvest(plan._test_meta(seed, load_mass))
    segments = _run_segments(col, plan, seed, load_mass)
    return train, test, segments


def collect_homed_suite(
    plan: CollectionPlan,
    params: PlantParams,
    kin: KinematicParams,
    seed: int,
    load_mass: float = 0.0,
) -> tuple:
    """Session whose training rasters each start with a homing.

    The first homing of the session carries the large re-indexing jump;
    the ones between rasters and test segments are small, so training
    spans several nearby encoder-offset regimes.  Returns
    (train, segments).
    """
    col = _open_session(plan, params, kin, seed, load_mass)
    _run_training_rasters(col, plan, home_each=True)
    meta = plan._train_meta(seed, load_mass)
    meta["homing_in_training"] = True
    train = col.harvest(meta)
    segments = _run_segments(col, plan, seed, load_mass)
    return train, segments
