"""Robot state snapshots, feature groups, and dataset persistence.

A snapshot is a 112-channel vector mirroring what the robot's telemetry
bus publishes.  Several channels are derived on the robot side:

    joint_pose   = coupling @ motor_pose          (the erroneous estimate)
    motor_pose   = (encoder_value - encoder_offset) / counts, to 1 count
    ee pose/orient = forward kinematics of the published joint_pose
    jacobian_velocity = J(joint_pose) @ joint_velocity
    jacobian_force    = pinv(J_active^T) @ gravity-model joint torques

The end-effector and jacobian families come from the downstream
derived-kinematics node, which lags the bus by one record (so they are
functions of the PREVIOUS snapshot's sources) and republishes at reduced
fidelity: its pose, twist, and wrench channels each carry uniform jitter
set by the plant's estimator-noise parameters.  That node has no torque
feed; its wrench estimate projects the nominal gravity model evaluated at
the published pose, with the payload unknown to it.

Velocity, measured-torque, and commanded-current channels carry uniform
sensor noise; motor and joint pose channels carry only encoder
granularity.  The ground-truth joint pose comes from an external tracker
quantized at the encoder pitch, and the learning target is ground truth
minus the published joint pose estimate.

Datasets are delimited text: a three-line annotated header (format magic,
metadata JSON, feature-group JSON) followed by one tab-separated record
per line.  Floats are written at 17 significant digits and parsed in
round-trip mode, so write/read is bitwise lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import kinematics, trajectories
from .errors import IoError, MissingDataset, SchemaMismatch, UnknownGroup
from .kinematics import KinematicParams
from .plant import CablePlant, PlantParams, RunLog, insertion_gravity_factor

STATE_DIM = 112
TARGET_DIM = 3
DOWNSAMPLE_STRIDE = 40

FORMAT_MAGIC = "# cablecal dataset format 1"

# Channel blocks in bus order: name -> (start, length).
_BLOCK_SPECS = (
    ("time_stamp", 1),
    ("run_level", 1),
    ("sub_level", 1),
    ("last_sequence", 1),
    ("arm_type", 1),
    ("ee_pose", 3),
    ("ee_pose_desired", 3),
    ("ee_orient", 9),
    ("ee_orient_desired", 9),
    ("encoder_value", 7),
    ("encoder_offset", 7),
    ("motor_pose", 7),
    ("motor_pose_desired", 7),
    ("motor_velocity", 7),
    ("joint_pose", 7),
    ("joint_pose_desired", 7),
    ("joint_velocity", 7),
    ("motor_current_cmd", 7),
    ("motor_torque", 7),
    ("jacobian_velocity", 6),
    ("jacobian_force", 6),
    ("desired_grasper", 1),
)


def _build_blocks() -> dict:
    blocks = {}
    start = 0
    for name, length in _BLOCK_SPECS:
        blocks[name] = range(start, start + length)
        start += length
    assert start == STATE_DIM
    return blocks


BLOCKS = _build_blocks()

_XYZ = ("x", "y", "z")


def _channel_names() -> list:
    names = []
    for name, length in _BLOCK_SPECS:
        if length == 1:
            names.append(name)
        elif length == 3:
            names.extend(f"{name}_{ax}" for ax in _XYZ)
        elif length == 9:
            names.extend(f"{name}_r{i}{j}" for i in range(3) for j in range(3))
        else:
            names.extend(f"{name}_{k}" for k in range(1, length + 1))
    return names


FEATURE_NAMES = _channel_names()
EXTRA_NAMES = [
    "ground_truth_1",
    "ground_truth_2",
    "ground_truth_3",
    "target_1",
    "target_2",
    "target_3",
]
COLUMN_NAMES = FEATURE_NAMES + EXTRA_NAMES


def _default_groups() -> dict:
    b = BLOCKS
    joint_poses = (
        list(b["motor_pose"])
        + list(b["motor_pose_desired"])
        + list(b["joint_pose"])
        + list(b["joint_pose_desired"])
    )
    end_effector = (
        list(b["ee_pose"])
        + list(b["ee_pose_desired"])
        + list(b["ee_orient"])
        + list(b["ee_orient_desired"])
    )
    groups = {
        "operating_status": [
            b["time_stamp"][0],
            b["run_level"][0],
            b["sub_level"][0],
            b["last_sequence"][0],
            b["arm_type"][0],
            b["desired_grasper"][0],
        ],
        "joint_poses": joint_poses,
        "end_effector": end_effector,
        "all_poses": joint_poses + end_effector,
        "velocity": list(b["motor_velocity"]) + list(b["joint_velocity"]),
        "torque": list(b["motor_current_cmd"]) + list(b["motor_torque"]),
        "jacobian": list(b["jacobian_velocity"]) + list(b["jacobian_force"]),
        "encoders": list(b["encoder_value"]) + list(b["encoder_offset"]),
        "motor_pose_4": [b["motor_pose"][3]],
    }
    # Per-joint groups: that joint's pose, desired, velocity, torque and
    # current channels; end-effector and Jacobian channels stay out.
    per_joint_blocks = (
        "motor_pose",
        "motor_pose_desired",
        "motor_velocity",
        "joint_pose",
        "joint_pose_desired",
        "joint_velocity",
        "motor_current_cmd",
        "motor_torque",
    )
    for j in range(1, 4):
        groups[f"joint_{j}"] = [b[name][j - 1] for name in per_joint_blocks]
    return {name: sorted(idx) for name, idx in groups.items()}


@dataclass(frozen=True)
class FeatureGroupRegistry:
    """Named channel groups used by the removal and noise studies."""

    groups: dict = field(default_factory=_default_groups)

    def names(self) -> list:
        return sorted(self.groups)

    def indices(self, name: str) -> np.ndarray:
        try:
            return np.asarray(self.groups[name], dtype=int)
        except KeyError:
            raise UnknownGroup(
                f"unknown feature group {name!r}; known: {', '.join(self.names())}"
            ) from None

    def union(self, names) -> np.ndarray:
        idx: set = set()
        for name in names:
            idx.update(self.indices(name).tolist())
        return np.asarray(sorted(idx), dtype=int)

    def mask_excluding(self, names=()) -> np.ndarray:
        """Boolean keep-mask over the 112 channels."""
        mask = np.ones(STATE_DIM, dtype=bool)
        if names:
            mask[self.union(names)] = False
        return mask

    def to_dict(self) -> dict:
        return {name: list(map(int, idx)) for name, idx in self.groups.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureGroupRegistry":
        return cls(groups={name: sorted(map(int, idx)) for name, idx in d.items()})


DEFAULT_REGISTRY = FeatureGroupRegistry()

# The stock feature set drops raw encoder registers and the meaningless
# fourth motor register, leaving 97 channels.
DEFAULT_EXCLUDED_GROUPS = ("encoders", "motor_pose_4")


def default_feature_mask(registry: FeatureGroupRegistry = DEFAULT_REGISTRY) -> np.ndarray:
    return registry.mask_excluding(DEFAULT_EXCLUDED_GROUPS)


def downsample(records: np.ndarray, stride: int = DOWNSAMPLE_STRIDE) -> np.ndarray:
    """Keep every stride-th record, phase anchored at record 0."""
    records = np.asarray(records)
    return records[::stride]


def quantize_ground_truth(q_true: np.ndarray, params: PlantParams) -> np.ndarray:
    """External tracker reading: true pose at encoder-pitch granularity."""
    cpu = np.asarray(params.counts_per_unit)
    return np.rint(np.asarray(q_true) * cpu) / cpu


def assemble(
    log: RunLog,
    params: PlantParams,
    kin: KinematicParams,
    rng: np.random.Generator,
) -> tuple:
    """Build (features, ground_truth, target) arrays from a record log.

    Noise draws from `rng` happen in a fixed order that is part of the
    dataset format: motor velocity, joint velocity, commanded current,
    measured torque, the derived node's achieved and desired pose decode
    errors, then the per-entry republish jitter for the four end-effector
    blocks and the two jacobian blocks.  Everything else is exact
    telemetry.
    """
    n = len(log)
    f = np.zeros((n, STATE_DIM))
    b = BLOCKS
    coupling = np.asarray(params.coupling)

    f[:, b["time_stamp"][0]] = log.time
    f[:, b["run_level"][0]] = log.run_level
    f[:, b["sub_level"][0]] = 2.0
    f[:, b["last_sequence"][0]] = log.record_index.astype(float)
    f[:, b["arm_type"][0]] = 0.0
    f[:, b["desired_grasper"][0]] = 0.0

    enc_val = b["encoder_value"]
    enc_off = b["encoder_offset"]
    f[:, enc_val.start : enc_val.start + 3] = log.encoder_value.astype(float)
    f[:, enc_off.start : enc_off.start + 3] = log.encoder_offset.astype(float)

    cpu = np.asarray(params.counts_per_unit)
    mp = b["motor_pose"]
    motor_pose = (log.encoder_value - log.encoder_offset) / cpu
    f[:, mp.start : mp.start + 3] = motor_pose
    f[:, mp.start + 3] = log.register4
    mpd = b["motor_pose_desired"]
    f[:, mpd.start : mpd.start + 3] = log.motor_pose_desired

    vel_noise = np.asarray(params.velocity_noise)
    mv = b["motor_velocity"]
    f[:, mv.start : mv.start + 3] = log.motor_velocity + rng.uniform(
        -vel_noise, vel_noise, size=(n, 3)
    )
    jv = b["joint_velocity"]
    joint_vel = log.motor_velocity @ coupling.T
    f[:, jv.start : jv.start + 3] = joint_vel + rng.uniform(
        -vel_noise, vel_noise, size=(n, 3)
    )

    jp = b["joint_pose"]
    f[:, jp.start : jp.start + 3] = motor_pose @ coupling.T
    jpd = b["joint_pose_desired"]
    f[:, jpd.start : jpd.start + 3] = log.joint_pose_desired

    cur = b["motor_current_cmd"]
    cur_gain = np.asarray(params.current_per_torque)
    cur_noise = np.asarray(params.torque_full_scale) * params.torque_noise_frac * cur_gain
    f[:, cur.start : cur.start + 3] = log.torque_command * cur_gain + rng.uniform(
        -cur_noise, cur_noise, size=(n, 3)
    )
    tq = b["motor_torque"]
    tq_noise = np.asarray(params.torque_full_scale) * params.torque_noise_frac
    f[:, tq.start : tq.start + 3] = log.cable_tension + rng.uniform(
        -tq_noise, tq_noise, size=(n, 3)
    )

    # Derived channels, computed from published values like the robot does.
    # The derived-kinematics node runs downstream of the bus, so its topics
    # arrive one record late (the first record has nothing earlier and uses
    # its own sources).  The node decodes the achieved and desired poses
    # with a per-record error and evaluates everything it republishes from
    # those two perturbed poses, so the error is common mode across the
    # family; each entry then picks up a small independent republish jitter.
    prev = np.maximum(np.arange(n) - 1, 0)
    decode = np.asarray(params.joint_decode_noise)
    q7 = f[prev, jp.start : jp.stop].copy()
    q7[:, :3] += rng.uniform(-decode, decode, size=(n, 3))
    q7d = f[prev, jpd.start : jpd.stop].copy()
    q7d[:, :3] += rng.uniform(-decode, decode, size=(n, 3))
    pos_noise, orient_noise = params.pose_estimate_noise
    pose = kinematics.fk(kin, q7)
    pose_des = kinematics.fk(kin, q7d)
    for block, values in (
        ("ee_pose", pose.pos),
        ("ee_pose_desired", pose_des.pos),
        ("ee_orient", pose.rot.reshape(n, 9)),
        ("ee_orient_desired", pose_des.rot.reshape(n, 9)),
    ):
        noise = pos_noise if values.shape[1] == 3 else orient_noise
        f[:, b[block].start : b[block].stop] = values + rng.uniform(
            -noise, noise, size=values.shape
        )

    jac = kinematics.jacobian(kin, q7)
    qdot7 = f[prev, jv.start : jv.stop]
    twist = np.einsum("nij,nj->ni", jac, qdot7)
    f[:, b["jacobian_velocity"].start : b["jacobian_velocity"].stop] = (
        twist + rng.uniform(-params.twist_estimate_noise,
                            params.twist_estimate_noise, size=(n, 6))
    )
    # Wrench estimate: the node projects its gravity model at the published
    # pose (nominal tool mass, payload unknown); no measured torque reaches it.
    grav_sin = params.gravity * np.sin(kin.cone_angle_1) * np.sin(kin.cone_angle_2)
    uz = insertion_gravity_factor(kin, q7[:, 1])
    tau_grav = np.zeros((n, 3))
    tau_grav[:, 1] = grav_sin * np.sin(q7[:, 1]) * (
        params.tool_mass * (q7[:, 2] + kin.tool_offset[2]) + params.arm_moment
    )
    tau_grav[:, 2] = params.tool_mass * params.gravity * uz
    pinv_jt = np.linalg.pinv(np.swapaxes(jac[:, :, :3], 1, 2))
    wrench = np.einsum("nij,nj->ni", pinv_jt, tau_grav)
    f[:, b["jacobian_force"].start : b["jacobian_force"].stop] = (
        wrench + rng.uniform(-params.wrench_estimate_noise,
                             params.wrench_estimate_noise, size=(n, 6))
    )

    ground_truth = quantize_ground_truth(log.joint_pose_true, params)
    target = ground_truth - f[:, jp.start : jp.start + 3]
    return f, ground_truth, target


@dataclass
class Dataset:
    """Feature matrix plus ground truth, target, and collection metadata."""

    features: np.ndarray  # (n, 112)
    ground_truth: np.ndarray  # (n, 3)
    target: np.ndarray  # (n, 3)
    meta: dict = field(default_factory=dict)
    registry: FeatureGroupRegistry = field(default_factory=FeatureGroupRegistry)

    def __len__(self) -> int:
        return self.features.shape[0]

    @staticmethod
    def concat(parts: list) -> "Dataset":
        if not parts:
            raise SchemaMismatch("cannot concatenate zero datasets")
        return Dataset(
            features=np.concatenate([p.features for p in parts]),
            ground_truth=np.concatenate([p.ground_truth for p in parts]),
            target=np.concatenate([p.target for p in parts]),
            meta={"segments": [p.meta for p in parts]},
            registry=parts[0].registry,
        ).validate()

    def validate(self) -> "Dataset":
        if self.features.ndim != 2 or self.features.shape[1] != STATE_DIM:
            raise SchemaMismatch(
                f"feature matrix must have {STATE_DIM} columns, "
                f"got {self.features.shape}"
            )
        n = self.features.shape[0]
        if self.ground_truth.shape != (n, 3) or self.target.shape != (n, 3):
            raise SchemaMismatch("ground truth and target must be (n, 3)")
        return self

    def write(self, path) -> None:
        self.validate()
        data = np.hstack([self.features, self.ground_truth, self.target])
        frame = pd.DataFrame(data, columns=COLUMN_NAMES)
        try:
            with open(path, "w") as fh:
                fh.write(FORMAT_MAGIC + "\n")
                fh.write("# meta " + json.dumps(self.meta, sort_keys=True) + "\n")
                fh.write(
                    "# groups " + json.dumps(self.registry.to_dict(), sort_keys=True) + "\n"
                )
                frame.to_csv(fh, sep="\t", index=False, float_format="%.17g")
        except OSError as exc:
            raise IoError(f"cannot write dataset to {path}: {exc}") from exc

    @staticmethod
    def read(path) -> "Dataset":
        try:
            with open(path) as fh:
                magic = fh.readline().rstrip("\n")
                meta_line = fh.readline().rstrip("\n")
                groups_line = fh.readline().rstrip("\n")
                if magic != FORMAT_MAGIC:
                    raise SchemaMismatch(
                        f"not a dataset file (header {magic!r}, "
                        f"expected {FORMAT_MAGIC!r})"
                    )
                if not meta_line.startswith("# meta ") or not groups_line.startswith(
                    "# groups "
                ):
                    raise SchemaMismatch("dataset header annotations missing")
                meta = json.loads(meta_line[len("# meta ") :])
                groups = json.loads(groups_line[len("# groups ") :])
                frame = pd.read_csv(fh, sep="\t", float_precision="round_trip")
        except FileNotFoundError as exc:
            raise MissingDataset(f"dataset file not found: {path}") from exc
        except OSError as exc:
            raise IoError(f"cannot read dataset from {path}: {exc}") from exc
        if list(frame.columns) != COLUMN_NAMES:
            raise SchemaMismatch(
                f"dataset has {len(frame.columns)} columns, expected "
                f"{len(COLUMN_NAMES)} with the documented names"
            )
        data = frame.to_numpy(dtype=float)
        return Dataset(
            features=np.ascontiguousarray(data[:, :STATE_DIM]),
            ground_truth=np.ascontiguousarray(data[:, STATE_DIM : STATE_DIM + 3]),
            target=np.ascontiguousarray(data[:, STATE_DIM + 3 :]),
            meta=meta,
            registry=FeatureGroupRegistry.from_dict(groups),
        ).validate()


class SessionCollector:
    """Drives one plant session and accumulates snapshot records.

    Keeps the record stream gap-free: transfers between requested motions
    are executed (and recorded) as rest-to-rest joint moves, and the very
    first motion of a session starts with the mechanism placed at the
    stream's first pose.
    """

    def __init__(
        self,
        plant: CablePlant,
        rng: np.random.Generator,
    ):
        self.plant = plant
        self.rng = rng
        self._logs: list = []

    def run(self, stream: np.ndarray) -> None:
        if stream.shape[0] == 0:
            return
        if self.plant.tick == 0:
            self.plant.reset(stream[0])
        else:
            bridge = trajectories.joint_move(self.plant.joint_estimate(), stream[0])
            if bridge.shape[0]:
                self._logs.append(self.plant.run(bridge))
        self._logs.append(self.plant.run(stream))

    def home(self) -> None:
        self.plant.home()

    def harvest(self, meta: dict) -> Dataset:
        """Assemble everything collected since the last harvest."""
        log = RunLog.concat(self._logs)
        self._logs = []
        features, ground_truth, target = assemble(
            log, self.plant.params, self.plant.kin, self.rng
        )
        meta = dict(meta)
        meta.setdefault("homing_count", self.plant.homing_count)
        meta.setdefault("load_mass", self.plant.payload_mass)
        return Dataset(
            features=features,
            ground_truth=ground_truth,
            target=target,
            meta=meta,
        ).validate()
