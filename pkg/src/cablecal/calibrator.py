"""Joint-pose calibration pipeline: masking, normalization, training,
correction, baselines, and the RMSE/peak metrics.

The calibrator owns three fitted pieces: the channel mask (which of the
112 state channels feed the network), per-channel normalization
statistics from the training set, and the trained network itself.  A
saved calibrator bundles all three in one binary file, so evaluation
never touches training data again.

Metrics are computed in radians/metres and converted to degrees and
millimetres only for display.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import mlp, statestream
from .errors import DimensionMismatch, EmptyBatch, SchemaMismatch
from .mlp import Network, TrainConfig
from .statestream import STATE_DIM, Dataset, FeatureGroupRegistry

CHECKPOINT_MAGIC = b"CCCAL\x00"
CHECKPOINT_VERSION = 1

# Active joints of the published joint-pose block.
_JP = statestream.BLOCKS["joint_pose"]
ACTIVE_JOINT_CHANNELS = (_JP.start, _JP.start + 1, _JP.start + 2)

# rad -> deg for the revolute joints, m -> mm for insertion.
DISPLAY_SCALE = np.array([180.0 / np.pi, 180.0 / np.pi, 1000.0])
DISPLAY_UNITS = ("deg", "deg", "mm")

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class Normalizer:
    """Per-channel z-scoring fitted on training features.

    Channels whose training spread is below SIGMA_FLOOR carry no
    information; they are emitted as exactly 0 whatever the input, which
    also keeps constants from blowing up the scaling.
    """

    mean: np.ndarray
    sigma: np.ndarray

    @staticmethod
    def fit(x: np.ndarray) -> "Normalizer":
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0:
            raise EmptyBatch("cannot fit normalization statistics on an empty set")
        return Normalizer(mean=x.mean(axis=0), sigma=x.std(axis=0))

    @staticmethod
    def identity(width: int) -> "Normalizer":
        return Normalizer(mean=np.zeros(width), sigma=np.ones(width))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        live = self.sigma >= SIGMA_FLOOR
        out = np.zeros_like(x)
        out[..., live] = (x[..., live] - self.mean[live]) / self.sigma[live]
        return out

    def invert(self, y: np.ndarray) -> np.ndarray:
        """Undo apply(); dead channels come back as their training mean."""
        y = np.asarray(y, dtype=float)
        live = self.sigma >= SIGMA_FLOOR
        out = np.empty_like(y)
        out[..., live] = y[..., live] * self.sigma[live] + self.mean[live]
        out[..., ~live] = self.mean[~live]
        return out


@dataclass(frozen=True)
class CalibratorConfig:
    """What to train: channel mask, net shape, recipe, normalization."""

    mask_indices: tuple
    hidden_sizes: tuple = (256, 128, 64)
    train: TrainConfig = field(default_factory=TrainConfig)
    normalize: bool = True
    seeds: tuple = (0, 1, 2, 3, 4)

    @staticmethod
    def for_groups(
        excluded_groups=statestream.DEFAULT_EXCLUDED_GROUPS,
        registry: FeatureGroupRegistry = statestream.DEFAULT_REGISTRY,
        **kwargs,
    ) -> "CalibratorConfig":
        mask = registry.mask_excluding(excluded_groups)
        return CalibratorConfig(
            mask_indices=tuple(int(i) for i in np.flatnonzero(mask)), **kwargs
        )

    def with_extra_exclusions(
        self, groups, registry: FeatureGroupRegistry = statestream.DEFAULT_REGISTRY
    ) -> "CalibratorConfig":
        dropped = set(registry.union(groups).tolist())
        kept = tuple(i for i in self.mask_indices if i not in dropped)
        return replace(self, mask_indices=kept)

    def validated(self) -> "CalibratorConfig":
        if len(self.mask_indices) == 0:
            raise DimensionMismatch("channel mask keeps no features")
        if any(i < 0 or i >= STATE_DIM for i in self.mask_indices):
            raise DimensionMismatch("channel mask index out of range")
        return self


@dataclass
class JointMetrics:
    """Per-joint RMSE and peak residuals, stored in rad/rad/m."""

    rmse: np.ndarray
    peak: np.ndarray

    def display(self) -> dict:
        return {
            "rmse": (self.rmse * DISPLAY_SCALE).tolist(),
            "peak": (self.peak * DISPLAY_SCALE).tolist(),
            "units": list(DISPLAY_UNITS),
        }


def metrics_from_residuals(residuals: np.ndarray) -> JointMetrics:
    residuals = np.asarray(residuals, dtype=float)
    if residuals.ndim != 2 or residuals.shape[0] == 0:
        raise EmptyBatch("metrics need at least one residual record")
    return JointMetrics(
        rmse=np.sqrt(np.mean(residuals**2, axis=0)),
        peak=np.max(np.abs(residuals), axis=0),
    )


@dataclass
class AggregateMetrics:
    """Seed-wise mean and standard deviation of RMSE/peak."""

    rmse_mean: np.ndarray
    rmse_std: np.ndarray
    peak_mean: np.ndarray
    peak_std: np.ndarray
    n_seeds: int

    def display(self) -> dict:
        return {
            "rmse_mean": (self.rmse_mean * DISPLAY_SCALE).tolist(),
            "rmse_std": (self.rmse_std * DISPLAY_SCALE).tolist(),
            "peak_mean": (self.peak_mean * DISPLAY_SCALE).tolist(),
            "peak_std": (self.peak_std * DISPLAY_SCALE).tolist(),
            "units": list(DISPLAY_UNITS),
            "n_seeds": self.n_seeds,
        }


def aggregate(per_seed: list) -> AggregateMetrics:
    if not per_seed:
        raise EmptyBatch("no per-seed metrics to aggregate")
    rmse = np.stack([m.rmse for m in per_seed])
    peak = np.stack([m.peak for m in per_seed])
    return AggregateMetrics(
        rmse_mean=rmse.mean(axis=0),
        rmse_std=rmse.std(axis=0),
        peak_mean=peak.mean(axis=0),
        peak_std=peak.std(axis=0),
        n_seeds=len(per_seed),
    )


@dataclass
class Calibrator:
    """Trained corrector: mask + normalization statistics + network.

    The network regresses in standardized coordinates on both sides;
    `target_normalizer` maps its outputs back to joint units, so the loss
    stays well scaled against the weight penalties whatever the units of
    the corrected quantities.
    """

    network: Network
    mask_indices: np.ndarray
    normalizer: Normalizer
    target_normalizer: Normalizer
    train_config: TrainConfig
    meta: dict = field(default_factory=dict)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Predicted joint-pose error for raw 112-channel snapshots."""
        features = np.asarray(features, dtype=float)
        single = features.ndim == 1
        if single:
            features = features[None, :]
        if features.shape[1] != STATE_DIM:
            raise DimensionMismatch(
                f"snapshots must have {STATE_DIM} channels, got {features.shape[1]}"
            )
        x = features[:, self.mask_indices]
        x = self.normalizer.apply(x)
        pred = self.target_normalizer.invert(mlp.forward(self.network, x))
        return pred[0] if single else pred

    def calibrate(self, features: np.ndarray) -> np.ndarray:
        """Corrected active joint pose = published estimate + prediction."""
        features = np.asarray(features, dtype=float)
        raw = features[..., list(ACTIVE_JOINT_CHANNELS)]
        return raw + self.predict(features)

    def channel_sigma(self, channels: np.ndarray) -> np.ndarray:
        """Training-set spread of the given state channels.

        Channels outside the mask have no recorded statistics and report 0.
        """
        channels = np.asarray(channels, dtype=int)
        pos = {int(c): k for k, c in enumerate(self.mask_indices)}
        out = np.zeros(channels.shape[0])
        for k, c in enumerate(channels):
            if int(c) in pos:
                out[k] = self.normalizer.sigma[pos[int(c)]]
        return out

    def save(self, path) -> None:
        header = {
            "layer_sizes": [int(s) for s in self.network.layer_sizes],
            "mask_indices": [int(i) for i in self.mask_indices],
            "mean": self.normalizer.mean.tolist(),
            "sigma": self.normalizer.sigma.tolist(),
            "target_mean": self.target_normalizer.mean.tolist(),
            "target_sigma": self.target_normalizer.sigma.tolist(),
            "train_config": self.train_config.to_dict(),
            "meta": self.meta,
        }
        blob = json.dumps(header, sort_keys=True).encode()
        params = mlp.flatten_params(self.network)
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<Q", params.size))
            fh.write(params.astype("<f8").tobytes())

    @staticmethod
    def load(path) -> "Calibrator":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise SchemaMismatch(f"not a calibrator checkpoint: {path}")
            version, blob_len = struct.unpack("<II", fh.read(8))
            if version != CHECKPOINT_VERSION:
                raise SchemaMismatch(
                    f"calibrator checkpoint version {version} not supported"
                )
            header = json.loads(fh.read(blob_len).decode())
            (n_params,) = struct.unpack("<Q", fh.read(8))
            params = np.frombuffer(fh.read(n_params * 8), dtype="<f8").copy()
        net = mlp.init_network(header["layer_sizes"], seed=0)
        mlp.set_params(net, params)
        return Calibrator(
            network=net,
            mask_indices=np.asarray(header["mask_indices"], dtype=int),
            normalizer=Normalizer(
                mean=np.asarray(header["mean"]),
                sigma=np.asarray(header["sigma"]),
            ),
            target_normalizer=Normalizer(
                mean=np.asarray(header["target_mean"]),
                sigma=np.asarray(header["target_sigma"]),
            ),
            train_config=TrainConfig.from_dict(header["train_config"]),
            meta=header.get("meta", {}),
        )


def train_calibrator(
    train: Dataset,
    config: CalibratorConfig,
    seed: int,
    meta: dict | None = None,
) -> tuple:
    """Fit mask + statistics + network on a training set.

    Returns (calibrator, per-epoch loss history); the history is what the
    test-only-noise invariants compare bit-for-bit.
    """
    config = config.validated()
    if len(train) == 0:
        raise EmptyBatch("training dataset is empty")
    mask = np.asarray(config.mask_indices, dtype=int)
    x = train.features[:, mask]
    if config.normalize:
        normalizer = Normalizer.fit(x)
        target_normalizer = Normalizer.fit(train.target)
    else:
        normalizer = Normalizer.identity(x.shape[1])
        target_normalizer = Normalizer.identity(train.target.shape[1])
    x = normalizer.apply(x)
    y = target_normalizer.apply(train.target)
    layer_sizes = [x.shape[1], *config.hidden_sizes, 3]
    net = mlp.init_network(layer_sizes, seed=seed)
    history = mlp.train(net, x, y, config.train, seed=seed)
    return (
        Calibrator(
            network=net,
            mask_indices=mask,
            normalizer=normalizer,
            target_normalizer=target_normalizer,
            train_config=config.train,
            meta=dict(meta or {}),
        ),
        history,
    )


def before_calibration_metrics(test: Dataset) -> JointMetrics:
    """Raw estimate vs ground truth; the target IS that residual."""
    return metrics_from_residuals(test.target)


def bias_removal_metrics(train: Dataset, test: Dataset) -> JointMetrics:
    """Constant-offset baseline: subtract the training-mean error."""
    if len(train) == 0:
        raise EmptyBatch("bias removal needs a nonempty training set")
    offset = train.target.mean(axis=0)
    return metrics_from_residuals(test.target - offset)


def evaluate_residuals(
    cal: Calibrator, test: Dataset, corrupt=None
) -> np.ndarray:
    """Post-calibration residuals, optionally with a test-time corruption.

    `corrupt` receives a copy of the raw feature matrix and returns the
    perturbed one; training artifacts are never touched.
    """
    features = test.features
    if corrupt is not None:
        features = corrupt(features.copy())
    return test.target - cal.predict(features)


def evaluate(cal: Calibrator, test: Dataset, corrupt=None) -> JointMetrics:
    return metrics_from_residuals(evaluate_residuals(cal, test, corrupt))
