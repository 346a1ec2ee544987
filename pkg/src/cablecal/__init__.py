"""Calibration workbench for a simulated cable-driven manipulator.

The package simulates a three-joint tool arm whose cable transmission
distorts the joint poses reported by its motor encoders, then trains a
small dense network to predict that distortion from the robot's runtime
state stream.  Sub-modules follow the data path: ``kinematics`` and
``plant`` produce motion, ``trajectories`` and ``protocol`` script it,
``statestream`` turns run logs into feature datasets, ``mlp`` and
``calibrator`` learn the correction, ``ablation`` and ``report`` run and
render the feature studies, and ``cli`` ties it together.
"""

from .calibrator import Calibrator, CalibratorConfig, train_calibrator
from .config import WorkbenchConfig, load_config, profile_config
from .kinematics import KinematicParams, fk, jacobian
from .plant import CablePlant, PlantParams, REFERENCE_PLANT_PARAMS
from .statestream import Dataset, DEFAULT_REGISTRY, STATE_DIM

__all__ = [
    "Calibrator",
    "CalibratorConfig",
    "CablePlant",
    "Dataset",
    "DEFAULT_REGISTRY",
    "KinematicParams",
    "PlantParams",
    "REFERENCE_PLANT_PARAMS",
    "STATE_DIM",
    "WorkbenchConfig",
    "fk",
    "jacobian",
    "load_config",
    "profile_config",
    "train_calibrator",
    "__version__",
]

__version__ = "0.1.0"
