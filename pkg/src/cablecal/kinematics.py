"""Forward kinematics and Jacobian for the 3-DOF cable-driven arm.

The arm is a remote-center-of-motion linkage: two revolute axes that
intersect at the mechanism origin, followed by a prismatic insertion stage.

    T(q) = Rz(q1) * Rx(cone_1) * Rz(q2) * Rx(cone_2) * Tz(q3) * Trans(tool)

Joint 1 rotates about the base z axis, joint 2 about an axis tilted by the
first cone angle, and joint 3 slides the tool along the distal z axis.  The
tool frame sits `tool_offset` beyond the insertion carriage.  Joints 4..7
exist in the state layout for compatibility with the 7-channel record format
but are mechanically frozen; their Jacobian columns are identically zero.

All public functions broadcast over a leading batch dimension, so `q` may be
shape (3,), (7,), (N, 3) or (N, 7).  Angles are radians, lengths metres.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch

N_JOINTS = 7
N_ACTIVE = 3


@dataclass(frozen=True)
class KinematicParams:
    """Geometry of the spherical linkage.

    cone_angle_1/2 are the fixed link angles between successive revolute
    axes.  frozen_values are the constants reported for joints 4..7.
    """

    cone_angle_1: float = np.deg2rad(75.0)
    cone_angle_2: float = np.deg2rad(52.0)
    tool_offset: tuple = (0.0, 0.0, 0.10)
    frozen_values: tuple = (0.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "cone_angle_1": float(self.cone_angle_1),
            "cone_angle_2": float(self.cone_angle_2),
            "tool_offset": list(self.tool_offset),
            "frozen_values": list(self.frozen_values),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicParams":
        return cls(
            cone_angle_1=float(d["cone_angle_1"]),
            cone_angle_2=float(d["cone_angle_2"]),
            tool_offset=tuple(float(v) for v in d["tool_offset"]),
            frozen_values=tuple(float(v) for v in d["frozen_values"]),
        )


class Pose(NamedTuple):
    rot: np.ndarray  # (..., 3, 3) orthonormal
    pos: np.ndarray  # (..., 3)


def _active(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] == N_JOINTS:
        return q[..., :N_ACTIVE]
    if q.shape[-1] == N_ACTIVE:
        return q
    raise DimensionMismatch(
        f"joint vector must have {N_ACTIVE} or {N_JOINTS} entries, got {q.shape[-1]}"
    )


def _rot_z(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def _rot_x(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def _chain(params: KinematicParams, qa: np.ndarray):
    """Rotation chain and the tilted joint-2 axis for a batch of configs."""
    q1, q2 = qa[..., 0], qa[..., 1]
    batch = q1.shape
    a1 = _rot_x(np.broadcast_to(params.cone_angle_1, batch))
    a2 = _rot_x(np.broadcast_to(params.cone_angle_2, batch))
    r01 = _rot_z(q1) @ a1
    rot = r01 @ _rot_z(q2) @ a2
    axis2 = r01[..., :, 2]
    return rot, axis2


def fk(params: KinematicParams, q: np.ndarray) -> Pose:
    """Tool pose for joint vector(s) q."""
    qa = _active(q)
    rot, _ = _chain(params, qa)
    offset = np.asarray(params.tool_offset, dtype=float) + np.stack(
        [np.zeros_like(qa[..., 2]), np.zeros_like(qa[..., 2]), qa[..., 2]], axis=-1
    )
    pos = (rot @ offset[..., :, None])[..., 0]
    return Pose(rot=rot, pos=pos)


def jacobian(params: KinematicParams, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian, shape (..., 6, 7).

    Rows 0..2 are linear velocity, rows 3..5 angular velocity.  Both
    revolute axes pass through the origin, so the linear columns are
    axis x position.  Columns for the frozen joints 4..7 stay zero.
    """
    qa = _active(q)
    rot, axis2 = _chain(params, qa)
    pose = fk(params, qa)
    batch = qa.shape[:-1]

    axis1 = np.zeros(batch + (3,))
    axis1[..., 2] = 1.0
    axis3 = rot[..., :, 2]

    jac = np.zeros(batch + (6, N_JOINTS))
    jac[..., :3, 0] = np.cross(axis1, pose.pos)
    jac[..., :3, 1] = np.cross(axis2, pose.pos)
    jac[..., :3, 2] = axis3
    jac[..., 3:, 0] = axis1
    jac[..., 3:, 1] = axis2
    return jac


def revolute_rank_measure(jac: np.ndarray) -> np.ndarray:
    """Smallest singular value of the revolute joints' linear-velocity block.

    At q2 = 0 or pi both revolute axes and the tool axis are coplanar, so
    the two linear-velocity columns become parallel and the block loses
    rank; with equal cone angles the folded pose even puts the tool on the
    base axis and the joint-1 column vanishes outright.  The working range
    keeps q2 well away from both folds.
    """
    block = np.asarray(jac)[..., :3, :2]
    return np.linalg.svd(block, compute_uv=False)[..., -1]


def orthonormality_defect(rot: np.ndarray) -> np.ndarray:
    """max |R^T R - I| entry, for batch rotation matrices."""
    rot = np.asarray(rot)
    eye = np.eye(3)
    gram = np.swapaxes(rot, -1, -2) @ rot
    return np.max(np.abs(gram - eye), axis=(-2, -1))


def fd_jacobian(params: KinematicParams, q: np.ndarray, eps: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian used as a numerical cross-check.

    Angular rows come from the skew part of dR R^T; adequate for the small
    eps used in verification.
    """
    qf = np.zeros(N_JOINTS)
    qf[: len(np.asarray(q).ravel())] = np.asarray(q, dtype=float).ravel()[:N_JOINTS]
    out = np.zeros((6, N_JOINTS))
    for j in range(N_ACTIVE):
        hi = qf.copy()
        lo = qf.copy()
        hi[j] += eps
        lo[j] -= eps
        pose_hi = fk(params, hi)
        pose_lo = fk(params, lo)
        out[:3, j] = (pose_hi.pos - pose_lo.pos) / (2 * eps)
        base = fk(params, qf)
        drot = (pose_hi.rot - pose_lo.rot) / (2 * eps)
        omega_skew = drot @ base.rot.T
        out[3, j] = omega_skew[2, 1]
        out[4, j] = omega_skew[0, 2]
        out[5, j] = omega_skew[1, 0]
    return out
