"""Geometry checks against hand-derived poses and finite differences."""

import numpy as np
import pytest

from cablecal.kinematics import (
    KinematicParams,
    fd_jacobian,
    fk,
    jacobian,
    orthonormality_defect,
    revolute_rank_measure,
)
from cablecal.errors import DimensionMismatch

PARAMS = KinematicParams()

# Worked out independently from the rotation chain
# Rz(40 deg) Rx(75 deg) Rz(80 deg) Rx(52 deg) applied to (0, 0, 0.375 + 0.1).
ORACLE_Q = np.array([np.deg2rad(40.0), np.deg2rad(80.0), 0.375])
ORACLE_POS = np.array(
    [0.4747627032034963, 0.00766853880000087, 0.01290616750169559]
)
ORACLE_ROT = np.array(
    [
        [-0.03081598535321417, 0.00701925071898277, 0.9995004277968342],
        [0.3068736687413573, -0.9516133212929718, 0.01614429221052814],
        [0.9512512425641977, 0.3072178654588683, 0.02717087895093807],
    ]
)


def test_fk_matches_precomputed_pose():
    pose = fk(PARAMS, ORACLE_Q)
    np.testing.assert_allclose(pose.pos, ORACLE_POS, atol=1e-12)
    np.testing.assert_allclose(pose.rot, ORACLE_ROT, atol=1e-12)


def test_fk_at_zero_insertion_is_tool_offset_rotated():
    q = np.array([0.3, 1.2, 0.0])
    pose = fk(PARAMS, q)
    np.testing.assert_allclose(pose.pos, pose.rot @ [0.0, 0.0, 0.1], atol=1e-15)


def test_insertion_moves_along_tool_axis():
    q = np.array([0.3, 1.2, 0.2])
    p0 = fk(PARAMS, q).pos
    q[2] += 0.05
    pose = fk(PARAMS, q)
    np.testing.assert_allclose(p0 + 0.05 * pose.rot[:, 2], pose.pos, atol=1e-12)


def _random_configs(n, seed=42):
    rng = np.random.default_rng(seed)
    q = np.empty((n, 3))
    q[:, 0] = rng.uniform(-0.9, 0.9, n)
    q[:, 1] = rng.uniform(0.8, 2.0, n)
    q[:, 2] = rng.uniform(0.2, 0.35, n)
    return q


def test_jacobian_matches_finite_differences():
    worst = 0.0
    for q in _random_configs(100):
        diff = np.abs(jacobian(PARAMS, q) - fd_jacobian(PARAMS, q))
        worst = max(worst, float(diff.max()))
    assert worst < 1e-6


def test_rotations_stay_orthonormal():
    pose = fk(PARAMS, _random_configs(100))
    assert float(orthonormality_defect(pose.rot).max()) < 1e-9
    dets = np.linalg.det(pose.rot)
    np.testing.assert_allclose(dets, 1.0, atol=1e-12)


def test_frozen_joint_columns_are_exactly_zero():
    jac = jacobian(PARAMS, _random_configs(25))
    assert jac.shape == (25, 6, 7)
    assert np.all(jac[:, :, 3:] == 0.0)


def test_batch_and_seven_wide_inputs():
    q3 = _random_configs(8)
    q7 = np.zeros((8, 7))
    q7[:, :3] = q3
    q7[:, 3:] = 123.0  # frozen entries must be ignored
    pose3 = fk(PARAMS, q3)
    pose7 = fk(PARAMS, q7)
    np.testing.assert_array_equal(pose3.pos, pose7.pos)
    np.testing.assert_array_equal(jacobian(PARAMS, q3), jacobian(PARAMS, q7))
    assert pose3.pos.shape == (8, 3)
    assert pose3.rot.shape == (8, 3, 3)


def test_rejects_malformed_joint_vectors():
    with pytest.raises(DimensionMismatch):
        fk(PARAMS, np.zeros(5))
    with pytest.raises(DimensionMismatch):
        jacobian(PARAMS, np.zeros((4, 2)))


def test_insertion_axis_gravity_projection_sign_flip():
    # The base-frame z component of the tool axis changes sign inside the
    # joint-2 range; its zero sits where cos(q2) = cot(a1) * cot(a2).
    a1, a2 = PARAMS.cone_angle_1, PARAMS.cone_angle_2
    q2_zero = np.arccos(1.0 / (np.tan(a1) * np.tan(a2)))
    assert np.isclose(np.rad2deg(q2_zero), 77.91603828914606, atol=1e-9)

    def tool_axis_z(q2):
        return fk(PARAMS, np.array([0.0, q2, 0.3])).rot[2, 2]

    assert abs(tool_axis_z(q2_zero)) < 1e-12
    assert tool_axis_z(q2_zero - 0.2) < 0.0
    assert tool_axis_z(q2_zero + 0.2) > 0.0


def test_rank_measure_drops_at_the_coplanar_fold():
    # q2 = pi makes both revolute axes and the tool axis coplanar, so the
    # linear-velocity columns turn parallel in any geometry.
    folded = revolute_rank_measure(jacobian(PARAMS, np.array([0.4, np.pi, 0.3])))
    assert folded < 1e-12
    # With equal cone angles the fold also zeroes the joint-1 column.
    equal = KinematicParams(
        cone_angle_1=np.deg2rad(60.0), cone_angle_2=np.deg2rad(60.0)
    )
    jac = jacobian(equal, np.array([0.4, np.pi, 0.3]))
    assert np.linalg.norm(jac[:3, 0]) < 1e-12
    # The working joint-2 range stays clear of both folds.
    q = _random_configs(50)
    q[:, 1] = np.linspace(np.deg2rad(55.0), np.deg2rad(110.0), 50)
    assert revolute_rank_measure(jacobian(PARAMS, q)).min() > 0.03
