"""Trajectory generator checks: rasters, random test motion, transfers."""

import numpy as np
import pytest

from cablecal import trajectories as trj
from cablecal.errors import InvalidSparsity

DT = trj.DT


def test_level_count():
    assert trj.level_count(1.0) == 2
    assert trj.level_count(0.5) == 3
    assert trj.level_count(0.25) == 5
    for bad in (0.0, -0.5, 1.5, 0.3):
        with pytest.raises(InvalidSparsity):
            trj.level_count(bad)


def test_zigzag_starts_at_corner_and_stays_in_the_box():
    spec = trj.ZigzagSpec(sparsity=0.5)
    q = trj.zigzag(spec)
    (lo1, hi1), (lo2, hi2), (lo3, hi3) = spec.limits
    assert np.allclose(q[0], [lo1, lo2, lo3])
    assert q[:, 0].min() >= lo1 - 1e-12 and q[:, 0].max() <= hi1 + 1e-12
    assert q[:, 1].min() >= lo2 - 1e-12 and q[:, 1].max() <= hi2 + 1e-12
    assert q[:, 2].min() >= lo3 - 1e-12 and q[:, 2].max() <= hi3 + 1e-12


def test_zigzag_visits_every_grid_level():
    spec = trj.ZigzagSpec(sparsity=0.25)
    q = trj.zigzag(spec)
    levels = trj.level_count(spec.sparsity)
    for joint in (1, 2):
        lo, hi = spec.limits[joint]
        expected = lo + (hi - lo) * spec.sparsity * np.arange(levels)
        for value in expected:
            assert np.isclose(np.abs(q[:, joint] - value).min(), 0.0, atol=1e-9)
    # Joint 3 only ever ratchets upward
    assert np.all(np.diff(q[:, 2]) >= -1e-15)


def test_zigzag_sweep_count():
    """A sparsity of 1/n gives (n+1)^2 joint-1 sweeps.

    Counted as runs where joint 1 sits at either end of its range: one
    initial run plus one per completed sweep.
    """
    spec = trj.ZigzagSpec(sparsity=0.5)
    q1 = trj.zigzag(spec)[:, 0]
    lo1, hi1 = spec.limits[0]
    at_end = np.isclose(q1, lo1, atol=1e-12) | np.isclose(q1, hi1, atol=1e-12)
    runs = int(at_end[0]) + int(np.sum(~at_end[:-1] & at_end[1:]))
    assert runs == trj.level_count(spec.sparsity) ** 2 + 1


def test_zigzag_per_tick_increments_respect_velocities():
    spec = trj.ZigzagSpec(sparsity=0.5)
    q = trj.zigzag(spec)
    step = np.abs(np.diff(q, axis=0))
    caps = (spec.sweep_velocity, spec.step_velocity, spec.insert_velocity)
    for j, cap in enumerate(caps):
        assert step[:, j].max() <= cap * DT * (1 + 1e-9)
    # Moves are single-joint: no tick advances two joints at once.
    moving = step > 1e-15
    assert moving.sum(axis=1).max() == 1


def test_random_sinusoid_shape_limits_and_start():
    spec = trj.SinusoidSpec(duration=30.0, seed=5)
    q = trj.random_sinusoid(spec)
    assert q.shape == (30000, 3)
    mid = np.array([0.5 * (lo + hi) for lo, hi in spec.limits])
    assert np.allclose(q[0], mid)
    for j, (lo, hi) in enumerate(spec.limits):
        assert q[:, j].min() >= lo - 1e-12
        assert q[:, j].max() <= hi + 1e-12


def test_random_sinusoid_velocity_bound():
    # Half-cosine easing peaks at the drawn velocity, never above the cap.
    spec = trj.SinusoidSpec(duration=20.0, seed=11)
    q = trj.random_sinusoid(spec)
    step = np.abs(np.diff(q, axis=0))
    for j in range(3):
        assert step[:, j].max() <= spec.velocity_hi[j] * DT * (1 + 1e-6)


def test_random_sinusoid_determinism():
    spec = trj.SinusoidSpec(duration=5.0, seed=3)
    assert np.array_equal(trj.random_sinusoid(spec), trj.random_sinusoid(spec))
    other = trj.SinusoidSpec(duration=5.0, seed=4)
    assert not np.array_equal(trj.random_sinusoid(spec), trj.random_sinusoid(other))


def test_random_sinusoid_actually_explores():
    spec = trj.SinusoidSpec(duration=60.0, seed=0)
    q = trj.random_sinusoid(spec)
    for j, (lo, hi) in enumerate(spec.limits):
        covered = (q[:, j].max() - q[:, j].min()) / (hi - lo)
        assert covered > 0.5, f"joint {j} wandered over only {covered:.0%} of range"


def test_joint_move_endpoints_and_hold():
    start = np.array([0.4, 1.2, 0.35])
    target = np.array([0.9, 1.0, 0.36])
    q = trj.joint_move(start, target)
    assert q.shape[1] == 3
    assert np.allclose(q[-1], target, atol=1e-12)
    # Early arrivals hold their target while the slowest joint finishes.
    step = np.abs(np.diff(q, axis=0))
    for j, vmax in enumerate((0.30, 0.35, 0.05)):
        assert step[:, j].max() <= vmax * DT * (1 + 1e-9)
        arrived = np.isclose(q[:, j], target[j], atol=1e-12)
        assert np.all(arrived[np.argmax(arrived):])


def test_joint_move_coincident_is_empty():
    here = np.array([0.5, 1.3, 0.37])
    assert trj.joint_move(here, here.copy()).shape == (0, 3)
