"""Joint-space training and test trajectories, sampled at the servo rate.

Two generators:

* `zigzag` rasters the workspace box: joint 1 sweeps back and forth between
  its limits, joint 2 steps by sparsity * range at each sweep end
  (serpentining up and down), and joint 3 steps one level after each full
  joint-2 raster.  Every move is a single-joint trapezoidal-velocity
  segment, so streams are C0 with bounded per-tick increments.  A sparsity
  of 1/n yields n+1 distinct levels on joints 2 and 3 and (n+1)^2 joint-1
  sweeps.

* `random_sinusoid` drives each joint independently through half-cosine
  eased moves toward uniformly drawn targets with uniformly drawn peak
  velocities.  Used for test data so that evaluation poses do not sit on
  the training raster.

Positions are radians for joints 1-2 and metres for joint 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSparsity

DT = 0.001  # servo tick, seconds

# Workspace box: (lo, hi) per active joint.
DEFAULT_LIMITS = (
    (np.deg2rad(20.0), np.deg2rad(60.0)),
    (np.deg2rad(55.0), np.deg2rad(110.0)),
    (0.33, 0.42),
)


@dataclass(frozen=True)
class ZigzagSpec:
    sparsity: float
    limits: tuple = DEFAULT_LIMITS
    sweep_velocity: float = 0.15  # joint 1, rad/s
    step_velocity: float = 0.35  # joint 2, rad/s
    insert_velocity: float = 0.05  # joint 3, m/s
    accel_scale: float = 8.0  # accel = accel_scale * velocity (ramp ~ 1/8 s)


@dataclass(frozen=True)
class SinusoidSpec:
    duration: float  # seconds
    seed: int
    limits: tuple = DEFAULT_LIMITS
    velocity_lo: tuple = (0.08, 0.10, 0.012)
    velocity_hi: tuple = (0.45, 0.55, 0.055)
    min_move_time: float = 0.25  # seconds, keeps tiny moves well sampled


def level_count(sparsity: float) -> int:
    """Number of distinct joint-2/3 levels for a sparsity of 1/n."""
    if not (0.0 < sparsity <= 1.0):
        raise InvalidSparsity(f"sparsity must be in (0, 1], got {sparsity}")
    n = 1.0 / sparsity
    if abs(n - round(n)) > 1e-9:
        raise InvalidSparsity(f"1/sparsity must be an integer, got {n}")
    return int(round(n)) + 1


def _trapezoid_offsets(dist: float, vmax: float, accel: float) -> np.ndarray:
    """Positions along a rest-to-rest trapezoidal move, sampled at DT.

    Returns offsets from the start for t = DT .. T (start point excluded);
    the final sample lands exactly on `dist`.
    """
    mag = abs(dist)
    if mag == 0.0:
        return np.zeros(0)
    sign = 1.0 if dist > 0 else -1.0
    t_ramp = vmax / accel
    if mag <= accel * t_ramp * t_ramp:
        # Triangle profile: never reaches vmax.
        t_ramp = np.sqrt(mag / accel)
        t_flat = 0.0
        v_peak = accel * t_ramp
    else:
        t_flat = (mag - accel * t_ramp * t_ramp) / vmax
        v_peak = vmax
    total = 2 * t_ramp + t_flat
    n = max(int(np.ceil(total / DT)), 1)
    t = np.arange(1, n + 1) * DT
    pos = np.empty(n)
    a_phase = t < t_ramp
    c_phase = t >= t_ramp + t_flat
    b_phase = ~(a_phase | c_phase)
    pos[a_phase] = 0.5 * accel * t[a_phase] ** 2
    pos[b_phase] = 0.5 * accel * t_ramp**2 + v_peak * (t[b_phase] - t_ramp)
    td = np.minimum(total - t[c_phase], t_ramp)
    pos[c_phase] = mag - 0.5 * accel * td**2
    pos[-1] = mag
    return sign * pos


def zigzag(spec: ZigzagSpec) -> np.ndarray:
    """Raster stream, shape (ticks, 3), starting at the workspace corner."""
    levels = level_count(spec.sparsity)
    n_steps = levels - 1
    (lo1, hi1), (lo2, hi2), (lo3, hi3) = spec.limits
    step2 = (hi2 - lo2) * spec.sparsity
    step3 = (hi3 - lo3) * spec.sparsity

    q = np.array([lo1, lo2, lo3])
    chunks = [q[None, :].copy()]

    def move(joint: int, target: float, vmax: float) -> None:
        offs = _trapezoid_offsets(target - q[joint], vmax, spec.accel_scale * vmax)
        if offs.size == 0:
            return
        block = np.repeat(q[None, :], offs.size, axis=0)
        block[:, joint] = q[joint] + offs
        chunks.append(block)
        q[joint] = target

    dir1 = 1
    dir2 = 1
    for k3 in range(levels):
        for i2 in range(levels):
            move(0, hi1 if dir1 > 0 else lo1, spec.sweep_velocity)
            dir1 = -dir1
            if i2 < n_steps:
                move(1, q[1] + dir2 * step2, spec.step_velocity)
        dir2 = -dir2
        if k3 < n_steps:
            move(2, q[2] + step3, spec.insert_velocity)
    return np.concatenate(chunks, axis=0)


def random_sinusoid(spec: SinusoidSpec) -> np.ndarray:
    """Independent per-joint eased random moves, shape (ticks, 3).

    Each joint draws (target, peak velocity) pairs and glides with a
    half-cosine profile, so velocity is zero at move boundaries and peaks
    at pi*dist/(2T) = the drawn peak velocity mid-move.
    """
    n_ticks = int(round(spec.duration / DT))
    streams = []
    seeds = np.random.SeedSequence(spec.seed).spawn(3)
    for j in range(3):
        rng = np.random.default_rng(seeds[j])
        lo, hi = spec.limits[j]
        cur = 0.5 * (lo + hi)
        parts = [np.full(1, cur)]
        made = 1
        while made < n_ticks + 1:
            target = rng.uniform(lo, hi)
            v_peak = rng.uniform(spec.velocity_lo[j], spec.velocity_hi[j])
            dist = target - cur
            duration = max(np.pi * abs(dist) / (2.0 * v_peak), spec.min_move_time)
            n = max(int(np.ceil(duration / DT)), 1)
            phase = np.arange(1, n + 1) * (DT / duration)
            phase = np.minimum(phase, 1.0)
            parts.append(cur + dist * 0.5 * (1.0 - np.cos(np.pi * phase)))
            cur = target
            made += n
        streams.append(np.concatenate(parts)[:n_ticks])
    return np.stack(streams, axis=1)


def joint_move(
    start: np.ndarray,
    target: np.ndarray,
    velocities: tuple = (0.30, 0.35, 0.05),
    accel_scale: float = 8.0,
) -> np.ndarray:
    """Rest-to-rest transfer of all three joints at once, shape (ticks, 3).

    Each joint runs its own trapezoid and holds at its target until the
    slowest one arrives.  Returns an empty (0, 3) stream when start and
    target already coincide.
    """
    start = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    offs = [
        _trapezoid_offsets(target[j] - start[j], velocities[j], accel_scale * velocities[j])
        for j in range(3)
    ]
    n = max(o.size for o in offs)
    if n == 0:
        return np.zeros((0, 3))
    out = np.empty((n, 3))
    for j in range(3):
        o = offs[j]
        out[: o.size, j] = start[j] + o
        out[o.size :, j] = target[j]
    return out
