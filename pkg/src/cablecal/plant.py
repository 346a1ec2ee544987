"""Synthetic cable-driven robot plant with a structured transmission error.

The plant runs a 1 kHz servo loop.  Each tick a PD controller with a
nominal gravity feedforward drives three motors toward the commanded motor
poses, the rotors accelerate against the cable load, and the transmission
maps motor pose to the true joint pose:

    q_true = C @ m - delta

with the per-joint error

    delta_i = bias_i                                  constant offset
            + ecc_i * sin(nu_i * m_i + phi_i)         capstan runout
            + alpha_i * z_i                           hysteresis windup
            + backlash_i * tanh(tension_i / tau0_i)   flank engagement
            + compliance_i * tension_i                cable stretch
            + (i == 3: kappa * z_2)                   shared-routing leak

z_i is a Bouc-Wen internal state driven by motor motion,

    dz/dt = A*v - beta*|v|*z*|z|^(n-1) - gamma*v*|z|^n,

bounded by |z| <= (A / (beta + gamma))^(1/n), and tension_i is the load the
cable actually carries:

    tension_i = gravity_i(q) + fric_i * z_i + visc_i * v_i + j_dist_i * a_i

Joint 1 spins about the vertical base axis and carries no gravity load.
Joint 2 is counterweight-balanced, so its static moment is small unless a
payload is attached.  The joint-3 gravity projection u_z(q2) crosses zero
inside the workspace, so the insertion tension sign flips with pose as
well as with motion.  The recorded true insertion pose carries a small
stick-slip jitter on top of the modeled error.

The robot's own pose estimate is C @ m; that is what the state stream
publishes, and the calibration target is q_true minus that estimate.

Motor encoders are integer registers, value = offset + round(m * cpu).
Homing rebases register and offset together so the compensated reading
never moves; the first homing of a session jumps by a large count, later
homings by a small one.  A fourth register with no mechanical meaning
follows the same jump pattern and is published in the motor-pose block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NegativeMass, NonFiniteState
from .kinematics import KinematicParams

DT = 0.001
RECORD_STRIDE = 40  # 1 kHz loop, 25 Hz record rate


@dataclass(frozen=True)
class PlantParams:
    """Physical and sensor parameters, all per-joint unless noted."""

    # Servo gains and inertias
    kp: tuple = (14400.0, 14400.0, 30000.0)
    kd: tuple = (240.0, 240.0, 346.0)
    rotor_inertia: tuple = (1.0, 1.0, 1.0)
    distal_inertia: tuple = (0.01, 0.005, 0.05)
    # Coupling matrix, joint = C @ motor (row 3 picks up motor 2)
    coupling: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.012, 1.0))
    # Friction and hysteresis.  Coulomb friction dominates the revolute
    # tensions, so away from reversals those read as two tight clusters.
    viscous: tuple = (0.05, 0.05, 3.0)
    friction: tuple = (0.5, 0.9, 1.5)
    bw_a: tuple = (30.0, 400.0, 400.0)
    bw_beta: tuple = (22.5, 300.0, 300.0)
    bw_gamma: tuple = (7.5, 100.0, 100.0)
    bw_n: tuple = (2.0, 2.0, 2.0)
    # Transmission error composition
    bias: tuple = (0.014, 0.014, 0.0028)
    ecc_amp: tuple = (0.042, 0.044, 0.0)
    ecc_freq: tuple = (3.0, 2.0, 0.0)
    ecc_phase: tuple = (2.09, 0.39, 0.0)
    alpha: tuple = (0.0004, 0.009, 0.00003)
    backlash: tuple = (0.00015, 0.0010, 0.00006)
    tension_ref: tuple = (0.15, 0.30, 0.15)
    compliance: tuple = (1.0e-5, 2.0e-5, 2.0e-5)
    kappa_32: float = 0.0008
    slip_noise: tuple = (0.0012, 0.0035, 0.00015)
    # Masses and gravity
    tool_mass: float = 0.25
    arm_moment: float = -0.099  # kg*m about joint 2; counterweighted
    gravity: float = 9.81
    # Encoders: counts per unit of motor travel; ground truth is quantized
    # at the matching pitch by the state stream.
    counts_per_unit: tuple = (
        80000.0 / (2.0 * np.pi),
        80000.0 / (2.0 * np.pi),
        200000.0,
    )
    encoder_offset_range: int = 200000
    homing_first_counts: float = 150000.0
    homing_later_counts: float = 3000.0
    register4_initial: float = 0.5
    register4_first_jump: float = 2.0
    register4_later_jump: float = 0.04
    register4_jitter: float = 0.002
    # Sensor noise half-widths (uniform, zero mean), applied by the state
    # stream: torque at a fraction of full scale, small velocity jitter.
    torque_full_scale: tuple = (3.0, 4.0, 8.0)
    torque_noise_frac: float = 0.03
    velocity_noise: tuple = (0.002, 0.002, 0.0005)
    # Commanded torque is published in current units, through the same
    # noisy sense path as the torque channels.
    current_per_torque: tuple = (0.5, 0.5, 0.25)
    # Fidelity of the downstream derived-kinematics node.  The node decodes
    # the bus pose with a per-record error (uniform half-widths per joint,
    # radians for the revolute pair and metres for the insertion axis) and
    # computes every channel it republishes from that one perturbed pose, so
    # the error is common mode across its outputs.  On top of that each
    # republished entry carries a small independent jitter (position metres /
    # orientation entries, twist entries, wrench entries).
    joint_decode_noise: tuple = (0.030, 0.030, 0.008)
    pose_estimate_noise: tuple = (0.0005, 0.002)
    twist_estimate_noise: float = 0.002
    wrench_estimate_noise: float = 0.5

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, tuple):
                out[name] = [list(v) if isinstance(v, tuple) else v for v in value]
            else:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PlantParams":
        kwargs = {}
        for name, value in d.items():
            if isinstance(value, list):
                kwargs[name] = tuple(
                    tuple(v) if isinstance(v, list) else v for v in value
                )
            else:
                kwargs[name] = value
        return cls(**kwargs)

    def validated(self) -> "PlantParams":
        c = np.asarray(self.coupling)
        if abs(np.linalg.det(c)) < 1e-9:
            raise ValueError("coupling matrix must be invertible")
        if any(v < 0.0 for v in self.compliance):
            raise ValueError("compliance cannot be negative")
        if any(v < 0.0 for v in self.backlash):
            raise ValueError("backlash cannot be negative")
        if any(v < 0.0 for v in self.slip_noise):
            raise ValueError("slip noise cannot be negative")
        estimator = (*self.joint_decode_noise, *self.pose_estimate_noise,
                     self.twist_estimate_noise, self.wrench_estimate_noise)
        if any(v < 0.0 for v in estimator):
            raise ValueError("estimator noise cannot be negative")
        if any(n < 1.0 for n in self.bw_n):
            raise ValueError("Bouc-Wen exponent must be at least 1")
        if any(a <= 0.0 for a in self.bw_a):
            raise ValueError("Bouc-Wen A must be positive")
        if any(b + g <= 0.0 for b, g in zip(self.bw_beta, self.bw_gamma)):
            raise ValueError("Bouc-Wen beta + gamma must be positive")
        if any(g < 0.0 or b < g for b, g in zip(self.bw_beta, self.bw_gamma)):
            raise ValueError(
                "Bouc-Wen needs beta >= gamma >= 0 for a stable update"
            )
        return self


REFERENCE_PLANT_PARAMS = PlantParams()


def bw_z_bound(params: PlantParams) -> np.ndarray:
    """Saturation bound of the hysteresis state, (A/(beta+gamma))^(1/n)."""
    a = np.asarray(params.bw_a)
    bg = np.asarray(params.bw_beta) + np.asarray(params.bw_gamma)
    return (a / bg) ** (1.0 / np.asarray(params.bw_n))


def insertion_gravity_factor(kin: KinematicParams, q2) -> np.ndarray:
    """Projection of gravity onto the insertion axis as a function of q2.

    u_z(q2) = cos(a1)cos(a2) - sin(a1)sin(a2)cos(q2); the sign flip inside
    the q2 range is what makes insertion tension pose-dependent.
    """
    a1, a2 = kin.cone_angle_1, kin.cone_angle_2
    return np.cos(a1) * np.cos(a2) - np.sin(a1) * np.sin(a2) * np.cos(q2)


@njit(cache=True)
def _integrate(
    q_des,
    m_des,
    start_tick,
    stride,
    dt,
    m,
    v,
    acc,
    z,
    coupling,
    kp,
    kd,
    jrot,
    jdist,
    visc,
    fric,
    bw_a,
    bw_beta,
    bw_gamma,
    bw_n,
    bias,
    ecc_amp,
    ecc_freq,
    ecc_phase,
    alpha,
    backlash,
    tension_ref,
    compliance,
    kappa_32,
    grav_sin,
    uz_cos,
    uz_amp,
    g,
    tip_mass,
    nominal_mass,
    arm_moment,
    tool_len,
):
    """March the servo loop over a setpoint stream, mutating m/v/acc/z.

    Gravity shorthands, precomposed by the caller from the cone angles:
      grav_sin = g * sin(a1) * sin(a2)
      u_z(q2)  = uz_cos - uz_amp * cos(q2)
      joint-2 torque    = grav_sin * sin(q2) * (M*(q3 + L) + arm_moment)
      insertion force   = M * g * u_z(q2)
    The feedforward uses nominal_mass (payload unknown to the servo).

    Returns a (records, 25) log: time, then eight triplets in the order
    motor pose, motor pose desired, motor velocity, joint pose desired,
    torque command, cable tension, true joint pose, hysteresis state.
    """
    ticks = q_des.shape[0]
    n_rec = 0
    for i in range(ticks):
        if (start_tick + i) % stride == 0:
            n_rec += 1
    log = np.zeros((n_rec, 25))

    tension = np.zeros(3)
    tau_cmd = np.zeros(3)
    delta = np.zeros(3)
    row = 0
    for i in range(ticks):
        # Gravity at the robot's own joint estimate C @ m.
        q2 = coupling[1, 0] * m[0] + coupling[1, 1] * m[1] + coupling[1, 2] * m[2]
        q3 = coupling[2, 0] * m[0] + coupling[2, 1] * m[1] + coupling[2, 2] * m[2]
        uz = uz_cos - uz_amp * np.cos(q2)
        g2 = grav_sin * np.sin(q2) * (tip_mass * (q3 + tool_len) + arm_moment)
        g3 = tip_mass * g * uz

        # Hysteresis states advance with the motor motion of the last tick.
        # The decay factors both terms as z * |z|^(n-1) * (...), so treating
        # z implicitly there keeps the update stable for any velocity spike.
        # Four substeps keep the transition profile accurate at sharp
        # saturation rates, where a full-tick step would overshoot.
        h = dt * 0.25
        for j in range(3):
            zj = z[j]
            for _ in range(4):
                absz = abs(zj)
                zn1 = absz ** (bw_n[j] - 1.0)
                sgn = 1.0 if zj >= 0.0 else -1.0
                decay = zn1 * (bw_beta[j] * abs(v[j]) + bw_gamma[j] * v[j] * sgn)
                zj = (zj + h * bw_a[j] * v[j]) / (1.0 + h * decay)
            z[j] = zj

        # Cable tensions; the inertial share uses last tick's acceleration.
        tension[2] = g3 + fric[2] * z[2] + visc[2] * v[2] + jdist[2] * acc[2]
        tension[1] = g2 + fric[1] * z[1] + visc[1] * v[1] + jdist[1] * acc[1]
        tension[0] = fric[0] * z[0] + visc[0] * v[0] + jdist[0] * acc[0]

        # PD servo plus nominal-gravity feedforward at the setpoint.
        if i == 0:
            vd1 = 0.0
            vd2 = 0.0
            vd3 = 0.0
        else:
            vd1 = (m_des[i, 0] - m_des[i - 1, 0]) / dt
            vd2 = (m_des[i, 1] - m_des[i - 1, 1]) / dt
            vd3 = (m_des[i, 2] - m_des[i - 1, 2]) / dt
        q2d = q_des[i, 1]
        q3d = q_des[i, 2]
        uzd = uz_cos - uz_amp * np.cos(q2d)
        ff2 = grav_sin * np.sin(q2d) * (nominal_mass * (q3d + tool_len) + arm_moment)
        ff3 = nominal_mass * g * uzd
        tau_cmd[0] = kp[0] * (m_des[i, 0] - m[0]) + kd[0] * (vd1 - v[0])
        tau_cmd[1] = kp[1] * (m_des[i, 1] - m[1]) + kd[1] * (vd2 - v[1]) + ff2
        tau_cmd[2] = kp[2] * (m_des[i, 2] - m[2]) + kd[2] * (vd3 - v[2]) + ff3

        # Semi-implicit Euler on the rotor, then the transmission error.
        for j in range(3):
            acc[j] = (tau_cmd[j] - tension[j]) / jrot[j]
            v[j] += dt * acc[j]
            m[j] += dt * v[j]
            delta[j] = (
                bias[j]
                + ecc_amp[j] * np.sin(ecc_freq[j] * m[j] + ecc_phase[j])
                + alpha[j] * z[j]
                + backlash[j] * np.tanh(tension[j] / tension_ref[j])
                + compliance[j] * tension[j]
            )
        delta[2] += kappa_32 * z[1]

        if (start_tick + i) % stride == 0:
            log[row, 0] = (start_tick + i) * dt
            for j in range(3):
                log[row, 1 + j] = m[j]
                log[row, 4 + j] = m_des[i, j]
                log[row, 7 + j] = v[j]
                log[row, 10 + j] = q_des[i, j]
                log[row, 13 + j] = tau_cmd[j]
                log[row, 16 + j] = tension[j]
                log[row, 22 + j] = z[j]
            for j in range(3):
                qj = (
                    coupling[j, 0] * m[0]
                    + coupling[j, 1] * m[1]
                    + coupling[j, 2] * m[2]
                )
                log[row, 19 + j] = qj - delta[j]
            row += 1
    return log


@dataclass
class RunLog:
    """25 Hz record stream from one or more plant runs.

    All per-record arrays have matching first dimension; triplet arrays
    are (n, 3).  encoder_value and encoder_offset are integer counts;
    register4 is the meaningless fourth motor register with its jitter.
    """

    time: np.ndarray
    motor_pose: np.ndarray
    motor_pose_desired: np.ndarray
    motor_velocity: np.ndarray
    joint_pose_desired: np.ndarray
    torque_command: np.ndarray
    cable_tension: np.ndarray
    joint_pose_true: np.ndarray
    hysteresis_state: np.ndarray
    encoder_value: np.ndarray
    encoder_offset: np.ndarray
    register4: np.ndarray
    record_index: np.ndarray
    run_level: np.ndarray

    def __len__(self) -> int:
        return self.time.shape[0]

    @staticmethod
    def concat(logs: list["RunLog"]) -> "RunLog":
        if not logs:
            raise ValueError("cannot concatenate zero run logs")
        fields = {}
        for name in RunLog.__dataclass_fields__:
            fields[name] = np.concatenate([getattr(lg, name) for lg in logs])
        return RunLog(**fields)


class CablePlant:
    """Stateful plant session: run setpoint streams, home, attach payloads.

    The session RNG only feeds homing jumps, encoder offset initialization
    and register jitter; the servo loop itself is deterministic.
    """

    def __init__(
        self,
        params: PlantParams | None = None,
        kin: KinematicParams | None = None,
        seed: int = 0,
    ):
        self.params = (params or REFERENCE_PLANT_PARAMS).validated()
        self.kin = kin or KinematicParams()
        self._rng = np.random.default_rng(seed)
        p = self.params
        self._coupling = np.asarray(p.coupling, dtype=float)
        self._cpu = np.asarray(p.counts_per_unit, dtype=float)
        r = p.encoder_offset_range
        self.encoder_offset = self._rng.integers(-r, r + 1, size=3)
        self.register4 = float(p.register4_initial)
        self.homing_count = 0
        self._homing_until = -1.0  # records before this time show run level 1
        self.tick = 0
        self.record_count = 0
        self.payload_mass = 0.0
        self.m = np.zeros(3)
        self.v = np.zeros(3)
        self.acc = np.zeros(3)
        self.z = np.zeros(3)
        a1, a2 = self.kin.cone_angle_1, self.kin.cone_angle_2
        self._grav_sin = p.gravity * np.sin(a1) * np.sin(a2)
        self._uz_cos = np.cos(a1) * np.cos(a2)
        self._uz_amp = np.sin(a1) * np.sin(a2)

    def reset(self, joint_pose: np.ndarray) -> None:
        """Place the mechanism at rest so its estimate reads joint_pose."""
        q = np.asarray(joint_pose, dtype=float)
        self.m = np.linalg.solve(self._coupling, q)
        self.v = np.zeros(3)
        self.acc = np.zeros(3)
        self.z = np.zeros(3)

    def joint_estimate(self) -> np.ndarray:
        """The robot's own (uncalibrated) joint pose reading."""
        return self._coupling @ self.m

    def set_load(self, mass: float) -> None:
        """Attach a payload at the tool tip; the servo does not know it."""
        if self.params.tool_mass + mass < 0.0:
            raise NegativeMass(
                f"tool mass {self.params.tool_mass} plus payload {mass} "
                "is negative"
            )
        self.payload_mass = float(mass)

    def home(self) -> None:
        """Re-index the encoders; the compensated reading does not move."""
        p = self.params
        first = self.homing_count == 0
        scale = p.homing_first_counts if first else p.homing_later_counts
        for j in range(3):
            sign = 1.0 if self._rng.random() < 0.5 else -1.0
            jump = int(round(sign * self._rng.uniform(0.8, 1.0) * scale))
            self.encoder_offset[j] += jump
        r4 = p.register4_first_jump if first else p.register4_later_jump
        sign = 1.0 if self._rng.random() < 0.5 else -1.0
        self.register4 += sign * self._rng.uniform(0.8, 1.0) * r4
        self.homing_count += 1
        self._homing_until = self.tick * DT + 1.0

    def run(self, q_des: np.ndarray, record: bool = True) -> RunLog | None:
        """Track a (ticks, 3) joint setpoint stream at 1 kHz.

        Returns the 25 Hz record log, or None when record is False (the
        mechanism still moves and time still advances).
        """
        q_des = np.ascontiguousarray(q_des, dtype=float)
        if q_des.ndim != 2 or q_des.shape[1] != 3:
            raise ValueError("setpoint stream must have shape (ticks, 3)")
        p = self.params
        m_des = np.ascontiguousarray(q_des @ np.linalg.inv(self._coupling).T)
        log = _integrate(
            q_des,
            m_des,
            self.tick,
            RECORD_STRIDE,
            DT,
            self.m,
            self.v,
            self.acc,
            self.z,
            self._coupling,
            np.asarray(p.kp),
            np.asarray(p.kd),
            np.asarray(p.rotor_inertia),
            np.asarray(p.distal_inertia),
            np.asarray(p.viscous),
            np.asarray(p.friction),
            np.asarray(p.bw_a),
            np.asarray(p.bw_beta),
            np.asarray(p.bw_gamma),
            np.asarray(p.bw_n),
            np.asarray(p.bias),
            np.asarray(p.ecc_amp),
            np.asarray(p.ecc_freq),
            np.asarray(p.ecc_phase),
            np.asarray(p.alpha),
            np.asarray(p.backlash),
            np.asarray(p.tension_ref),
            np.asarray(p.compliance),
            p.kappa_32,
            self._grav_sin,
            self._uz_cos,
            self._uz_amp,
            p.gravity,
            p.tool_mass + self.payload_mass,
            p.tool_mass,
            p.arm_moment,
            self.kin.tool_offset[2],
        )
        self.tick += q_des.shape[0]
        if not np.isfinite(self.m).all() or not np.isfinite(log).all():
            raise NonFiniteState(
                "plant state became non-finite; check gains and inertias"
            )
        if not record:
            return None
        n = log.shape[0]
        counts = np.rint(log[:, 1:4] * self._cpu[None, :]).astype(np.int64)
        jitter = self._rng.normal(0.0, p.register4_jitter, size=n)
        slip = self._rng.normal(0.0, 1.0, size=(n, 3)) * np.asarray(p.slip_noise)
        out = RunLog(
            time=log[:, 0].copy(),
            motor_pose=log[:, 1:4].copy(),
            motor_pose_desired=log[:, 4:7].copy(),
            motor_velocity=log[:, 7:10].copy(),
            joint_pose_desired=log[:, 10:13].copy(),
            torque_command=log[:, 13:16].copy(),
            cable_tension=log[:, 16:19].copy(),
            joint_pose_true=log[:, 19:22] + slip,
            hysteresis_state=log[:, 22:25].copy(),
            encoder_value=self.encoder_offset[None, :] + counts,
            encoder_offset=np.repeat(self.encoder_offset[None, :], n, axis=0),
            register4=self.register4 + jitter,
            record_index=self.record_count + np.arange(n, dtype=np.int64),
            run_level=np.where(log[:, 0] < self._homing_until, 1.0, 3.0),
        )
        self.record_count += n
        return out

    def hold(self, seconds: float, record: bool = True) -> RunLog | None:
        """Hold the current setpoint for a while."""
        ticks = max(1, int(round(seconds / DT)))
        q = self.joint_estimate()
        return self.run(np.tile(q, (ticks, 1)), record=record)
