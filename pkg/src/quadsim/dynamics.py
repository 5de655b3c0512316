"""Rigid-body quadrotor dynamics with first-order rotor lag.

State layout is batched: every field of :class:`QuadState` carries a
leading environment axis so n vehicles integrate in one vectorized call.
Integration is classical RK4 with post-step quaternion renormalization
and rotor-speed clamping; identical inputs produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .quat import quat_mul, rotate_vec

GRAVITY = np.array([0.0, 0.0, -9.81])


class SimulationDiverged(RuntimeError):
    """Raised when an integration step produces non-finite state."""


@dataclass
class QuadParams:
    """Physical vehicle parameters, SI units."""

    mass: float = 0.4                       # kg
    inertia: np.ndarray = None              # kg m^2, diagonal (Ix, Iy, Iz)
    thrust_coef: float = 6.8e-7             # N s^2 / rad^2, per-rotor thrust = c_l * speed^2
    drag_torque_coef: float = 1.0e-8        # N m s^2 / rad^2
    rotor_pos: np.ndarray = None            # (4,3) body-frame rotor locations, m
    spin_sign: np.ndarray = None            # (4,) yaw-torque sign per rotor, two of each
    motor_rate_gain: float = 25.0           # 1/s, rotor speed tracking gain
    rotor_speed_max: float = None           # rad/s
    rotor_thrust_max: float = None          # N, normalized-throttle full-scale thrust
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    body_drag: np.ndarray = None            # N s/m, diagonal linear drag on world velocity

    def __post_init__(self):
        arm = 0.152 / 2.0
        a = arm / np.sqrt(2.0)
        if self.inertia is None:
            self.inertia = np.array([2.2e-3, 2.2e-3, 4.0e-3])
        if self.rotor_pos is None:
            self.rotor_pos = np.array(
                [[a, a, 0.0], [-a, -a, 0.0], [a, -a, 0.0], [-a, a, 0.0]]
            )
        if self.spin_sign is None:
            self.spin_sign = np.array([1.0, 1.0, -1.0, -1.0])
        if self.body_drag is None:
            self.body_drag = np.zeros(3)
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.rotor_pos = np.asarray(self.rotor_pos, dtype=float)
        self.spin_sign = np.asarray(self.spin_sign, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)
        self.body_drag = np.asarray(self.body_drag, dtype=float)
        self.validate()
        if self.rotor_speed_max is None:
            self.rotor_speed_max = 3.0 * hover_speed(self)
        if self.rotor_thrust_max is None:
            self.rotor_thrust_max = self.thrust_coef * self.rotor_speed_max**2

    def validate(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not np.all(self.inertia > 0):
            raise ValueError("inertia diagonal must be positive")
        if not self.thrust_coef > 0:
            raise ValueError("thrust_coef must be positive")
        if self.drag_torque_coef < 0:
            raise ValueError("drag_torque_coef must be non-negative")
        if not self.motor_rate_gain > 0:
            raise ValueError("motor_rate_gain must be positive")
        if self.rotor_pos.shape != (4, 3):
            raise ValueError("rotor_pos must be (4,3)")
        if np.sum(self.spin_sign > 0) != 2 or np.sum(self.spin_sign < 0) != 2:
            raise ValueError("spin_sign needs exactly two rotors of each sign")

    @property
    def hover_throttle(self) -> float:
        return self.mass * np.linalg.norm(self.gravity) / (4.0 * self.rotor_thrust_max)


@dataclass
class ExternalWrench:
    """World-frame force and body-frame torque applied to the hull."""

    force_w: np.ndarray
    torque_b: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "ExternalWrench":
        return cls(np.zeros((n, 3)), np.zeros((n, 3)))


@dataclass
class QuadState:
    """Batched vehicle state: position, attitude, velocity, rates, rotor speeds."""

    pos_w: np.ndarray       # (n,3) m
    quat_wb: np.ndarray     # (n,4) unit, body-to-world, (w,x,y,z)
    vel_w: np.ndarray       # (n,3) m/s
    omega_b: np.ndarray     # (n,3) rad/s
    rotor_speed: np.ndarray  # (n,4) rad/s

    @property
    def n(self) -> int:
        return self.pos_w.shape[0]

    @classmethod
    def hover(cls, n: int, params: QuadParams, pos=(0.0, 0.0, 1.0)) -> "QuadState":
        """Level rest state at `pos` with rotors at hover speed."""
        omega_h = hover_speed(params)
        return cls(
            pos_w=np.tile(np.asarray(pos, dtype=float), (n, 1)),
            quat_wb=np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1)),
            vel_w=np.zeros((n, 3)),
            omega_b=np.zeros((n, 3)),
            rotor_speed=np.full((n, 4), omega_h),
        )

    def copy(self) -> "QuadState":
        return QuadState(
            self.pos_w.copy(), self.quat_wb.copy(), self.vel_w.copy(),
            self.omega_b.copy(), self.rotor_speed.copy(),
        )

    def finite_mask(self) -> np.ndarray:
        """Per-vehicle boolean: True where every component is finite."""
        return (
            np.isfinite(self.pos_w).all(axis=-1)
            & np.isfinite(self.quat_wb).all(axis=-1)
            & np.isfinite(self.vel_w).all(axis=-1)
            & np.isfinite(self.omega_b).all(axis=-1)
            & np.isfinite(self.rotor_speed).all(axis=-1)
        )


@dataclass
class StateDerivative:
    d_pos: np.ndarray
    d_quat: np.ndarray
    d_vel: np.ndarray
    d_omega: np.ndarray
    d_rotor_speed: np.ndarray


def hover_speed(params: QuadParams) -> float:
    """Rotor speed at which four rotors exactly cancel gravity."""
    g = np.linalg.norm(params.gravity)
    return float(np.sqrt(params.mass * g / (4.0 * params.thrust_coef)))


def rotor_wrench(rotor_speed: np.ndarray, params: QuadParams):
    """Collective body-frame force and torque from the four rotors.

    Per-rotor thrust c_l*speed^2 acts along body z at the rotor location;
    its drag torque c_d*speed^2 acts along body z with the rotor's sign.
    """
    w2 = np.asarray(rotor_speed, dtype=float) ** 2          # (..., 4)
    thrust = params.thrust_coef * w2                        # per-rotor N
    f = np.zeros(w2.shape[:-1] + (3,))
    f[..., 2] = thrust.sum(axis=-1)
    tau = np.zeros_like(f)
    # r x (0,0,f) = (ry*f, -rx*f, 0)
    tau[..., 0] = (thrust * params.rotor_pos[:, 1]).sum(axis=-1)
    tau[..., 1] = -(thrust * params.rotor_pos[:, 0]).sum(axis=-1)
    tau[..., 2] = (params.spin_sign * params.drag_torque_coef * w2).sum(axis=-1)
    return f, tau


def derivative(
    state: QuadState,
    rotor_cmd: np.ndarray,
    params: QuadParams,
    ext: ExternalWrench,
) -> StateDerivative:
    """Continuous-time state derivative."""
    f_b, tau_b = rotor_wrench(state.rotor_speed, params)

    d_pos = state.vel_w
    omega_q = np.concatenate(
        [np.zeros(state.omega_b.shape[:-1] + (1,)), state.omega_b], axis=-1
    )
    d_quat = 0.5 * quat_mul(state.quat_wb, omega_q)

    force_w = rotate_vec(state.quat_wb, f_b) + ext.force_w
    force_w = force_w - params.body_drag * state.vel_w
    d_vel = force_w / params.mass + params.gravity

    j = params.inertia
    j_omega = state.omega_b * j
    gyro = np.cross(state.omega_b, j_omega)
    d_omega = (tau_b + ext.torque_b - gyro) / j

    d_rotor = params.motor_rate_gain * (rotor_cmd - state.rotor_speed)
    return StateDerivative(d_pos, d_quat, d_vel, d_omega, d_rotor)


@njit(cache=True)
def _deriv17(y, cmd, mass, jx, jy, jz, c_l, c_d, rotor_pos, spin_sign, t_m,
             gx, gy, gz, dx, dy, dz, fx, fy, fz_ext, tx, ty, tz, out):
    """Derivative of one vehicle's packed 17-state into `out`."""
    qw, qx, qy, qz = y[3], y[4], y[5], y[6]
    vx, vy, vz = y[7], y[8], y[9]
    wx, wy, wz = y[10], y[11], y[12]

    thrust = 0.0
    tau_x = tx
    tau_y = ty
    tau_z = tz
    for i in range(4):
        ti = c_l * y[13 + i] * y[13 + i]
        thrust += ti
        tau_x += ti * rotor_pos[i, 1]
        tau_y -= ti * rotor_pos[i, 0]
        tau_z += spin_sign[i] * c_d * y[13 + i] * y[13 + i]

    out[0], out[1], out[2] = vx, vy, vz

    out[3] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[5] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[6] = 0.5 * (qw * wz + qx * wy - qy * wx)

    # body-z thrust rotated to world: third column of R(q) times thrust
    fwx = thrust * 2.0 * (qx * qz + qw * qy) + fx - dx * vx
    fwy = thrust * 2.0 * (qy * qz - qw * qx) + fy - dy * vy
    fwz = thrust * (1.0 - 2.0 * (qx * qx + qy * qy)) + fz_ext - dz * vz
    out[7] = fwx / mass + gx
    out[8] = fwy / mass + gy
    out[9] = fwz / mass + gz

    out[10] = (tau_x - (wy * jz * wz - wz * jy * wy)) / jx
    out[11] = (tau_y - (wz * jx * wx - wx * jz * wz)) / jy
    out[12] = (tau_z - (wx * jy * wy - wy * jx * wx)) / jz

    for i in range(4):
        out[13 + i] = t_m * (cmd[i] - y[13 + i])


@njit(cache=True)
def _rk4_kernel(y, cmd, mass, jx, jy, jz, c_l, c_d, rotor_pos, spin_sign, t_m,
                gx, gy, gz, dx, dy, dz, ext_f, ext_tau, dt, omega_max, out):
    n = y.shape[0]
    k1 = np.empty(17)
    k2 = np.empty(17)
    k3 = np.empty(17)
    k4 = np.empty(17)
    tmp = np.empty(17)
    for e in range(n):
        row = y[e]
        c = cmd[e]
        fx, fy, fz_ext = ext_f[e, 0], ext_f[e, 1], ext_f[e, 2]
        tx, ty, tz = ext_tau[e, 0], ext_tau[e, 1], ext_tau[e, 2]
        _deriv17(row, c, mass, jx, jy, jz, c_l, c_d, rotor_pos, spin_sign, t_m,
                 gx, gy, gz, dx, dy, dz, fx, fy, fz_ext, tx, ty, tz, k1)
        for i in range(17):
            tmp[i] = row[i] + 0.5 * dt * k1[i]
        _deriv17(tmp, c, mass, jx, jy, jz, c_l, c_d, rotor_pos, spin_sign, t_m,
                 gx, gy, gz, dx, dy, dz, fx, fy, fz_ext, tx, ty, tz, k2)
        for i in range(17):
            tmp[i] = row[i] + 0.5 * dt * k2[i]
        _deriv17(tmp, c, mass, jx, jy, jz, c_l, c_d, rotor_pos, spin_sign, t_m,
                 gx, gy, gz, dx, dy, dz, fx, fy, fz_ext, tx, ty, tz, k3)
        for i in range(17):
            tmp[i] = row[i] + dt * k3[i]
        _deriv17(tmp, c, mass, jx, jy, jz, c_l, c_d, rotor_pos, spin_sign, t_m,
                 gx, gy, gz, dx, dy, dz, fx, fy, fz_ext, tx, ty, tz, k4)
        for i in range(17):
            out[e, i] = row[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0)

        norm = np.sqrt(out[e, 3] ** 2 + out[e, 4] ** 2 + out[e, 5] ** 2 + out[e, 6] ** 2)
        for i in range(3, 7):
            out[e, i] /= norm
        for i in range(13, 17):
            if out[e, i] < 0.0:
                out[e, i] = 0.0
            elif out[e, i] > omega_max:
                out[e, i] = omega_max


def _pack(state: QuadState) -> np.ndarray:
    return np.concatenate(
        [state.pos_w, state.quat_wb, state.vel_w, state.omega_b, state.rotor_speed],
        axis=-1,
    )


def step(
    state: QuadState,
    rotor_cmd: np.ndarray,
    params: QuadParams,
    ext: ExternalWrench,
    dt: float,
    check: bool = True,
) -> QuadState:
    """One RK4 step, then quaternion renormalize and rotor-speed clamp.

    With check=True a non-finite result raises SimulationDiverged; batch
    callers pass check=False and inspect finite_mask() per vehicle.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = _pack(state)
    out = np.empty_like(y)
    cmd = np.ascontiguousarray(np.broadcast_to(rotor_cmd, (state.n, 4)), dtype=float)
    force = np.ascontiguousarray(ext.force_w, dtype=float)
    torque = np.ascontiguousarray(ext.torque_b, dtype=float)
    j = params.inertia
    d = params.body_drag
    g = params.gravity
    _rk4_kernel(
        y, cmd, params.mass, j[0], j[1], j[2],
        params.thrust_coef, params.drag_torque_coef,
        params.rotor_pos, params.spin_sign, params.motor_rate_gain,
        g[0], g[1], g[2], d[0], d[1], d[2],
        force, torque, float(dt), params.rotor_speed_max, out,
    )
    new = QuadState(
        pos_w=out[:, 0:3], quat_wb=out[:, 3:7], vel_w=out[:, 7:10],
        omega_b=out[:, 10:13], rotor_speed=out[:, 13:17],
    )
    if check:
        bad = ~new.finite_mask()
        if bad.any():
            raise SimulationDiverged(f"non-finite state at indices {np.flatnonzero(bad)}")
    return new
