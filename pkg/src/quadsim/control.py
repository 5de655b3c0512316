"""Cascade flight controller with five command entry points.

The loop chain is position -> velocity -> attitude -> body rate -> mixer;
each control mode enters the chain at its own level and runs everything
below it.  All loops are batched over vehicles and run at the dynamics
rate.  Gains live in config, not here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import QuadParams, QuadState
from .quat import quat_conj, quat_from_rot, quat_mul

DEGENERATE_THRUST = 1e-8   # N, below this the attitude setpoint is held


class ControlMode(enum.Enum):
    PY = "py"       # position + yaw
    LV = "lv"       # linear velocity + yaw
    CTA = "cta"     # collective thrust + attitude quaternion
    CTBR = "ctbr"   # collective thrust + body rates
    SRT = "srt"     # per-rotor throttles


# action vector length accepted per mode
ACTION_DIM = {
    ControlMode.PY: 4,
    ControlMode.LV: 4,
    ControlMode.CTA: 5,
    ControlMode.CTBR: 4,
    ControlMode.SRT: 4,
}


class RejectedCommandError(ValueError):
    """Command shape or content is invalid for the selected mode."""


@dataclass
class ControllerGains:
    pos_p: np.ndarray = None          # 1/s
    vel_p: np.ndarray = None          # (m/s^2)/(m/s)
    vel_i: np.ndarray = None
    vel_d: np.ndarray = None
    att_p: float = 8.0                # 1/s
    rate_p: np.ndarray = None         # N m / (rad/s)
    rate_i: np.ndarray = None
    rate_d: np.ndarray = None
    max_tilt: float = 0.6             # rad
    max_vel: float = 3.0              # m/s
    max_rate: float = 8.0             # rad/s
    thrust_min: float = 0.0           # normalized collective
    thrust_max: float = 1.0
    hover_throttle: float = None      # derived from params when unset
    vel_int_max: float = 2.0          # m/s, velocity-integrator clamp
    rate_int_max: float = 0.3         # rad, rate-integrator clamp

    def __post_init__(self):
        def arr(v, default):
            if v is None:
                v = default
            a = np.asarray(v, dtype=float)
            return np.full(3, float(a)) if a.ndim == 0 else a

        self.pos_p = arr(self.pos_p, (2.5, 2.5, 2.5))
        self.vel_p = arr(self.vel_p, (6.0, 6.0, 6.0))
        self.vel_i = arr(self.vel_i, (3.0, 3.0, 3.0))
        self.vel_d = arr(self.vel_d, (0.0, 0.0, 0.0))
        self.rate_p = arr(self.rate_p, (0.06, 0.06, 0.03))
        self.rate_i = arr(self.rate_i, (0.03, 0.03, 0.015))
        self.rate_d = arr(self.rate_d, (0.001, 0.001, 0.0))
        for name in ("pos_p", "vel_p", "vel_i", "vel_d", "rate_p", "rate_i", "rate_d"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be non-negative")
        if self.att_p < 0:
            raise ValueError("att_p must be non-negative")
        if self.hover_throttle is not None and not 0.0 < self.hover_throttle < 1.0:
            raise ValueError("hover_throttle must be in (0,1)")
        for name in ("max_tilt", "max_vel", "max_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def resolve_hover_throttle(self, params: QuadParams) -> float:
        if self.hover_throttle is None:
            return params.hover_throttle
        return self.hover_throttle


@dataclass
class Command:
    """Mode-tagged setpoint batch; data shape (n, dim) with dim per mode."""

    mode: ControlMode
    data: np.ndarray

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        want = ACTION_DIM[self.mode]
        if self.data.shape[-1] != want:
            raise RejectedCommandError(
                f"{self.mode.value} command needs dim {want}, got {self.data.shape[-1]}"
            )


@dataclass
class ActuatorCommand:
    u: np.ndarray           # (n,4) normalized throttles in [0,1]
    rotor_cmd: np.ndarray   # (n,4) rad/s


@dataclass
class ControllerState:
    """Per-vehicle integrators and memories; zeroed on reset."""

    vel_int: np.ndarray
    vel_err_prev: np.ndarray
    rate_int: np.ndarray
    rate_err_prev: np.ndarray
    att_sp_prev: np.ndarray
    degenerate: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ControllerState":
        identity = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
        return cls(
            vel_int=np.zeros((n, 3)),
            vel_err_prev=np.zeros((n, 3)),
            rate_int=np.zeros((n, 3)),
            rate_err_prev=np.zeros((n, 3)),
            att_sp_prev=identity,
            degenerate=np.zeros(n, dtype=bool),
        )

    def reset(self, ids) -> None:
        self.vel_int[ids] = 0.0
        self.vel_err_prev[ids] = 0.0
        self.rate_int[ids] = 0.0
        self.rate_err_prev[ids] = 0.0
        self.att_sp_prev[ids] = np.array([1.0, 0.0, 0.0, 0.0])
        self.degenerate[ids] = False


def _clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.minimum(1.0, limit / np.maximum(norm, 1e-12))
    return v * scale


def position_loop(p_err: np.ndarray, gains: ControllerGains) -> np.ndarray:
    """Proportional position control; output clamped to max_vel by norm."""
    return _clamp_norm(gains.pos_p * p_err, gains.max_vel)


def velocity_loop(
    v_sp: np.ndarray,
    v: np.ndarray,
    yaw_sp: np.ndarray,
    ctrl: ControllerState,
    gains: ControllerGains,
    params: QuadParams,
    dt: float,
):
    """PID velocity control mapped to collective thrust and attitude setpoint.

    The acceleration setpoint is turned into a world thrust vector
    t = m (a_sp - g); its direction (tilt-limited, yaw from yaw_sp)
    becomes the attitude setpoint and its magnitude the thrust.
    """
    err = v_sp - v
    ctrl.vel_int += err * dt
    np.clip(ctrl.vel_int, -gains.vel_int_max, gains.vel_int_max, out=ctrl.vel_int)
    d_err = (err - ctrl.vel_err_prev) / dt
    ctrl.vel_err_prev = err.copy()
    a_sp = gains.vel_p * err + gains.vel_i * ctrl.vel_int + gains.vel_d * d_err

    t_w = params.mass * (a_sp - params.gravity)
    degenerate = np.linalg.norm(t_w, axis=-1) < DEGENERATE_THRUST
    # altitude-priority tilt limit: keep vertical thrust, cone-clamp the rest
    tz = np.maximum(t_w[:, 2], DEGENERATE_THRUST)
    xy_norm = np.linalg.norm(t_w[:, :2], axis=-1)
    xy_max = np.tan(gains.max_tilt) * tz
    scale = np.minimum(1.0, xy_max / np.maximum(xy_norm, 1e-12))
    t_w = np.column_stack([t_w[:, 0] * scale, t_w[:, 1] * scale, tz])

    thrust = np.linalg.norm(t_w, axis=-1)
    full_scale = 4.0 * params.rotor_thrust_max
    thrust = np.clip(thrust, gains.thrust_min * full_scale, gains.thrust_max * full_scale)

    q_sp = _attitude_from_thrust_dir(t_w, yaw_sp)
    if degenerate.any():
        q_sp[degenerate] = ctrl.att_sp_prev[degenerate]
    ctrl.att_sp_prev = q_sp.copy()
    ctrl.degenerate = degenerate
    return thrust, q_sp


def _attitude_from_thrust_dir(t_w: np.ndarray, yaw_sp: np.ndarray) -> np.ndarray:
    """Attitude whose body z matches t_w direction with heading yaw_sp."""
    n = t_w.shape[0]
    z_d = t_w / np.maximum(np.linalg.norm(t_w, axis=-1, keepdims=True), 1e-12)
    yaw_sp = np.broadcast_to(np.asarray(yaw_sp, dtype=float), (n,))
    x_c = np.column_stack([np.cos(yaw_sp), np.sin(yaw_sp), np.zeros(n)])
    y_d = np.cross(z_d, x_c)
    y_norm = np.linalg.norm(y_d, axis=-1, keepdims=True)
    # z_d parallel to heading (90 deg tilt): fall back to world y
    bad = y_norm[:, 0] < 1e-9
    if bad.any():
        y_d[bad] = np.array([0.0, 1.0, 0.0])
        y_norm = np.linalg.norm(y_d, axis=-1, keepdims=True)
    y_d = y_d / y_norm
    x_d = np.cross(y_d, z_d)
    r = np.stack([x_d, y_d, z_d], axis=-1)   # columns are body axes
    return quat_from_rot(r)


def attitude_loop(q: np.ndarray, q_sp: np.ndarray, gains: ControllerGains) -> np.ndarray:
    """Shortest-path quaternion attitude P control returning a rate setpoint."""
    q_err = quat_mul(quat_conj(q), q_sp)
    sign = np.where(q_err[..., 0:1] >= 0.0, 1.0, -1.0)
    omega_sp = 2.0 * gains.att_p * sign * q_err[..., 1:]
    return _clamp_norm(omega_sp, gains.max_rate)


def rate_loop(
    omega: np.ndarray,
    omega_sp: np.ndarray,
    ctrl: ControllerState,
    gains: ControllerGains,
    dt: float,
) -> np.ndarray:
    """PID body-rate control in the torque domain with integrator clamp."""
    err = omega_sp - omega
    ctrl.rate_int += err * dt
    np.clip(ctrl.rate_int, -gains.rate_int_max, gains.rate_int_max, out=ctrl.rate_int)
    d_err = (err - ctrl.rate_err_prev) / dt
    ctrl.rate_err_prev = err.copy()
    return gains.rate_p * err + gains.rate_i * ctrl.rate_int + gains.rate_d * d_err


class Mixer:
    """Inverts the rotor allocation; saturation drops yaw, then xy torque."""

    def __init__(self, params: QuadParams):
        kappa = params.drag_torque_coef / params.thrust_coef
        alloc = np.empty((4, 4))
        alloc[0] = 1.0
        alloc[1] = params.rotor_pos[:, 1]
        alloc[2] = -params.rotor_pos[:, 0]
        alloc[3] = params.spin_sign * kappa
        self.alloc = alloc
        self.alloc_inv = np.linalg.inv(alloc)
        self.params = params

    @staticmethod
    def _max_scale(base: np.ndarray, delta: np.ndarray, lo: float, hi: float) -> np.ndarray:
        """Largest s in [0,1] with lo <= base + s*delta <= hi per row."""
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(delta > 1e-12, (hi - base) / delta, np.inf)
            dn = np.where(delta < -1e-12, (lo - base) / delta, np.inf)
        s = np.minimum(up, dn).min(axis=-1)
        return np.clip(s, 0.0, 1.0)

    def __call__(self, thrust: np.ndarray, torque: np.ndarray) -> ActuatorCommand:
        p = self.params
        f_max = p.rotor_thrust_max
        thrust = np.clip(np.atleast_1d(np.asarray(thrust, dtype=float)), 0.0, 4.0 * f_max)
        torque = np.atleast_2d(np.asarray(torque, dtype=float))
        n = thrust.shape[0]

        inv = self.alloc_inv
        f_t = thrust[:, None] * inv[:, 0]
        f_xy = torque[:, 0:1] * inv[:, 1] + torque[:, 1:2] * inv[:, 2]
        f_z = torque[:, 2:3] * inv[:, 3]

        s_xy = self._max_scale(f_t, f_xy, 0.0, f_max)[:, None]
        f1 = f_t + s_xy * f_xy
        s_z = self._max_scale(f1, f_z, 0.0, f_max)[:, None]
        f = np.clip(f1 + s_z * f_z, 0.0, f_max)

        u = f / f_max
        rotor_cmd = np.sqrt(f / p.thrust_coef)
        np.clip(rotor_cmd, 0.0, p.rotor_speed_max, out=rotor_cmd)
        return ActuatorCommand(u=u, rotor_cmd=rotor_cmd)


class CascadeController:
    """Batched flight controller; dispatches a Command at its mode's level."""

    def __init__(self, n: int, gains: ControllerGains, params: QuadParams):
        self.n = n
        self.gains = gains
        self.params = params
        self.mixer = Mixer(params)
        self.state = ControllerState.zeros(n)
        self.hover_throttle = gains.resolve_hover_throttle(params)

    def reset(self, ids=None) -> None:
        self.state.reset(slice(None) if ids is None else ids)

    def update(self, command: Command, quad: QuadState, dt: float) -> ActuatorCommand:
        if command.data.shape[0] != self.n:
            raise RejectedCommandError(
                f"command batch {command.data.shape[0]} != controller batch {self.n}"
            )
        mode = command.mode
        data = command.data
        gains, params = self.gains, self.params
        full_scale = 4.0 * params.rotor_thrust_max

        if mode is ControlMode.SRT:
            u = np.clip(data, 0.0, 1.0)
            f = u * params.rotor_thrust_max
            rotor_cmd = np.clip(
                np.sqrt(f / params.thrust_coef), 0.0, params.rotor_speed_max
            )
            return ActuatorCommand(u=u, rotor_cmd=rotor_cmd)

        if mode in (ControlMode.PY, ControlMode.LV):
            if mode is ControlMode.PY:
                v_sp = position_loop(data[:, :3] - quad.pos_w, gains)
            else:
                v_sp = _clamp_norm(data[:, :3], gains.max_vel)
            yaw_sp = data[:, 3]
            thrust, q_sp = velocity_loop(
                v_sp, quad.vel_w, yaw_sp, self.state, gains, params, dt
            )
        elif mode is ControlMode.CTA:
            q_sp = data[:, 1:5]
            norms = np.linalg.norm(q_sp, axis=-1)
            if np.any(norms < 1e-8):
                raise RejectedCommandError("zero-norm attitude quaternion")
            q_sp = q_sp / norms[:, None]
            thrust = np.clip(data[:, 0], gains.thrust_min, gains.thrust_max) * full_scale
        else:  # CTBR
            thrust = np.clip(data[:, 0], gains.thrust_min, gains.thrust_max) * full_scale
            omega_sp = _clamp_norm(data[:, 1:4], gains.max_rate)
            torque = rate_loop(quad.omega_b, omega_sp, self.state, gains, dt)
            return self.mixer(thrust, torque)

        omega_sp = attitude_loop(quad.quat_wb, q_sp, gains)
        torque = rate_loop(quad.omega_b, omega_sp, self.state, gains, dt)
        return self.mixer(thrust, torque)
