"""Frame conversions and per-task observation builders.

The ego frame shares the vehicle's heading but keeps its z axis world-up:
x_E is the horizontal projection of body x, z_E = world z.  Observation
layouts are fixed per task (hover 18, tracking 48, vision tasks 46) and
documented index-by-index in docs/obs-layout.md.
"""

from __future__ import annotations

import numpy as np

from .quat import rot_from_quat, yaw_from_quat

OBS_DIM_HOVER = 18
OBS_DIM_TRACK = 48
OBS_DIM_EGO = 46
DEPTH_FEATURE_GRID = (5, 6)   # rows x cols -> 30 features

GIMBAL_LOCK_PITCH = np.deg2rad(89.9)


def flatten_rot(r: np.ndarray) -> np.ndarray:
    """Row-major flattening of (...,3,3) rotation matrices."""
    r = np.asarray(r, dtype=float)
    return r.reshape(r.shape[:-2] + (9,))


def world_to_ego(q: np.ndarray, v_w: np.ndarray) -> np.ndarray:
    """Express world vector(s) in the yaw-aligned ego frame (z unchanged)."""
    yaw = yaw_from_quat(q)
    c, s = np.cos(yaw), np.sin(yaw)
    v_w = np.asarray(v_w, dtype=float)
    x = c * v_w[..., 0] + s * v_w[..., 1]
    y = -s * v_w[..., 0] + c * v_w[..., 1]
    return np.stack([x, y, v_w[..., 2]], axis=-1)


def euler_zyx(q: np.ndarray, last_yaw=None) -> np.ndarray:
    """Intrinsic yaw-pitch-roll angles, returned as (roll, pitch, yaw).

    Near gimbal lock (|pitch| > 89.9 deg) yaw is ill-defined; the caller
    may supply last_yaw to hold the previous heading there.
    """
    r = rot_from_quat(q)
    pitch = -np.arcsin(np.clip(r[..., 2, 0], -1.0, 1.0))
    roll = np.arctan2(r[..., 2, 1], r[..., 2, 2])
    yaw = np.arctan2(r[..., 1, 0], r[..., 0, 0])
    locked = np.abs(pitch) > GIMBAL_LOCK_PITCH
    if np.any(locked):
        hold = np.zeros_like(yaw) if last_yaw is None else np.broadcast_to(
            np.asarray(last_yaw, dtype=float), yaw.shape
        )
        yaw = np.where(locked, hold, yaw)
    return np.stack([roll, pitch, yaw], axis=-1)


def obs_hover(state, target_pos, target_vel=None, target_omega=None) -> np.ndarray:
    """18-dim hover observation: attitude matrix + target-minus-current errors."""
    n = state.n
    target_pos = np.broadcast_to(np.asarray(target_pos, dtype=float), (n, 3))
    d_pos = target_pos - state.pos_w
    d_vel = -state.vel_w if target_vel is None else target_vel - state.vel_w
    d_omega = -state.omega_b if target_omega is None else target_omega - state.omega_b
    rot = flatten_rot(rot_from_quat(state.quat_wb))
    return np.concatenate([rot, d_pos, d_vel, d_omega], axis=-1)


def obs_track(state, ref_points: np.ndarray) -> np.ndarray:
    """48-dim tracking observation: attitude, absolute state, 10-point lookahead."""
    ref_points = np.asarray(ref_points, dtype=float)
    if ref_points.shape[-2:] != (10, 3):
        raise ValueError(f"reference window must be (...,10,3), got {ref_points.shape}")
    rot = flatten_rot(rot_from_quat(state.quat_wb))
    ref_flat = ref_points.reshape(ref_points.shape[:-2] + (30,))
    if ref_flat.ndim == 1:
        ref_flat = np.broadcast_to(ref_flat, (state.n, 30))
    return np.concatenate(
        [rot, state.pos_w, state.vel_w, state.omega_b, ref_flat], axis=-1
    )


def obs_ego(state, goal, last_action, depth_feature, last_yaw=None) -> np.ndarray:
    """46-dim ego-centric observation for the vision tasks.

    Layout: unit goal direction in ego frame (3), Euler angles (3),
    ego-frame velocity (3), ego-frame body rate (3), previous action (4),
    pooled depth feature (30).
    """
    n = state.n
    goal = np.broadcast_to(np.asarray(goal, dtype=float), (n, 3))
    last_action = np.asarray(last_action, dtype=float)
    if last_action.shape != (n, 4):
        raise ValueError("last_action must be (n,4)")
    depth_feature = np.asarray(depth_feature, dtype=float)
    if depth_feature.shape != (n, 30):
        raise ValueError("depth_feature must be (n,30)")

    to_goal = goal - state.pos_w
    dist = np.linalg.norm(to_goal, axis=-1, keepdims=True)
    direction = np.where(dist > 1e-9, to_goal / np.maximum(dist, 1e-12), 0.0)
    d_ego = world_to_ego(state.quat_wb, direction)
    euler = euler_zyx(state.quat_wb, last_yaw=last_yaw)
    v_ego = world_to_ego(state.quat_wb, state.vel_w)
    rot = rot_from_quat(state.quat_wb)
    omega_w = np.einsum("nij,nj->ni", rot, state.omega_b)
    w_ego = world_to_ego(state.quat_wb, omega_w)
    return np.concatenate([d_ego, euler, v_ego, w_ego, last_action, depth_feature], axis=-1)


def depth_feature_pool(img: np.ndarray, max_range: float = 4.5,
                       grid=DEPTH_FEATURE_GRID) -> np.ndarray:
    """Adaptive average-pool of a normalized depth image to a flat feature.

    Bins follow the adaptive rule start=floor(i*H/rows), end=ceil((i+1)*H/rows)
    so any image size maps onto the fixed grid; output is row-major in [0,1].
    """
    img = np.asarray(img, dtype=float) / max_range
    h, w = img.shape[-2:]
    rows, cols = grid
    lead = img.shape[:-2]
    out = np.empty(lead + (rows * cols,), dtype=float)
    for i in range(rows):
        r0, r1 = (i * h) // rows, -((-(i + 1) * h) // rows)
        for j in range(cols):
            c0, c1 = (j * w) // cols, -((-(j + 1) * w) // cols)
            out[..., i * cols + j] = img[..., r0:r1, c0:c1].mean(axis=(-2, -1))
    return out


def ref_window(traj_fn, t, n: int = 10, dt_ref: float = 0.1) -> np.ndarray:
    """Sample the n upcoming trajectory points at t + i*dt_ref, i = 1..n."""
    if dt_ref <= 0:
        raise ValueError("dt_ref must be positive")
    times = np.asarray(t, dtype=float)[..., None] + dt_ref * np.arange(1, n + 1)
    return traj_fn(times)
