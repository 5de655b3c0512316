"""Task definitions: reference trajectories, reward terms, spawners, termination.

Every reward function returns (total, terms) where terms is an ordered
dict of named contributions that sums exactly to the total, so traces
can carry the full breakdown.  Gain values are plain config numbers with
committed defaults; they are tuned for the test suite, not calibrated
constants.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .quat import rot_from_quat, yaw_from_quat


class TaskKind(enum.Enum):
    HOVERING = "hovering"
    TRACKING = "tracking"
    TARGET_HITTING = "target_hitting"
    AVOIDANCE = "avoidance"
    PLANNING = "planning"


class EpisodeOutcome(enum.IntEnum):
    RUNNING = 0
    CRASHED = 1
    HIT = 2
    TIMED_OUT = 3
    GOAL_REACHED = 4

TERMINAL_OUTCOMES = (
    EpisodeOutcome.CRASHED,
    EpisodeOutcome.HIT,
    EpisodeOutcome.TIMED_OUT,
    EpisodeOutcome.GOAL_REACHED,
)


def wrap_angle(a):
    return (np.asarray(a, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


def _upright(state) -> np.ndarray:
    """World-z component of the rotated body z axis, in [-1, 1]."""
    return rot_from_quat(state.quat_wb)[..., 2, 2]


# ---------------------------------------------------------------------------
# reference trajectory

LEMNISCATE_HALF_SPAN = 3.0


def lemniscate(t, rate: float = 1.0) -> np.ndarray:
    """Figure-eight reference at unit height; `rate` scales traversal speed."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    t = np.asarray(t, dtype=float)
    s = np.sin(rate * t)
    c = np.cos(rate * t)
    denom = 1.0 + c * c
    x = LEMNISCATE_HALF_SPAN * s / denom
    y = LEMNISCATE_HALF_SPAN * s * c / denom
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def lemniscate_lap_length(n: int = 200_000) -> float:
    """Arc length of one figure-eight lap, by dense polyline summation."""
    tau = np.linspace(0.0, 2.0 * np.pi, n + 1)
    pts = lemniscate(tau, 1.0)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=-1).sum())


_LAP_LENGTH = None


def lemniscate_rate_for_speed(mean_speed: float) -> float:
    """Rate parameter giving the requested mean path speed, numerically."""
    global _LAP_LENGTH
    if _LAP_LENGTH is None:
        _LAP_LENGTH = lemniscate_lap_length()
    return 2.0 * np.pi * mean_speed / _LAP_LENGTH


def trajectory_playback(t_sim, offset, enabled: bool = True):
    """Reference clock with a per-episode non-negative playback delay."""
    t_sim = np.asarray(t_sim, dtype=float)
    if not enabled:
        return t_sim
    return t_sim - np.maximum(0.0, np.asarray(offset, dtype=float))


# ---------------------------------------------------------------------------
# reward gains (defaults are ours, committed for the test suite)


@dataclass
class HoverGains:
    k_smooth: float = 0.2
    k_effort: float = 0.05
    k_pos: float = 1.0
    k_pos_width: float = 1.0
    k_throttle: float = 0.2
    k_upright: float = 0.2
    k_spin: float = 0.2
    k_heading: float = 0.2
    k_vel_dir: float = 0.1


@dataclass
class TrackGains:
    k_smooth: float = 0.2
    k_effort: float = 0.05
    k_dist: float = 1.0
    k_dist_width: float = 1.0
    k_throttle: float = 0.2
    k_upright: float = 0.2
    k_spin: float = 0.2
    k_heading: float = 0.2


@dataclass
class HitGains:
    k_smooth: float = 0.2
    k_effort: float = 0.1
    k_guidance: float = 1.0
    k_upright: float = 0.1
    k_heading: float = 0.1
    hit_bonus: float = 10.0


@dataclass
class AvoidGains:
    k_smooth: float = 0.2
    k_effort: float = 0.1
    k_throttle: float = 0.2
    k_pose: float = 1.0
    k_upright: float = 0.2
    k_spin: float = 0.2
    alive_bonus: float = 0.1
    hit_penalty: float = -10.0


@dataclass
class PlanGains:
    k_smooth: float = 0.05
    k_effort: float = 0.1
    k_throttle: float = 0.2
    k_guidance: float = 1.0
    k_speed: float = 0.2
    k_speed_width: float = 1.0
    speed_target: float = 1.5       # m/s, expected cruise speed
    height_min: float = 0.5         # m
    height_max: float = 2.5         # m
    k_esdf: float = 0.5
    esdf_sharpness: float = 1.0
    k_upright: float = 0.1
    alive_bonus: float = 0.1
    crash_distance: float = 0.2     # m, minimum-depth crash threshold
    goal_bonus: float = 10.0
    k_heading: float = 0.1


# ---------------------------------------------------------------------------
# reward functions


def _pack(terms: dict):
    total = None
    for v in terms.values():
        total = v if total is None else total + v
    return total, terms


def reward_hover(
    state,
    target_pos,
    target_yaw,
    action,
    prev_action,
    rotor_norm,
    collective_throttle,
    hover_throttle: float,
    gains: HoverGains,
    learns_thrust: bool = True,
):
    """Dense hover reward; the position term gates the attitude-quality group."""
    n = state.n
    target_pos = np.broadcast_to(np.asarray(target_pos, dtype=float), (n, 3))
    d_action = np.linalg.norm(action - prev_action, axis=-1)
    r_smooth = gains.k_smooth * np.exp(-d_action)
    r_effort = gains.k_effort * (1.0 - rotor_norm).sum(axis=-1)

    d_pos = target_pos - state.pos_w
    err2 = (d_pos**2).sum(axis=-1)
    r_pos = gains.k_pos / (1.0 + gains.k_pos_width * err2)

    if learns_thrust:
        r_throttle = gains.k_throttle * (
            1.0 - np.abs(hover_throttle - collective_throttle)
        )
    else:
        r_throttle = np.zeros(n)

    r_ups = gains.k_upright * (_upright(state) + 1.0) ** 2
    r_spin = gains.k_spin / (1.0 + state.omega_b[:, 2] ** 2)
    d_yaw = wrap_angle(target_yaw - yaw_from_quat(state.quat_wb))
    r_heading = gains.k_heading / (1.0 + d_yaw**2)

    # direction from target to vehicle: approaching makes the dot negative,
    # so the printed exponential rewards flight toward the target
    dist = np.linalg.norm(d_pos, axis=-1, keepdims=True)
    away = np.where(dist > 1e-9, -d_pos / np.maximum(dist, 1e-12), 0.0)
    v_dot = (state.vel_w * away).sum(axis=-1)
    r_vel_dir = gains.k_vel_dir * np.exp(-v_dot / np.pi)

    return _pack(
        {
            "smooth": r_smooth,
            "effort": r_effort,
            "pos": r_pos,
            "throttle": r_throttle,
            "pos_x_upright": r_pos * r_ups,
            "pos_x_spin": r_pos * r_spin,
            "pos_x_heading": r_pos * r_heading,
            "pos_x_vel_dir": r_pos * r_vel_dir,
        }
    )


def reward_track(
    state,
    ref_point,
    ref_yaw,
    action,
    prev_action,
    rotor_norm,
    collective_throttle,
    hover_throttle: float,
    gains: TrackGains,
    learns_thrust: bool = True,
):
    """Tracking reward: distance to the current expected point gates quality."""
    n = state.n
    ref_point = np.broadcast_to(np.asarray(ref_point, dtype=float), (n, 3))
    d_action = np.linalg.norm(action - prev_action, axis=-1)
    r_smooth = gains.k_smooth * np.exp(-d_action)
    r_effort = gains.k_effort * (1.0 - rotor_norm).sum(axis=-1)

    err2 = ((ref_point - state.pos_w) ** 2).sum(axis=-1)
    r_dist = gains.k_dist / (1.0 + gains.k_dist_width * err2)

    if learns_thrust:
        r_throttle = gains.k_throttle * (
            1.0 - np.abs(hover_throttle - collective_throttle)
        )
    else:
        r_throttle = np.zeros(n)

    r_ups = gains.k_upright * (_upright(state) + 1.0) ** 2
    r_spin = gains.k_spin / (1.0 + state.omega_b[:, 2] ** 2)
    d_yaw = wrap_angle(ref_yaw - yaw_from_quat(state.quat_wb))
    r_heading = gains.k_heading / (1.0 + d_yaw**2)

    return _pack(
        {
            "smooth": r_smooth,
            "effort": r_effort,
            "dist": r_dist,
            "throttle": r_throttle,
            "dist_x_upright": r_dist * r_ups,
            "dist_x_spin": r_dist * r_spin,
            "dist_x_heading": r_dist * r_heading,
        }
    )


def reward_hit(
    state,
    prev_pos,
    balloon_pos,
    action,
    prev_action,
    gains: HitGains,
    hit,
):
    """Target-hitting reward: progress differential toward the balloon."""
    n = state.n
    balloon_pos = np.broadcast_to(np.asarray(balloon_pos, dtype=float), (n, 3))
    d_action = np.linalg.norm(action - prev_action, axis=-1)
    r_smooth = gains.k_smooth * np.exp(-d_action)
    r_effort = gains.k_effort * np.exp(-(action**2).sum(axis=-1))

    dist_prev = np.linalg.norm(balloon_pos - prev_pos, axis=-1)
    dist_now = np.linalg.norm(balloon_pos - state.pos_w, axis=-1)
    r_guidance = gains.k_guidance * (dist_prev - dist_now)

    r_ups = gains.k_upright * (_upright(state) + 1.0) ** 2
    to_balloon = balloon_pos - state.pos_w
    yaw_target = np.arctan2(to_balloon[:, 1], to_balloon[:, 0])
    d_yaw = wrap_angle(yaw_target - yaw_from_quat(state.quat_wb))
    r_heading = gains.k_heading / (1.0 + d_yaw**2)
    r_hit = gains.hit_bonus * np.asarray(hit, dtype=float)

    return _pack(
        {
            "smooth": r_smooth,
            "effort": r_effort,
            "guidance": r_guidance,
            "upright": r_ups,
            "heading": r_heading,
            "hit": r_hit,
        }
    )


def reward_avoid(
    state,
    target_pos,
    target_euler,
    euler,
    action,
    prev_action,
    collective_throttle,
    hover_throttle: float,
    gains: AvoidGains,
    hit,
    learns_thrust: bool = True,
):
    """Avoidance reward: hold the spawn pose, dense alive bonus, hit penalty.

    Pose error stacks position with pitch/roll/yaw differences; `euler`
    rows are (roll, pitch, yaw).
    """
    n = state.n
    target_pos = np.broadcast_to(np.asarray(target_pos, dtype=float), (n, 3))
    target_euler = np.broadcast_to(np.asarray(target_euler, dtype=float), (n, 3))
    d_action = np.linalg.norm(action - prev_action, axis=-1)
    r_smooth = gains.k_smooth * np.exp(-d_action)
    r_effort = gains.k_effort * np.exp(-(action**2).sum(axis=-1))
    if learns_thrust:
        r_throttle = gains.k_throttle * (
            1.0 - np.abs(hover_throttle - collective_throttle)
        )
    else:
        r_throttle = np.zeros(n)

    pose_err2 = ((target_pos - state.pos_w) ** 2).sum(axis=-1) + (
        wrap_angle(target_euler - euler) ** 2
    ).sum(axis=-1)
    r_pose = gains.k_pose / (1.0 + pose_err2)

    r_ups = gains.k_upright * (_upright(state) + 1.0) ** 2
    r_spin = gains.k_spin / (1.0 + state.omega_b[:, 2] ** 2)
    hit = np.asarray(hit, dtype=bool)
    r_alive = np.where(hit, gains.hit_penalty, gains.alive_bonus)

    return _pack(
        {
            "smooth": r_smooth,
            "effort": r_effort,
            "throttle": r_throttle,
            "pose": r_pose,
            "alive": r_alive,
            "pose_x_upright": r_pose * r_ups,
            "pose_x_spin": r_pose * r_spin,
        }
    )


def reward_plan(
    state,
    prev_pos,
    goal,
    x_esdf,
    action,
    prev_action,
    collective_throttle,
    hover_throttle: float,
    omega_ego,
    vx_ego,
    gains: PlanGains,
    goal_reached,
    learns_thrust: bool = True,
):
    """Planning reward: progress gates obstacle clearance and aliveness."""
    n = state.n
    goal = np.broadcast_to(np.asarray(goal, dtype=float), (n, 3))
    x_esdf = np.asarray(x_esdf, dtype=float)
    d_action = np.linalg.norm(action - prev_action, axis=-1)
    r_smooth = gains.k_smooth * (d_action + np.linalg.norm(omega_ego, axis=-1))
    r_effort = gains.k_effort * np.exp(-(action**2).sum(axis=-1))
    if learns_thrust:
        r_throttle = gains.k_throttle * (
            1.0 - np.abs(hover_throttle - collective_throttle)
        )
    else:
        r_throttle = np.zeros(n)

    dist_prev = np.linalg.norm(goal - prev_pos, axis=-1)
    dist_now = np.linalg.norm(goal - state.pos_w, axis=-1)
    r_guidance = gains.k_guidance * (dist_prev - dist_now)

    r_speed = -gains.k_speed * (
        1.0 - np.exp(-gains.k_speed_width * (np.abs(vx_ego) - gains.speed_target) ** 2)
    )
    p_z = state.pos_w[:, 2]
    r_height = np.minimum(np.minimum(p_z - gains.height_min, 0.0), gains.height_max - p_z)

    r_esdf = gains.k_esdf * (1.0 - np.exp(-gains.esdf_sharpness * x_esdf**2))
    r_ups = gains.k_upright * (_upright(state) + 1.0) ** 2
    r_alive = np.where(x_esdf > gains.crash_distance, gains.alive_bonus, 0.0)
    r_goal = gains.goal_bonus * np.asarray(goal_reached, dtype=float)

    to_goal = goal - state.pos_w
    yaw_target = np.arctan2(to_goal[:, 1], to_goal[:, 0])
    d_yaw = wrap_angle(yaw_target - yaw_from_quat(state.quat_wb))
    r_heading = gains.k_heading / (1.0 + d_yaw**2)

    return _pack(
        {
            "smooth": r_smooth,
            "effort": r_effort,
            "throttle": r_throttle,
            "guidance": r_guidance,
            "speed": r_speed,
            "height": r_height,
            "heading": r_heading,
            "upright": r_ups,
            "guidance_x_esdf": r_guidance * r_esdf,
            "guidance_x_alive": r_guidance * r_alive,
            "goal": r_goal,
        }
    )


# ---------------------------------------------------------------------------
# spawning and termination


@dataclass
class ArenaLimits:
    half_extent: float = 10.0     # m, |x|,|y| bound and z ceiling
    floor: float = 0.0            # m
    tilt_max: float = np.deg2rad(80.0)
    hit_radius: float = 0.2       # m
    goal_radius: float = 0.5      # m


def spawn_balloon(rng: np.random.Generator, bounds) -> np.ndarray:
    """Uniform balloon position inside an axis-aligned box (lo, hi)."""
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    return rng.uniform(lo, hi)


def spawn_projectile(
    rng: np.random.Generator,
    aim_point,
    distance: float = 6.0,
    speed_range=(4.0, 8.0),
    launch_height_offset=(0.5, 2.0),
    azimuth_range=(-np.pi / 4.0, np.pi / 4.0),
    facing_yaw: float = 0.0,
    direction_noise: float = 0.0,
    gravity: float = 9.81,
):
    """Ballistic launch state aimed at `aim_point` from `distance` away.

    The launch position sits in the sector the vehicle faces so the
    depth camera can see the throw.  The drawn speed is clamped up to the
    minimum ballistically feasible speed; with zero direction noise the
    arc passes through the aim point exactly.
    """
    aim = np.asarray(aim_point, dtype=float)
    azimuth = facing_yaw + rng.uniform(*azimuth_range)
    height = rng.uniform(*launch_height_offset)
    pos = aim + np.array(
        [np.cos(azimuth) * distance, np.sin(azimuth) * distance, height]
    )

    delta = aim - pos
    speed = rng.uniform(*speed_range)
    # minimum speed for any ballistic arc through the aim point; the
    # configured speed range still wins (the arc then falls short)
    s_min = np.sqrt(gravity * (np.linalg.norm(delta) + delta[2]))
    speed = float(np.clip(max(speed, s_min * (1.0 + 1e-9)), *speed_range))

    # quartic in flight time: g^2 t^4 /4 - (s^2 - g dz) t^2 + |delta|^2 = 0
    a = 0.25 * gravity**2
    b = -(speed**2 - gravity * delta[2])
    c = float((delta**2).sum())
    disc = max(b * b - 4.0 * a * c, 0.0)
    t2 = (-b - np.sqrt(disc)) / (2.0 * a)   # low (direct) arc
    t_flight = float(np.sqrt(max(t2, 1e-9)))

    g_vec = np.array([0.0, 0.0, -gravity])
    vel = delta / t_flight - 0.5 * g_vec * t_flight
    if direction_noise > 0.0:
        direction = vel / np.linalg.norm(vel)
        direction = direction + rng.normal(0.0, direction_noise, size=3)
        vel = direction / np.linalg.norm(direction) * np.linalg.norm(vel)
    return pos, vel


def termination(
    task: TaskKind,
    state,
    steps: np.ndarray,
    max_steps: int,
    limits: ArenaLimits,
    x_esdf=None,
    balloon=None,
    goal=None,
    crash_distance: float = 0.2,
) -> np.ndarray:
    """Per-vehicle episode outcome for this step (RUNNING when nothing fired)."""
    n = state.n
    # np.full would coerce the IntEnum to a plain int
    outcome = np.empty(n, dtype=object)
    outcome[:] = EpisodeOutcome.RUNNING

    pos = state.pos_w
    out_of_box = (
        (np.abs(pos[:, 0]) > limits.half_extent)
        | (np.abs(pos[:, 1]) > limits.half_extent)
        | (pos[:, 2] > limits.half_extent)
        | (pos[:, 2] < limits.floor)
    )
    tilted = _upright(state) < np.cos(limits.tilt_max)
    crashed = out_of_box | tilted
    if task in (TaskKind.PLANNING, TaskKind.AVOIDANCE) and x_esdf is not None:
        crashed = crashed | (np.asarray(x_esdf) < crash_distance)

    if task is TaskKind.TARGET_HITTING and balloon is not None:
        hit = np.linalg.norm(pos - balloon, axis=-1) < limits.hit_radius
        outcome[hit] = EpisodeOutcome.HIT
        crashed = crashed & ~hit
    if task is TaskKind.PLANNING and goal is not None:
        reached = np.linalg.norm(pos - goal, axis=-1) < limits.goal_radius
        reached = reached & ~crashed
        outcome[reached] = EpisodeOutcome.GOAL_REACHED

    outcome[crashed] = EpisodeOutcome.CRASHED
    timed_out = (np.asarray(steps) >= max_steps) & (outcome == EpisodeOutcome.RUNNING)
    outcome[timed_out] = EpisodeOutcome.TIMED_OUT
    return outcome
