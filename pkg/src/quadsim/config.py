"""Config file handling: one YAML document drives the whole simulator.

Sections: sim (stepping, batch, vehicle), controller (gains and limits),
task.<name> (rewards and scenario parameters), dr (domain randomization),
camera.  Every value has a committed default; a user file only needs the
keys it overrides.  QUADSIM_SEED in the environment overrides sim.seed.
"""

from __future__ import annotations

import copy
import os

import numpy as np
import yaml

from .control import ControllerGains, ControlMode
from .dynamics import QuadParams
from .tasks import (
    ArenaLimits,
    AvoidGains,
    HitGains,
    HoverGains,
    PlanGains,
    TaskKind,
    TrackGains,
)
from .world import CameraModel, DepthDrParams

SEED_ENV_VAR = "QUADSIM_SEED"

DEFAULT_CONFIG = {
    "sim": {
        "n_envs": 16,
        "dt": 0.01,
        "sensor_decimation": 4,
        "max_episode_steps": 1000,
        "seed": 0,
        "task": "hovering",
        "control_mode": "ctbr",
        "py_pos_scale": 5.0,       # m, PY-mode action-to-setpoint scale
        "vehicle": {
            "mass": 0.4,
            "inertia": [2.2e-3, 2.2e-3, 4.0e-3],
            "thrust_coef": 6.8e-7,
            "drag_torque_coef": 1.0e-8,
            "arm_radius": 0.076,
            "spin_sign": [1.0, 1.0, -1.0, -1.0],
            "motor_rate_gain": 25.0,
            "rotor_speed_max": None,
            "rotor_thrust_max": None,
            "body_drag": [0.0, 0.0, 0.0],
        },
    },
    "controller": {
        "pos_p": [2.5, 2.5, 2.5],
        "vel_p": [6.0, 6.0, 6.0],
        "vel_i": [3.0, 3.0, 3.0],
        "vel_d": [0.0, 0.0, 0.0],
        "att_p": 8.0,
        "rate_p": [0.06, 0.06, 0.03],
        "rate_i": [0.03, 0.03, 0.015],
        "rate_d": [0.001, 0.001, 0.0],
        "max_tilt": 0.6,
        "max_vel": 3.0,
        "max_rate": 8.0,
        "thrust_min": 0.0,
        "thrust_max": 1.0,
        "hover_throttle": None,
        "vel_int_max": 2.0,
        "rate_int_max": 0.3,
    },
    "task": {
        "hovering": {
            "target": [0.0, 0.0, 1.0],
            "target_yaw": 0.0,
            "gains": {},
        },
        "tracking": {
            "mean_speed": 1.6,
            "lookahead_dt": 0.1,
            "gains": {},
        },
        "target_hitting": {
            "start": [0.0, 0.0, 1.0],
            "balloon_low": [2.0, -2.0, 1.0],
            "balloon_high": [5.0, 2.0, 2.5],
            "gains": {},
        },
        "avoidance": {
            "start": [0.0, 0.0, 1.5],
            "projectile": {
                "distance": 6.0,
                "speed_low": 4.0,
                "speed_high": 8.0,
                "height_low": 0.5,
                "height_high": 2.0,
                "azimuth_half_range": 0.7853981633974483,
                "direction_noise": 0.02,
                "radius": 0.15,
            },
            "gains": {},
        },
        "planning": {
            "start": [-7.0, 0.0, 1.0],
            "goal": [7.0, 0.0, 1.0],
            "forest": {
                "n_trunks": 12,
                "x_range": [-4.0, 4.0],
                "y_range": [-4.0, 4.0],
                "radius_low": 0.1,
                "radius_high": 0.3,
                "min_clearance": 1.2,
                "trunk_height": 6.0,
            },
            "gains": {},
        },
        "arena": {
            "half_extent": 10.0,
            "floor": 0.0,
            "tilt_max_deg": 80.0,
            "hit_radius": 0.2,
            "goal_radius": 0.5,
        },
    },
    "dr": {
        "init_cube_side": 2.0,
        "init_att_sigma": 0.0,
        "init_vel_sigma": 0.0,
        "init_omega_sigma": 0.0,
        "wind_sigma": 0.0,
        "wind_jitter_sigma": 0.0,
        "temporal_margin": {"enabled": False, "mu": 0.3, "sigma": 0.5},
        "depth": {
            "sigma_mult": 0.0,
            "sigma_add": 0.0,
            "blur": False,
            "scale_range": [1.0, 1.0],
            "offset_range": [0.0, 0.0],
        },
    },
    "camera": {
        "width": 212,
        "height": 120,
        "hfov_deg": 87.0,
        "vfov_deg": 58.0,
        "max_range": 4.5,
        "near": 0.05,
        "mount_pos": [0.1, 0.0, 0.0],
    },
}

TASK_GAIN_CLASSES = {
    TaskKind.HOVERING: HoverGains,
    TaskKind.TRACKING: TrackGains,
    TaskKind.TARGET_HITTING: HitGains,
    TaskKind.AVOIDANCE: AvoidGains,
    TaskKind.PLANNING: PlanGains,
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Merged config dict: defaults <- file <- overrides <- seed env var."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        cfg = _deep_merge(cfg, user)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        cfg["sim"]["seed"] = int(env_seed)
    return cfg


def save_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)


def build_params(cfg: dict) -> QuadParams:
    v = cfg["sim"]["vehicle"]
    a = v["arm_radius"] / np.sqrt(2.0)
    rotor_pos = np.array([[a, a, 0.0], [-a, -a, 0.0], [a, -a, 0.0], [-a, a, 0.0]])
    return QuadParams(
        mass=v["mass"],
        inertia=np.asarray(v["inertia"], dtype=float),
        thrust_coef=v["thrust_coef"],
        drag_torque_coef=v["drag_torque_coef"],
        rotor_pos=rotor_pos,
        spin_sign=np.asarray(v["spin_sign"], dtype=float),
        motor_rate_gain=v["motor_rate_gain"],
        rotor_speed_max=v["rotor_speed_max"],
        rotor_thrust_max=v["rotor_thrust_max"],
        body_drag=np.asarray(v["body_drag"], dtype=float),
    )


def build_gains(cfg: dict) -> ControllerGains:
    c = dict(cfg["controller"])
    return ControllerGains(**c)


def build_camera(cfg: dict) -> CameraModel:
    c = cfg["camera"]
    return CameraModel(
        width=c["width"],
        height=c["height"],
        hfov=np.deg2rad(c["hfov_deg"]),
        vfov=np.deg2rad(c["vfov_deg"]),
        max_range=c["max_range"],
        near=c["near"],
        mount_pos=np.asarray(c["mount_pos"], dtype=float),
    )


def build_depth_dr(cfg: dict) -> DepthDrParams:
    d = cfg["dr"]["depth"]
    return DepthDrParams(
        sigma_mult=d["sigma_mult"],
        sigma_add=d["sigma_add"],
        blur=d["blur"],
        scale_range=tuple(d["scale_range"]),
        offset_range=tuple(d["offset_range"]),
    )


def build_task_gains(cfg: dict, task: TaskKind):
    cls = TASK_GAIN_CLASSES[task]
    return cls(**cfg["task"][task.value]["gains"])


def build_arena(cfg: dict) -> ArenaLimits:
    a = cfg["task"]["arena"]
    return ArenaLimits(
        half_extent=a["half_extent"],
        floor=a["floor"],
        tilt_max=np.deg2rad(a["tilt_max_deg"]),
        hit_radius=a["hit_radius"],
        goal_radius=a["goal_radius"],
    )


def task_kind(cfg: dict) -> TaskKind:
    return TaskKind(cfg["sim"]["task"])


def control_mode(cfg: dict) -> ControlMode:
    return ControlMode(cfg["sim"]["control_mode"])
