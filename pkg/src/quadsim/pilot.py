"""Built-in classical pilot: drives any task through the cascade controller.

Emits raw actions in the environment's action convention, so episodes
flown by the pilot and by a trained policy share one code path.  PY mode
sends position setpoints; LV mode sends velocity commands with reference
feedforward.  The pilot is deliberately blind to obstacles; it exists to
validate the control stack and to provide deterministic regression runs.
"""

from __future__ import annotations

import numpy as np

from .control import ControlMode
from .env import VecEnv
from .tasks import TaskKind, lemniscate

PILOT_MODES = (ControlMode.PY, ControlMode.LV)


class CascadePilot:
    """Task-aware setpoint generator for the PY and LV entry points."""

    def __init__(self, env: VecEnv, track_pos_p: float = 4.0, dash_speed: float = 2.0):
        if env.mode not in PILOT_MODES:
            raise ValueError("classical pilot supports PY and LV modes only")
        self.env = env
        self.track_pos_p = track_pos_p
        self.dash_speed = dash_speed

    def act(self) -> np.ndarray:
        env = self.env
        if env.task is TaskKind.TRACKING:
            p_sp, v_ff, yaw = self._tracking_reference()
        elif env.task is TaskKind.HOVERING:
            p_sp = np.broadcast_to(
                np.asarray(env.task_cfg["target"], dtype=float), (env.n, 3)
            )
            v_ff = np.zeros((env.n, 3))
            yaw = np.full(env.n, float(env.task_cfg["target_yaw"]))
        elif env.task is TaskKind.TARGET_HITTING:
            to_balloon = env.balloon - env.state.pos_w
            dist = np.linalg.norm(to_balloon, axis=-1, keepdims=True)
            direction = to_balloon / np.maximum(dist, 1e-9)
            p_sp = env.balloon
            v_ff = direction * self.dash_speed
            yaw = np.arctan2(to_balloon[:, 1], to_balloon[:, 0])
        elif env.task is TaskKind.PLANNING:
            to_goal = env.goal - env.state.pos_w
            dist = np.linalg.norm(to_goal, axis=-1, keepdims=True)
            direction = to_goal / np.maximum(dist, 1e-9)
            speed = min(self.dash_speed, getattr(env.task_gains, "speed_target", 1.5))
            p_sp = env.goal
            v_ff = direction * speed
            yaw = np.arctan2(to_goal[:, 1], to_goal[:, 0])
        else:  # avoidance: hold the spawn pose
            p_sp = env.pose_target_pos
            v_ff = np.zeros((env.n, 3))
            yaw = env.pose_target_euler[:, 2]

        if env.mode is ControlMode.PY:
            center = env._py_center()
            a_pos = (p_sp - center) / env.py_pos_scale
            return self._pack(a_pos, yaw)
        v_cmd = v_ff + self.track_pos_p * (p_sp - env.state.pos_w)
        return self._pack(v_cmd / env.gains.max_vel, yaw)

    def _tracking_reference(self):
        env = self.env
        t_ref = env._t_ref(np.arange(env.n))
        p_sp = lemniscate(t_ref, env.track_rate)
        v_ff = env._ref_velocity(t_ref)
        yaw = np.arctan2(v_ff[:, 1], v_ff[:, 0])
        return p_sp, v_ff, yaw

    def _pack(self, a3: np.ndarray, yaw: np.ndarray) -> np.ndarray:
        a = np.column_stack([a3, np.asarray(yaw) / np.pi])
        return np.clip(a, -1.0, 1.0)
