"""Batched environment manager: the simulator's public reset/step API.

Each of the n environments owns a counter-based RNG stream derived from
the master seed, so results are independent of any worker partitioning
and bit-reproducible for a given (seed, config, action sequence).  Done
environments auto-reset; their returned observation is the post-reset
one and the terminal record rides in info.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from .control import ACTION_DIM, CascadeController, Command, ControlMode
from .dynamics import ExternalWrench, QuadParams, QuadState, step as dyn_step
from .frames import (
    OBS_DIM_EGO,
    OBS_DIM_HOVER,
    OBS_DIM_TRACK,
    depth_feature_pool,
    euler_zyx,
    obs_ego,
    obs_hover,
    obs_track,
    ref_window,
    world_to_ego,
)
from .quat import quat_from_axis_angle, quat_from_yaw, quat_mul, rot_from_quat
from .tasks import (
    EpisodeOutcome,
    TaskKind,
    lemniscate,
    lemniscate_rate_for_speed,
    reward_avoid,
    reward_hit,
    reward_hover,
    reward_plan,
    reward_track,
    spawn_balloon,
    spawn_projectile,
    termination,
    trajectory_playback,
)
from .world import (
    BOX,
    SPHERE,
    Primitive,
    Scene,
    advance_scene,
    dr_depth,
    min_depth,
    raycast,
    scene_forest,
)

VISION_TASKS = (TaskKind.AVOIDANCE, TaskKind.PLANNING)

OBS_DIMS = {
    TaskKind.HOVERING: OBS_DIM_HOVER,
    TaskKind.TRACKING: OBS_DIM_TRACK,
    TaskKind.TARGET_HITTING: OBS_DIM_HOVER,
    TaskKind.AVOIDANCE: OBS_DIM_EGO,
    TaskKind.PLANNING: OBS_DIM_EGO,
}

THRUST_MODES = (ControlMode.CTA, ControlMode.CTBR, ControlMode.SRT)


@dataclass
class StepResult:
    obs: np.ndarray        # (n, obs_dim) float32
    reward: np.ndarray     # (n,) float32
    done: np.ndarray       # (n,) bool
    info: dict


class VecEnv:
    """n independent quadrotor task environments stepped in lockstep."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        sim = cfg["sim"]
        self.n = int(sim["n_envs"])
        if self.n < 1:
            raise ValueError("n_envs must be >= 1")
        self.dt = float(sim["dt"])
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.decimation = int(sim["sensor_decimation"])
        if self.decimation < 1:
            raise ValueError("sensor_decimation must be >= 1")
        self.max_steps = int(sim["max_episode_steps"])
        self.task = cfgmod.task_kind(cfg)
        self.mode = cfgmod.control_mode(cfg)
        self.params: QuadParams = cfgmod.build_params(cfg)
        self.gains = cfgmod.build_gains(cfg)
        self.camera = cfgmod.build_camera(cfg)
        self.arena = cfgmod.build_arena(cfg)
        self.task_gains = cfgmod.build_task_gains(cfg, self.task)
        self.depth_dr = cfgmod.build_depth_dr(cfg)
        self.dr = cfg["dr"]
        self.task_cfg = cfg["task"][self.task.value]

        self.controller = CascadeController(self.n, self.gains, self.params)
        self.hover_throttle = self.controller.hover_throttle
        self.act_dim = ACTION_DIM[self.mode]
        self.obs_dim = OBS_DIMS[self.task]
        self.py_pos_scale = float(sim["py_pos_scale"])

        if self.task is TaskKind.TRACKING:
            self.track_rate = lemniscate_rate_for_speed(self.task_cfg["mean_speed"])
            self.lookahead_dt = float(self.task_cfg["lookahead_dt"])

        n = self.n
        self.state = QuadState.hover(n, self.params)
        self.episode_step = np.zeros(n, dtype=np.int64)
        self.prev_action = np.zeros((n, self.act_dim))
        self.wind = np.zeros((n, 3))
        self.playback_offset = np.zeros(n)
        self.last_outcome = np.empty(n, dtype=object)
        self.last_outcome[:] = EpisodeOutcome.RUNNING

        # task scratch
        self.balloon = np.zeros((n, 3))
        self.goal = np.zeros((n, 3))
        self.pose_target_pos = np.zeros((n, 3))
        self.pose_target_euler = np.zeros((n, 3))
        self.scenes = [Scene() for _ in range(n)]
        self.depth = np.full((n, self.camera.height, self.camera.width),
                             self.camera.max_range, dtype=np.float32)
        self.depth_feature = np.full((n, 30), 1.0)
        self.x_esdf = np.full(n, self.camera.max_range)

        self.seed(int(sim["seed"]))

    # ------------------------------------------------------------------
    # randomness

    def seed(self, master: int) -> None:
        """Derive one counter-based stream per environment from the master seed."""
        self.master_seed = int(master)
        key = self.master_seed % (2**64)
        self.rngs = [
            np.random.Generator(np.random.Philox(key=np.array([key, i], dtype=np.uint64)))
            for i in range(self.n)
        ]

    # ------------------------------------------------------------------
    # reset

    def reset(self, ids=None) -> np.ndarray:
        """Re-spawn the given environments (all when ids is None); returns their obs."""
        if ids is None:
            ids = np.arange(self.n)
        ids = np.atleast_1d(np.asarray(ids, dtype=int))
        if ids.size and (ids.min() < 0 or ids.max() >= self.n):
            raise IndexError("env id out of range")

        for i in ids:
            self._reset_one(int(i))
        self.controller.reset(ids)
        self.episode_step[ids] = 0
        self.prev_action[ids] = 0.0
        self.last_outcome[ids] = EpisodeOutcome.RUNNING
        if self.task in VISION_TASKS:
            self._refresh_depth(ids)
        return self._build_obs(ids)

    def _perturbed_spawn(self, rng, base) -> tuple:
        dr = self.dr
        half = dr["init_cube_side"] / 2.0
        pos = np.asarray(base, dtype=float) + rng.uniform(-half, half, size=3)
        quat = np.array([1.0, 0.0, 0.0, 0.0])
        if dr["init_att_sigma"] > 0.0:
            axis = rng.normal(size=3)
            axis /= max(np.linalg.norm(axis), 1e-12)
            quat = quat_from_axis_angle(axis, rng.normal(0.0, dr["init_att_sigma"]))
        vel = rng.normal(0.0, dr["init_vel_sigma"], 3) if dr["init_vel_sigma"] > 0 else np.zeros(3)
        omega = rng.normal(0.0, dr["init_omega_sigma"], 3) if dr["init_omega_sigma"] > 0 else np.zeros(3)
        return pos, quat, vel, omega

    def _reset_one(self, i: int) -> None:
        rng = self.rngs[i]
        st = self.state
        omega_h = np.full(4, np.sqrt(self.params.mass * 9.81 / (4 * self.params.thrust_coef)))

        if self.task is TaskKind.TRACKING:
            tm = self.dr["temporal_margin"]
            self.playback_offset[i] = (
                rng.normal(tm["mu"], tm["sigma"]) if tm["enabled"] else 0.0
            )
            t0 = trajectory_playback(0.0, self.playback_offset[i])
            pos = lemniscate(t0, self.track_rate)
            vel = self._ref_velocity(np.asarray([t0]))[0]
            yaw = np.arctan2(vel[1], vel[0])
            st.pos_w[i] = pos
            st.quat_wb[i] = quat_from_yaw(yaw)
            st.vel_w[i] = vel
            st.omega_b[i] = 0.0
        elif self.task is TaskKind.PLANNING:
            st.pos_w[i] = np.asarray(self.task_cfg["start"], dtype=float)
            st.quat_wb[i] = np.array([1.0, 0.0, 0.0, 0.0])
            st.vel_w[i] = 0.0
            st.omega_b[i] = 0.0
            self.goal[i] = np.asarray(self.task_cfg["goal"], dtype=float)
            f = self.task_cfg["forest"]
            self.scenes[i] = scene_forest(
                rng,
                f["n_trunks"],
                ((f["x_range"][0], f["y_range"][0]), (f["x_range"][1], f["y_range"][1])),
                radius_range=(f["radius_low"], f["radius_high"]),
                min_clearance=f["min_clearance"],
                keep_clear=(
                    (self.task_cfg["start"][:2], 1.0),
                    (self.task_cfg["goal"][:2], 1.0),
                ),
                trunk_height=f["trunk_height"],
            )
        else:
            base = self.task_cfg.get("target", self.task_cfg.get("start"))
            pos, quat, vel, omega = self._perturbed_spawn(rng, base)
            st.pos_w[i] = pos
            st.quat_wb[i] = quat
            st.vel_w[i] = vel
            st.omega_b[i] = omega
            if self.task is TaskKind.TARGET_HITTING:
                self.balloon[i] = spawn_balloon(
                    rng, (self.task_cfg["balloon_low"], self.task_cfg["balloon_high"])
                )
            elif self.task is TaskKind.AVOIDANCE:
                self.pose_target_pos[i] = pos
                self.pose_target_euler[i] = euler_zyx(quat[None, :])[0]
                pc = self.task_cfg["projectile"]
                launch_pos, launch_vel = spawn_projectile(
                    rng,
                    pos,
                    distance=pc["distance"],
                    speed_range=(pc["speed_low"], pc["speed_high"]),
                    launch_height_offset=(pc["height_low"], pc["height_high"]),
                    azimuth_range=(-pc["azimuth_half_range"], pc["azimuth_half_range"]),
                    facing_yaw=float(self.pose_target_euler[i][2]),
                    direction_noise=pc["direction_noise"],
                )
                r = pc["radius"]
                kind = pc.get("kind", "cube")
                if kind == "cube":
                    prim = Primitive(kind=BOX, center=launch_pos,
                                     half_extents=np.full(3, r), velocity=launch_vel)
                else:
                    prim = Primitive(kind=SPHERE, center=launch_pos,
                                     radius=r, velocity=launch_vel)
                self.scenes[i] = Scene([prim])
                self.goal[i] = self.pose_target_pos[i]

        st.rotor_speed[i] = omega_h
        sigma = self.dr["wind_sigma"]
        self.wind[i] = rng.normal(0.0, sigma, 3) if sigma > 0 else 0.0

    # ------------------------------------------------------------------
    # stepping

    def step(self, actions: np.ndarray) -> StepResult:
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n, self.act_dim):
            raise ValueError(
                f"actions must be {(self.n, self.act_dim)}, got {actions.shape}"
            )
        bad_action = ~np.isfinite(actions).all(axis=-1)
        if bad_action.any():
            actions = np.where(bad_action[:, None], 0.0, actions)

        prev_pos = self.state.pos_w.copy()
        command = self._action_to_command(actions)
        act_cmd = self.controller.update(command, self.state, self.dt)

        wind = self.wind
        jitter = self.dr["wind_jitter_sigma"]
        if jitter > 0.0:
            wind = wind + np.stack([r.normal(0.0, jitter, 3) for r in self.rngs])
        ext = ExternalWrench(force_w=wind, torque_b=np.zeros((self.n, 3)))
        self.state = dyn_step(self.state, act_cmd.rotor_cmd, self.params, ext,
                              self.dt, check=False)
        self.episode_step += 1

        if self.task in VISION_TASKS:
            if self.task is TaskKind.AVOIDANCE:
                for i in range(self.n):
                    self.scenes[i] = advance_scene(self.scenes[i], self.dt)
            refresh = np.flatnonzero(self.episode_step % self.decimation == 0)
            if refresh.size:
                self._refresh_depth(refresh)

        diverged = ~self.state.finite_mask() | bad_action
        if diverged.any():
            # freeze runaway vehicles so reward math stays finite
            for arr in (self.state.pos_w, self.state.vel_w, self.state.omega_b):
                arr[diverged] = np.nan_to_num(arr[diverged], nan=0.0,
                                              posinf=0.0, neginf=0.0)
            self.state.quat_wb[diverged] = np.array([1.0, 0.0, 0.0, 0.0])

        outcome = termination(
            self.task,
            self.state,
            self.episode_step,
            self.max_steps,
            self.arena,
            x_esdf=self.x_esdf if self.task in VISION_TASKS else None,
            balloon=self.balloon if self.task is TaskKind.TARGET_HITTING else None,
            goal=self.goal if self.task is TaskKind.PLANNING else None,
            crash_distance=getattr(self.task_gains, "crash_distance", 0.2),
        )
        outcome[diverged] = EpisodeOutcome.CRASHED
        self.last_outcome = outcome.copy()   # reset() rewrites its slots

        reward, terms = self._reward(actions, prev_pos, act_cmd, outcome)
        self.prev_action = actions.copy()

        done = outcome != EpisodeOutcome.RUNNING
        terminal_step = self.episode_step.copy()
        obs = np.empty((self.n, self.obs_dim), dtype=np.float32)
        live = np.flatnonzero(~done)
        if live.size:
            obs[live] = self._build_obs(live)
        done_ids = np.flatnonzero(done)
        if done_ids.size:
            obs[done_ids] = self.reset(done_ids)

        info = {
            "outcome": outcome,
            "episode_step": terminal_step,
            "reward_terms": terms,
        }
        return StepResult(
            obs=obs,
            reward=reward.astype(np.float32),
            done=done,
            info=info,
        )

    def _action_to_command(self, actions: np.ndarray) -> Command:
        a = np.clip(actions, -1.0, 1.0)
        mode = self.mode
        if mode is ControlMode.PY:
            center = self._py_center()
            data = np.column_stack([a[:, :3] * self.py_pos_scale + center, a[:, 3] * np.pi])
        elif mode is ControlMode.LV:
            data = np.column_stack([a[:, :3] * self.gains.max_vel, a[:, 3] * np.pi])
        elif mode is ControlMode.CTA:
            q = a[:, 1:5].copy()
            norms = np.linalg.norm(q, axis=-1)
            degenerate = norms < 1e-6
            q[degenerate] = np.array([1.0, 0.0, 0.0, 0.0])
            data = np.column_stack([(a[:, 0] + 1.0) / 2.0, q])
        elif mode is ControlMode.CTBR:
            data = np.column_stack([(a[:, 0] + 1.0) / 2.0, a[:, 1:4] * self.gains.max_rate])
        else:  # SRT
            data = (a + 1.0) / 2.0
        return Command(mode=mode, data=data)

    def _py_center(self) -> np.ndarray:
        if self.task is TaskKind.HOVERING:
            return np.asarray(self.task_cfg["target"], dtype=float)
        if self.task is TaskKind.TARGET_HITTING or self.task is TaskKind.AVOIDANCE:
            return np.asarray(self.task_cfg["start"], dtype=float)
        return np.array([0.0, 0.0, 1.0])

    # ------------------------------------------------------------------
    # observations / rewards

    def _ref_velocity(self, t: np.ndarray, h: float = 1e-4) -> np.ndarray:
        fwd = lemniscate(t + h, self.track_rate)
        back = lemniscate(t - h, self.track_rate)
        return (fwd - back) / (2.0 * h)

    def _t_ref(self, ids) -> np.ndarray:
        t_sim = self.episode_step[ids] * self.dt
        return trajectory_playback(t_sim, self.playback_offset[ids])

    def _sub_state(self, ids) -> QuadState:
        return QuadState(
            self.state.pos_w[ids],
            self.state.quat_wb[ids],
            self.state.vel_w[ids],
            self.state.omega_b[ids],
            self.state.rotor_speed[ids],
        )

    def _build_obs(self, ids) -> np.ndarray:
        sub = self._sub_state(ids)
        if self.task is TaskKind.HOVERING:
            out = obs_hover(sub, np.asarray(self.task_cfg["target"], dtype=float))
        elif self.task is TaskKind.TARGET_HITTING:
            out = obs_hover(sub, self.balloon[ids])
        elif self.task is TaskKind.TRACKING:
            t_ref = self._t_ref(ids)
            window = ref_window(
                lambda tt: lemniscate(tt, self.track_rate), t_ref, 10, self.lookahead_dt
            )
            out = obs_track(sub, window)
        else:
            out = obs_ego(
                sub,
                self.goal[ids],
                self.prev_action[ids, :4],
                self.depth_feature[ids],
            )
        return out.astype(np.float32)

    def _reward(self, actions, prev_pos, act_cmd, outcome):
        collective = act_cmd.u.mean(axis=-1)
        rotor_norm = self.state.rotor_speed / self.params.rotor_speed_max
        learns_thrust = self.mode in THRUST_MODES
        if self.task is TaskKind.HOVERING:
            return reward_hover(
                self.state,
                np.asarray(self.task_cfg["target"], dtype=float),
                float(self.task_cfg["target_yaw"]),
                actions,
                self.prev_action,
                rotor_norm,
                collective,
                self.hover_throttle,
                self.task_gains,
                learns_thrust=learns_thrust,
            )
        if self.task is TaskKind.TRACKING:
            ids = np.arange(self.n)
            t_ref = self._t_ref(ids)
            ref_point = lemniscate(t_ref, self.track_rate)
            ref_vel = self._ref_velocity(t_ref)
            ref_yaw = np.arctan2(ref_vel[:, 1], ref_vel[:, 0])
            return reward_track(
                self.state,
                ref_point,
                ref_yaw,
                actions,
                self.prev_action,
                rotor_norm,
                collective,
                self.hover_throttle,
                self.task_gains,
                learns_thrust=learns_thrust,
            )
        if self.task is TaskKind.TARGET_HITTING:
            hit = outcome == EpisodeOutcome.HIT
            return reward_hit(
                self.state, prev_pos, self.balloon, actions, self.prev_action,
                self.task_gains, hit,
            )
        if self.task is TaskKind.AVOIDANCE:
            euler = euler_zyx(self.state.quat_wb)
            hit = outcome == EpisodeOutcome.CRASHED
            return reward_avoid(
                self.state,
                self.pose_target_pos,
                self.pose_target_euler,
                euler,
                actions,
                self.prev_action,
                collective,
                self.hover_throttle,
                self.task_gains,
                hit,
                learns_thrust=learns_thrust,
            )
        # planning
        rot = rot_from_quat(self.state.quat_wb)
        omega_w = np.einsum("nij,nj->ni", rot, self.state.omega_b)
        omega_ego = world_to_ego(self.state.quat_wb, omega_w)
        v_ego = world_to_ego(self.state.quat_wb, self.state.vel_w)
        return reward_plan(
            self.state,
            prev_pos,
            self.goal,
            self.x_esdf,
            actions,
            self.prev_action,
            collective,
            self.hover_throttle,
            omega_ego,
            v_ego[:, 0],
            self.task_gains,
            outcome == EpisodeOutcome.GOAL_REACHED,
            learns_thrust=learns_thrust,
        )

    # ------------------------------------------------------------------
    # depth

    def _refresh_depth(self, ids) -> None:
        cam = self.camera
        apply_dr = (
            self.depth_dr.sigma_mult > 0
            or self.depth_dr.sigma_add > 0
            or self.depth_dr.blur
            or tuple(self.depth_dr.scale_range) != (1.0, 1.0)
            or tuple(self.depth_dr.offset_range) != (0.0, 0.0)
        )
        for i in np.atleast_1d(ids):
            i = int(i)
            q = self.state.quat_wb[i]
            cam_pos = self.state.pos_w[i] + rot_from_quat(q) @ cam.mount_pos
            cam_quat = quat_mul(q, cam.mount_quat)
            img = raycast(self.scenes[i], cam_pos, cam_quat, cam)
            if apply_dr:
                img = dr_depth(img, self.rngs[i], self.depth_dr, cam.near, cam.max_range)
            self.depth[i] = img
            self.depth_feature[i] = depth_feature_pool(img, cam.max_range)
            self.x_esdf[i] = min_depth(img)
