"""Command-line harness: episode runner, acceptance experiments, depth dump.

Exit code is 0 only when every requested check passes; each command also
emits a machine-readable JSON summary next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import config as cfgmod
from .bridge import serve as bridge_serve
from .env import VecEnv
from .pilot import CascadePilot
from .policy import load_weights, mlp_forward
from .quat import quat_from_yaw
from .tasks import EpisodeOutcome, TaskKind, lemniscate
from .trace import records_from_step, write_trace
from .world import Scene, raycast, write_depth

SUCCESS_OUTCOME = {
    TaskKind.HOVERING: EpisodeOutcome.TIMED_OUT,
    TaskKind.TRACKING: EpisodeOutcome.TIMED_OUT,
    TaskKind.TARGET_HITTING: EpisodeOutcome.HIT,
    TaskKind.AVOIDANCE: EpisodeOutcome.TIMED_OUT,
    TaskKind.PLANNING: EpisodeOutcome.GOAL_REACHED,
}


def _make_env(args, task=None, mode=None, n_envs=None, extra=None) -> VecEnv:
    overrides = {"sim": {}}
    if task:
        overrides["sim"]["task"] = task
    if mode:
        overrides["sim"]["mode" if False else "control_mode"] = mode
    if n_envs:
        overrides["sim"]["n_envs"] = n_envs
    if getattr(args, "seed", None) is not None:
        overrides["sim"]["seed"] = args.seed
    if extra:
        overrides = cfgmod._deep_merge(overrides, extra)
    cfg = cfgmod.load_config(getattr(args, "config", None), overrides)
    return VecEnv(cfg)


def _reference_error(env: VecEnv) -> np.ndarray:
    """Instantaneous task-reference distance per env (nan when undefined)."""
    if env.task is TaskKind.HOVERING:
        target = np.asarray(env.task_cfg["target"], dtype=float)
        return np.linalg.norm(env.state.pos_w - target, axis=-1)
    if env.task is TaskKind.TRACKING:
        ref = lemniscate(env._t_ref(np.arange(env.n)), env.track_rate)
        return np.linalg.norm(env.state.pos_w - ref, axis=-1)
    if env.task is TaskKind.AVOIDANCE:
        return np.linalg.norm(env.state.pos_w - env.pose_target_pos, axis=-1)
    if env.task is TaskKind.TARGET_HITTING:
        return np.linalg.norm(env.state.pos_w - env.balloon, axis=-1)
    return np.linalg.norm(env.state.pos_w - env.goal, axis=-1)


def run_episodes(env: VecEnv, policy=None, steps=None, collect_trace=True):
    """Drive the batch for `steps`; metrics cover each env's first episode."""
    steps = steps or env.max_steps
    pilot = CascadePilot(env) if policy is None else None
    obs = env.reset()
    records = []
    finished = np.zeros(env.n, dtype=bool)
    final_outcome = np.full(env.n, EpisodeOutcome.TIMED_OUT, dtype=object)
    err_sum = np.zeros(env.n)
    err_count = np.zeros(env.n)

    for _ in range(steps):
        live = ~finished
        err = _reference_error(env)
        err_sum[live] += err[live]
        err_count[live] += 1

        actions = pilot.act() if pilot is not None else mlp_forward(policy, obs)
        result = env.step(actions)
        obs = result.obs
        if collect_trace:
            records.extend(records_from_step(env, actions, result))
        newly_done = result.done & ~finished
        final_outcome[newly_done] = result.info["outcome"][newly_done]
        finished |= result.done
        if finished.all():
            break

    mean_err = np.where(err_count > 0, err_sum / np.maximum(err_count, 1), np.nan)
    want = SUCCESS_OUTCOME[env.task]
    success = np.array([o == want for o in final_outcome])
    summary = {
        "task": env.task.value,
        "mode": env.mode.value,
        "episodes": env.n,
        "success_rate": float(success.mean()),
        "mean_position_error": float(np.nanmean(mean_err)),
        "med": float(np.nanmean(mean_err)) if env.task is TaskKind.TRACKING else None,
        "outcomes": {o.name: int(sum(1 for x in final_outcome if x == o))
                     for o in EpisodeOutcome},
    }
    return records, summary


def cmd_run(args) -> int:
    env = _make_env(args, task=args.task, mode=args.mode, n_envs=args.episodes)
    policy = load_weights(args.policy) if args.policy else None
    t0 = time.perf_counter()
    records, summary = run_episodes(env, policy, steps=args.steps)
    summary["runtime_s"] = time.perf_counter() - t0
    if args.out:
        write_trace(args.out, records)
        with open(args.out + ".summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_hover_test(args) -> int:
    """Hover regulation: 8 random-cube starts must settle within 0.1 m by 5 s."""
    env = _make_env(args, task="hovering", mode="py", n_envs=args.episodes)
    pilot = CascadePilot(env)
    env.reset()
    t0 = time.perf_counter()
    settle_steps = int(round(args.settle_time / env.dt))
    total_steps = int(round(args.duration / env.dt))
    worst = np.zeros(env.n)
    for k in range(total_steps):
        env.step(pilot.act())
        if k + 1 >= settle_steps:
            worst = np.maximum(worst, _reference_error(env))
    runtime = time.perf_counter() - t0
    passed = bool((worst <= args.tolerance).all())
    for i, w in enumerate(worst):
        print(f"episode {i}: max error after {args.settle_time:.0f}s = {w:.4f} m")
    print(f"runtime: {runtime:.2f}s")
    print("hover-test:", "PASS" if passed else "FAIL",
          f"(worst {worst.max():.4f} m, tolerance {args.tolerance} m)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"worst_error": worst.tolist(), "runtime_s": runtime,
                       "pass": passed}, fh, indent=2)
    return 0 if passed else 1


def cmd_track_test(args) -> int:
    """One lemniscate lap under the LV pilot; relative MED must stay small."""
    extra = {"task": {"tracking": {"mean_speed": args.speed}},
             "sim": {"max_episode_steps": 100000}}
    env = _make_env(args, task="tracking", mode="lv", n_envs=args.episodes, extra=extra)
    pilot = CascadePilot(env)
    env.reset()
    t0 = time.perf_counter()
    lap_time = 2.0 * np.pi / env.track_rate
    steps = int(round(lap_time / env.dt))
    err_sum = np.zeros(env.n)
    for _ in range(steps):
        err_sum += _reference_error(env)
        env.step(pilot.act())
    runtime = time.perf_counter() - t0
    med = err_sum / steps
    rel = med / 3.0
    passed = bool((rel <= args.tolerance).all())
    for i in range(env.n):
        print(f"episode {i}: MED = {med[i]:.4f} m, relative = {rel[i]:.4f}")
    print(f"runtime: {runtime:.2f}s (lap {lap_time:.1f}s at {args.speed} m/s)")
    print("track-test:", "PASS" if passed else "FAIL",
          f"(worst relative {rel.max():.4f}, tolerance {args.tolerance})")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"med": med.tolist(), "relative": rel.tolist(),
                       "runtime_s": runtime, "pass": passed}, fh, indent=2)
    return 0 if passed else 1


ASCII_SHADES = " .:-=+*#%@"


def cmd_depth_dump(args) -> int:
    cfg = cfgmod.load_config(getattr(args, "config", None))
    camera = cfgmod.build_camera(cfg)
    scene = Scene.load(args.scene)
    vals = [float(v) for v in args.pose.split(",")]
    if len(vals) == 4:
        pos, quat = np.array(vals[:3]), quat_from_yaw(np.deg2rad(vals[3]))
    elif len(vals) == 7:
        pos, quat = np.array(vals[:3]), np.asarray(vals[3:])
        quat = quat / np.linalg.norm(quat)
    else:
        print("--pose needs x,y,z,yaw_deg or x,y,z,qw,qx,qy,qz", file=sys.stderr)
        return 2
    img = raycast(scene, pos, quat, camera)
    write_depth(args.out, img)
    # coarse ASCII preview, near = dark
    rows, cols = 16, 48
    for r in range(rows):
        line = ""
        for c in range(cols):
            block = img[
                r * img.shape[0] // rows : (r + 1) * img.shape[0] // rows,
                c * img.shape[1] // cols : (c + 1) * img.shape[1] // cols,
            ]
            frac = float(block.mean()) / camera.max_range
            line += ASCII_SHADES[min(int((1.0 - frac) * (len(ASCII_SHADES) - 1)),
                                     len(ASCII_SHADES) - 1)]
        print(line)
    print(f"wrote {args.out}: {img.shape[1]}x{img.shape[0]}, "
          f"min {img.min():.3f} m, max {img.max():.3f} m")
    return 0


def cmd_serve(args) -> int:
    cfg = cfgmod.load_config(getattr(args, "config", None),
                             {"sim": {"seed": args.seed}} if args.seed is not None else None)
    bridge_serve(cfg, host=args.host, port=args.port, max_sessions=args.max_sessions)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadsim")
    p.add_argument("--config", default=None, help="YAML config file")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run episodes with a policy or the cascade pilot")
    r.add_argument("--task", default="hovering",
                   choices=[t.value for t in TaskKind])
    r.add_argument("--mode", default=None,
                   help="control mode (py, lv, cta, ctbr, srt)")
    r.add_argument("--policy", default=None, help="policy weights JSON")
    r.add_argument("--episodes", type=int, default=8)
    r.add_argument("--steps", type=int, default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help="trace file path")
    r.set_defaults(func=cmd_run)

    h = sub.add_parser("hover-test", help="hover regulation acceptance experiment")
    h.add_argument("--episodes", type=int, default=8)
    h.add_argument("--seed", type=int, default=None)
    h.add_argument("--settle-time", type=float, default=5.0)
    h.add_argument("--duration", type=float, default=8.0)
    h.add_argument("--tolerance", type=float, default=0.1)
    h.add_argument("--out", default=None)
    h.set_defaults(func=cmd_hover_test)

    t = sub.add_parser("track-test", help="lemniscate tracking acceptance experiment")
    t.add_argument("--speed", type=float, default=1.6)
    t.add_argument("--episodes", type=int, default=1)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--tolerance", type=float, default=0.05)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_track_test)

    d = sub.add_parser("depth-dump", help="ray cast a scene and dump raw depth")
    d.add_argument("--scene", required=True, help="scene JSON file")
    d.add_argument("--pose", required=True, help="x,y,z,yaw_deg or x,y,z,qw,qx,qy,qz")
    d.add_argument("--out", required=True, help="output binary path")
    d.set_defaults(func=cmd_depth_dump)

    s = sub.add_parser("serve", help="expose the environment over the local protocol")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=5555)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--max-sessions", type=int, default=None)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
