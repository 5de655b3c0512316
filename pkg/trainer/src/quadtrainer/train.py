"""Training entry point: launch the simulator, run PPO, export weights.

The simulator runs as a `quadsim serve` subprocess; this process talks
to it only over the bridge socket, so the two sides stay separable.
"""

from __future__ import annotations

import argparse
import json
import tempfile

import numpy as np

from .client import SimulatorProcess
from .ppo import PPOConfig, PPOTrainer


def evaluate(client, trainer, steps: int = 500, tail: int = 100):
    """Deterministic rollout; returns mean position error over the tail steps.

    For the hover-style observation the position error is the norm of
    entries 9..11 (target minus current position).
    """
    obs = client.reset()
    errors = []
    for _ in range(steps):
        actions = trainer.act_deterministic(obs)
        obs, _, _, _ = client.step(actions)
        errors.append(np.linalg.norm(obs[:, 9:12], axis=-1))
    tail_err = np.asarray(errors[-tail:])
    return float(tail_err.mean()), tail_err


def write_sim_config(task, mode, n_envs, seed, max_episode_steps, path,
                     extra=None) -> None:
    # JSON is valid YAML, so the simulator reads this overrides file directly
    overrides = {
        "sim": {
            "task": task,
            "control_mode": mode,
            "n_envs": n_envs,
            "seed": seed,
            "max_episode_steps": max_episode_steps,
        }
    }
    if extra:
        overrides.update(extra)
    with open(path, "w") as fh:
        json.dump(overrides, fh)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="quadtrainer")
    p.add_argument("--task", default="hovering")
    p.add_argument("--mode", default="ctbr")
    p.add_argument("--steps", type=float, default=5e6, help="total env steps")
    p.add_argument("--n-envs", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--rollout-steps", type=int, default=64)
    p.add_argument("--episode-steps", type=int, default=500)
    p.add_argument("--port", type=int, default=5560)
    p.add_argument("--out", default="policy.json")
    p.add_argument("--log", default=None, help="training-log JSON path")
    args = p.parse_args(argv)

    with tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False) as tmp:
        cfg_path = tmp.name
    write_sim_config(args.task, args.mode, args.n_envs, args.seed,
                     args.episode_steps, cfg_path)

    ppo_cfg = PPOConfig(gamma=args.gamma, lr=args.lr,
                        rollout_steps=args.rollout_steps, seed=args.seed)
    with SimulatorProcess(args.port, config_path=cfg_path) as sim:
        with sim.connect() as client:
            trainer = PPOTrainer(client, ppo_cfg)
            result = trainer.train(int(args.steps))
            mean_err, _ = evaluate(client, trainer,
                                   steps=args.episode_steps - 1)
            trainer.export_weights(args.out)

    print(f"trained {result.env_steps} env steps over "
          f"{len(result.reward_log)} iterations")
    print(f"final deterministic eval: mean tail position error {mean_err:.4f} m")
    print(f"weights written to {args.out}")
    if args.log:
        with open(args.log, "w") as fh:
            json.dump({"reward_log": result.reward_log,
                       "env_steps": result.env_steps,
                       "eval_mean_tail_error_m": mean_err}, fh)
    return 0


if __name__ == "__main__":
    import sys

    sys.exit(main())
