"""Scripted two-stage avoidance curriculum.

Stage 1 throws slow, well-telegraphed projectiles so the policy first
learns to hold its pose and read the depth feature; stage 2 continues
from the stage-1 weights at the full 4-8 m/s throw speeds.  Step budgets
are small by default; raise them for a real training run.

    python scripts/avoidance_curriculum.py --stage1-steps 2e6 --stage2-steps 3e6
"""

import argparse
import json
import tempfile

from quadtrainer.client import SimulatorProcess
from quadtrainer.ppo import PPOConfig, PPOTrainer
from quadtrainer.train import write_sim_config

STAGES = [
    {
        "name": "stage1-slow-throws",
        "extra": {"task": {"avoidance": {"projectile": {
            "speed_low": 2.0, "speed_high": 4.0, "distance": 8.0}}}},
    },
    {
        "name": "stage2-full-speed",
        "extra": {"task": {"avoidance": {"projectile": {
            "speed_low": 4.0, "speed_high": 8.0, "distance": 6.0}}}},
    },
]


def main(argv=None) -> int:
    p = argparse.ArgumentParser()
    p.add_argument("--stage1-steps", type=float, default=200_000)
    p.add_argument("--stage2-steps", type=float, default=200_000)
    p.add_argument("--n-envs", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--port", type=int, default=5620)
    p.add_argument("--out", default="avoidance_policy.json")
    p.add_argument("--log", default="avoidance_curriculum_log.json")
    args = p.parse_args(argv)

    budgets = [int(args.stage1_steps), int(args.stage2_steps)]
    trainer = None
    logs = []
    for stage, budget in zip(STAGES, budgets):
        with tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False) as tmp:
            cfg_path = tmp.name
        write_sim_config("avoidance", "ctbr", args.n_envs, args.seed, 400,
                         cfg_path, extra=stage["extra"])
        with SimulatorProcess(args.port, config_path=cfg_path) as sim:
            with sim.connect() as client:
                if trainer is None:
                    trainer = PPOTrainer(client, PPOConfig(seed=args.seed))
                else:
                    # same spaces, harder throws: keep the learned weights
                    trainer.client = client
                    trainer._obs = None
                    trainer.result.env_steps = 0
                start = len(trainer.result.reward_log)
                trainer.train(budget, quiet=False, log_every=20)
                logs.append({"stage": stage["name"],
                             "rewards": trainer.result.reward_log[start:]})
        print(f"{stage['name']} done")
    trainer.export_weights(args.out)
    with open(args.log, "w") as fh:
        json.dump(logs, fh)
    print(f"weights -> {args.out}, log -> {args.log}")
    return 0


if __name__ == "__main__":
    import sys

    sys.exit(main())
