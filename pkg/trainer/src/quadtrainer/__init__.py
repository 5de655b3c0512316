"""PPO trainer and protocol client for the quadsim bridge."""

from .client import BridgeClient, SimulatorProcess
from .ppo import ActorCritic, PPOConfig, PPOTrainer, RunningNorm

__all__ = ["ActorCritic", "BridgeClient", "PPOConfig", "PPOTrainer", "RunningNorm", "SimulatorProcess"]
