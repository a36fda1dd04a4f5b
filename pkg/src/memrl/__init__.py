"""Memory-based deep reinforcement learning at desk scale.

Recurrent actor-critic (lstm-td3) with ddpg/td3 baselines, observation
corruption wrappers for partially observable evaluation, and a
deterministic training harness.
"""

from .agents import Agent, AgentConfig, build_agent
from .envs import EnvSpec, StepResult, make_env
from .harness import RunConfig, run_training
from .pomdp import PomdpConfig, PomdpWrapper
from .replay import HistoryWindow, ReplayBuffer, Transition

__all__ = [
    "Agent", "AgentConfig", "build_agent", "EnvSpec", "StepResult",
    "make_env", "RunConfig", "run_training", "PomdpConfig", "PomdpWrapper",
    "HistoryWindow", "ReplayBuffer", "Transition",
]

__version__ = "0.1.0"
