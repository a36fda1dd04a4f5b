"""Observation-corruption wrappers turning an MDP task into a POMDP.

Four corruptions: remove velocities (rv), flickering (flk), additive
Gaussian noise (rn), and random sensor missing (rsm).  Each wrapper is a
pure function of (clean observation, rng state); dynamics, reward, and
done are untouched.  The wrapper rng is separate from the environment
and agent rngs so observability sweeps change nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import EnvSpec, StepResult
from .errors import ConfigurationError

VERSIONS = ("mdp", "rv", "flk", "rn", "rsm")


@dataclass
class PomdpConfig:
    version: str = "mdp"
    p_flk: float = 0.2
    sigma_rn: float = 0.1
    p_rsm: float = 0.1
    rng_seed: int = 0

    def validate(self):
        if self.version not in VERSIONS:
            raise ConfigurationError(
                f"unknown pomdp version {self.version!r} (choose from {VERSIONS})")
        for name in ("p_flk", "p_rsm"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {p}")
        if self.sigma_rn < 0.0:
            raise ConfigurationError(f"sigma_rn must be >= 0, got {self.sigma_rn}")


def wrap_rv(obs: np.ndarray, spec: EnvSpec) -> np.ndarray:
    """Delete velocity-related entries, preserving the order of the rest."""
    if not spec.velocity_indices:
        raise ConfigurationError(
            "remove-velocity is undefined for an env with no velocity indices")
    keep = [i for i in range(spec.obs_dim) if i not in spec.velocity_indices]
    return np.asarray(obs)[keep]


def wrap_flk(obs: np.ndarray, p_flk: float, rng: np.random.Generator) -> np.ndarray:
    """Zero the whole observation with probability p_flk (one draw per step)."""
    if rng.random() < p_flk:
        return np.zeros_like(obs)
    return np.array(obs, copy=True)


def wrap_rn(obs: np.ndarray, sigma_rn: float,
            rng: np.random.Generator) -> np.ndarray:
    """Add independent N(0, sigma_rn) noise to every entry."""
    return np.asarray(obs) + sigma_rn * rng.standard_normal(np.asarray(obs).shape)


def wrap_rsm(obs: np.ndarray, p_rsm: float, rng: np.random.Generator) -> np.ndarray:
    """Zero each entry independently with probability p_rsm."""
    obs = np.asarray(obs)
    mask = rng.random(obs.shape) >= p_rsm
    return obs * mask


def wrapped_spec(spec: EnvSpec, config: PomdpConfig) -> EnvSpec:
    """Env spec as seen by the agent after corruption."""
    if config.version == "rv":
        if not spec.velocity_indices:
            raise ConfigurationError(
                "remove-velocity is undefined for an env with no velocity indices")
        return EnvSpec(obs_dim=spec.obs_dim - len(spec.velocity_indices),
                       act_dim=spec.act_dim, act_limit=spec.act_limit,
                       velocity_indices=(), horizon=spec.horizon)
    return spec


class PomdpWrapper:
    """Wraps an environment, corrupting every observation the agent sees.

    The agent stores and learns from corrupted observations only; the
    replay buffer never holds clean ones.
    """

    def __init__(self, env, config: PomdpConfig):
        config.validate()
        self.env = env
        self.config = config
        self._rng = np.random.default_rng(config.rng_seed)
        self._spec = wrapped_spec(env.spec(), config)

    def spec(self) -> EnvSpec:
        return self._spec

    def reseed(self, seed: int):
        self._rng = np.random.default_rng(seed)

    def set_rng(self, rng: np.random.Generator):
        self._rng = rng

    def observation(self, obs: np.ndarray) -> np.ndarray:
        v = self.config.version
        if v == "mdp":
            return np.array(obs, copy=True)
        if v == "rv":
            return wrap_rv(obs, self.env.spec())
        if v == "flk":
            return wrap_flk(obs, self.config.p_flk, self._rng)
        if v == "rn":
            return wrap_rn(obs, self.config.sigma_rn, self._rng)
        if v == "rsm":
            return wrap_rsm(obs, self.config.p_rsm, self._rng)
        raise ConfigurationError(f"unknown pomdp version {v!r}")

    def reset(self, seed=None) -> np.ndarray:
        return self.observation(self.env.reset(seed))

    def step(self, action) -> StepResult:
        r = self.env.step(action)
        return StepResult(self.observation(r.observation), r.reward, r.done)
