"""Built-in continuous-control tasks: pendulum swing-up and a 2-D point mass.

Both integrate with semi-implicit Euler at dt=0.05, run for at most 200
steps per episode, and are bitwise deterministic given (seed, action
sequence).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    act_dim: int
    act_limit: float
    velocity_indices: tuple
    horizon: int


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool


def wrap_angle(theta: float) -> float:
    """Map an angle to [-pi, pi)."""
    return ((theta + np.pi) % (2.0 * np.pi)) - np.pi


class Pendulum:
    """Torque-limited pendulum swing-up; angle 0 is upright.

    obs = (cos th, sin th, thdot), act = torque in [-2, 2],
    reward = -(wrap(th)^2 + 0.1 thdot^2 + 0.001 u^2).
    """

    DT = 0.05
    G = 10.0
    M = 1.0
    L = 1.0
    MAX_SPEED = 8.0
    MAX_TORQUE = 2.0
    HORIZON = 200

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)
        self.th = 0.0
        self.thdot = 0.0
        self._steps = 0
        self._needs_reset = True

    def set_rng(self, rng: np.random.Generator):
        self._rng = rng

    def spec(self) -> EnvSpec:
        return EnvSpec(obs_dim=3, act_dim=1, act_limit=self.MAX_TORQUE,
                       velocity_indices=(2,), horizon=self.HORIZON)

    def _obs(self) -> np.ndarray:
        return np.array([np.cos(self.th), np.sin(self.th), self.thdot])

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.th = self._rng.uniform(-np.pi, np.pi)
        self.thdot = self._rng.uniform(-1.0, 1.0)
        self._steps = 0
        self._needs_reset = False
        return self._obs()

    def step(self, action) -> StepResult:
        if self._needs_reset:
            raise ContractError("step called on a finished episode; reset first")
        u = float(np.clip(np.asarray(action, dtype=np.float64).ravel()[0],
                          -self.MAX_TORQUE, self.MAX_TORQUE))
        cost = wrap_angle(self.th) ** 2 + 0.1 * self.thdot ** 2 + 0.001 * u ** 2
        acc = (3.0 * self.G / (2.0 * self.L) * np.sin(self.th)
               + 3.0 / (self.M * self.L ** 2) * u)
        self.thdot = float(np.clip(self.thdot + acc * self.DT,
                                   -self.MAX_SPEED, self.MAX_SPEED))
        self.th = self.th + self.thdot * self.DT
        self._steps += 1
        done = self._steps >= self.HORIZON
        self._needs_reset = done
        return StepResult(self._obs(), -float(cost), done)


class PointMass:
    """2-D double integrator steering to a fixed goal.

    obs = (x, y, xdot, ydot), act = acceleration in [-1, 1]^2,
    reward = -|pos - goal|^2 - 0.01 |u|^2, done within 0.05 of the goal.
    """

    DT = 0.05
    MAX_SPEED = 1.0
    MAX_ACCEL = 1.0
    GOAL = np.array([1.0, 1.0])
    GOAL_RADIUS = 0.05
    HORIZON = 200

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self._steps = 0
        self._needs_reset = True

    def set_rng(self, rng: np.random.Generator):
        self._rng = rng

    def spec(self) -> EnvSpec:
        return EnvSpec(obs_dim=4, act_dim=2, act_limit=self.MAX_ACCEL,
                       velocity_indices=(2, 3), horizon=self.HORIZON)

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.pos = self._rng.uniform(-1.0, 0.5, size=2)
        self.vel = np.zeros(2)
        self._steps = 0
        self._needs_reset = False
        return self._obs()

    def step(self, action) -> StepResult:
        if self._needs_reset:
            raise ContractError("step called on a finished episode; reset first")
        u = np.clip(np.asarray(action, dtype=np.float64).ravel()[:2],
                    -self.MAX_ACCEL, self.MAX_ACCEL)
        self.vel = np.clip(self.vel + u * self.DT, -self.MAX_SPEED, self.MAX_SPEED)
        self.pos = self.pos + self.vel * self.DT
        self._steps += 1
        dist2 = float(np.sum((self.pos - self.GOAL) ** 2))
        reward = -dist2 - 0.01 * float(np.sum(u ** 2))
        done = dist2 <= self.GOAL_RADIUS ** 2 or self._steps >= self.HORIZON
        self._needs_reset = done
        return StepResult(self._obs(), reward, done)


ENV_NAMES = ("pendulum", "pointmass")


def make_env(name: str, seed: int = 0):
    if name == "pendulum":
        return Pendulum(seed)
    if name == "pointmass":
        return PointMass(seed)
    raise ContractError(f"unknown environment: {name!r} (choose from {ENV_NAMES})")
