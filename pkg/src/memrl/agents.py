"""Actor-critic agents: DDPG, TD3, observation-window TD3 variants, and
the recurrent memory-based agent (LSTM-TD3).

The recurrent actor and critic are compound networks: a memory
extraction branch (LSTM + dense) over the history window, a current
feature extraction branch over the present observation (and action, for
critics), and a perception integration head over their concatenation.
Ablation switches select single/twin critics, target policy smoothing,
direct concatenation instead of CFE, and inclusion of past actions in
the history.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .envs import EnvSpec
from .errors import ConfigurationError, ContractError, DimensionError
from .nn import (LinearLayer, LstmLayer, Mlp, ParamSet, adam_step, hard_update,
                 lstm_sequence, soft_update)
from .replay import Batch, HistoryWindow
from .tensor import Tensor

VARIANTS = ("ddpg", "td3", "td3-ow", "td3-ow-apa", "lstm-td3")
MEMORY_VARIANTS = ("lstm-td3",)
WINDOW_VARIANTS = ("td3-ow", "td3-ow-apa")


@dataclass
class AgentConfig:
    variant: str = "lstm-td3"
    history_len: int = 5
    use_double_critics: bool = True
    use_target_policy_smoothing: bool = True
    use_cfe: bool = True
    include_past_actions: bool = True
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_size: int = 100
    sigma_act: float = 0.1
    sigma_targ: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    start_steps: int = 10000
    update_after: int = 1000
    mlp_hidden: tuple = (256, 256)
    mem_hidden: int = 128
    mem_dense: int = 128
    cfe_width: int = 128
    pi_hidden: tuple = (128, 128)

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "AgentConfig":
        """Config with the paper-table defaults for one algorithm."""
        base = dict(variant=variant)
        if variant == "ddpg":
            base.update(use_double_critics=False,
                        use_target_policy_smoothing=False, policy_delay=1,
                        history_len=0)
        elif variant == "td3":
            base.update(history_len=0)
        base.update(overrides)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r} (choose from {VARIANTS})")
        if self.history_len < 0:
            raise ConfigurationError("history_len must be >= 0")
        if self.variant == "ddpg":
            if self.use_double_critics or self.use_target_policy_smoothing \
                    or self.policy_delay != 1:
                raise ConfigurationError(
                    "ddpg requires single critic, no target smoothing, "
                    "policy_delay=1")
        elif self.variant != "lstm-td3":
            if not (self.use_double_critics and self.use_target_policy_smoothing):
                raise ConfigurationError(
                    f"{self.variant} always uses twin critics and target "
                    "policy smoothing; ablation switches apply to lstm-td3 only")
        if self.variant not in MEMORY_VARIANTS and not (
                self.use_cfe and self.include_past_actions):
            raise ConfigurationError(
                "use_cfe / include_past_actions apply to lstm-td3 only")
        if self.policy_delay < 1:
            raise ConfigurationError("policy_delay must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        d["pi_hidden"] = list(self.pi_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        d = dict(d)
        d["mlp_hidden"] = tuple(d["mlp_hidden"])
        d["pi_hidden"] = tuple(d["pi_hidden"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def flat_input_dim(config: AgentConfig, spec: EnvSpec) -> int:
    """Actor input width for the non-recurrent variants."""
    l = config.history_len
    if config.variant == "td3-ow" and l > 0:
        return (l + 1) * spec.obs_dim
    if config.variant == "td3-ow-apa" and l > 0:
        return (l + 1) * spec.obs_dim + l * spec.act_dim
    return spec.obs_dim


def build_observation_window(variant: str, o_t: np.ndarray,
                             h: HistoryWindow) -> np.ndarray:
    """Flat input vector for the observation-window variants.

    Window rows come first (observations, with actions interleaved for
    the add-past-actions variant), followed by the current observation.
    With history length 0 this is just the current observation.
    """
    if variant not in WINDOW_VARIANTS:
        raise ContractError(
            f"observation windows apply to {WINDOW_VARIANTS}, not {variant!r}")
    o_t = np.asarray(o_t, dtype=np.float64)
    if h.hist_len == 0:
        return o_t.copy()
    if variant == "td3-ow":
        return np.concatenate([h.obs_seq.ravel(), o_t])
    rows = [np.concatenate([h.obs_seq[r], h.act_seq[r]])
            for r in range(h.obs_seq.shape[0])]
    return np.concatenate(rows + [o_t])


def _batch_flat_input(variant: str, obs: np.ndarray, h_obs: np.ndarray,
                      h_act: np.ndarray, l: int) -> np.ndarray:
    if l == 0:
        return obs
    n = obs.shape[0]
    if variant == "td3-ow":
        return np.concatenate([h_obs.reshape(n, -1), obs], axis=1)
    pairs = np.concatenate([h_obs, h_act], axis=2).reshape(n, -1)
    return np.concatenate([pairs, obs], axis=1)


class MlpActor:
    def __init__(self, rng, in_dim: int, act_dim: int, act_limit: float,
                 hidden=(256, 256)):
        self.net = Mlp(rng, [in_dim] + list(hidden) + [act_dim], "relu")
        self.act_limit = act_limit
        self.last_memory = None  # no memory component

    def register(self, ps: ParamSet, prefix: str):
        self.net.register(ps, prefix)

    def forward(self, x: Tensor) -> Tensor:
        return T.scale(T.tanh(self.net.forward(x)), self.act_limit)


class MlpCritic:
    def __init__(self, rng, in_dim: int, act_dim: int, hidden=(256, 256)):
        self.net = Mlp(rng, [in_dim + act_dim] + list(hidden) + [1], "relu")
        self.last_memory = None

    def register(self, ps: ParamSet, prefix: str):
        self.net.register(ps, prefix)

    def forward(self, x: Tensor, a: Tensor) -> Tensor:
        return self.net.forward(T.concat(x, a, axis=1))


class RecurrentActor:
    """Memory extraction + current feature extraction + perception integration."""

    def __init__(self, rng, obs_dim: int, act_dim: int, act_limit: float,
                 config: AgentConfig):
        c = config
        self.obs_dim = obs_dim
        self.act_limit = act_limit
        self.include_past_actions = c.include_past_actions
        self.use_cfe = c.use_cfe
        self.lstm = LstmLayer(rng, obs_dim + act_dim, c.mem_hidden)
        self.me_dense = LinearLayer(rng, c.mem_hidden, c.mem_dense, "relu")
        self.cfe = LinearLayer(rng, obs_dim, c.cfe_width, "relu") if c.use_cfe \
            else None
        self.pi_in_dim = c.mem_dense + (c.cfe_width if c.use_cfe else obs_dim)
        self.pi = Mlp(rng, [self.pi_in_dim] + list(c.pi_hidden) + [act_dim],
                      "relu")
        self.last_memory = None

    def register(self, ps: ParamSet, prefix: str):
        self.lstm.register(ps, f"{prefix}.me.lstm")
        self.me_dense.register(ps, f"{prefix}.me.dense")
        if self.cfe is not None:
            self.cfe.register(ps, f"{prefix}.cfe")
        self.pi.register(ps, f"{prefix}.pi")

    def _memory(self, h_obs: np.ndarray, h_act: np.ndarray) -> Tensor:
        if not self.include_past_actions:
            h_act = np.zeros_like(h_act)
        xs = np.concatenate([h_obs, h_act], axis=2)
        mem = self.me_dense.forward(lstm_sequence(self.lstm, xs))
        self.last_memory = mem.data.copy()
        return mem

    def forward(self, obs: np.ndarray, h_obs: np.ndarray,
                h_act: np.ndarray) -> Tensor:
        if obs.shape[1] != self.obs_dim:
            raise DimensionError(
                f"actor expects obs dim {self.obs_dim}, got {obs.shape}")
        mem = self._memory(h_obs, h_act)
        cur = self.cfe.forward(Tensor(obs)) if self.use_cfe else Tensor(obs)
        out = self.pi.forward(T.concat(mem, cur, axis=1))
        return T.scale(T.tanh(out), self.act_limit)


class RecurrentCritic:
    def __init__(self, rng, obs_dim: int, act_dim: int, config: AgentConfig):
        c = config
        self.obs_dim = obs_dim
        self.include_past_actions = c.include_past_actions
        self.use_cfe = c.use_cfe
        self.lstm = LstmLayer(rng, obs_dim + act_dim, c.mem_hidden)
        self.me_dense = LinearLayer(rng, c.mem_hidden, c.mem_dense, "relu")
        self.cfe = LinearLayer(rng, obs_dim + act_dim, c.cfe_width, "relu") \
            if c.use_cfe else None
        self.pi_in_dim = c.mem_dense + (c.cfe_width if c.use_cfe
                                        else obs_dim + act_dim)
        self.pi = Mlp(rng, [self.pi_in_dim] + list(c.pi_hidden) + [1], "relu")
        self.last_memory = None

    def register(self, ps: ParamSet, prefix: str):
        self.lstm.register(ps, f"{prefix}.me.lstm")
        self.me_dense.register(ps, f"{prefix}.me.dense")
        if self.cfe is not None:
            self.cfe.register(ps, f"{prefix}.cfe")
        self.pi.register(ps, f"{prefix}.pi")

    def _memory(self, h_obs: np.ndarray, h_act: np.ndarray) -> Tensor:
        if not self.include_past_actions:
            h_act = np.zeros_like(h_act)
        xs = np.concatenate([h_obs, h_act], axis=2)
        mem = self.me_dense.forward(lstm_sequence(self.lstm, xs))
        self.last_memory = mem.data.copy()
        return mem

    def forward(self, obs: np.ndarray, act: Tensor, h_obs: np.ndarray,
                h_act: np.ndarray) -> Tensor:
        mem = self._memory(h_obs, h_act)
        oa = T.concat(Tensor(obs), act, axis=1)
        cur = self.cfe.forward(oa) if self.use_cfe else oa
        return self.pi.forward(T.concat(mem, cur, axis=1))


class Agent:
    """One actor, one or two critics, their targets, and the update rules."""

    def __init__(self, config: AgentConfig, env_spec: EnvSpec, seed: int):
        config.validate()
        self.config = config
        self.env_spec = env_spec
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        (init_ss, noise_ss) = ss.spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self.noise_rng = np.random.default_rng(noise_ss)  # target smoothing

        n_critics = 2 if config.use_double_critics else 1
        self.actor = self._make_actor(init_rng)
        self.critics = [self._make_critic(init_rng) for _ in range(n_critics)]
        self.target_actor = self._make_actor(init_rng)
        self.target_critics = [self._make_critic(init_rng)
                               for _ in range(n_critics)]

        self.actor_ps = ParamSet()
        self.actor.register(self.actor_ps, "actor")
        self.critic_ps = ParamSet()
        for j, c in enumerate(self.critics):
            c.register(self.critic_ps, f"q{j + 1}")
        self.target_actor_ps = ParamSet()
        self.target_actor.register(self.target_actor_ps, "actor")
        self.target_critic_ps = ParamSet()
        for j, c in enumerate(self.target_critics):
            c.register(self.target_critic_ps, f"q{j + 1}")

        hard_update(self.target_actor_ps, self.actor_ps)
        hard_update(self.target_critic_ps, self.critic_ps)
        self.target_actor_ps.freeze(True)
        self.target_critic_ps.freeze(True)

        self.env_steps = 0
        self.critic_updates = 0
        self.actor_updates = 0

    # -- construction ------------------------------------------------------

    @property
    def recurrent(self) -> bool:
        return self.config.variant in MEMORY_VARIANTS

    def _make_actor(self, rng):
        spec = self.env_spec
        if self.recurrent:
            return RecurrentActor(rng, spec.obs_dim, spec.act_dim,
                                  spec.act_limit, self.config)
        return MlpActor(rng, flat_input_dim(self.config, spec), spec.act_dim,
                        spec.act_limit, self.config.mlp_hidden)

    def _make_critic(self, rng):
        spec = self.env_spec
        if self.recurrent:
            return RecurrentCritic(rng, spec.obs_dim, spec.act_dim, self.config)
        return MlpCritic(rng, flat_input_dim(self.config, spec), spec.act_dim,
                         self.config.mlp_hidden)

    # -- forward passes ----------------------------------------------------

    def _actor_forward(self, actor, obs, h_obs, h_act) -> Tensor:
        if self.recurrent:
            return actor.forward(obs, h_obs, h_act)
        x = _batch_flat_input(self.config.variant, obs, h_obs, h_act,
                              self.config.history_len)
        return actor.forward(Tensor(x))

    def _critic_forward(self, critic, obs, act: Tensor, h_obs, h_act) -> Tensor:
        if self.recurrent:
            return critic.forward(obs, act, h_obs, h_act)
        x = _batch_flat_input(self.config.variant, obs, h_obs, h_act,
                              self.config.history_len)
        return critic.forward(Tensor(x), act)

    def actor_forward(self, obs, h_obs, h_act) -> Tensor:
        return self._actor_forward(self.actor, obs, h_obs, h_act)

    def critic_forward(self, j: int, obs, act: Tensor, h_obs, h_act) -> Tensor:
        return self._critic_forward(self.critics[j], obs, act, h_obs, h_act)

    # -- updates -----------------------------------------------------------

    def compute_target_q(self, batch: Batch) -> np.ndarray:
        """Bootstrap target r + gamma (1 - d) min_j Q_j^-(o', a^-, h').

        Target networks are frozen, so nothing here lands on the tape and
        no gradient can flow into the target.
        """
        c = self.config
        a2 = self._actor_forward(self.target_actor, batch.next_obs,
                                 batch.h2_obs, batch.h2_act).data
        if c.use_target_policy_smoothing:
            eps = np.clip(
                self.noise_rng.normal(0.0, c.sigma_targ, size=a2.shape),
                -c.noise_clip, c.noise_clip)
            a2 = np.clip(a2 + eps, -self.env_spec.act_limit,
                         self.env_spec.act_limit)
        a2_t = Tensor(a2)
        qs = [self._critic_forward(tc, batch.next_obs, a2_t, batch.h2_obs,
                                   batch.h2_act).data
              for tc in self.target_critics]
        q_min = np.minimum(qs[0], qs[1]) if len(qs) == 2 else qs[0]
        return batch.rew[:, None] + c.gamma * (1.0 - batch.done[:, None]) * q_min

    def update_critics(self, batch: Batch) -> float:
        target = self.compute_target_q(batch)
        T.reset_tape()
        act_t = Tensor(batch.act)
        target_t = Tensor(target)
        losses = []
        for j in range(len(self.critics)):
            q = self.critic_forward(j, batch.obs, act_t, batch.h_obs,
                                    batch.h_act)
            err = T.sub(q, target_t)
            losses.append(T.mean(T.mul(err, err)))
        loss = losses[0] if len(losses) == 1 else \
            T.scale(T.add(losses[0], losses[1]), 0.5)
        T.backward(loss)
        adam_step(self.critic_ps, self.config.lr_critic)
        self.critic_updates += 1
        return loss.item()

    def update_actor(self, batch: Batch) -> float:
        T.reset_tape()
        self.critic_ps.freeze(True)
        try:
            a = self.actor_forward(batch.obs, batch.h_obs, batch.h_act)
            q = self.critic_forward(0, batch.obs, a, batch.h_obs, batch.h_act)
            objective = T.mean(q)
            T.backward(T.scale(objective, -1.0))
        finally:
            self.critic_ps.freeze(False)
        adam_step(self.actor_ps, self.config.lr_actor)
        self.actor_updates += 1
        return objective.item()

    def train_step(self, batch: Batch) -> dict:
        """One Alg.-style learning iteration: critics, delayed actor, targets."""
        info = {"critic_loss": self.update_critics(batch)}
        if self.critic_updates % self.config.policy_delay == 0:
            info["actor_objective"] = self.update_actor(batch)
            soft_update(self.target_critic_ps, self.critic_ps, self.config.tau)
            soft_update(self.target_actor_ps, self.actor_ps, self.config.tau)
        T.reset_tape()
        return info

    # -- acting ------------------------------------------------------------

    def select_action(self, obs: np.ndarray, h: HistoryWindow, explore: bool,
                      rng: np.random.Generator) -> np.ndarray:
        limit = self.env_spec.act_limit
        act_dim = self.env_spec.act_dim
        if explore and self.env_steps < self.config.start_steps:
            return rng.uniform(-limit, limit, size=act_dim)
        T.reset_tape()
        a = self.actor_forward(np.asarray(obs, dtype=np.float64)[None, :],
                               h.obs_seq[None], h.act_seq[None]).data[0]
        if explore:
            a = a + rng.normal(0.0, self.config.sigma_act, size=act_dim)
        return np.clip(a, -limit, limit)

    def greedy_q1(self, obs: np.ndarray, act: np.ndarray,
                  h: HistoryWindow) -> float:
        T.reset_tape()
        q = self.critic_forward(0, np.asarray(obs)[None, :],
                                Tensor(np.asarray(act)[None, :]),
                                h.obs_seq[None], h.act_seq[None])
        return float(q.data[0, 0])


def build_agent(config: AgentConfig, env_spec: EnvSpec, seed: int) -> Agent:
    return Agent(config, env_spec, seed)
