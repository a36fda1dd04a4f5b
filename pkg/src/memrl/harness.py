"""Training loop, evaluation protocols, checkpointing, and metrics.

All randomness in a run flows through named streams (environment,
corruption wrapper, exploration, replay sampling, and their evaluation
counterparts), each seeded independently, so a run is bitwise
reproducible and reseeding one stream leaves the others unchanged.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .agents import Agent, AgentConfig, build_agent
from .envs import EnvSpec, make_env
from .errors import CheckpointError, ConfigurationError, ContractError
from .pomdp import PomdpConfig, PomdpWrapper
from .replay import (ReplayBuffer, Transition, advance_live_history,
                     zero_history)

CHECKPOINT_MAGIC = b"MEMRL-CKPT"
CHECKPOINT_VERSION = 1

METRICS_COLUMNS = ("step", "avg_test_return", "std_test_return", "avg_q1",
                   "avg_actor_memory", "avg_critic_memory", "wall_time")


@dataclass
class RunConfig:
    agent: AgentConfig
    env_name: str = "pendulum"
    pomdp: PomdpConfig = field(default_factory=PomdpConfig)
    total_steps: int = 30000
    eval_every: int = 4000
    eval_episodes: int = 10
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    buffer_capacity: int = 1_000_000

    def validate(self):
        self.agent.validate()
        self.pomdp.validate()
        if self.eval_episodes < 1:
            raise ConfigurationError("eval_episodes must be >= 1")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")


@dataclass
class EvalResult:
    mean_return: float
    std_return: float
    avg_q1: float
    avg_actor_memory: float | None  # signed mean; None for memoryless agents
    avg_actor_memory_abs: float | None
    avg_critic_memory: float | None
    avg_critic_memory_abs: float | None


def _stream(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _make_wrapped_env(env_name: str, pomdp: PomdpConfig, env_seed_key,
                      wrapper_seed_key) -> PomdpWrapper:
    env = make_env(env_name)
    env.set_rng(_stream(*env_seed_key))
    wrapper = PomdpWrapper(env, pomdp)
    wrapper.set_rng(_stream(*wrapper_seed_key))
    return wrapper


def evaluate_policy(agent: Agent, env: PomdpWrapper, episodes: int,
                    rng: np.random.Generator,
                    history_len: int | None = None) -> EvalResult:
    """Noiseless rollouts; returns mean/std return and memory statistics."""
    spec = env.spec()
    l = agent.config.history_len if history_len is None else history_len
    returns = []
    q1_vals = []
    a_mem_signed = []
    a_mem_abs = []
    c_mem_signed = []
    c_mem_abs = []
    for _ in range(episodes):
        o = env.reset()
        h = zero_history(l, spec.obs_dim, spec.act_dim)
        ep_ret = 0.0
        done = False
        while not done:
            a = agent.select_action(o, h, explore=False, rng=rng)
            if agent.recurrent and agent.actor.last_memory is not None:
                a_mem_signed.append(float(agent.actor.last_memory.mean()))
                a_mem_abs.append(float(np.abs(agent.actor.last_memory).mean()))
            q1_vals.append(agent.greedy_q1(o, a, h))
            if agent.recurrent and agent.critics[0].last_memory is not None:
                c_mem_signed.append(float(agent.critics[0].last_memory.mean()))
                c_mem_abs.append(
                    float(np.abs(agent.critics[0].last_memory).mean()))
            r = env.step(a)
            h = advance_live_history(h, o, a, r.done)
            o = r.observation
            ep_ret += r.reward
            done = r.done
        returns.append(ep_ret)
    returns = np.asarray(returns)
    mem = (float(np.mean(a_mem_signed)), float(np.mean(a_mem_abs)),
           float(np.mean(c_mem_signed)), float(np.mean(c_mem_abs))) \
        if agent.recurrent else (None, None, None, None)
    return EvalResult(mean_return=float(returns.mean()),
                      std_return=float(returns.std()),
                      avg_q1=float(np.mean(q1_vals)),
                      avg_actor_memory=mem[0], avg_actor_memory_abs=mem[1],
                      avg_critic_memory=mem[2], avg_critic_memory_abs=mem[3])


def _metrics_path(out_dir: str, seed: int) -> str:
    return os.path.join(out_dir, f"metrics_seed{seed}.csv")


def _checkpoint_path(out_dir: str, seed: int) -> str:
    return os.path.join(out_dir, f"checkpoint_seed{seed}.ckpt")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def run_training_seed(config: RunConfig, seed: int,
                      quiet: bool = True) -> tuple[str, str]:
    """Train one (config, seed) run; returns (metrics path, checkpoint path)."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    t0 = time.monotonic()

    env = _make_wrapped_env(config.env_name, config.pomdp,
                            (seed, 0), (config.pomdp.rng_seed, seed, 1))
    eval_env = _make_wrapped_env(config.env_name, config.pomdp,
                                 (seed, 5), (config.pomdp.rng_seed, seed, 6))
    explore_rng = _stream(seed, 2)
    replay_rng = _stream(seed, 3)
    eval_rng = _stream(seed, 7)

    spec = env.spec()
    agent = build_agent(config.agent, spec, seed)
    cfg = config.agent
    buffer = ReplayBuffer(config.buffer_capacity, obs_dim=spec.obs_dim,
                          act_dim=spec.act_dim)

    metrics_path = _metrics_path(config.out_dir, seed)
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)

        o = env.reset()
        h = zero_history(cfg.history_len, spec.obs_dim, spec.act_dim)
        episode_id = 0
        step_in_episode = 1
        for t in range(1, config.total_steps + 1):
            a = agent.select_action(o, h, explore=True, rng=explore_rng)
            r = env.step(a)
            buffer.store(Transition(o, a, r.reward, r.observation, r.done,
                                    episode_id, step_in_episode))
            agent.env_steps += 1
            if r.done:
                o = env.reset()
                h = zero_history(cfg.history_len, spec.obs_dim, spec.act_dim)
                episode_id += 1
                step_in_episode = 1
            else:
                h = advance_live_history(h, o, a, done=False)
                o = r.observation
                step_in_episode += 1

            if t > cfg.update_after:
                batch = buffer.sample_batch(cfg.batch_size, cfg.history_len,
                                            replay_rng)
                agent.train_step(batch)

            if t % config.eval_every == 0 or t == config.total_steps:
                res = evaluate_policy(agent, eval_env, config.eval_episodes,
                                      eval_rng)
                writer.writerow([t, _fmt(res.mean_return),
                                 _fmt(res.std_return), _fmt(res.avg_q1),
                                 _fmt(res.avg_actor_memory),
                                 _fmt(res.avg_critic_memory),
                                 _fmt(time.monotonic() - t0)])
                fh.flush()
                if not quiet:
                    print(f"seed {seed} step {t}: "
                          f"return {res.mean_return:.1f} "
                          f"+/- {res.std_return:.1f}")

    ckpt_path = _checkpoint_path(config.out_dir, seed)
    save_checkpoint(agent, ckpt_path, env_name=config.env_name,
                    pomdp=config.pomdp)
    return metrics_path, ckpt_path


def run_training(config: RunConfig, quiet: bool = True) -> dict:
    """Run every seed in the config; returns paths per seed."""
    config.validate()
    out = {}
    for seed in config.seeds:
        out[seed] = run_training_seed(config, seed, quiet=quiet)
    return out


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(agent: Agent, path: str, env_name: str = "",
                    pomdp: PomdpConfig | None = None):
    """Self-describing header + little-endian float64 parameter payload."""
    param_sets = _ordered_param_sets(agent)
    shapes = {}
    order = []
    for set_name, ps in param_sets:
        for name, t in ps:
            full = f"{set_name}/{name}"
            order.append(full)
            shapes[full] = list(t.data.shape)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "agent_config": agent.config.to_dict(),
        "env_spec": _spec_to_dict(agent.env_spec),
        "env_name": env_name,
        "pomdp": asdict(pomdp) if pomdp is not None else None,
        "seed": agent.seed,
        "param_order": order,
        "shapes": shapes,
        "rng_state": _encode_rng_state(agent.noise_rng),
        "counters": {"env_steps": agent.env_steps,
                     "critic_updates": agent.critic_updates,
                     "actor_updates": agent.actor_updates},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<BQ", CHECKPOINT_VERSION, len(blob)))
            fh.write(blob)
            for _, ps in param_sets:
                for _, t in ps:
                    fh.write(np.ascontiguousarray(t.data,
                                                  dtype="<f8").tobytes())
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path: str,
                    expected_spec: EnvSpec | None = None) -> tuple[Agent, dict]:
    """Rebuild an agent from a checkpoint; returns (agent, header)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<BQ", raw, off)
    off += struct.calcsize("<BQ")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    try:
        header = json.loads(raw[off:off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header in {path}") from e
    off += hlen

    spec = _spec_from_dict(header["env_spec"])
    if expected_spec is not None and expected_spec != spec:
        raise CheckpointError(
            f"checkpoint env spec {spec} does not match expected "
            f"{expected_spec}")
    config = AgentConfig.from_dict(header["agent_config"])
    agent = build_agent(config, spec, header["seed"])

    for set_name, ps in _ordered_param_sets(agent):
        for name, t in ps:
            full = f"{set_name}/{name}"
            stored = header["shapes"].get(full)
            if stored is None or tuple(stored) != t.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {full}: checkpoint has {stored}, "
                    f"agent has {t.data.shape}")
            nbytes = t.data.size * 8
            if off + nbytes > len(raw):
                raise CheckpointError(f"truncated checkpoint payload in {path}")
            t.data[...] = np.frombuffer(raw[off:off + nbytes],
                                        dtype="<f8").reshape(t.data.shape)
            off += nbytes
    if off != len(raw):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")
    agent.noise_rng = _decode_rng_state(header["rng_state"])
    agent.env_steps = header["counters"]["env_steps"]
    agent.critic_updates = header["counters"]["critic_updates"]
    agent.actor_updates = header["counters"]["actor_updates"]
    return agent, header


def _ordered_param_sets(agent: Agent):
    return (("actor", agent.actor_ps), ("critic", agent.critic_ps),
            ("target_actor", agent.target_actor_ps),
            ("target_critic", agent.target_critic_ps))


def _spec_to_dict(spec: EnvSpec) -> dict:
    d = asdict(spec)
    d["velocity_indices"] = list(spec.velocity_indices)
    return d


def _spec_from_dict(d: dict) -> EnvSpec:
    return EnvSpec(obs_dim=d["obs_dim"], act_dim=d["act_dim"],
                   act_limit=d["act_limit"],
                   velocity_indices=tuple(d["velocity_indices"]),
                   horizon=d["horizon"])


def _encode_rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def _decode_rng_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng


# ---------------------------------------------------------------------------
# evaluation protocols

def cross_evaluate(checkpoint_path: str, eval_pomdp: PomdpConfig,
                   episodes: int = 10, seed: int = 0) -> dict:
    """Evaluate a trained policy under a (possibly different) corruption."""
    eval_pomdp.validate()
    agent, header = load_checkpoint(checkpoint_path)
    env_name = header["env_name"]
    base_spec = make_env(env_name).spec()
    from .pomdp import wrapped_spec
    eval_obs_dim = wrapped_spec(base_spec, eval_pomdp).obs_dim
    if eval_obs_dim != agent.env_spec.obs_dim:
        raise ContractError(
            f"evaluation variant {eval_pomdp.version!r} has observation dim "
            f"{eval_obs_dim}, checkpoint was trained with dim "
            f"{agent.env_spec.obs_dim}")
    env = _make_wrapped_env(env_name, eval_pomdp, (seed, 5),
                            (eval_pomdp.rng_seed, seed, 6))
    res = evaluate_policy(agent, env, episodes, _stream(seed, 7))
    train_version = (header["pomdp"] or {}).get("version", "mdp")
    return {"train_version": train_version,
            "eval_version": eval_pomdp.version,
            "mean_return": res.mean_return, "std_return": res.std_return}


def history_length_sweep(checkpoint_path: str, l_eval_list,
                         episodes: int = 10, seed: int = 0) -> list:
    """Evaluate one recurrent policy at several history lengths."""
    agent, header = load_checkpoint(checkpoint_path)
    if not agent.recurrent:
        raise ContractError(
            "history length sweep requires a memory-based (lstm-td3) checkpoint")
    pomdp = PomdpConfig(**header["pomdp"]) if header["pomdp"] else PomdpConfig()
    rows = []
    for l in l_eval_list:
        env = _make_wrapped_env(header["env_name"], pomdp, (seed, 5),
                                (pomdp.rng_seed, seed, 6))
        res = evaluate_policy(agent, env, episodes, _stream(seed, 7),
                              history_len=int(l))
        rows.append({"history_len": int(l), "mean_return": res.mean_return,
                     "std_return": res.std_return})
    return rows


def observability_sweep(base: RunConfig, param: str, values,
                        quiet: bool = True) -> list:
    """Train per (grid point, seed); report per-run max average return."""
    if param not in ("p_flk", "sigma_rn", "p_rsm"):
        raise ConfigurationError(
            f"sweep parameter must be p_flk, sigma_rn, or p_rsm, got {param!r}")
    rows = []
    for value in values:
        for seed in base.seeds:
            config = RunConfig(
                agent=base.agent, env_name=base.env_name,
                pomdp=PomdpConfig(**{**asdict(base.pomdp), param: value}),
                total_steps=base.total_steps, eval_every=base.eval_every,
                eval_episodes=base.eval_episodes, seeds=[seed],
                out_dir=os.path.join(base.out_dir, f"{param}_{value}"),
                buffer_capacity=base.buffer_capacity)
            metrics_path, _ = run_training_seed(config, seed, quiet=quiet)
            returns = _read_metrics_column(metrics_path, "avg_test_return")
            rows.append({"param": param, "value": float(value), "seed": seed,
                         "max_avg_return": max(returns)})
    return rows


def _read_metrics_column(path: str, column: str) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [float(row[column]) for row in reader]


def emit_curves(metrics_files, out_path: str):
    """Merge per-seed metrics into one table with cross-seed mean and std."""
    if not metrics_files:
        raise ContractError("emit_curves needs at least one metrics file")
    steps = None
    series = []
    labels = []
    for path in metrics_files:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        s = [int(r["step"]) for r in rows]
        if steps is None:
            steps = s
        elif s != steps:
            raise ContractError(
                f"step grids differ: {path} has {s}, expected {steps}")
        series.append([float(r["avg_test_return"]) for r in rows])
        labels.append(os.path.splitext(os.path.basename(path))[0])
    data = np.asarray(series)  # [num_seeds, num_points]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + labels + ["mean", "std"])
        for k, step in enumerate(steps):
            col = data[:, k]
            writer.writerow([step] + [repr(v) for v in col]
                            + [repr(float(col.mean())), repr(float(col.std()))])
    return out_path
