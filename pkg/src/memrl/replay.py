"""Ring-buffer experience storage with episode-bounded history windows.

A history window holds the most recent in-episode (observation, action)
pairs before a transition, front-padded with zero dummy rows to a fixed
length so batches stay rectangular.  Windows never reach back across an
episode boundary, and history length 0 always yields a single all-zero
dummy row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

DEFAULT_CAPACITY = 1_000_000


@dataclass
class Transition:
    obs: np.ndarray
    act: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    episode_id: int
    step_in_episode: int  # 1-based position within its episode


@dataclass
class HistoryWindow:
    obs_seq: np.ndarray  # [max(l, 1), obs_dim]
    act_seq: np.ndarray  # [max(l, 1), act_dim]
    valid_len: int
    hist_len: int  # configured l

    def copy(self) -> "HistoryWindow":
        return HistoryWindow(self.obs_seq.copy(), self.act_seq.copy(),
                             self.valid_len, self.hist_len)


@dataclass
class Batch:
    h_obs: np.ndarray     # [N, L, obs_dim]
    h_act: np.ndarray     # [N, L, act_dim]
    h_len: np.ndarray     # [N]
    obs: np.ndarray       # [N, obs_dim]
    act: np.ndarray       # [N, act_dim]
    rew: np.ndarray       # [N]
    next_obs: np.ndarray  # [N, obs_dim]
    h2_obs: np.ndarray    # [N, L, obs_dim]
    h2_act: np.ndarray    # [N, L, act_dim]
    h2_len: np.ndarray    # [N]
    done: np.ndarray      # [N], 0.0/1.0

    @property
    def size(self) -> int:
        return self.obs.shape[0]


def zero_history(l: int, obs_dim: int, act_dim: int) -> HistoryWindow:
    rows = max(l, 1)
    return HistoryWindow(np.zeros((rows, obs_dim)), np.zeros((rows, act_dim)),
                         0, l)


def advance_live_history(h: HistoryWindow, o_t, a_t,
                         done: bool) -> HistoryWindow:
    """Window for the next step: reset on done, else shift-append (o_t, a_t)."""
    if done or h.hist_len == 0:
        return zero_history(h.hist_len, h.obs_seq.shape[1], h.act_seq.shape[1])
    obs_seq = np.roll(h.obs_seq, -1, axis=0)
    act_seq = np.roll(h.act_seq, -1, axis=0)
    obs_seq[-1] = o_t
    act_seq[-1] = a_t
    return HistoryWindow(obs_seq, act_seq,
                         min(h.hist_len, h.valid_len + 1), h.hist_len)


class ReplayBuffer:
    """FIFO ring of transitions with episode metadata."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, *, obs_dim: int,
                 act_dim: int):
        if capacity <= 0:
            raise ContractError("capacity must be positive")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self._obs = np.zeros((capacity, obs_dim))
        self._act = np.zeros((capacity, act_dim))
        self._rew = np.zeros(capacity)
        self._next_obs = np.zeros((capacity, obs_dim))
        self._done = np.zeros(capacity, dtype=bool)
        self._episode = np.zeros(capacity, dtype=np.int64)
        self._step = np.zeros(capacity, dtype=np.int64)
        self._ptr = 0
        self._size = 0

    def __len__(self):
        return self._size

    def store(self, tr: Transition):
        obs = np.asarray(tr.obs, dtype=np.float64)
        act = np.asarray(tr.act, dtype=np.float64)
        next_obs = np.asarray(tr.next_obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,) or next_obs.shape != (self.obs_dim,):
            raise ContractError(
                f"observation dim {obs.shape} != ({self.obs_dim},)")
        if act.shape != (self.act_dim,):
            raise ContractError(f"action dim {act.shape} != ({self.act_dim},)")
        if tr.step_in_episode < 1:
            raise ContractError("step_in_episode is 1-based")
        i = self._ptr
        self._obs[i] = obs
        self._act[i] = act
        self._rew[i] = tr.reward
        self._next_obs[i] = next_obs
        self._done[i] = tr.done
        self._episode[i] = tr.episode_id
        self._step[i] = tr.step_in_episode
        self._ptr = (self._ptr + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def get(self, index: int) -> Transition:
        if not 0 <= index < self._size:
            raise ContractError(f"index {index} out of range (size {self._size})")
        return Transition(self._obs[index].copy(), self._act[index].copy(),
                          float(self._rew[index]), self._next_obs[index].copy(),
                          bool(self._done[index]), int(self._episode[index]),
                          int(self._step[index]))

    def history_at(self, index: int, l: int) -> HistoryWindow:
        """Window of the min(l, in-episode past) pairs before this transition."""
        if not 0 <= index < self._size:
            raise ContractError(f"index {index} out of range (size {self._size})")
        if l < 0:
            raise ContractError("history length must be >= 0")
        win = zero_history(l, self.obs_dim, self.act_dim)
        if l == 0:
            return win
        ep = self._episode[index]
        step = self._step[index]
        rows = win.obs_seq.shape[0]
        count = 0
        for j in range(1, l + 1):
            if j >= self._size:
                break
            if self._size < self.capacity and index - j < 0:
                break
            k = (index - j) % self.capacity
            if self._episode[k] != ep or self._step[k] != step - j:
                break
            win.obs_seq[rows - 1 - count] = self._obs[k]
            win.act_seq[rows - 1 - count] = self._act[k]
            count += 1
        win.valid_len = count
        return win

    def sample_batch(self, n: int, l: int, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement, each with h_t and h_{t+1} windows."""
        if self._size == 0:
            raise ContractError("cannot sample from an empty buffer")
        if self._size < n:
            raise ContractError(
                f"buffer holds {self._size} < batch size {n}")
        idx = rng.integers(0, self._size, size=n)
        rows = max(l, 1)
        h_obs = np.zeros((n, rows, self.obs_dim))
        h_act = np.zeros((n, rows, self.act_dim))
        h_len = np.zeros(n, dtype=np.int64)
        h2_obs = np.zeros((n, rows, self.obs_dim))
        h2_act = np.zeros((n, rows, self.act_dim))
        h2_len = np.zeros(n, dtype=np.int64)
        for row, i in enumerate(idx):
            h = self.history_at(int(i), l)
            h2 = advance_live_history(h, self._obs[i], self._act[i], done=False)
            h_obs[row] = h.obs_seq
            h_act[row] = h.act_seq
            h_len[row] = h.valid_len
            h2_obs[row] = h2.obs_seq
            h2_act[row] = h2.act_seq
            h2_len[row] = h2.valid_len
        return Batch(h_obs=h_obs, h_act=h_act, h_len=h_len,
                     obs=self._obs[idx].copy(), act=self._act[idx].copy(),
                     rew=self._rew[idx].copy(),
                     next_obs=self._next_obs[idx].copy(),
                     h2_obs=h2_obs, h2_act=h2_act, h2_len=h2_len,
                     done=self._done[idx].astype(np.float64))
