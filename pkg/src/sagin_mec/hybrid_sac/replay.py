"""Fixed-capacity FIFO replay storage backed by preallocated numpy arrays."""

from __future__ import annotations

import numpy as np

from ..environment import Transition


class ReplayStore:
    def __init__(self, capacity: int, obs_dim: int, n_heads: int, act_dim: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.arms = np.zeros((capacity, n_heads), dtype=np.int64)
        self.cont = np.zeros((capacity, act_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self._next = 0
        self._size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self._size

    def add(self, tr: Transition) -> None:
        if not np.isfinite(tr.reward):
            raise ValueError("transition reward must be finite")
        i = self._next
        self.obs[i] = tr.state
        self.next_obs[i] = tr.next_state
        self.arms[i] = tr.action.discrete
        self.cont[i] = tr.action.continuous
        self.reward[i] = tr.reward
        self.done[i] = float(tr.done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if self._size == 0:
            raise ValueError("cannot sample from an empty store")
        idx = self.rng.integers(0, self._size, size=batch_size)
        return dict(obs=self.obs[idx], next_obs=self.next_obs[idx], arms=self.arms[idx],
                    cont=self.cont[idx], reward=self.reward[idx], done=self.done[idx])

    def state_dict(self) -> dict:
        return dict(obs=self.obs, next_obs=self.next_obs, arms=self.arms, cont=self.cont,
                    reward=self.reward, done=self.done, next=self._next, size=self._size,
                    rng=self.rng.bit_generator.state)

    def load_state_dict(self, state: dict) -> None:
        for k in ("obs", "next_obs", "arms", "cont", "reward", "done"):
            getattr(self, k)[...] = state[k]
        self._next, self._size = int(state["next"]), int(state["size"])
        self.rng.bit_generator.state = state["rng"]
