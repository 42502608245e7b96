"""Uniform experience replay."""
from __future__ import annotations

from pathlib import Path

import numpy as np


class ReplayBuffer:
    def __init__(self, obs_dim: int, act_dim: int, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.act = np.zeros((capacity, act_dim), dtype=np.float32)
        self.rew = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.ptr = 0
        self.size = 0
        self.inserted = 0

    def __len__(self):
        return self.size

    def add(self, obs, act, rew, next_obs, terminal: bool):
        """Store one transition; ``terminal`` marks no-bootstrap transitions (not timeouts)."""
        i = self.ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(terminal)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if batch < 1:
            raise ValueError("batch size must be positive")
        if self.size < batch:
            raise ValueError(f"buffer holds {self.size} transitions, batch needs {batch}")
        return rng.integers(0, self.size, batch)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = self.sample_indices(batch, rng)
        return self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx]

    def save(self, path: str | Path):
        np.savez_compressed(path, obs=self.obs[:self.size], act=self.act[:self.size],
                            rew=self.rew[:self.size], next_obs=self.next_obs[:self.size],
                            done=self.done[:self.size], ptr=self.ptr, inserted=self.inserted)

    @classmethod
    def load(cls, path: str | Path, capacity: int = 100_000) -> "ReplayBuffer":
        d = np.load(path)
        n = len(d["rew"])
        buf = cls(d["obs"].shape[1], d["act"].shape[1], max(capacity, n))
        buf.obs[:n] = d["obs"]
        buf.act[:n] = d["act"]
        buf.rew[:n] = d["rew"]
        buf.next_obs[:n] = d["next_obs"]
        buf.done[:n] = d["done"]
        buf.size = n
        buf.ptr = int(d["ptr"]) % buf.capacity
        buf.inserted = int(d["inserted"])
        return buf
