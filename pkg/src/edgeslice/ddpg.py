"""Deterministic policy gradient agent: replay, actor/critic, target tracking."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .nn import Adam, Mlp

CHECKPOINT_FORMAT = "edgeslice-ddpg/1"


@dataclass
class AgentConfig:
    discount: float = 0.95
    tau: float = 0.01
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    batch_size: int = 64
    buffer_size: int = 10_000
    hidden: tuple[int, ...] = (128, 64)
    noise: float = 0.3
    noise_decay: float = 0.995
    noise_min: float = 0.0
    warmup_episodes: int = 10
    updates_per_step: int = 1
    reward_scale: float = 0.1

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 <= self.discount < 1:
            raise ValueError("discount must be in [0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.buffer_size < 1 or self.updates_per_step < 1:
            raise ValueError("batch, buffer and updates_per_step must be >= 1")
        if self.noise < 0 or not 0 < self.noise_decay <= 1 or self.warmup_episodes < 0:
            raise ValueError("bad exploration settings")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool = False

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError("transition reward must be finite")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    @classmethod
    def of(cls, transitions) -> "Batch":
        return cls(
            np.array([t.state for t in transitions], dtype=float),
            np.array([t.action for t in transitions], dtype=float),
            np.array([t.reward for t in transitions], dtype=float),
            np.array([t.next_state for t in transitions], dtype=float),
            np.array([t.done for t in transitions], dtype=float),
        )

    def __len__(self):
        return len(self.rewards)


class ReplayBuffer:
    """Fixed-capacity ring of transitions, oldest overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition) -> None:
        i = self.cursor
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.dones[i] = float(tr.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, i: int) -> Transition:
        return Transition(self.states[i].copy(), self.actions[i].copy(), float(self.rewards[i]),
                          self.next_states[i].copy(), bool(self.dones[i]))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement over stored entries."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.dones[idx])


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    for pt, ps in zip(target.params, source.params):
        pt *= 1.0 - tau
        pt += tau * ps


def act(actor: Mlp, state, noise: float, rng: np.random.Generator | None) -> np.ndarray:
    """Policy output plus Gaussian exploration, clipped to [-1, 1]."""
    a = actor(np.asarray(state, dtype=float))
    if noise > 0:
        a = a + rng.normal(0.0, noise, size=a.shape)
    return np.clip(a, -1.0, 1.0)


@dataclass
class TrainStats:
    critic_loss: float
    actor_objective: float


class DdpgAgent:
    def __init__(self, state_dim: int, action_dim: int, config: AgentConfig | None = None,
                 seed: int = 0):
        self.config = config or AgentConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.rng = np.random.default_rng(seed)
        cfg = self.config
        self.actor = Mlp((state_dim, *cfg.hidden, action_dim), "tanh", self.rng)
        self.critic = Mlp((state_dim + action_dim, *cfg.hidden, 1), "identity", self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, cfg.lr_actor)
        self.critic_opt = Adam(self.critic.params, cfg.lr_critic)
        self.buffer = ReplayBuffer(cfg.buffer_size, state_dim, action_dim)
        self.noise = cfg.noise
        self.episodes_done = 0

    def act(self, state, explore: bool = True) -> np.ndarray:
        return act(self.actor, state, self.noise if explore else 0.0, self.rng)

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=self.action_dim)

    def end_episode(self) -> None:
        self.episodes_done += 1
        if self.episodes_done > self.config.warmup_episodes:
            self.noise = max(self.config.noise_min, self.noise * self.config.noise_decay)

    def critic_loss_and_grads(self, batch: Batch):
        cfg = self.config
        next_a = self.actor_target(batch.next_states)
        q_next = self.critic_target(np.hstack([batch.next_states, next_a]))[:, 0]
        y = batch.rewards + cfg.discount * (1.0 - batch.dones) * q_next
        q = self.critic.forward(np.hstack([batch.states, batch.actions]))[:, 0]
        err = q - y
        loss = float(np.mean(err ** 2))
        grads, _ = self.critic.backward((2.0 / len(err) * err)[:, None])
        return loss, grads

    def train_step(self, batch: Batch) -> TrainStats:
        loss, grads = self.critic_loss_and_grads(batch)
        self.critic_opt.step(self.critic.params, grads)

        a = self.actor.forward(batch.states)
        q = self.critic.forward(np.hstack([batch.states, a]))
        n = len(batch)
        _, dq_dinput = self.critic.backward(np.full((n, 1), -1.0 / n))
        actor_grads, _ = self.actor.backward(dq_dinput[:, self.state_dim:])
        self.actor_opt.step(self.actor.params, actor_grads)

        soft_update(self.actor_target, self.actor, self.config.tau)
        soft_update(self.critic_target, self.critic, self.config.tau)
        return TrainStats(loss, float(q.mean()))

    # -- checkpoints ---------------------------------------------------------

    def _arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("actor", "critic", "actor_target", "critic_target"):
            for i, p in enumerate(getattr(self, name).params):
                out[f"{name}/{i}"] = p
        for name in ("actor_opt", "critic_opt"):
            opt = getattr(self, name)
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                out[f"{name}/m/{i}"] = m
                out[f"{name}/v/{i}"] = v
        buf = self.buffer
        for name in ("states", "actions", "rewards", "next_states", "dones"):
            out[f"buffer/{name}"] = getattr(buf, name)
        return out

    def save(self, path) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "config": asdict(self.config),
            "noise": self.noise,
            "episodes_done": self.episodes_done,
            "actor_opt_t": self.actor_opt.t,
            "critic_opt_t": self.critic_opt.t,
            "buffer_cursor": self.buffer.cursor,
            "buffer_size": self.buffer.size,
            "rng": self.rng.bit_generator.state,
        }
        arrays = self._arrays()
        with open(Path(path), "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "DdpgAgent":
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
            agent = cls(meta["state_dim"], meta["action_dim"], AgentConfig(**meta["config"]))
            for key, arr in agent._arrays().items():
                arr[...] = data[key]
        agent.noise = meta["noise"]
        agent.episodes_done = meta["episodes_done"]
        agent.actor_opt.t = meta["actor_opt_t"]
        agent.critic_opt.t = meta["critic_opt_t"]
        agent.buffer.cursor = meta["buffer_cursor"]
        agent.buffer.size = meta["buffer_size"]
        agent.rng.bit_generator.state = meta["rng"]
        return agent
