"""DQN and REINFORCE controllers over a shared per-user network.

A base station serving ``L`` users evaluates one network on each user's
observation row and picks that user's power level independently. Rewards are
per cell and are credited to every user row of the slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractViolation, ParameterError
from .neural import (
    NetworkSpec,
    ParameterVector,
    backprop,
    forward_cache,
    init_params,
    log_softmax,
    logits,
    softmax,
)


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    terminal: bool = False


@dataclass
class TransitionBatch:
    observations: np.ndarray  # (n, F)
    actions: np.ndarray  # (n,)
    rewards: np.ndarray  # (n,)
    next_observations: np.ndarray  # (n, F)
    terminals: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return self.actions.shape[0]

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        return cls(
            np.array([t.observation for t in transitions], dtype=float),
            np.array([t.action for t in transitions], dtype=np.int64),
            np.array([t.reward for t in transitions], dtype=float),
            np.array([t.next_observation for t in transitions], dtype=float),
            np.array([t.terminal for t in transitions], dtype=bool),
        )


@dataclass
class Trajectory:
    """One on-policy rollout; each slot holds one row per served user."""

    observations: list[np.ndarray] = field(default_factory=list)  # each (L, F)
    actions: list[np.ndarray] = field(default_factory=list)  # each (L,)
    rewards: list[float] = field(default_factory=list)
    log_probs: list[np.ndarray] = field(default_factory=list)  # each (L,)

    def __len__(self) -> int:
        return len(self.rewards)

    def append(self, observation, action, reward: float, log_prob) -> None:
        self.observations.append(np.atleast_2d(np.asarray(observation, dtype=float)))
        self.actions.append(np.atleast_1d(np.asarray(action, dtype=np.int64)))
        self.rewards.append(float(reward))
        self.log_probs.append(np.atleast_1d(np.asarray(log_prob, dtype=float)))

    def clear(self) -> None:
        self.observations.clear()
        self.actions.clear()
        self.rewards.clear()
        self.log_probs.clear()


@dataclass(frozen=True)
class DqnConfig:
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay: float = 0.999
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 100
    discount: float = 0.99
    lr: float = 0.001
    replay: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ParameterError("need 0 <= eps_end <= eps_start <= 1")
        if not 0.0 < self.eps_decay <= 1.0:
            raise ParameterError("eps_decay must lie in (0, 1]")
        if self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ParameterError("replay capacity must be >= batch size >= 1")
        if self.target_sync < 1:
            raise ParameterError("target_sync must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ParameterError("discount must lie in [0, 1]")
        if not self.lr > 0:
            raise ParameterError("learning rate must be positive")


@dataclass(frozen=True)
class ReinforceConfig:
    discount: float = 0.99
    lr: float = 0.001
    normalize_returns: bool = True
    variance_floor: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 <= self.discount <= 1.0:
            raise ParameterError("discount must lie in [0, 1]")
        if not self.lr > 0:
            raise ParameterError("learning rate must be positive")
        if not self.variance_floor > 0:
            raise ParameterError("variance floor must be positive")


# ----------------------------------------------------------------------------
# DQN
# ----------------------------------------------------------------------------

def epsilon_schedule(step: int, config: DqnConfig) -> float:
    if step < 0:
        raise ContractViolation("step must be >= 0")
    return max(config.eps_end, config.eps_start * config.eps_decay ** step)


def dqn_select_action(params: ParameterVector, observation, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; ties go to the lowest index."""
    if not 0.0 <= eps <= 1.0:
        raise ContractViolation("epsilon must lie in [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(params.spec.n_outputs))
    return int(np.argmax(logits(params, observation)))


def dqn_td_target(transition: Transition, gamma: float, target_params: ParameterVector) -> float:
    if transition.terminal:
        return float(transition.reward)
    return float(transition.reward + gamma * np.max(logits(target_params, transition.next_observation)))


def _as_batch(batch) -> TransitionBatch:
    if isinstance(batch, TransitionBatch):
        return batch
    return TransitionBatch.from_transitions(list(batch))


def dqn_update(
    params: ParameterVector,
    batch,
    gamma: float,
    lr: float,
    target_params: ParameterVector,
) -> tuple[ParameterVector, float]:
    """One SGD step on the batch-mean squared TD error; returns the pre-step loss."""
    b = _as_batch(batch)
    n = len(b)
    if n == 0:
        raise ContractViolation("cannot update on an empty batch")
    next_q = logits(target_params, b.next_observations).max(axis=1)
    targets = b.rewards + gamma * np.where(b.terminals, 0.0, next_q)
    acts = forward_cache(params, b.observations)
    rows = np.arange(n)
    err = acts[-1][rows, b.actions] - targets
    loss = float(np.mean(err ** 2))
    upstream = np.zeros((n, params.spec.n_outputs))
    upstream[rows, b.actions] = 2.0 * err / n
    grad = backprop(params, b.observations, acts, upstream)
    return ParameterVector(params.values - lr * grad, params.spec), loss


class ReplayBuffer:
    """Fixed-capacity FIFO store of single-user transitions."""

    def __init__(self, capacity: int, n_features: int):
        self.capacity = int(capacity)
        self._obs = np.zeros((capacity, n_features))
        self._next = np.zeros((capacity, n_features))
        self._act = np.zeros(capacity, dtype=np.int64)
        self._rew = np.zeros(capacity)
        self._term = np.zeros(capacity, dtype=bool)
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, obs, actions, rewards, next_obs, terminal) -> None:
        obs = np.atleast_2d(obs)
        n = obs.shape[0]
        idx = (self._head + np.arange(n)) % self.capacity
        self._obs[idx] = obs
        self._next[idx] = np.atleast_2d(next_obs)
        self._act[idx] = actions
        self._rew[idx] = rewards
        self._term[idx] = terminal
        self._head = (self._head + n) % self.capacity
        self._size = min(self._size + n, self.capacity)

    def indices_oldest_first(self) -> np.ndarray:
        start = (self._head - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def take(self, idx) -> TransitionBatch:
        idx = np.asarray(idx)
        return TransitionBatch(
            self._obs[idx], self._act[idx], self._rew[idx], self._next[idx], self._term[idx]
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        if batch_size > self._size:
            raise ContractViolation("not enough transitions to sample a batch")
        return self.take(rng.choice(self._size, size=batch_size, replace=False))


class DqnAgent:
    kind = "dqn"

    def __init__(self, spec: NetworkSpec, config: DqnConfig, init_rng: np.random.Generator, explore_rng: np.random.Generator):
        if spec.output_head != "linear":
            raise ContractViolation("a Q-network needs a linear output head")
        self.spec = spec
        self.config = config
        self.params = init_params(spec, init_rng)
        self.target = self.params.copy()
        self.rng = explore_rng
        self.buffer = ReplayBuffer(config.replay_capacity, spec.n_inputs)
        self.steps = 0
        self.losses: list[float] = []

    @property
    def epsilon(self) -> float:
        return epsilon_schedule(self.steps, self.config)

    def act(self, obs: np.ndarray) -> np.ndarray:
        n = obs.shape[0]
        greedy = np.argmax(logits(self.params, obs), axis=1)
        explore = self.rng.random(n) < self.epsilon
        random = self.rng.integers(self.spec.n_outputs, size=n)
        return np.where(explore, random, greedy)

    def observe(self, obs, actions, reward: float, next_obs, terminal: bool) -> None:
        cfg = self.config
        self.buffer.push(obs, actions, reward, next_obs, terminal)
        self.steps += 1
        if cfg.replay:
            if len(self.buffer) < cfg.batch_size:
                batch = None
            else:
                batch = self.buffer.sample(cfg.batch_size, self.rng)
        else:
            n = np.atleast_2d(obs).shape[0]
            batch = self.buffer.take(self.buffer.indices_oldest_first()[-n:])
        if batch is not None:
            self.params, loss = dqn_update(self.params, batch, cfg.discount, cfg.lr, self.target)
            self.losses.append(loss)
        if self.steps % cfg.target_sync == 0:
            self.target = self.params.copy()

    def end_episode(self) -> None:
        pass

    def before_round(self) -> None:
        pass

    def load_global(self, params: ParameterVector) -> None:
        self.params = params.copy()
        self.target = params.copy()


# ----------------------------------------------------------------------------
# REINFORCE
# ----------------------------------------------------------------------------

def reinforce_select_action(params: ParameterVector, observation, rng: np.random.Generator) -> tuple[int, float]:
    logp = log_softmax(logits(params, observation))
    cdf = np.cumsum(np.exp(logp))
    a = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), logp.size - 1)
    return a, float(logp[a])


def reinforce_returns(rewards, gamma: float) -> np.ndarray:
    """Discounted reward-to-go for each slot of a trajectory."""
    r = np.asarray(rewards.rewards if isinstance(rewards, Trajectory) else rewards, dtype=float)
    if r.size == 0:
        raise ContractViolation("empty trajectory")
    out = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def normalize_returns(returns: np.ndarray, variance_floor: float = 1e-8) -> np.ndarray:
    centred = returns - returns.mean()
    return centred / np.sqrt(max(float(np.mean(centred ** 2)), variance_floor))


def reinforce_update(
    params: ParameterVector,
    trajectory: Trajectory,
    gamma: float,
    lr: float,
    *,
    normalize: bool = True,
    variance_floor: float = 1e-8,
) -> tuple[ParameterVector, float]:
    """One SGD step on ``-sum_t mean_users log pi(a|s) * G_t``; returns the pre-step loss."""
    if len(trajectory) == 0:
        raise ContractViolation("empty trajectory")
    returns = reinforce_returns(trajectory.rewards, gamma)
    if normalize:
        returns = normalize_returns(returns, variance_floor)
    obs = np.concatenate(trajectory.observations, axis=0)
    actions = np.concatenate(trajectory.actions)
    # each user row shares its slot's return, weighted 1/L
    weights = np.concatenate([np.full(a.size, g / a.size) for a, g in zip(trajectory.actions, returns)])
    acts = forward_cache(params, obs)
    logp = log_softmax(acts[-1])
    rows = np.arange(actions.size)
    loss = float(-np.sum(weights * logp[rows, actions]))
    upstream = softmax(acts[-1])
    upstream[rows, actions] -= 1.0
    upstream *= weights[:, None]
    grad = backprop(params, obs, acts, upstream)
    return ParameterVector(params.values - lr * grad, params.spec), loss


class ReinforceAgent:
    kind = "reinforce"

    def __init__(self, spec: NetworkSpec, config: ReinforceConfig, init_rng: np.random.Generator, explore_rng: np.random.Generator):
        if spec.output_head != "softmax":
            raise ContractViolation("a policy network needs a softmax output head")
        self.spec = spec
        self.config = config
        self.params = init_params(spec, init_rng)
        self.rng = explore_rng
        self.trajectory = Trajectory()
        self.losses: list[float] = []
        self._pending: tuple[np.ndarray, np.ndarray] | None = None
        self.epsilon = float("nan")

    def act(self, obs: np.ndarray) -> np.ndarray:
        logp = log_softmax(logits(self.params, obs))
        cdf = np.cumsum(np.exp(logp), axis=1)
        u = self.rng.random(obs.shape[0]) * cdf[:, -1]
        actions = np.minimum((cdf <= u[:, None]).sum(axis=1), self.spec.n_outputs - 1)
        self._pending = (actions, logp[np.arange(actions.size), actions])
        return actions

    def observe(self, obs, actions, reward: float, next_obs, terminal: bool) -> None:
        actions = np.asarray(actions)
        if self._pending is not None and np.array_equal(self._pending[0], actions):
            log_prob = self._pending[1]
        else:
            logp = log_softmax(logits(self.params, np.atleast_2d(obs)))
            log_prob = logp[np.arange(actions.size), actions]
        self._pending = None
        self.trajectory.append(obs, actions, reward, log_prob)

    def end_episode(self) -> None:
        if len(self.trajectory) == 0:
            return
        cfg = self.config
        self.params, loss = reinforce_update(
            self.params,
            self.trajectory,
            cfg.discount,
            cfg.lr,
            normalize=cfg.normalize_returns,
            variance_floor=cfg.variance_floor,
        )
        self.losses.append(loss)
        self.trajectory.clear()

    def before_round(self) -> None:
        # the in-flight segment was generated by the current parameters; consume it
        # before the broadcast replaces them
        self.end_episode()

    def load_global(self, params: ParameterVector) -> None:
        self.params = params.copy()
        self.trajectory.clear()
