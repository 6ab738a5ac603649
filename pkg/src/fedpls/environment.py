"""Multi-cell downlink MDP with per-cell eavesdroppers.

Each cell's base station picks one of ``eta`` evenly spaced power levels per
served user. A slot's outcome follows the usual link budget: SINR over
intra- and inter-cell interference, Shannon rates, and a secrecy capacity
clamped at zero against a noise-limited eavesdropper.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import (
    ChannelRealization,
    FadingParams,
    Topology,
    draw_channel_state,
    place_topology,
)
from .errors import ContractViolation, ParameterError

FEATURES = ("serving_gain", "eve_gain", "prev_power", "prev_secrecy", "prev_interference")
N_FEATURES = len(FEATURES)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class EnvConfig:
    cell_count: int = 25
    users_per_cell: int = 4
    cell_radius: float = 2.0
    p_max_dbm: float = 38.0
    eta: int = 10
    n0: float = 1.0
    slots_per_episode: int = 100
    discount: float = 0.99
    gain_db_min: float = -60.0
    gain_db_max: float = 20.0
    secrecy_cap: float = 10.0
    frozen_channel: bool = False
    # 0 credits every other cell's rates; > 0 keeps only cells whose base
    # station lies within this many meters
    reward_neighbor_radius: float = 0.0

    def __post_init__(self) -> None:
        if self.cell_count < 1 or self.users_per_cell < 1:
            raise ParameterError("cell_count and users_per_cell must be >= 1")
        if not self.cell_radius > 0:
            raise ParameterError("cell_radius must be positive")
        if self.eta < 2:
            raise ParameterError("eta must be >= 2")
        if not self.n0 > 0:
            raise ParameterError("n0 must be positive")
        if self.slots_per_episode < 1:
            raise ParameterError("slots_per_episode must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ParameterError("discount must lie in [0, 1]")
        if not self.gain_db_max > self.gain_db_min:
            raise ParameterError("gain dB range is empty")
        if not self.secrecy_cap > 0:
            raise ParameterError("secrecy_cap must be positive")
        if self.reward_neighbor_radius < 0:
            raise ParameterError("reward_neighbor_radius must be >= 0")

    @property
    def p_max(self) -> float:
        """Maximum transmit power in watts."""
        return dbm_to_watts(self.p_max_dbm)

    @property
    def power_levels(self) -> np.ndarray:
        return np.arange(self.eta) * (self.p_max / (self.eta - 1))


def action_power(index: int, config: EnvConfig) -> float:
    if not 0 <= index <= config.eta - 1:
        raise ContractViolation(f"power level {index} outside [0, {config.eta - 1}]")
    return index * config.p_max / (config.eta - 1)


def interference(powers: np.ndarray, channel: ChannelRealization, b: int, l: int) -> float:
    """Intra-cell plus inter-cell interference seen by user ``l`` of cell ``b``.

    Intra-cell terms weight each co-scheduled user's power by that user's own
    serving gain; inter-cell terms use the gain from the interfering base
    station toward the victim user.
    """
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise ContractViolation("powers must be non-negative")
    g = channel.main_gain
    n_cells, n_users = powers.shape
    intra = sum(powers[b, i] * g[b, i, b] for i in range(n_users) if i != l)
    inter = sum(powers[j, c] * g[j, l, b] for j in range(n_cells) if j != b for c in range(n_users))
    return float(intra + inter)


def sinr_user(p: float, g: float, interference_power: float, n0: float) -> float:
    if not n0 > 0:
        raise ContractViolation("noise power must be positive")
    return p * g / (interference_power + n0)


def sinr_eve(p: float, g_eve: float, n0: float) -> float:
    # worst case for the defender: the eavesdropper sees no interference
    if not n0 > 0:
        raise ContractViolation("noise power must be positive")
    return p * g_eve / n0


def rate(sinr):
    """Shannon rate in bits/s/Hz."""
    return np.log2(1.0 + np.asarray(sinr, dtype=float)) if np.ndim(sinr) else float(np.log2(1.0 + sinr))


def secrecy_capacity(r_user, r_eve):
    return np.maximum(np.asarray(r_user) - np.asarray(r_eve), 0.0) if np.ndim(r_user) else max(r_user - r_eve, 0.0)


@dataclass(frozen=True)
class StepOutcome:
    slot: int
    powers: np.ndarray  # (B, L) watts
    interference: np.ndarray  # (B, L)
    sinr: np.ndarray  # (B, L)
    rate: np.ndarray  # (B, L)
    sinr_eve: np.ndarray  # (B, L): eavesdropper SINR on each user's stream
    rate_eve: np.ndarray  # (B, L)
    secrecy: np.ndarray  # (B, L)
    rewards: np.ndarray  # (B,)
    observations: np.ndarray = field(repr=False)  # (B, L, N_FEATURES)
    terminal: bool = False

    @property
    def network_secrecy(self) -> float:
        return float(self.secrecy.sum())

    @property
    def cell_secrecy(self) -> np.ndarray:
        return self.secrecy.sum(axis=1)


def reward(outcome: StepOutcome, b: int, neighbors=None) -> float:
    """Own-cell secrecy sum plus the user rates achieved in the other cells.

    ``neighbors`` optionally restricts the other cells to a subset.
    """
    n_cells = outcome.rate.shape[0]
    cells = range(n_cells) if neighbors is None else neighbors
    others = [outcome.rate[j].sum() for j in cells if j != b]
    return float(outcome.secrecy[b].sum() + sum(others))


def neighbor_mask(bs_positions: np.ndarray, radius: float) -> np.ndarray:
    """``mask[b, j] = 1`` when cell j counts toward cell b's reward; zero diagonal."""
    n = bs_positions.shape[0]
    if radius == 0:
        mask = np.ones((n, n))
    else:
        dist = np.linalg.norm(bs_positions[:, None, :] - bs_positions[None, :, :], axis=-1)
        mask = (dist <= radius).astype(float)
    np.fill_diagonal(mask, 0.0)
    return mask


class MultiCellEnv:
    """Step/reset environment for ``cell_count`` agents acting jointly.

    Observations have shape ``(B, L, N_FEATURES)``; agent ``b`` reads row
    ``b``. The gains in an observation belong to the slot the next action
    will be applied to; the remaining features describe the previous slot.
    """

    def __init__(self, config: EnvConfig, fading: FadingParams | None = None):
        self.config = config
        self.fading = fading or FadingParams()
        self._levels = config.power_levels
        self.topology: Topology | None = None
        self.channel: ChannelRealization | None = None
        self._rng: np.random.Generator | None = None
        self._mask: np.ndarray | None = None
        self.t = 0
        shape = (config.cell_count, config.users_per_cell)
        self._prev_power = np.zeros(shape)
        self._prev_secrecy = np.zeros(shape)
        self._prev_interf = np.zeros(shape)
        self._zero_history = True

    @property
    def terminal(self) -> bool:
        return self.topology is not None and self.t >= self.config.slots_per_episode

    def reset(self, episode_seed) -> np.ndarray:
        ss = episode_seed if isinstance(episode_seed, np.random.SeedSequence) else np.random.SeedSequence(episode_seed)
        placement_ss, fading_ss = ss.spawn(2)
        cfg = self.config
        self.topology = place_topology(cfg.cell_count, cfg.users_per_cell, cfg.cell_radius, np.random.default_rng(placement_ss))
        self._rng = np.random.default_rng(fading_ss)
        self._mask = None
        if cfg.reward_neighbor_radius > 0:
            self._mask = neighbor_mask(self.topology.bs_positions, cfg.reward_neighbor_radius)
        self.t = 0
        self.channel = draw_channel_state(self.topology, self.fading, 0, self._rng)
        self._prev_power[:] = 0.0
        self._prev_secrecy[:] = 0.0
        self._prev_interf[:] = 0.0
        self._zero_history = True
        return self.observations()

    def _scale_db(self, linear: np.ndarray) -> np.ndarray:
        lo, hi = self.config.gain_db_min, self.config.gain_db_max
        db = 10.0 * np.log10(np.maximum(linear, np.finfo(float).tiny))
        return np.clip(2.0 * (db - lo) / (hi - lo) - 1.0, -1.0, 1.0)

    def observations(self) -> np.ndarray:
        if self.channel is None:
            raise ContractViolation("reset() must be called before observing")
        cfg = self.config
        obs = np.empty((cfg.cell_count, cfg.users_per_cell, N_FEATURES))
        obs[:, :, 0] = self._scale_db(self.channel.serving_gain())
        obs[:, :, 1] = self._scale_db(self.channel.eve_gain)[:, None]
        if self._zero_history:
            obs[:, :, 2:] = 0.0
        else:
            obs[:, :, 2] = self._prev_power / cfg.p_max
            obs[:, :, 3] = np.clip(self._prev_secrecy / cfg.secrecy_cap, 0.0, 1.0)
            obs[:, :, 4] = self._scale_db(self._prev_interf)
        return obs

    def step(self, actions) -> StepOutcome:
        if self.channel is None:
            raise ContractViolation("reset() must be called before step()")
        if self.terminal:
            raise ContractViolation("episode already terminated; call reset()")
        cfg = self.config
        idx = np.asarray(actions)
        if idx.shape != (cfg.cell_count, cfg.users_per_cell):
            raise ContractViolation(f"actions must have shape {(cfg.cell_count, cfg.users_per_cell)}, got {idx.shape}")
        if not np.issubdtype(idx.dtype, np.integer) or idx.min() < 0 or idx.max() > cfg.eta - 1:
            raise ContractViolation(f"power level indices must be integers in [0, {cfg.eta - 1}]")
        powers = self._levels[idx]
        ch = self.channel
        interf, sinr, rate_, sinr_e, rate_e, secrecy, rewards = kernels.evaluate_slot(
            powers, ch.main_gain, ch.eve_gain, float(cfg.n0)
        )
        if self._mask is not None:
            rewards = secrecy.sum(axis=1) + self._mask @ rate_.sum(axis=1)
        slot = self.t
        self.t += 1
        self._prev_power = powers
        self._prev_secrecy = secrecy
        self._prev_interf = interf
        self._zero_history = False
        done = self.t >= cfg.slots_per_episode
        if not done and not cfg.frozen_channel:
            self.channel = draw_channel_state(self.topology, self.fading, self.t, self._rng)
        obs = self.observations()
        return StepOutcome(slot, powers, interf, sinr, rate_, sinr_e, rate_e, secrecy, rewards, obs, done)
