"""Stochastic channel model: Rayleigh power gains, power-law path loss and
log-normal shadowing on a square grid of circular cells."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ParameterError

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class FadingParams:
    lambda_user: float = 1.5
    lambda_eve: float = 1.5
    path_loss_exponent: float = 3.0
    shadowing_sigma_db: float = 8.0
    reference_distance: float = 1.0

    def __post_init__(self) -> None:
        if not self.lambda_user > 0 or not self.lambda_eve > 0:
            raise ParameterError("exponential rates must be positive")
        if self.path_loss_exponent < 0:
            raise ParameterError("path-loss exponent must be >= 0")
        if self.shadowing_sigma_db < 0:
            raise ParameterError("shadowing sigma must be >= 0")
        if not self.reference_distance > 0:
            raise ParameterError("reference distance must be positive")


@dataclass(frozen=True)
class Topology:
    """Positions (meters) of base stations, users and one eavesdropper per cell."""

    bs_positions: np.ndarray  # (B, 2)
    user_positions: np.ndarray  # (B, L, 2)
    eve_positions: np.ndarray  # (B, 2)
    cell_radius: float

    def __post_init__(self) -> None:
        bs = np.asarray(self.bs_positions, dtype=float)
        users = np.asarray(self.user_positions, dtype=float)
        eves = np.asarray(self.eve_positions, dtype=float)
        if bs.ndim != 2 or bs.shape[1] != 2 or bs.shape[0] < 1:
            raise ContractViolation("bs_positions must have shape (B, 2) with B >= 1")
        n_cells = bs.shape[0]
        if users.ndim != 3 or users.shape[0] != n_cells or users.shape[2] != 2 or users.shape[1] < 1:
            raise ContractViolation("user_positions must have shape (B, L, 2) with L >= 1")
        if eves.shape != (n_cells, 2):
            raise ContractViolation("eve_positions must have shape (B, 2)")
        for arr in (bs, users, eves):
            if not np.all(np.isfinite(arr)):
                raise ContractViolation("positions must be finite")
        tol = 1e-9 * max(1.0, self.cell_radius)
        if np.any(np.linalg.norm(users - bs[:, None, :], axis=-1) > self.cell_radius + tol):
            raise ContractViolation("a user lies outside its cell")
        if np.any(np.linalg.norm(eves - bs, axis=-1) > self.cell_radius + tol):
            raise ContractViolation("an eavesdropper lies outside its cell")
        for name, arr in (("bs_positions", bs), ("user_positions", users), ("eve_positions", eves)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def cell_count(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def users_per_cell(self) -> int:
        return self.user_positions.shape[1]

    def link_distances(self) -> tuple[np.ndarray, np.ndarray]:
        """``(main, eve)`` distances; ``main[b, l, c]`` is BS b to user l of cell c."""
        diff = self.user_positions[None, :, :, :] - self.bs_positions[:, None, None, :]  # (b, c, l, 2)
        main = np.linalg.norm(diff, axis=-1).transpose(0, 2, 1)
        eve = np.linalg.norm(self.eve_positions - self.bs_positions, axis=-1)
        return main, eve


@dataclass(frozen=True)
class ChannelRealization:
    main_gain: np.ndarray  # (B, L, B)
    eve_gain: np.ndarray  # (B,)
    slot_index: int = 0

    def __post_init__(self) -> None:
        for name in ("main_gain", "eve_gain"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def serving_gain(self) -> np.ndarray:
        b = np.arange(self.main_gain.shape[0])
        return self.main_gain[b, :, b]


@dataclass(frozen=True)
class LargeScale:
    """Large-scale fading (path loss times shadowing) per link."""

    main: np.ndarray = field(repr=False)  # (B, L, B)
    eve: np.ndarray = field(repr=False)  # (B,)


def grid_positions(cell_count: int, cell_radius: float) -> np.ndarray:
    """Base stations on a square grid with spacing ``2 * cell_radius``."""
    side = math.ceil(math.sqrt(cell_count))
    idx = np.arange(cell_count)
    return 2.0 * cell_radius * np.stack([idx % side, idx // side], axis=1).astype(float)


def _uniform_in_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def place_topology(cell_count: int, users_per_cell: int, cell_radius: float, rng: np.random.Generator) -> Topology:
    """Grid base stations with users and eavesdroppers uniform inside each cell disc."""
    if cell_count < 1 or users_per_cell < 1:
        raise ContractViolation("need at least one cell and one user per cell")
    if not cell_radius > 0:
        raise ParameterError("cell radius must be positive")
    bs = grid_positions(cell_count, cell_radius)
    # pull samples a hair inside the disc so rounding never puts them outside
    inner = cell_radius * (1.0 - 1e-12)
    users = bs[:, None, :] + _uniform_in_disc(rng, cell_count * users_per_cell, inner).reshape(
        cell_count, users_per_cell, 2
    )
    eves = bs + _uniform_in_disc(rng, cell_count, inner)
    return Topology(bs, users, eves, cell_radius)


def power_gain_from_uniform(u, lam: float):
    """Inverse-CDF map of a uniform draw to an Exponential(lam) power gain."""
    if not lam > 0:
        raise ParameterError(f"exponential rate must be positive, got {lam}")
    g = -np.log1p(-np.asarray(u, dtype=float)) / lam
    g = np.maximum(g, _TINY)
    return g if g.ndim else float(g)


def sample_power_gain(lam: float, rng: np.random.Generator, size=None):
    """Rayleigh small-scale power gain |h|^2 ~ Exponential(lam)."""
    if not lam > 0:
        raise ParameterError(f"exponential rate must be positive, got {lam}")
    return power_gain_from_uniform(rng.random(size), lam)


def path_loss(distance, params: FadingParams):
    d = np.maximum(np.asarray(distance, dtype=float), params.reference_distance)
    return d ** (-params.path_loss_exponent)


def large_scale_fading(distance, params: FadingParams, rng: np.random.Generator):
    """Path loss times a log-normal shadowing draw; distances below the
    reference distance are clamped to it."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ContractViolation("distance must be non-negative")
    shadow_db = rng.normal(0.0, params.shadowing_sigma_db, size=d.shape)
    rho = path_loss(d, params) * 10.0 ** (shadow_db / 10.0)
    return rho if rho.ndim else float(rho)


def large_scale_tensor(topology: Topology, params: FadingParams, rng: np.random.Generator) -> LargeScale:
    main_d, eve_d = topology.link_distances()
    main = np.asarray(large_scale_fading(main_d, params, rng))
    eve = np.asarray(large_scale_fading(eve_d, params, rng)).reshape(-1)
    return LargeScale(main, eve)


def draw_channel_state(
    topology: Topology,
    params: FadingParams,
    t: int,
    rng: np.random.Generator,
    large_scale: LargeScale | None = None,
) -> ChannelRealization:
    """Block-fading realization for slot ``t``.

    When ``large_scale`` is omitted it is drawn from ``rng`` first, so a
    single call yields a self-contained realization.
    """
    if large_scale is None:
        large_scale = large_scale_tensor(topology, params, rng)
    small_main = sample_power_gain(params.lambda_user, rng, size=large_scale.main.shape)
    small_eve = sample_power_gain(params.lambda_eve, rng, size=large_scale.eve.shape)
    return ChannelRealization(small_main * large_scale.main, small_eve * large_scale.eve, int(t))
