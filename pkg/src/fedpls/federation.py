"""Central unit: weighted parameter averaging on a fixed slot schedule."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ContractViolation, FederationError, ParameterError
from .neural import ParameterVector

MODES = ("federated", "distributed")


@dataclass(frozen=True)
class FederationConfig:
    xi: int = 100
    mode: str = "federated"
    user_counts: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.xi < 1:
            raise ParameterError("aggregation period xi must be >= 1")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        object.__setattr__(self, "user_counts", tuple(int(c) for c in self.user_counts))
        if any(c < 1 for c in self.user_counts):
            raise ParameterError("user counts must be >= 1")


@dataclass(frozen=True)
class FederationRound:
    index: int
    step: int
    agent_ids: tuple[int, ...]
    global_params: ParameterVector = field(repr=False)
    checksums_before: tuple[str, ...] = ()
    checksums_after: tuple[str, ...] = ()
    duration_s: float = 0.0


class Federated(Protocol):
    params: ParameterVector

    def before_round(self) -> None: ...

    def load_global(self, params: ParameterVector) -> None: ...


def contribution_weights(user_counts: Sequence[int]) -> np.ndarray:
    counts = np.asarray(user_counts, dtype=float)
    if counts.size == 0:
        raise ContractViolation("need at least one cell")
    if np.any(counts < 1):
        raise ContractViolation("user counts must be >= 1")
    return counts / counts.sum()


def aggregate(param_list: Sequence[ParameterVector], weights) -> ParameterVector:
    """Weighted elementwise mean of parameter vectors sharing one spec."""
    if len(param_list) == 0:
        raise ContractViolation("nothing to aggregate")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(param_list),):
        raise ContractViolation(f"{w.size} weights for {len(param_list)} parameter vectors")
    spec = param_list[0].spec
    if any(p.spec != spec for p in param_list):
        raise ContractViolation("parameter vectors have different network specs")
    stack = np.stack([p.values for p in param_list])
    out = np.zeros(spec.n_params)
    for wi, row in zip(w, stack):
        if wi != 0.0:
            out += wi * row
    # the exact weighted mean is a convex combination; keep rounding inside the hull
    np.clip(out, stack.min(axis=0), stack.max(axis=0), out=out)
    return ParameterVector(out, spec)


def should_aggregate(global_step: int, config: FederationConfig) -> bool:
    return config.mode == "federated" and global_step % config.xi == 0


class CentralUnit:
    """Holds the global model and runs synchronous full-participation rounds."""

    def __init__(self, config: FederationConfig):
        self.config = config
        self.weights = contribution_weights(config.user_counts) if config.user_counts else None
        self.rounds: list[FederationRound] = []
        self.global_params: ParameterVector | None = None

    def should_aggregate(self, global_step: int) -> bool:
        return should_aggregate(global_step, self.config)

    def synchronize(self, agents: Sequence[Federated | None], step: int) -> FederationRound:
        """Barrier: collect every agent, average, broadcast.

        A round with a single participant is the identity and leaves the agent
        untouched.
        """
        start = time.perf_counter()
        n_expected = len(self.config.user_counts) or len(agents)
        if len(agents) != n_expected or any(a is None for a in agents):
            raise FederationError(f"round aborted: expected {n_expected} agents, got {sum(a is not None for a in agents)}")
        weights = self.weights if self.weights is not None else contribution_weights([1] * len(agents))
        if len(agents) > 1:
            for agent in agents:
                agent.before_round()
        before = tuple(a.params.checksum() for a in agents)
        if len(agents) == 1:
            global_params = agents[0].params.copy()
        else:
            global_params = aggregate([a.params for a in agents], weights)
            for agent in agents:
                agent.load_global(global_params)
        self.global_params = global_params
        record = FederationRound(
            index=len(self.rounds),
            step=int(step),
            agent_ids=tuple(range(len(agents))),
            global_params=global_params,
            checksums_before=before,
            checksums_after=tuple(a.params.checksum() for a in agents),
            duration_s=time.perf_counter() - start,
        )
        self.rounds.append(record)
        return record
