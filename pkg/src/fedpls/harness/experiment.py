"""Seeded training runs: wires environment, agents and the central unit."""
from __future__ import annotations

import csv
import io
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..agents import DqnAgent, ReinforceAgent
from ..environment import N_FEATURES, MultiCellEnv
from ..errors import ConfigError, ContractViolation
from ..federation import CentralUnit, FederationConfig, FederationRound
from ..neural import NetworkSpec, save_params
from .config import RunConfig, to_ini

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
ROUNDS_FILE = "rounds.csv"
CONFIG_FILE = "config.ini"

# spawn-key prefixes of the per-component random streams
STREAM_EPISODE, STREAM_INIT, STREAM_EXPLORE = 0, 1, 2


@dataclass(frozen=True)
class MetricsRecord:
    kind: str  # "episode" or "step"
    episode: int
    global_step: int
    cell_secrecy: tuple[float, ...]
    network_secrecy_sum: float
    agent_rewards: tuple[float, ...]
    agent_losses: tuple[float, ...]
    epsilon: float
    network_secrecy_smoothed: float = float("nan")


@dataclass
class ExperimentResult:
    config: RunConfig
    episodes: list[MetricsRecord]
    steps: list[MetricsRecord]
    rounds: list[FederationRound]
    agents: list
    max_power: float
    min_secrecy: float
    output_dir: Path | None = None
    files: dict[str, Path] = field(default_factory=dict)

    def series(self, column: str = "network_secrecy_sum") -> np.ndarray:
        return np.array([getattr(r, column) for r in self.episodes], dtype=float)


def metrics_header(n_cells: int) -> list[str]:
    return (
        ["kind", "episode", "global_step", "network_secrecy_sum", "network_secrecy_smoothed"]
        + [f"secrecy_cell_{b}" for b in range(n_cells)]
        + [f"reward_agent_{b}" for b in range(n_cells)]
        + [f"loss_agent_{b}" for b in range(n_cells)]
        + ["epsilon"]
    )


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def metrics_rows(records: Sequence[MetricsRecord]) -> list[list[str]]:
    return [
        [r.kind, str(r.episode), str(r.global_step), _fmt(r.network_secrecy_sum), _fmt(r.network_secrecy_smoothed)]
        + [_fmt(v) for v in r.cell_secrecy]
        + [_fmt(v) for v in r.agent_rewards]
        + [_fmt(v) for v in r.agent_losses]
        + [_fmt(r.epsilon)]
        for r in records
    ]


def make_agents(config: RunConfig) -> list:
    env = config.environment
    seed = config.run.seed
    kind = config.run.agent
    head = "linear" if kind == "dqn" else "softmax"
    spec = NetworkSpec.mlp(N_FEATURES, config.network.hidden, env.eta, head)
    agents = []
    for b in range(env.cell_count):
        init_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_INIT, b)))
        explore_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_EXPLORE, b)))
        if kind == "dqn":
            agents.append(DqnAgent(spec, config.dqn, init_rng, explore_rng))
        else:
            agents.append(ReinforceAgent(spec, config.reinforce, init_rng, explore_rng))
    return agents


def _prepare_output(path: str) -> Path | None:
    if not path:
        return None
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


def run_experiment(config: RunConfig, output_dir: str | Path | None = None) -> ExperimentResult:
    """Train ``config.run.episodes`` episodes and optionally write results.

    Files written to the output directory: ``metrics.csv``, ``rounds.csv``,
    ``config.ini`` (fully resolved) and ``checkpoints/agent_<b>.fpnv``.
    """
    if not isinstance(config, RunConfig):
        raise ConfigError("run_experiment expects a RunConfig")
    out = _prepare_output(str(output_dir) if output_dir is not None else config.run.output_dir)
    if out is not None:
        (out / CONFIG_FILE).write_text(to_ini(config))

    env_cfg = config.environment
    n_cells, T = env_cfg.cell_count, env_cfg.slots_per_episode
    env = MultiCellEnv(env_cfg, config.channel)
    agents = make_agents(config)
    fed = FederationConfig(config.federation.xi, config.federation.mode, config.user_counts)
    central = CentralUnit(fed)
    if fed.mode == "federated" and n_cells > 1:
        # the first agent's initialisation serves as the initial global model
        for agent in agents[1:]:
            agent.load_global(agents[0].params)

    p_max = env_cfg.p_max
    window: deque[float] = deque(maxlen=config.run.smoothing_window)
    episodes: list[MetricsRecord] = []
    steps: list[MetricsRecord] = []
    max_power, min_secrecy = 0.0, np.inf
    global_step = 0
    is_dqn = config.run.agent == "dqn"

    for ep in range(config.run.episodes):
        obs = env.reset(np.random.SeedSequence(config.run.seed, spawn_key=(STREAM_EPISODE, ep)))
        cell_sum = np.zeros(n_cells)
        reward_sum = np.zeros(n_cells)
        loss_marks = [len(a.losses) for a in agents]
        for _ in range(T):
            step_marks = [len(a.losses) for a in agents] if config.run.step_rows else None
            actions = np.stack([agent.act(obs[b]) for b, agent in enumerate(agents)])
            outcome = env.step(actions)
            step_max = float(outcome.powers.max())
            step_min = float(outcome.secrecy.min())
            if step_max > p_max or step_min < 0.0:
                raise ContractViolation(f"slot {global_step}: power {step_max} W or secrecy {step_min} out of range")
            max_power = max(max_power, step_max)
            min_secrecy = min(min_secrecy, step_min)
            for b, agent in enumerate(agents):
                agent.observe(obs[b], actions[b], outcome.rewards[b], outcome.observations[b], outcome.terminal)
            global_step += 1
            if outcome.terminal:
                for agent in agents:
                    agent.end_episode()
            if central.should_aggregate(global_step):
                central.synchronize(agents, global_step)
            cells = outcome.cell_secrecy
            cell_sum += cells
            reward_sum += outcome.rewards
            if config.run.step_rows:
                steps.append(
                    MetricsRecord(
                        "step",
                        ep,
                        global_step,
                        tuple(float(c) for c in cells),
                        float(cells.sum()),
                        tuple(float(r) for r in outcome.rewards),
                        tuple(
                            float(np.mean(a.losses[m:])) if len(a.losses) > m else float("nan")
                            for a, m in zip(agents, step_marks)
                        ),
                        float(agents[0].epsilon) if is_dqn else float("nan"),
                    )
                )
            obs = outcome.observations
        cell_mean = cell_sum / T
        network = float(cell_mean.sum())
        window.append(network)
        losses = tuple(
            float(np.mean(a.losses[m:])) if len(a.losses) > m else float("nan") for a, m in zip(agents, loss_marks)
        )
        episodes.append(
            MetricsRecord(
                "episode",
                ep,
                global_step,
                tuple(float(c) for c in cell_mean),
                network,
                tuple(float(r) for r in reward_sum / T),
                losses,
                float(agents[0].epsilon) if is_dqn else float("nan"),
                float(np.mean(window)),
            )
        )
        if (ep + 1) % max(1, config.run.episodes // 10) == 0:
            log.info("episode %d/%d network secrecy %.4f", ep + 1, config.run.episodes, network)

    result = ExperimentResult(config, episodes, steps, central.rounds, agents, max_power, float(min_secrecy), out)
    if out is not None:
        result.files = write_outputs(result, out)
    return result


def write_outputs(result: ExperimentResult, out: Path) -> dict[str, Path]:
    n_cells = result.config.environment.cell_count
    files = {"config": out / CONFIG_FILE}
    files["metrics"] = out / METRICS_FILE
    files["metrics"].write_text(metrics_csv(result, n_cells))
    files["rounds"] = out / ROUNDS_FILE
    files["rounds"].write_text(rounds_csv(result.rounds))
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    for b, agent in enumerate(result.agents):
        path = ckpt / f"agent_{b}.fpnv"
        save_params(path, agent.params)
        files[f"checkpoint_{b}"] = path
    return files


def metrics_csv(result: ExperimentResult, n_cells: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(metrics_header(n_cells))
    # step rows of an episode precede that episode's summary row
    by_episode: dict[int, list[MetricsRecord]] = {}
    for r in result.steps:
        by_episode.setdefault(r.episode, []).append(r)
    for rec in result.episodes:
        writer.writerows(metrics_rows(by_episode.get(rec.episode, [])))
        writer.writerows(metrics_rows([rec]))
    return buf.getvalue()


def rounds_csv(rounds: Sequence[FederationRound]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "step", "agent", "checksum_before", "checksum_after", "global_checksum"])
    for r in rounds:
        g = r.global_params.checksum()
        for agent_id, before, after in zip(r.agent_ids, r.checksums_before, r.checksums_after):
            writer.writerow([r.index, r.step, agent_id, before, after, g])
    return buf.getvalue()
