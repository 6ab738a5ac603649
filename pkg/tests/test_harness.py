import csv
import re

import numpy as np
import pytest

from fedpls.errors import ConfigError, ContractViolation
from fedpls.harness import (
    compare_trends,
    convergence_episode,
    emit_plot,
    final_window_mean,
    load_config,
    moving_average,
    parse_ini,
    profile,
    read_metrics,
    run_experiment,
    to_ini,
)
from fedpls.harness.config import RunConfig
from fedpls.harness.plot import render_svg


def tiny(**overrides):
    base = {
        "environment.cell_count": 2,
        "environment.users_per_cell": 2,
        "environment.eta": 3,
        "environment.slots_per_episode": 5,
        "run.episodes": 4,
        "network.hidden": "8",
        "federation.xi": 3,
    }
    base.update(overrides)
    return profile("desk").replace(**base)


# --- analysis ------------------------------------------------------------------

def test_moving_average_examples():
    np.testing.assert_array_equal(moving_average([0, 2, 4], 2), [0, 1, 3])
    x = np.random.default_rng(0).random(20)
    np.testing.assert_array_equal(moving_average(x, 1), x)
    np.testing.assert_allclose(moving_average(np.full(10, 3.3), 4), np.full(10, 3.3), rtol=1e-15)
    assert moving_average(x, 50).shape == x.shape
    with pytest.raises(ContractViolation):
        moving_average(x, 0)


def test_moving_average_against_loop():
    x = np.random.default_rng(1).standard_normal(57)
    w = 6
    ref = [np.mean(x[max(0, i - w + 1):i + 1]) for i in range(x.size)]
    np.testing.assert_allclose(moving_average(x, w), ref, rtol=1e-12)


def test_convergence_examples():
    ramp = np.arange(101, dtype=float)
    tail = ramp[-10:].mean()
    expect = int(np.argmax(ramp >= 0.9 * tail))
    assert convergence_episode(ramp, 0.9) == expect
    assert convergence_episode(np.full(30, 2.0), 0.9) == 0
    assert convergence_episode(np.zeros(30), 0.9) == 0
    # a late collapse below 90% of the threshold pushes convergence past it
    x = np.concatenate([np.full(20, 10.0), [5.0], np.full(20, 10.0)])
    assert convergence_episode(x, 0.9) == 21
    with pytest.raises(ContractViolation):
        convergence_episode(ramp, 0.0)


def test_final_window_mean():
    assert final_window_mean(np.arange(100.0)) == pytest.approx(94.5)
    assert final_window_mean([3.0, 5.0]) == 5.0


def test_compare_trends_examples():
    rng = np.random.default_rng(2)
    runs = [{"network_secrecy_sum": rng.random(50)} for _ in range(3)]
    assert compare_trends(runs, runs).direction == "indistinguishable"
    hi = [np.full(40, 10.0) + 0.1 * rng.standard_normal(40) for _ in range(4)]
    lo = [np.full(40, 5.0) + 0.1 * rng.standard_normal(40) for _ in range(4)]
    report = compare_trends(hi, lo)
    assert report.direction == "A > B" and report.n_a == 4
    assert compare_trends(lo, hi).direction == "B > A"
    with pytest.raises(ContractViolation):
        compare_trends(hi[:1], lo[:1])
    with pytest.raises(ContractViolation):
        compare_trends(runs, runs, metric="no_such_column")


# --- plots ------------------------------------------------------------------------

def test_plot_polylines_and_default_labels(tmp_path):
    path = emit_plot([[1, 2, 3], [3, 2, 1]], ["a", ""], tmp_path / "p.svg")
    svg = path.read_text()
    assert svg.count("<polyline") == 2
    assert 'data-label="series-1"' in svg and 'data-label="a"' in svg
    with pytest.raises(ContractViolation):
        render_svg([])
    with pytest.raises(ContractViolation):
        emit_plot([[1.0]], [], tmp_path / "missing" / "p.svg")


# --- experiments -----------------------------------------------------------------

def test_counting_contract(tmp_path):
    cfg = tiny(**{
        "environment.cell_count": 1,
        "environment.users_per_cell": 1,
        "environment.slots_per_episode": 3,
        "run.episodes": 2,
        "run.step_rows": "true",
    })
    res = run_experiment(cfg, tmp_path)
    with open(res.files["metrics"], newline="") as fh:
        kinds = [r["kind"] for r in csv.DictReader(fh)]
    assert kinds.count("episode") == 2 and kinds.count("step") == 6
    assert kinds == ["step"] * 3 + ["episode"] + ["step"] * 3 + ["episode"]


@pytest.mark.parametrize("agent", ["reinforce", "dqn"])
def test_same_seed_gives_byte_identical_csv(tmp_path, agent):
    cfg = tiny(**{"run.agent": agent, "run.step_rows": "true"})
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert a.files["metrics"].read_bytes() == b.files["metrics"].read_bytes()
    assert a.files["rounds"].read_bytes() == b.files["rounds"].read_bytes()
    c = run_experiment(cfg.replace(**{"run.seed": 1}), tmp_path / "c")
    assert a.files["metrics"].read_bytes() != c.files["metrics"].read_bytes()


def test_round_accounting(tmp_path):
    cfg = tiny()
    res = run_experiment(cfg, tmp_path / "fed")
    assert len(res.rounds) == (4 * 5) // 3
    with open(res.files["rounds"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res.rounds) * 2
    assert all(r["checksum_after"] == r["global_checksum"] for r in rows)
    dist = run_experiment(cfg.replace(**{"federation.mode": "distributed"}), tmp_path / "dist")
    assert dist.rounds == []
    assert dist.files["rounds"].read_text().count("\n") == 1


@pytest.mark.parametrize("agent", ["reinforce", "dqn"])
def test_single_cell_federated_equals_distributed(agent, tmp_path):
    cfg = tiny(**{"environment.cell_count": 1, "run.agent": agent, "federation.xi": 2, "run.step_rows": "true"})
    fed = run_experiment(cfg, tmp_path / "f")
    dist = run_experiment(cfg.replace(**{"federation.mode": "distributed"}), tmp_path / "d")
    assert fed.files["metrics"].read_bytes() == dist.files["metrics"].read_bytes()
    assert fed.files["checkpoint_0"].read_bytes() == dist.files["checkpoint_0"].read_bytes()


def test_metrics_record_invariants(tmp_path):
    res = run_experiment(tiny(**{"run.step_rows": "true"}))
    for rec in res.episodes + res.steps:
        assert abs(rec.network_secrecy_sum - sum(rec.cell_secrecy)) <= 1e-9
    smoothed = moving_average(res.series(), res.config.run.smoothing_window)
    np.testing.assert_allclose(res.series("network_secrecy_smoothed"), smoothed, rtol=1e-12)
    assert res.max_power <= res.config.environment.p_max and res.min_secrecy >= 0.0


def test_config_echo_reproduces_run(tmp_path):
    first = run_experiment(tiny(), tmp_path / "a")
    echoed = load_config(first.files["config"])
    assert echoed == first.config
    second = run_experiment(echoed, tmp_path / "b")
    assert first.files["metrics"].read_bytes() == second.files["metrics"].read_bytes()


def test_plot_matches_csv_and_regenerates_identically(tmp_path):
    res = run_experiment(tiny(), tmp_path)
    column = read_metrics(res.files["metrics"])["network_secrecy_smoothed"]
    svg1 = emit_plot([column], ["fl"], tmp_path / "a.svg").read_text()
    column2 = read_metrics(res.files["metrics"])["network_secrecy_smoothed"]
    svg2 = emit_plot([column2], ["fl"], tmp_path / "b.svg").read_text()
    assert svg1 == svg2
    values = re.search(r'data-values="([^"]*)"', svg1).group(1).split()
    assert np.array_equal(np.array(values, float), res.series("network_secrecy_smoothed"))


def test_outputs_written(tmp_path):
    res = run_experiment(tiny(), tmp_path)
    for name in ("metrics.csv", "rounds.csv", "config.ini", "checkpoints/agent_0.fpnv", "checkpoints/agent_1.fpnv"):
        assert (tmp_path / name).exists()
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0].split(",")
    for field in ("episode", "global_step", "network_secrecy_sum", "secrecy_cell_1", "reward_agent_0", "loss_agent_1", "epsilon"):
        assert field in header


def test_unwritable_output_aborts(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        run_experiment(tiny(), blocker / "sub")


# --- configuration ----------------------------------------------------------------

def test_defaults_and_profiles():
    cfg = RunConfig()
    env = cfg.environment
    assert (env.cell_count, env.users_per_cell, env.eta, env.p_max_dbm, env.n0) == (25, 4, 10, 38.0, 1.0)
    assert cfg.federation.xi == 100 and cfg.dqn.lr == 0.001 and cfg.reinforce.discount == 0.99
    assert cfg.channel.lambda_user == 1.5
    desk = profile("desk")
    assert (desk.environment.cell_count, desk.environment.users_per_cell, desk.environment.eta) == (4, 2, 4)
    assert (desk.environment.slots_per_episode, desk.run.episodes, desk.run.repetitions) == (50, 500, 5)
    with pytest.raises(ConfigError):
        profile("huge")


def test_ini_round_trip_and_errors():
    cfg = tiny(**{"federation.user_counts": "2,2"})
    assert parse_ini(to_ini(cfg)) == cfg
    with pytest.raises(ConfigError, match="unknown key"):
        parse_ini("[run]\nepisodez = 3\n")
    with pytest.raises(ConfigError, match="unknown config section"):
        parse_ini("[nope]\na = 1\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_ini("[run]\nepisodes = many\n")
    with pytest.raises(ConfigError):
        parse_ini("[run]\nepisodes = 0\n")
    with pytest.raises(ConfigError):
        parse_ini("[environment]\neta = 1\n")
    with pytest.raises(ConfigError):
        tiny(**{"federation.user_counts": "1,2"})
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.ini")
