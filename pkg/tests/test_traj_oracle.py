"""Yörünge kahini testleri: kapalı formlar, kuyruk sınırı, N_max."""

import math

import numpy as np
import pytest

from conftest import geometric_mdp
from det_planner import z_power_iteration
from mdp_core import SolverConfig, SolverError, gridworld_mdp, random_mdp
from traj_oracle import (
    EnumerationStats, enumerate_n_max, enumerate_z, enumerate_z_sa,
    enumerate_z_stochastic, iter_trajectories,
)

BETA, MU = 1.0, -2.0


def test_tree_closed_form(tree):
    result = enumerate_z(tree, "S0", BETA, MU)
    assert result.log_z_estimate == pytest.approx(math.log(3 * math.exp(-3) + math.exp(-4)), abs=1e-12)
    assert not result.truncated
    assert result.tail_bound == 0.0
    assert result.n_trajectories_enumerated == 4


def test_terminal_is_empty_trajectory(tree):
    result = enumerate_z(tree, "S4", 2.0, MU)
    assert result.log_z_estimate == 2.0
    assert result.n_trajectories_enumerated == 1
    assert not result.truncated


def test_trajectory_fields(tree):
    trajs = list(iter_trajectories(tree, "S0", max_len=5))
    assert [t.terminal_state for t in trajs] == ["S4", "S5", "S6", "S7"]
    first = trajs[0]
    assert first.length == 2
    assert first.steps == (("S0", "1", 0.0), ("S1", "1", 0.0))
    assert first.energy == -1.0
    assert first.log_likelihood == 0.0


def test_state_action_restriction(tree):
    assert enumerate_z_sa(tree, "S0", "3", BETA, MU).log_z_estimate == pytest.approx(-4.0, abs=1e-12)
    total = sum(math.exp(enumerate_z_sa(tree, "S0", a, BETA, MU).log_z_estimate) for a in ("1", "2", "3"))
    assert total == pytest.approx(math.exp(enumerate_z(tree, "S0", BETA, MU).log_z_estimate), rel=1e-10)


def test_single_action_chain(chain):
    assert enumerate_z_sa(chain, "s0", "go", BETA, MU).log_z_estimate == pytest.approx(
        enumerate_z(chain, "s0", BETA, MU).log_z_estimate
    )
    assert enumerate_z(chain, "s0", BETA, MU).log_z_estimate == pytest.approx(-6.0)


def test_unknown_action(tree):
    with pytest.raises(SolverError, match="Bilinmeyen eylem"):
        enumerate_z_sa(tree, "S0", "7", BETA, MU)


def test_n_max_tree(tree):
    v_star, n_max = enumerate_n_max(tree, "S0", MU)
    assert v_star == 1.0
    assert n_max == pytest.approx(3 * math.exp(2 * MU), rel=1e-12)
    assert enumerate_n_max(tree, "S7", MU) == (0.0, 1.0)


def test_n_max_matches_large_beta_slope():
    mdp = random_mdp(8, 3, 1, deterministic=True, acyclic=True, seed=42)
    s = mdp.states[0]
    v_star, n_max = enumerate_n_max(mdp, s, MU)
    slopes = [enumerate_z(mdp, s, beta, MU).log_z_estimate - beta * v_star for beta in (20.0, 40.0, 80.0)]
    errors = [abs(x - math.log(n_max)) for x in slopes]
    assert errors[-1] <= errors[0] + 1e-12
    assert errors[-1] < 1e-6


def test_n_max_cyclic_needs_guard():
    mdp = geometric_mdp(0.5)
    with pytest.raises(SolverError, match="max_len"):
        enumerate_n_max(mdp, "s", MU)
    v_star, _ = enumerate_n_max(mdp, "s", MU, max_len=5)
    assert v_star == 0.0


def test_n_max_without_trajectories_is_refused(chain):
    with pytest.raises(SolverError, match="max_len=1"):
        enumerate_n_max(chain, "s0", MU, max_len=1)
    assert enumerate_n_max(chain, "s0", MU, max_len=2) == pytest.approx((-2.0, math.exp(2 * MU)))


def test_random_acyclic_matches_power_iteration():
    mdp = random_mdp(8, 3, 1, deterministic=True, acyclic=True, seed=42)
    z = z_power_iteration(mdp, SolverConfig(beta=BETA, mu=MU))
    for s in mdp.states:
        assert enumerate_z(mdp, s, BETA, MU).log_z_estimate == pytest.approx(z[s], abs=1e-8)


def test_stochastic_equals_plain_on_deterministic(tree):
    for s in tree.states:
        a = enumerate_z(tree, s, BETA, MU)
        b = enumerate_z_stochastic(tree, s, BETA, MU)
        assert a.log_z_estimate == b.log_z_estimate


@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_geometric_series(p):
    exact = p * math.exp(MU) / (1 - (1 - p) * math.exp(MU))
    result = enumerate_z_stochastic(geometric_mdp(p), "s", BETA, MU, max_len=60)
    assert result.truncated
    assert abs(math.exp(result.log_z_estimate) - exact) <= result.tail_bound + 1e-15


def test_monotone_in_max_len():
    mdp = geometric_mdp(0.3)
    estimates = [enumerate_z_stochastic(mdp, "s", BETA, MU, max_len=n).log_z_estimate for n in (1, 2, 4, 8)]
    assert estimates == sorted(estimates)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("beta", [0.0, 1.0, 5.0])
def test_tail_bound_covers_truncation(seed, beta):
    mdp = random_mdp(8, 3, 1, deterministic=True, acyclic=True, seed=seed)
    s = mdp.states[0]
    full = enumerate_z(mdp, s, beta, -1.5)
    cut = enumerate_z(mdp, s, beta, -1.5, max_len=2)
    assert not full.truncated
    if cut.truncated:
        assert cut.tail_bound > 0.0
        assert math.exp(full.log_z_estimate) - math.exp(cut.log_z_estimate) <= cut.tail_bound * (1 + 1e-12)
    else:
        assert cut.log_z_estimate == full.log_z_estimate


def test_cyclic_divergence_refused():
    mdp = gridworld_mdp(2, 2)
    with pytest.raises(SolverError, match="mu < -log d"):
        enumerate_z(mdp, "r0c0", BETA, -0.5, max_len=3)


def test_cap_is_an_error(tree):
    with pytest.raises(SolverError, match="sınırı aşıldı"):
        enumerate_z(tree, "S0", BETA, MU, cap=2)
    stats = EnumerationStats(cap=10)
    list(iter_trajectories(tree, "S0", max_len=1, stats=stats))
    assert stats.truncated and stats.count == 0
