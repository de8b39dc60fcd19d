"""Deterministik planlayıcı testleri: karar ağacı kapalı formları, yöntem uyumu, politika limitleri."""

import math

import numpy as np
import pytest

from det_planner import (
    boltzmann_baseline, boltzmann_vs_partition, build_transition_operator, contraction_check,
    policy_from_z, value_from_z, z_linear_solve, z_power_iteration,
)
from mdp_core import SolverConfig, SolverError, build_mdp, gridworld_mdp, random_mdp, validate
from traj_oracle import enumerate_n_max, enumerate_z, enumerate_z_sa

MU = -2.0


def tree_closed_forms(beta, mu=MU):
    return {
        "S0": math.log(3 * math.exp(beta + 2 * mu) + math.exp(2 * mu)),
        "S1": math.log(2) + beta + mu,
        "S2": beta + mu,
        "S3": mu,
        "S4": beta,
        "S7": 0.0,
    }


def seeded_instances(acyclic=True):
    return [
        random_mdp(4 + seed % 5, 1 + seed % 3, 1, deterministic=True, acyclic=acyclic, seed=seed)
        for seed in range(20)
    ]


@pytest.mark.parametrize("solver", [z_power_iteration, z_linear_solve])
@pytest.mark.parametrize("beta", [1.0, 5.0])
def test_tree_closed_forms(tree, solver, beta):
    z = solver(tree, SolverConfig(beta=beta, mu=MU))
    assert z.converged
    for state, expected in tree_closed_forms(beta).items():
        assert z[state] == pytest.approx(expected, abs=1e-10)


def test_terminals_pinned_exactly(tree):
    z = z_power_iteration(tree, SolverConfig(beta=3.0, mu=MU))
    assert z["S4"] == 3.0 and z["S7"] == 0.0


def test_chain_single_trajectory(chain):
    z = z_power_iteration(chain, SolverConfig(beta=1.0, mu=MU))
    assert z["s0"] == pytest.approx(-6.0, abs=1e-12)


def test_linear_beta_zero_counts_paths(tree):
    z = z_linear_solve(tree, SolverConfig(beta=0.0, mu=MU))
    assert z["S0"] == pytest.approx(math.log(4) + 2 * MU, abs=1e-12)


def test_all_terminal(all_terminal):
    z = z_linear_solve(all_terminal, SolverConfig(beta=2.0))
    np.testing.assert_array_equal(z.log_z, [2.0, -1.0])
    assert contraction_check(all_terminal, SolverConfig(), trials=10, seed=0) == 0.0


def test_stochastic_rejected(risky):
    with pytest.raises(SolverError, match="stoch_planner"):
        z_power_iteration(risky, SolverConfig())
    with pytest.raises(SolverError, match="stoch_planner"):
        build_transition_operator(risky, 1.0, MU)


def test_transition_operator(tree):
    op = build_transition_operator(tree, 1.0, MU).matrix.toarray()
    i = {s: k for k, s in enumerate(tree.states)}
    assert op[i["S1"], i["S4"]] == pytest.approx(math.exp(-2))
    assert op[i["S1"], i["S5"]] == pytest.approx(math.exp(-2))
    assert np.count_nonzero(op[i["S1"]]) == 2
    np.testing.assert_array_equal(op[i["S7"]], np.eye(8)[i["S7"]])
    assert np.count_nonzero(op) == 7 + 4

    flat = build_transition_operator(tree, 0.0, MU).matrix.toarray()
    live = flat[:4]
    assert np.allclose(live[live > 0], math.exp(MU))


def test_duplicate_successor_merged_in_operator_not_in_policy():
    mdp = build_mdp(
        ["s", "t"],
        {"t": 0.0},
        [
            {"from": "s", "action": "a", "to": [{"state": "t", "prob": 1.0, "reward": 0.0}]},
            {"from": "s", "action": "b", "to": [{"state": "t", "prob": 1.0, "reward": -1.0}]},
        ],
    )
    op = build_transition_operator(mdp, 1.0, MU).matrix.toarray()
    assert op[0, 1] == pytest.approx(math.exp(MU) + math.exp(-1.0 + MU))
    policy = policy_from_z(mdp, z_power_iteration(mdp, SolverConfig(beta=1.0, mu=MU)))
    assert policy.prob("s", "a") == pytest.approx(1 / (1 + math.exp(-1.0)))


@pytest.mark.parametrize("acyclic", [True, False])
def test_method_agreement(acyclic):
    for mdp in seeded_instances(acyclic):
        for beta in (0.0, 1.0, 5.0):
            cfg = SolverConfig(beta=beta, mu=-1.5)
            power = z_power_iteration(mdp, cfg)
            linear = z_linear_solve(mdp, cfg)
            assert power.converged
            np.testing.assert_allclose(power.log_z, linear.log_z, rtol=0, atol=1e-8)


def test_oracle_agreement():
    for mdp in seeded_instances(acyclic=True):
        for beta in (0.0, 1.0, 5.0):
            z = z_power_iteration(mdp, SolverConfig(beta=beta, mu=-1.5))
            for s in mdp.states:
                oracle = enumerate_z(mdp, s, beta, -1.5)
                assert not oracle.truncated
                assert z[s] == pytest.approx(oracle.log_z_estimate, abs=1e-10)


def test_cyclic_oracle_within_tail_bound():
    mdp = random_mdp(6, 3, 1, deterministic=True, acyclic=False, seed=4, uniform_actions=True)
    z = z_power_iteration(mdp, SolverConfig(beta=1.0, mu=-1.5))
    for s in mdp.states:
        oracle = enumerate_z(mdp, s, 1.0, -1.5, max_len=8)
        assert math.exp(z[s]) - math.exp(oracle.log_z_estimate) <= oracle.tail_bound + 1e-12
        assert oracle.log_z_estimate <= z[s] + 1e-12


def test_fixed_point_independent_of_initialisation(tree):
    cfg = SolverConfig(beta=1.0, mu=MU)
    rng = np.random.default_rng(3)
    a = z_power_iteration(tree, cfg)
    b = z_power_iteration(tree, cfg, init_log_z=rng.normal(size=tree.n_states) * 5)
    np.testing.assert_allclose(a.log_z, b.log_z, atol=1e-10)


def test_per_sweep_contraction():
    for mdp in seeded_instances(acyclic=False)[:10]:
        cfg = SolverConfig(beta=1.0, mu=-1.5)
        rate = validate(mdp).contraction_bound(cfg.mu)
        deltas = z_power_iteration(mdp, cfg).linear_deltas
        for prev, cur in zip(deltas, deltas[1:]):
            if prev > 1e-12:
                assert cur <= rate * prev * (1 + 1e-9) + 1e-15


def test_non_convergence_is_flagged(caplog):
    mdp = gridworld_mdp(3, 3)
    with caplog.at_level("WARNING"):
        z = z_power_iteration(mdp, SolverConfig(beta=1.0, mu=-1.5, max_iters=2))
    assert not z.converged and z.residual > z.tol
    assert "yakınsamadı" in caplog.text
    with pytest.raises(SolverError, match="yakınsamamış"):
        policy_from_z(mdp, z)


def test_value_large_beta_is_optimal(tree):
    z = z_power_iteration(tree, SolverConfig(beta=50.0, mu=MU))
    for method in ("linear_system", "finite_difference"):
        v = value_from_z(tree, z, method)
        assert v["S0"] == pytest.approx(1.0, abs=1e-4)
        assert v["S7"] == 0.0 and v["S4"] == 1.0


def test_value_methods_agree(tree):
    z = z_power_iteration(tree, SolverConfig(beta=1.0, mu=MU))
    a = value_from_z(tree, z, "linear_system")
    b = value_from_z(tree, z, "finite_difference")
    np.testing.assert_allclose(a.v, b.v, atol=1e-5)


def test_value_methods_agree_on_random_instances():
    for mdp in seeded_instances(acyclic=True):
        for beta in (0.0, 1.0, 5.0):
            z = z_power_iteration(mdp, SolverConfig(beta=beta, mu=-1.5))
            a = value_from_z(mdp, z, "linear_system")
            b = value_from_z(mdp, z, "finite_difference")
            np.testing.assert_allclose(a.v, b.v, atol=1e-5)


def test_policy_limits(tree):
    low = policy_from_z(tree, z_power_iteration(tree, SolverConfig(beta=0.0, mu=MU)))
    np.testing.assert_allclose([low.prob("S0", a) for a in "123"], [0.5, 0.25, 0.25], atol=1e-12)
    assert low.normalization_error <= 1e-10

    high = policy_from_z(tree, z_power_iteration(tree, SolverConfig(beta=50.0, mu=MU)))
    np.testing.assert_allclose([high.prob("S0", a) for a in "123"], [2 / 3, 1 / 3, 0.0], atol=1e-6)
    assert high.prob("S2", "1") == 1.0


def test_policy_rows_normalised():
    for mdp in seeded_instances(acyclic=False):
        policy = policy_from_z(mdp, z_power_iteration(mdp, SolverConfig(beta=1.0, mu=-1.5)))
        assert policy.normalization_error <= 1e-10
        for s in mdp.edges.nonterminal:
            assert sum(policy.row(mdp.states[s]).values()) == pytest.approx(1.0, abs=1e-12)


def test_zero_beta_policy_counts_trajectories(tree):
    policy = policy_from_z(tree, z_power_iteration(tree, SolverConfig(beta=0.0, mu=MU)))
    weights = np.exp([enumerate_z_sa(tree, "S0", a, 0.0, MU).log_z_estimate for a in "123"])
    np.testing.assert_allclose([policy.prob("S0", a) for a in "123"], weights / weights.sum(), atol=1e-8)


def test_large_beta_policy_follows_entropic_factor(tree):
    beta = 50.0
    policy = policy_from_z(tree, z_power_iteration(tree, SolverConfig(beta=beta, mu=MU)))
    expected = []
    for a, succ in zip("123", ("S1", "S2", "S3")):
        v_star, n_max = enumerate_n_max(tree, succ, MU)
        expected.append(n_max * math.exp(beta * v_star))
    expected = np.array(expected) / sum(expected)
    np.testing.assert_allclose([policy.prob("S0", a) for a in "123"], expected, atol=1e-5)


def test_boltzmann_limits(tree):
    _, uniform = boltzmann_baseline(tree, SolverConfig(beta=0.0, mu=MU, gamma=0.999999))
    np.testing.assert_allclose([uniform.prob("S0", a) for a in "123"], [1 / 3] * 3, atol=1e-12)

    values, sharp = boltzmann_baseline(tree, SolverConfig(beta=50.0, mu=MU, gamma=0.99))
    assert values.converged
    np.testing.assert_allclose([sharp.prob("S0", a) for a in "123"], [0.5, 0.5, 0.0], atol=1e-6)


def test_boltzmann_chain_discounts(chain):
    values, _ = boltzmann_baseline(chain, SolverConfig(beta=1.0, gamma=0.9))
    assert values["s1"] == pytest.approx(-1.0)
    assert values["s0"] == pytest.approx(-1.0 - 0.9)


def test_entropic_difference_rows(tree):
    rows = boltzmann_vs_partition(tree, SolverConfig(beta=50.0, mu=MU))
    s0 = {r["action"]: r for r in rows if r["state"] == "S0"}
    assert s0["1"]["pi_partition"] == pytest.approx(2 / 3, abs=1e-6)
    assert s0["1"]["pi_boltzmann"] == pytest.approx(0.5, abs=1e-6)


def test_contraction_bound(tree):
    assert contraction_check(tree, SolverConfig(beta=1.0, mu=MU), trials=100, seed=0) <= 3 * math.exp(MU)
    mdp = random_mdp(8, 3, 1, deterministic=True, acyclic=False, seed=9, uniform_actions=True)
    ratio = contraction_check(mdp, SolverConfig(beta=1.0, mu=-1.2), trials=100, seed=1)
    assert 0.0 < ratio <= 3 * math.exp(-1.2)
