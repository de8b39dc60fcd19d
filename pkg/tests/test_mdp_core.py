"""MDP veri modeli, doğrulama ve üreteç testleri."""

import math

import numpy as np
import pytest

from det_planner import z_power_iteration
from mdp_core import (
    ConfigError, MdpFormatError, MdpValidationError, SolverConfig, SolverError,
    build_mdp, check_mu, gridworld_mdp, normalize_rewards, random_mdp,
    require_valid, resolve_max_iters, to_spec, validate,
)
from storage import load_mdp, save_mdp


def _one_step(reward=-1.0, prob=1.0, terminal=None):
    terminal = {"t": 0.0} if terminal is None else terminal
    return build_mdp(
        ["s", "t"],
        terminal,
        [{"from": "s", "action": "a", "to": [{"state": "t", "prob": prob, "reward": reward}]}],
    )


def test_tree_report(tree):
    report = validate(tree)
    assert report.ok
    assert report.d == 3
    assert report.mu_threshold == pytest.approx(-math.log(3))
    assert report.is_deterministic
    assert not report.has_cycles
    assert report.r_terminal_max == 1.0
    assert not report.uniform_actions


def test_positive_reward_is_reported_not_raised():
    mdp = _one_step(reward=0.5)
    report = validate(mdp)
    assert not report.ok
    assert any("pozitif geçiş ödülü" in v for v in report.violations)
    with pytest.raises(MdpValidationError, match="pozitif geçiş ödülü"):
        require_valid(mdp)


def test_terminal_with_outgoing_transition():
    mdp = build_mdp(
        ["s", "t"],
        {"t": 0.0, "s": 1.0},
        [{"from": "s", "action": "a", "to": [{"state": "t", "prob": 1.0, "reward": 0.0}]}],
    )
    assert any("terminal durumun çıkan geçişi var" in v for v in validate(mdp).violations)


def test_non_terminal_without_actions():
    mdp = build_mdp(["s", "t"], {"t": 0.0}, [])
    assert any("eylem yok" in v for v in validate(mdp).violations)


def test_state_without_path_to_terminal():
    mdp = build_mdp(
        ["s", "trap", "t"],
        {"t": 0.0},
        [
            {"from": "s", "action": "a", "to": [
                {"state": "t", "prob": 0.5, "reward": 0.0},
                {"state": "trap", "prob": 0.5, "reward": 0.0},
            ]},
            {"from": "trap", "action": "a", "to": [{"state": "trap", "prob": 1.0, "reward": 0.0}]},
        ],
    )
    report = validate(mdp)
    assert report.violations == ("terminale ulaşamayan durum: trap",)
    with pytest.raises(MdpValidationError, match="trap"):
        z_power_iteration(mdp, SolverConfig(beta=1.0, mu=-2.0))


def test_probabilities_renormalised_within_load_tolerance():
    mdp = build_mdp(
        ["s", "x", "y"],
        {"x": 0.0, "y": 0.0},
        [{"from": "s", "action": "a", "to": [
            {"state": "x", "prob": 0.5, "reward": 0.0},
            {"state": "y", "prob": 0.5 + 5e-10, "reward": 0.0},
        ]}],
    )
    assert math.fsum(o.prob for o in mdp.outcomes[0][0]) == pytest.approx(1.0, abs=1e-12)
    assert validate(mdp).ok


def test_probabilities_far_from_one_rejected():
    with pytest.raises(MdpFormatError, match="olasılık toplamı"):
        _one_step(prob=0.9)


def test_schema_errors():
    with pytest.raises(MdpFormatError):
        build_mdp([], {}, [])
    with pytest.raises(MdpFormatError, match="bilinmeyen hedef"):
        build_mdp(["s"], {}, [{"from": "s", "action": "a", "to": [{"state": "q", "prob": 1, "reward": 0}]}])
    with pytest.raises(MdpFormatError, match="yinelenen"):
        block = {"from": "s", "action": "a", "to": [{"state": "t", "prob": 1.0, "reward": 0.0}]}
        build_mdp(["s", "t"], {"t": 0.0}, [block, block])
    with pytest.raises(MdpFormatError):
        build_mdp(["s", "t"], {"t": 0.0}, [{"from": "s", "to": []}])


def test_normalize_rewards_shifts_by_max():
    mdp = build_mdp(
        ["s", "m", "t"],
        {"t": 2.0},
        [
            {"from": "s", "action": "a", "to": [{"state": "m", "prob": 1.0, "reward": -1.0}]},
            {"from": "m", "action": "a", "to": [{"state": "t", "prob": 1.0, "reward": -0.5}]},
        ],
    )
    shifted = normalize_rewards(mdp)
    assert max(shifted.transition_rewards()) == 0.0
    assert sorted(shifted.transition_rewards()) == [-0.5, 0.0]
    assert shifted.reward_shift == -0.5
    assert shifted.terminal_rewards == mdp.terminal_rewards


def test_normalize_rewards_makes_positive_rewards_valid():
    shifted = normalize_rewards(_one_step(reward=3.0))
    assert validate(shifted).ok
    assert shifted.reward_shift == 3.0


def test_solver_config_ranges():
    with pytest.raises(ConfigError, match="beta"):
        SolverConfig(beta=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(mu=0.5)
    with pytest.raises(ConfigError):
        SolverConfig(gamma=1.0)
    with pytest.raises(ConfigError):
        SolverConfig(damping=0.0)
    assert SolverConfig(beta=2.0).with_beta(3.0).beta == 3.0


def test_check_mu_refuses_cyclic():
    report = require_valid(gridworld_mdp(3, 3))
    assert report.has_cycles
    with pytest.raises(SolverError, match="mu < -log d"):
        check_mu(report, -0.5)
    check_mu(report, -1.5)


def test_check_mu_warns_on_acyclic(tree, caplog):
    with caplog.at_level("WARNING"):
        check_mu(validate(tree), -0.5)
    assert "Döngüsüz MDP" in caplog.text


def test_resolve_max_iters(tree):
    report = validate(tree)
    rate = 3 * math.exp(-2.0)
    expected = max(90, 10 * math.ceil(math.log(1e-12) / math.log(rate)))
    assert resolve_max_iters(SolverConfig(mu=-2.0, tol=1e-12), tree, report) == expected
    assert resolve_max_iters(SolverConfig(max_iters=7), tree, report) == 7


def test_edges_layout(tree):
    e = tree.edges
    assert e.n_pairs == 7
    assert list(e.nonterminal) == [0, 1, 2, 3]
    assert list(e.state_start) == [0, 3, 5, 6]
    assert e.pair_index(1, 1) == 4
    assert tree.states[e.edge_dst[e.pair_index(0, 2)]] == "S3"


def test_unknown_identifiers(tree):
    with pytest.raises(SolverError, match="Bilinmeyen durum"):
        tree.index("nope")
    with pytest.raises(SolverError, match="Bilinmeyen eylem"):
        tree.action_slot(0, "9")


@pytest.mark.parametrize("deterministic", [True, False])
@pytest.mark.parametrize("acyclic", [True, False])
def test_random_mdp_valid_and_reproducible(deterministic, acyclic):
    a = random_mdp(10, 3, 2, deterministic, acyclic, seed=5)
    b = random_mdp(10, 3, 2, deterministic, acyclic, seed=5)
    report = validate(a)
    assert report.ok
    assert report.has_cycles in (False, True)
    assert not acyclic or not report.has_cycles
    assert a.is_deterministic == deterministic or not deterministic
    assert to_spec(a) == to_spec(b)
    assert a.terminal_mask.sum() == 2


def test_random_mdp_uniform_actions():
    mdp = random_mdp(8, 3, 2, False, False, seed=2, uniform_actions=True)
    assert mdp.has_uniform_actions()
    assert validate(mdp).d == 3


def test_random_mdp_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        random_mdp(1, 2, 1, True, True, seed=0)
    with pytest.raises(ConfigError):
        random_mdp(5, 0, 1, True, True, seed=0)


def test_gridworld_layout():
    mdp = gridworld_mdp(4, 4, jitter=0.5, seed=0)
    report = validate(mdp)
    assert report.ok
    assert mdp.n_states == 16
    assert report.d == 4
    assert report.has_cycles
    assert mdp.is_terminal(mdp.index("r3c3"))
    s = mdp.index("r0c0")
    assert mdp.successor(s, mdp.action_slot(s, "up")) == s
    assert mdp.states[mdp.successor(s, mdp.action_slot(s, "right"))] == "r0c1"
    rewards = np.array(mdp.transition_rewards())
    assert np.all(rewards <= -1.0) and np.all(rewards > -1.5)


def test_to_spec_round_trip(tree):
    spec = to_spec(tree)
    rebuilt = build_mdp(spec["states"], spec["terminal"], spec["transitions"])
    assert to_spec(rebuilt) == spec
    assert "reward_shift" not in spec


def test_reward_shift_survives_save_and_load(tmp_path):
    shifted = normalize_rewards(_one_step(reward=3.0))
    path = tmp_path / "shifted.json"
    save_mdp(shifted, path)
    loaded = load_mdp(path)
    assert loaded.reward_shift == 3.0
    assert to_spec(loaded) == to_spec(shifted)
