"""
BolumZ - Test Ortak Fikstürleri
Proje kökünü sys.path'e ekler; küçük el yapımı MDP'ler ve tohumlu örnekler sağlar.
"""

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from mdp_core import build_mdp, gridworld_mdp  # noqa: E402
from storage import load_mdp  # noqa: E402

TREE_PATH = ROOT / "fixtures" / "tree.json"
RISKY_PATH = ROOT / "fixtures" / "risky_bet.json"


def geometric_mdp(p: float):
    """s --a--> t (p) ya da s (1−p); ödüller 0, R(t) = 0."""
    return build_mdp(
        ["s", "t"],
        {"t": 0.0},
        [{"from": "s", "action": "a", "to": [
            {"state": "t", "prob": p, "reward": 0.0},
            {"state": "s", "prob": 1.0 - p, "reward": 0.0},
        ]}],
    )


def noisy_tree():
    """Ağaç MDP'nin 0.9/0.1 gürültülü hali: her eylem %10 ihtimalle komşu dala kayar."""
    block = lambda src, action, hit, miss: {"from": src, "action": action, "to": [
        {"state": hit, "prob": 0.9, "reward": 0.0},
        {"state": miss, "prob": 0.1, "reward": 0.0},
    ]}
    return build_mdp(
        ["S0", "S1", "S2", "S3", "S4", "S5", "S6", "S7"],
        {"S4": 1.0, "S5": 1.0, "S6": 1.0, "S7": 0.0},
        [
            block("S0", "1", "S1", "S2"),
            block("S0", "2", "S2", "S3"),
            block("S0", "3", "S3", "S1"),
            block("S1", "1", "S4", "S5"),
            block("S1", "2", "S5", "S4"),
            block("S2", "1", "S6", "S7"),
            block("S3", "1", "S7", "S6"),
        ],
    )


@pytest.fixture
def tree():
    return load_mdp(TREE_PATH)


@pytest.fixture
def risky():
    return load_mdp(RISKY_PATH)


@pytest.fixture
def chain():
    """s0 → s1 → t, her adım −1, R(t) = 0; tek eylem 'go'."""
    return build_mdp(
        ["s0", "s1", "t"],
        {"t": 0.0},
        [
            {"from": "s0", "action": "go", "to": [{"state": "s1", "prob": 1.0, "reward": -1.0}]},
            {"from": "s1", "action": "go", "to": [{"state": "t", "prob": 1.0, "reward": -1.0}]},
        ],
    )


@pytest.fixture
def split():
    """s0 ve s1 ortak 'a' eylemine sahip; s0 x'e 0.3, y'ye 0.7 olasılıkla iner."""
    return build_mdp(
        ["s0", "s1", "x", "y"],
        {"x": 0.0, "y": 0.5},
        [
            {"from": "s0", "action": "a", "to": [
                {"state": "x", "prob": 0.3, "reward": -1.0},
                {"state": "y", "prob": 0.7, "reward": -2.0},
            ]},
            {"from": "s1", "action": "a", "to": [{"state": "x", "prob": 1.0, "reward": 0.0}]},
        ],
    )


@pytest.fixture
def all_terminal():
    return build_mdp(["f1", "f2"], {"f1": 1.0, "f2": -0.5}, [])


@pytest.fixture
def grid():
    return gridworld_mdp(4, 4, jitter=0.5, seed=0)
