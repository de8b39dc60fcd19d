"""
BolumZ - Modelden Bağımsız Öğrenme
Durum-eylem bölüm fonksiyonları Z(s,a,β): deterministik ortamda kesin planlama çözümü,
geometrik Z-öğrenme güncellemesi, beklenen SARSA karşılığı, keşif stratejileri ve
tohumlu bölüm (episode) simülatörü.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

import config
from det_planner import PolicyTable, grouped_logsumexp, policy_from_pair_logits
from mdp_core import ConfigError, Mdp, SolverConfig, SolverError, check_mu, require_valid, resolve_max_iters

logger = logging.getLogger(__name__)

SCHEDULES = ("constant", "visit", "harmonic")
EXPLORATIONS = ("epsilon_greedy", "boltzmann_like")


# === TABLOLAR ===
@dataclass(frozen=True, eq=False)
class ZsaTable:
    """Çift başına log Z(s, a); çiftler mdp.edges sırasındadır."""

    mdp: Mdp
    log_z: np.ndarray
    beta: float
    mu: float
    residual: float = math.inf
    iterations: int = 0
    converged: bool = False

    @classmethod
    def initial(cls, mdp: Mdp, beta: float, mu: float) -> ZsaTable:
        """log Z₀(s, a) = 0."""
        return cls(mdp=mdp, log_z=np.zeros(mdp.edges.n_pairs), beta=beta, mu=mu)

    def pair(self, s: str | int, a: str | int) -> int:
        i = self.mdp.index(s)
        if self.mdp.is_terminal(i):
            raise SolverError(f"{self.mdp.states[i]} terminal; durum-eylem çifti yok")
        return self.mdp.edges.pair_index(i, self.mdp.action_slot(i, a))

    def get(self, s: str | int, a: str | int) -> float:
        return float(self.log_z[self.pair(s, a)])

    def state_log_z(self) -> np.ndarray:
        """log Σ_a Z(s, a); terminallerde β·R(s_f)."""
        return _state_log_z(self.mdp, self.log_z, self.beta)

    def records(self) -> list[dict]:
        e = self.mdp.edges
        return [
            {"state": self.mdp.states[s], "action": self.mdp.actions[s][slot], "log_z": float(v)}
            for s, slot, v in zip(e.pair_state, e.pair_slot, self.log_z)
        ]


@dataclass(frozen=True, eq=False)
class QTable:
    """Q(s, a, β) = ∂β log Z(s, a, β)."""

    mdp: Mdp
    q: np.ndarray
    beta: float
    residual: float = 0.0

    def get(self, s: str | int, a: str | int) -> float:
        i = self.mdp.index(s)
        return float(self.q[self.mdp.edges.pair_index(i, self.mdp.action_slot(i, a))])

    def records(self) -> list[dict]:
        e = self.mdp.edges
        return [
            {"state": self.mdp.states[s], "action": self.mdp.actions[s][slot], "q": float(v)}
            for s, slot, v in zip(e.pair_state, e.pair_slot, self.q)
        ]


@dataclass(frozen=True)
class AgentConfig:
    """Öğrenme ayarları. max_steps None ise 100·|S|; start_state None ise keşifçi başlangıç."""

    alpha: float = config.DEFAULT_ALPHA
    schedule: str = config.DEFAULT_SCHEDULE
    epsilon: float = config.DEFAULT_EPSILON
    exploration: str = config.DEFAULT_EXPLORATION
    beta: float = config.DEFAULT_BETA
    mu: float = config.DEFAULT_MU
    episodes: int = config.DEFAULT_EPISODES
    seed: int = config.DEFAULT_SEED
    max_steps: int | None = None
    start_state: str | None = None

    def __post_init__(self):
        problems = []
        if not 0.0 < self.alpha <= 1.0:
            problems.append(f"alpha (0, 1] aralığında olmalı (verilen {self.alpha})")
        if not 0.0 <= self.epsilon <= 1.0:
            problems.append(f"epsilon [0, 1] aralığında olmalı (verilen {self.epsilon})")
        if self.schedule not in SCHEDULES:
            problems.append(f"schedule {SCHEDULES} içinden olmalı (verilen {self.schedule!r})")
        if self.exploration not in EXPLORATIONS:
            problems.append(f"exploration {EXPLORATIONS} içinden olmalı (verilen {self.exploration!r})")
        if not self.beta >= 0.0 or not self.mu <= 0.0:
            problems.append(f"beta >= 0 ve mu <= 0 olmalı (verilen {self.beta}, {self.mu})")
        if self.episodes < 0 or self.seed < 0:
            problems.append("episodes ve seed negatif olamaz")
        if self.max_steps is not None and self.max_steps < 1:
            problems.append(f"max_steps >= 1 olmalı (verilen {self.max_steps})")
        if problems:
            raise ConfigError("; ".join(problems))

    def step_size(self, visits: int, episode: int) -> float:
        """constant: α, visit: α/n(s,a), harmonic: α/(1+bölüm)."""
        if self.schedule == "visit":
            return self.alpha / max(visits, 1)
        if self.schedule == "harmonic":
            return self.alpha / (1 + episode)
        return self.alpha


@dataclass(frozen=True, eq=False)
class LearningLog:
    records: list[dict] = field(default_factory=list)
    table: ZsaTable | None = None
    truncated_episodes: int = 0

    def __len__(self) -> int:
        return len(self.records)


# === PLANLAMA ===
def _state_log_z(mdp: Mdp, pair_log_z: np.ndarray, beta: float) -> np.ndarray:
    e = mdp.edges
    out = beta * mdp.terminal_values.copy()
    if e.n_pairs:
        out[e.nonterminal] = grouped_logsumexp(pair_log_z, e.state_start)
    return out


def _pair_backup(mdp: Mdp, pair_log_z: np.ndarray, beta: float, mu: float) -> np.ndarray:
    """log [e^{βR(s,a)+μ} Σ_{a'} Z(s+a, a')], terminal ardılda Σ yerine e^{βR(s_f)}."""
    e = mdp.edges
    succ = _state_log_z(mdp, pair_log_z, beta)
    return beta * e.edge_reward + mu + succ[e.edge_dst]


def zsa_planning_solve(mdp: Mdp, cfg: SolverConfig) -> ZsaTable:
    """Z(s,a,β) = e^{βR(s,a)+μ} Σ_{a'} Z(s+a, a', β) doğrusal denkleminin log-alan sabit noktası."""
    report = require_valid(mdp)
    if not mdp.is_deterministic:
        raise SolverError("Stokastik MDP: zsa_planning_solve yalnızca deterministik ortamlar içindir")
    check_mu(report, cfg.mu)
    max_iters = resolve_max_iters(cfg, mdp, report)

    log_z = np.zeros(mdp.edges.n_pairs)
    delta, iterations = math.inf, 0
    for iterations in range(1, max_iters + 1):
        new = _pair_backup(mdp, log_z, cfg.beta, cfg.mu)
        delta = float(np.max(np.abs(new - log_z))) if new.size else 0.0
        log_z = new
        if delta < cfg.tol:
            break

    backup = _pair_backup(mdp, log_z, cfg.beta, cfg.mu)
    residual = float(np.max(np.abs(backup - log_z))) if log_z.size else 0.0
    converged = residual <= cfg.tol
    if not converged:
        logger.warning(f"zsa_planning_solve: {iterations} taramada yakınsamadı (artık {residual:.3e})")
    return ZsaTable(mdp, log_z, cfg.beta, cfg.mu, residual, iterations, converged)


def q_from_zsa(mdp: Mdp, cfg: SolverConfig, h: float = 1e-3) -> QTable:
    """Q = ∂β log Z(s,a,β) merkezi farkla; Q özyinelemesinin artığı 10h² + tol ile denetlenir."""
    f = lambda beta: zsa_planning_solve(mdp, cfg.with_beta(beta)).log_z
    beta = cfg.beta
    if beta >= h:
        q = (f(beta + h) - f(beta - h)) / (2 * h)
    else:
        q = (-3 * f(beta) + 4 * f(beta + h) - f(beta + 2 * h)) / (2 * h)

    e = mdp.edges
    table = zsa_planning_solve(mdp, cfg)
    pi = policy_from_pair_logits(mdp, table.log_z).probs
    # ardıl durumun Σ_{a'} π(a'|s') Q(s', a'), terminalde R(s_f)
    cont = mdp.terminal_values.copy()
    if e.n_pairs:
        cont[e.nonterminal] = np.add.reduceat(pi * q, e.state_start)
    residual = float(np.max(np.abs(q - (e.edge_reward + cont[e.edge_dst])))) if q.size else 0.0
    if residual > 10 * h * h + cfg.tol:
        logger.warning(f"Q özyineleme artığı {residual:.3e} > 10h² + tol")
    return QTable(mdp, q, beta, residual)


# === GÜNCELLEMELER ===
def _successor_log_z(table: ZsaTable, s_next: int, terminal: bool) -> float:
    mdp = table.mdp
    if terminal:
        return table.beta * mdp.terminal_reward(s_next)
    e = mdp.edges
    start = e.pair_offset[s_next]
    if start < 0:
        raise SolverError(f"{mdp.states[s_next]} terminal; terminal=True verilmeli")
    values = table.log_z[start:start + len(mdp.actions[s_next])]
    return float(np.logaddexp.reduce(values))


def _interpolated_log_z(table: ZsaTable, k: int, r: float, s_next: int, terminal: bool, alpha: float) -> float:
    target = table.beta * r + table.mu + _successor_log_z(table, s_next, terminal)
    return (1.0 - alpha) * table.log_z[k] + alpha * target


def z_learning_update(
    table: ZsaTable,
    s: str | int,
    a: str | int,
    r: float,
    s_next: str | int,
    terminal: bool,
    alpha: float,
) -> ZsaTable:
    """Z(s,a) ← Z(s,a)^{1−α} (e^{βr+μ} Σ_{a'} Z(s',a'))^α; log-alanda doğrusal interpolasyon.

    Yalnızca (s, a) girdisi değişir; yeni tablo döner.
    """
    k = table.pair(s, a)
    log_z = table.log_z.copy()
    log_z[k] = _interpolated_log_z(table, k, r, table.mdp.index(s_next), terminal, alpha)
    return replace(table, log_z=log_z, converged=False)


def expected_sarsa_update(
    q: QTable,
    weights_from: ZsaTable,
    s: str | int,
    a: str | int,
    r: float,
    s_next: str | int,
    alpha: float,
    terminal: bool = False,
) -> QTable:
    """Q(s,a) ← (1−α)Q(s,a) + α(r + Σ_{a'} w(a'|s') Q(s',a')), w = Z(s',a') / Σ Z(s',·)."""
    mdp = q.mdp
    k = weights_from.pair(s, a)
    j = mdp.index(s_next)
    if terminal:
        cont = mdp.terminal_reward(j)
    else:
        start = mdp.edges.pair_offset[j]
        if start < 0:
            raise SolverError(f"{mdp.states[j]} terminal; terminal=True verilmeli")
        stop = start + len(mdp.actions[j])
        logits = weights_from.log_z[start:stop]
        w = np.exp(logits - np.logaddexp.reduce(logits))
        cont = float(w @ q.q[start:stop])
    values = q.q.copy()
    values[k] = (1.0 - alpha) * values[k] + alpha * (r + cont)
    return replace(q, q=values)


# === KEŞİF ===
def select_action(table: ZsaTable, s: str | int, cfg: AgentConfig, rng: np.random.Generator) -> str:
    """epsilon_greedy: 1−ε olasılıkla argmax (eşitlikte en düşük indeks); boltzmann_like: Gumbel-max ile ∝ Z(s,a)."""
    mdp = table.mdp
    i = mdp.index(s)
    if mdp.is_terminal(i):
        raise SolverError(f"{mdp.states[i]} terminal; eylem seçilemez")
    start = mdp.edges.pair_offset[i]
    values = table.log_z[start:start + len(mdp.actions[i])]

    if cfg.exploration == "boltzmann_like":
        slot = int(np.argmax(values + rng.gumbel(size=values.size)))
    elif rng.random() < cfg.epsilon:
        slot = int(rng.integers(values.size))
    else:
        slot = int(np.argmax(values))
    return mdp.actions[i][slot]


def greedy_policy(table: ZsaTable) -> dict[str, str]:
    """Terminal olmayan her durum için argmax_a log Z(s, a)."""
    mdp = table.mdp
    e = mdp.edges
    policy = {}
    for s in e.nonterminal:
        start = e.pair_offset[s]
        slot = int(np.argmax(table.log_z[start:start + len(mdp.actions[s])]))
        policy[mdp.states[s]] = mdp.actions[s][slot]
    return policy


def zsa_policy(table: ZsaTable) -> PolicyTable:
    """π(a|s) = Z(s,a) / Σ_{a'} Z(s,a')."""
    return policy_from_pair_logits(table.mdp, table.log_z)


# === SİMÜLATÖR ===
def run_episodes(mdp: Mdp, cfg: AgentConfig, table: ZsaTable | None = None) -> LearningLog:
    """Tohumlu simülatörde Z-öğrenme; tüm rastgelelik tek üreteçten gelir.

    Stokastik ortamlarda öğrenilen sabit nokta ortalamalı Bellman çözümüne karşılık gelir.
    """
    report = require_valid(mdp)
    check_mu(report, cfg.mu)
    table = table or ZsaTable.initial(mdp, cfg.beta, cfg.mu)
    if (table.beta, table.mu) != (cfg.beta, cfg.mu):
        raise ConfigError(
            f"Tablo (beta={table.beta}, mu={table.mu}) ile ajan ayarları (beta={cfg.beta}, mu={cfg.mu}) uyuşmuyor"
        )
    if cfg.episodes == 0:
        return LearningLog(records=[], table=table)

    rng = np.random.default_rng(cfg.seed)
    e = mdp.edges
    log_z = table.log_z.copy()
    visits = np.zeros(e.n_pairs, dtype=np.int64)
    live = e.nonterminal
    max_steps = cfg.max_steps or 100 * mdp.n_states
    start_fixed = None if cfg.start_state is None else mdp.index(cfg.start_state)
    if start_fixed is not None and mdp.is_terminal(start_fixed):
        raise SolverError(f"Başlangıç durumu terminal: {cfg.start_state}")
    if start_fixed is None and live.size == 0:
        raise SolverError("Terminal olmayan durum yok; bölüm başlatılamaz")

    records, truncated_count = [], 0
    for episode in range(cfg.episodes):
        before = log_z.copy()
        s = start_fixed if start_fixed is not None else int(live[rng.integers(live.size)])
        rewards, length, truncated = [], 0, False
        while not mdp.is_terminal(s):
            if length >= max_steps:
                truncated = True
                break
            current = replace(table, log_z=log_z)
            slot = mdp.action_slot(s, select_action(current, s, cfg, rng))
            outs = [o for o in mdp.outcomes[s][slot] if o.prob > 0.0]
            o = outs[0] if len(outs) == 1 else outs[rng.choice(len(outs), p=[x.prob for x in outs])]

            k = e.pair_index(s, slot)
            visits[k] += 1
            alpha = cfg.step_size(int(visits[k]), episode)
            terminal = mdp.is_terminal(o.next_state)
            log_z[k] = _interpolated_log_z(current, k, o.reward, o.next_state, terminal, alpha)

            rewards.append(o.reward)
            length += 1
            s = o.next_state

        if not truncated:
            rewards.append(mdp.terminal_reward(s))
        truncated_count += truncated
        records.append({
            "episode": episode,
            "return": math.fsum(rewards),
            "length": length,
            "delta": float(np.max(np.abs(log_z - before))) if log_z.size else 0.0,
            "truncated": truncated,
        })

    if truncated_count:
        logger.warning(f"{truncated_count}/{cfg.episodes} bölüm {max_steps} adım sınırında kesildi")
    logger.info(f"run_episodes: {cfg.episodes} bölüm tamamlandı")
    return LearningLog(
        records=records,
        table=replace(table, log_z=log_z, converged=False),
        truncated_episodes=truncated_count,
    )
