"""
BolumZ - MDP Çekirdeği
Sonlu MDP veri modeli, varsayım doğrulaması, ödül kaydırma ve tohumlu test örnekleri.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property
from graphlib import CycleError, TopologicalSorter
from typing import Any, Iterable, Mapping

import numpy as np

import config

logger = logging.getLogger(__name__)

# Bellekteki olasılık toleransı; dosyadan okurken 1e-9 kabul edilip normalize edilir
PROB_TOL = 1e-12
LOAD_PROB_TOL = 1e-9


# === HATALAR ===
class BolumZError(Exception):
    """Tüm BolumZ hatalarının kökü."""


class ConfigError(BolumZError, ValueError):
    """Aralık dışı konfigürasyon veya üretici parametresi."""


class MdpFormatError(BolumZError):
    """Okunamayan ya da şemaya uymayan MDP tanımı."""


class MdpValidationError(BolumZError):
    """Değişmezleri bozulmuş bir MDP çözücüye verildi."""

    def __init__(self, violations: Iterable[str]):
        self.violations = tuple(violations)
        super().__init__("MDP doğrulanamadı: " + "; ".join(self.violations))


class SolverError(BolumZError):
    """Çözücü reddi: ıraksama koşulu, tekil sistem, yakınsamamış girdi vb."""


# === VERİ MODELİ ===
@dataclass(frozen=True)
class Outcome:
    """(s, a) çiftinin tek bir iniş sonucu."""

    next_state: int
    prob: float
    reward: float


@dataclass(frozen=True, eq=False)
class EdgeTable:
    """Vektörel çözücüler için düzleştirilmiş (durum, eylem) çiftleri ve kenarlar.

    Çiftler durum sırasıyla, her durumun içinde eylem sırasıyla dizilir;
    kenarlar da çift sırasıyla. Sıfır olasılıklı sonuçlar kenar listesine girmez.
    """

    pair_state: np.ndarray
    pair_slot: np.ndarray
    pair_start: np.ndarray
    pair_offset: np.ndarray
    state_start: np.ndarray
    nonterminal: np.ndarray
    edge_pair: np.ndarray
    edge_dst: np.ndarray
    edge_prob: np.ndarray
    edge_reward: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.pair_state.size)

    def pair_index(self, s: int, slot: int) -> int:
        return int(self.pair_offset[s]) + slot


@dataclass(frozen=True)
class Mdp:
    """Sonlu MDP: durumlar, durum başına eylemler, stokastik geçişler, terminal ödüller.

    Kimlikler dosya sırasındaki yoğun indekslere eşlenir; matris düzenleri bu sırayı izler.
    `terminal_rewards[s]` terminal olmayan durumlar için None'dır.
    """

    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    outcomes: tuple[tuple[tuple[Outcome, ...], ...], ...]
    terminal_rewards: tuple[float | None, ...]
    reward_shift: float = 0.0

    @property
    def n_states(self) -> int:
        return len(self.states)

    @cached_property
    def _state_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.states)}

    def index(self, state: str | int) -> int:
        """Durum adını (ya da indeksini) yoğun indekse çevirir."""
        if isinstance(state, (int, np.integer)):
            if 0 <= state < self.n_states:
                return int(state)
            raise SolverError(f"Bilinmeyen durum indeksi: {state}")
        try:
            return self._state_index[state]
        except KeyError:
            raise SolverError(f"Bilinmeyen durum: {state}") from None

    def action_slot(self, s: int, action: str | int) -> int:
        """s durumundaki eylemin sırasını döndürür."""
        names = self.actions[s]
        if isinstance(action, (int, np.integer)):
            if 0 <= action < len(names):
                return int(action)
        elif action in names:
            return names.index(action)
        raise SolverError(f"Bilinmeyen eylem: {self.states[s]} durumunda {action!r}")

    def is_terminal(self, s: int) -> bool:
        return self.terminal_rewards[s] is not None

    def terminal_reward(self, s: int) -> float:
        reward = self.terminal_rewards[s]
        if reward is None:
            raise SolverError(f"{self.states[s]} terminal bir durum değil")
        return reward

    @cached_property
    def terminal_mask(self) -> np.ndarray:
        return np.array([r is not None for r in self.terminal_rewards], dtype=bool)

    @cached_property
    def terminal_values(self) -> np.ndarray:
        """Terminal ödüller; terminal olmayan durumlar için 0."""
        return np.array([0.0 if r is None else r for r in self.terminal_rewards])

    @cached_property
    def is_deterministic(self) -> bool:
        for s, per_action in enumerate(self.outcomes):
            if self.is_terminal(s):
                continue
            for outs in per_action:
                if sum(1 for o in outs if o.prob > 0.0) != 1:
                    return False
        return True

    @cached_property
    def max_actions(self) -> int:
        """d: terminal olmayan durumlardaki en büyük eylem sayısı (yoksa 0)."""
        counts = [len(self.actions[s]) for s in range(self.n_states) if not self.is_terminal(s)]
        return max(counts, default=0)

    def has_uniform_actions(self) -> bool:
        """Terminal olmayan tüm durumlar aynı eylem kümesini mi paylaşıyor?"""
        sets = {self.actions[s] for s in range(self.n_states) if not self.is_terminal(s)}
        return len(sets) <= 1

    def successor(self, s: int, slot: int) -> int:
        """Deterministik MDP'de s+a."""
        live = [o for o in self.outcomes[s][slot] if o.prob > 0.0]
        if len(live) != 1:
            raise SolverError(
                f"({self.states[s]}, {self.actions[s][slot]}) deterministik değil; stoch_planner kullanın"
            )
        return live[0].next_state

    def transition_rewards(self) -> list[float]:
        return [o.reward for per_action in self.outcomes for outs in per_action for o in outs]

    @cached_property
    def edges(self) -> EdgeTable:
        pair_state, pair_slot, pair_start = [], [], []
        edge_pair, edge_dst, edge_prob, edge_reward = [], [], [], []
        pair_offset = np.full(self.n_states, -1, dtype=np.int64)
        state_start, nonterminal = [], []

        for s in range(self.n_states):
            if self.is_terminal(s) or not self.actions[s]:
                continue
            pair_offset[s] = len(pair_state)
            state_start.append(len(pair_state))
            nonterminal.append(s)
            for slot, outs in enumerate(self.outcomes[s]):
                k = len(pair_state)
                pair_state.append(s)
                pair_slot.append(slot)
                pair_start.append(len(edge_pair))
                for o in outs:
                    if o.prob <= 0.0:
                        continue
                    edge_pair.append(k)
                    edge_dst.append(o.next_state)
                    edge_prob.append(o.prob)
                    edge_reward.append(o.reward)

        as_int = lambda xs: np.asarray(xs, dtype=np.int64)
        return EdgeTable(
            pair_state=as_int(pair_state),
            pair_slot=as_int(pair_slot),
            pair_start=as_int(pair_start),
            pair_offset=pair_offset,
            state_start=as_int(state_start),
            nonterminal=as_int(nonterminal),
            edge_pair=as_int(edge_pair),
            edge_dst=as_int(edge_dst),
            edge_prob=np.asarray(edge_prob, dtype=float),
            edge_reward=np.asarray(edge_reward, dtype=float),
        )


@dataclass(frozen=True)
class ValidationReport:
    """validate() çıktısı; ihlaller fırlatılmaz, listelenir."""

    is_deterministic: bool
    d: int
    r_terminal_max: float
    mu_threshold: float
    has_cycles: bool
    uniform_actions: bool
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def contraction_bound(self, mu: float) -> float:
        """d·e^μ: Bellman operatörünün sup-norm büzülme katsayısı."""
        return self.d * math.exp(mu)


@dataclass(frozen=True)
class SolverConfig:
    """Planlayıcıların ortak ayarları. max_iters None ise MDP'ye göre seçilir."""

    beta: float = config.DEFAULT_BETA
    mu: float = config.DEFAULT_MU
    gamma: float = config.DEFAULT_GAMMA
    tol: float = config.DEFAULT_TOL
    max_iters: int | None = None
    damping: float = config.DEFAULT_DAMPING
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        problems = []
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            problems.append(f"beta >= 0 olmalı (verilen {self.beta})")
        if not self.mu <= 0.0:
            problems.append(f"mu <= 0 olmalı (verilen {self.mu})")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma [0, 1) aralığında olmalı (verilen {self.gamma})")
        if not self.tol > 0.0:
            problems.append(f"tol > 0 olmalı (verilen {self.tol})")
        if self.max_iters is not None and self.max_iters < 1:
            problems.append(f"max_iters >= 1 olmalı (verilen {self.max_iters})")
        if not 0.0 < self.damping <= 1.0:
            problems.append(f"damping (0, 1] aralığında olmalı (verilen {self.damping})")
        if self.seed < 0:
            problems.append(f"seed negatif olamaz (verilen {self.seed})")
        if problems:
            raise ConfigError("; ".join(problems))

    def with_beta(self, beta: float) -> SolverConfig:
        return replace(self, beta=beta)


# === DOĞRULAMA ===
def _has_cycles(mdp: Mdp) -> bool:
    graph = {
        s: {o.next_state for outs in mdp.outcomes[s] for o in outs if o.prob > 0.0}
        for s in range(mdp.n_states)
    }
    try:
        tuple(TopologicalSorter(graph).static_order())
    except CycleError:
        return True
    return False


def _reaches_terminal(mdp: Mdp) -> np.ndarray:
    """Pozitif olasılıklı geçişlerle bir terminale ulaşabilen durumların maskesi."""
    parents: list[set[int]] = [set() for _ in range(mdp.n_states)]
    for s in range(mdp.n_states):
        for outs in mdp.outcomes[s]:
            for o in outs:
                if o.prob > 0.0:
                    parents[o.next_state].add(s)

    reached = mdp.terminal_mask.copy()
    frontier = deque(np.flatnonzero(reached).tolist())
    while frontier:
        for s in parents[frontier.popleft()]:
            if not reached[s]:
                reached[s] = True
                frontier.append(s)
    return reached


def validate(mdp: Mdp) -> ValidationReport:
    """MDP'nin standart varsayımlarını denetler ve raporlar."""
    violations = []

    for s, name in enumerate(mdp.states):
        if mdp.is_terminal(s):
            if any(mdp.outcomes[s]):
                violations.append(f"terminal durumun çıkan geçişi var: {name}")
            continue
        if not mdp.actions[s]:
            violations.append(f"terminal olmayan durumda eylem yok: {name}")
        for action, outs in zip(mdp.actions[s], mdp.outcomes[s]):
            probs = [o.prob for o in outs]
            if any(p < 0.0 for p in probs):
                violations.append(f"negatif olasılık: ({name}, {action})")
            total = math.fsum(probs)
            if abs(total - 1.0) > PROB_TOL:
                violations.append(f"olasılık toplamı 1 değil: ({name}, {action}) = {total!r}")
            for o in outs:
                if not math.isfinite(o.reward):
                    violations.append(f"sonlu olmayan ödül: ({name}, {action}, {mdp.states[o.next_state]})")
                elif o.reward > 0.0:
                    violations.append(
                        f"pozitif geçiş ödülü: ({name}, {action}, {mdp.states[o.next_state]}) = {o.reward!r}"
                    )

    for s, reward in enumerate(mdp.terminal_rewards):
        if reward is not None and not math.isfinite(reward):
            violations.append(f"sonlu olmayan terminal ödül: {mdp.states[s]}")

    # Ω(s) boş: Z(s) = 0
    reached = _reaches_terminal(mdp)
    for s in np.flatnonzero(~reached):
        violations.append(f"terminale ulaşamayan durum: {mdp.states[s]}")

    d = mdp.max_actions
    terminal = [r for r in mdp.terminal_rewards if r is not None]
    return ValidationReport(
        is_deterministic=mdp.is_deterministic,
        d=d,
        r_terminal_max=max(terminal, default=0.0),
        mu_threshold=-math.log(d) if d >= 1 else math.inf,
        has_cycles=_has_cycles(mdp),
        uniform_actions=mdp.has_uniform_actions(),
        violations=tuple(violations),
    )


def require_valid(mdp: Mdp) -> ValidationReport:
    """Çözücülerin ön koşulu: ihlal varsa MdpValidationError."""
    report = validate(mdp)
    if not report.ok:
        raise MdpValidationError(report.violations)
    return report


def check_mu(report: ValidationReport, mu: float) -> None:
    """μ < −log d koşulu: döngülü MDP'de ret, döngüsüz MDP'de sadece uyarı."""
    if report.d == 0 or mu < report.mu_threshold:
        return
    message = (
        f"mu = {mu!r} >= -log d = {report.mu_threshold!r} (d = {report.d}); "
        "Z'nin iyi tanımlı olması için mu < -log d gerekli"
    )
    if report.has_cycles:
        raise SolverError(f"Döngülü MDP'de Z ıraksar: {message}")
    logger.warning(f"Döngüsüz MDP, Ω(s) sonlu olduğu için devam ediliyor: {message}")


def resolve_max_iters(cfg: SolverConfig, mdp: Mdp, report: ValidationReport) -> int:
    """Varsayılan iterasyon sınırı: 10·⌈log(tol)/log(d·e^μ)⌉."""
    if cfg.max_iters is not None:
        return cfg.max_iters
    floor = 10 * (mdp.n_states + 1)
    rate = report.contraction_bound(cfg.mu)
    if 0.0 < rate < 1.0:
        return max(floor, 10 * math.ceil(math.log(cfg.tol) / math.log(rate)))
    return floor


# === DÖNÜŞÜMLER ===
def normalize_rewards(mdp: Mdp) -> Mdp:
    """Geçiş ödüllerini −R_max kadar kaydırır; en büyük geçiş ödülü tam 0 olur.

    Terminal ödüller değişmez. Uygulanan kayma `reward_shift`'e eklenir.
    """
    rewards = mdp.transition_rewards()
    if not rewards:
        return mdp
    r_max = max(rewards)
    if r_max == 0.0:
        return mdp
    outcomes = tuple(
        tuple(tuple(replace(o, reward=o.reward - r_max) for o in outs) for outs in per_action)
        for per_action in mdp.outcomes
    )
    logger.info(f"Geçiş ödülleri {r_max!r} kadar aşağı kaydırıldı")
    return replace(mdp, outcomes=outcomes, reward_shift=mdp.reward_shift + r_max)


# === KURULUM ===
def build_mdp(
    states: Iterable[str],
    terminal: Mapping[str, float],
    transitions: Iterable[Mapping[str, Any]],
    reward_shift: float = 0.0,
) -> Mdp:
    """Dosya şemasındaki yapılardan Mdp kurar.

    Şema hataları MdpFormatError fırlatır; 1 ± 1e-9 içindeki olasılıklar tam normalize edilir.
    reward_shift, normalize_rewards ile daha önce uygulanmış kaymadır.
    """
    states = tuple(str(s) for s in states)
    if not states:
        raise MdpFormatError("durum listesi boş")
    try:
        reward_shift = float(reward_shift)
    except (TypeError, ValueError):
        raise MdpFormatError(f"reward_shift sayı olmalı: {reward_shift!r}") from None
    index = {name: i for i, name in enumerate(states)}
    if len(index) != len(states):
        raise MdpFormatError("yinelenen durum kimliği")

    terminal_rewards: list[float | None] = [None] * len(states)
    for name, reward in terminal.items():
        if name not in index:
            raise MdpFormatError(f"terminal listesinde bilinmeyen durum: {name}")
        terminal_rewards[index[name]] = float(reward)

    actions: list[list[str]] = [[] for _ in states]
    outcomes: list[list[tuple[Outcome, ...]]] = [[] for _ in states]
    for block in transitions:
        try:
            src, action, targets = block["from"], str(block["action"]), block["to"]
        except (KeyError, TypeError):
            raise MdpFormatError(f"geçiş bloğunda from/action/to eksik: {block!r}") from None
        if src not in index:
            raise MdpFormatError(f"bilinmeyen kaynak durum: {src}")
        s = index[src]
        if action in actions[s]:
            raise MdpFormatError(f"yinelenen (from, action) bloğu: ({src}, {action})")

        outs = []
        for target in targets:
            try:
                dst, prob, reward = target["state"], float(target["prob"]), float(target["reward"])
            except (KeyError, TypeError, ValueError):
                raise MdpFormatError(f"hatalı hedef kaydı: {target!r}") from None
            if dst not in index:
                raise MdpFormatError(f"bilinmeyen hedef durum: {dst}")
            outs.append(Outcome(index[dst], prob, reward))

        total = math.fsum(o.prob for o in outs)
        if abs(total - 1.0) > LOAD_PROB_TOL:
            raise MdpFormatError(f"olasılık toplamı 1 ± 1e-9 değil: ({src}, {action}) = {total!r}")
        if abs(total - 1.0) > PROB_TOL:
            outs = [replace(o, prob=o.prob / total) for o in outs]

        actions[s].append(action)
        outcomes[s].append(tuple(outs))

    return Mdp(
        states=states,
        actions=tuple(tuple(a) for a in actions),
        outcomes=tuple(tuple(o) for o in outcomes),
        terminal_rewards=tuple(terminal_rewards),
        reward_shift=reward_shift,
    )


def to_spec(mdp: Mdp) -> dict:
    """Mdp'yi dosya şemasına çevirir (build_mdp'nin tersi)."""
    terminal = {
        name: reward for name, reward in zip(mdp.states, mdp.terminal_rewards) if reward is not None
    }
    transitions = []
    for s, name in enumerate(mdp.states):
        for action, outs in zip(mdp.actions[s], mdp.outcomes[s]):
            transitions.append({
                "from": name,
                "action": action,
                "to": [
                    {"state": mdp.states[o.next_state], "prob": o.prob, "reward": o.reward}
                    for o in outs
                ],
            })
    spec = {"states": list(mdp.states), "terminal": terminal, "transitions": transitions}
    if mdp.reward_shift:
        spec["reward_shift"] = mdp.reward_shift
    return spec


# === ÜRETİCİLER ===
def random_mdp(
    n_states: int,
    d: int,
    branching: int,
    deterministic: bool,
    acyclic: bool,
    seed: int,
    uniform_actions: bool = False,
) -> Mdp:
    """Tohumlu, tekrarlanabilir rastgele MDP.

    Son max(1, n/4) durum terminaldir. Döngüsüz modda geçişler yalnızca ileri gider.
    Geçiş ödülleri {0, -0.25, -0.5, -0.75}, terminal ödüller [-1, 1] içinde 0.25 adımlıdır.
    """
    if n_states < 2:
        raise ConfigError(f"n_states >= 2 olmalı (verilen {n_states})")
    if d < 1 or branching < 1:
        raise ConfigError(f"d >= 1 ve branching >= 1 olmalı (verilen d={d}, branching={branching})")

    rng = np.random.default_rng(seed)
    n_terminal = max(1, n_states // 4)
    n_live = n_states - n_terminal
    names = [f"s{i}" for i in range(n_states)]

    actions, outcomes = [], []
    for i in range(n_live):
        k = d if uniform_actions else int(rng.integers(1, d + 1))
        forward = np.arange(i + 1, n_states)
        pool = forward if acyclic else np.arange(n_states)
        per_action = []
        for j in range(k):
            m = 1 if deterministic else min(branching, pool.size)
            # döngülü modda ilk eylem ileri gider: her durumdan bir terminale yol var
            if not acyclic and j == 0:
                first = rng.choice(forward)
                rest = rng.choice(pool[pool != first], size=m - 1, replace=False)
                dsts = np.concatenate(([first], rest))
            else:
                dsts = rng.choice(pool, size=m, replace=False)
            probs = np.ones(1) if m == 1 else rng.dirichlet(np.ones(m))
            rewards = -rng.integers(0, 4, size=m) / 4.0
            per_action.append(tuple(
                Outcome(int(dst), float(p), float(r)) for dst, p, r in zip(dsts, probs, rewards)
            ))
        actions.append(tuple(f"a{j}" for j in range(k)))
        outcomes.append(tuple(per_action))

    terminal_draws = rng.integers(-4, 5, size=n_terminal) / 4.0
    terminal_rewards = [None] * n_live + [float(r) for r in terminal_draws]
    actions += [()] * n_terminal
    outcomes += [()] * n_terminal

    return Mdp(
        states=tuple(names),
        actions=tuple(actions),
        outcomes=tuple(outcomes),
        terminal_rewards=tuple(terminal_rewards),
    )


GRID_MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


def gridworld_mdp(
    rows: int = 4,
    cols: int = 4,
    goal: tuple[int, int] | None = None,
    step_reward: float = -1.0,
    jitter: float = 0.0,
    seed: int = 0,
) -> Mdp:
    """Deterministik ızgara dünyası; duvara çarpan eylem yerinde kalır.

    Girilen hücrenin maliyeti step_reward − jitter·u (u ∈ [0,1), hücre başına tohumlu)
    olduğundan eşit uzunluktaki rotalar arasındaki kesin eşitlikler bozulur.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ConfigError(f"ızgara en az 2 hücre içermeli (verilen {rows}x{cols})")
    if step_reward > 0.0 or jitter < 0.0:
        raise ConfigError("step_reward <= 0 ve jitter >= 0 olmalı")
    goal = goal or (rows - 1, cols - 1)

    rng = np.random.default_rng(seed)
    cell_reward = step_reward - jitter * rng.random((rows, cols))
    name = lambda r, c: f"r{r}c{c}"

    states, terminal, transitions = [], {name(*goal): 0.0}, []
    for r in range(rows):
        for c in range(cols):
            states.append(name(r, c))
            if (r, c) == goal:
                continue
            for action, (dr, dc) in GRID_MOVES.items():
                nr, nc = r + dr, c + dc
                if not (0 <= nr < rows and 0 <= nc < cols):
                    nr, nc = r, c
                transitions.append({
                    "from": name(r, c),
                    "action": action,
                    "to": [{"state": name(nr, nc), "prob": 1.0, "reward": float(cell_reward[nr, nc])}],
                })
    return build_mdp(states, terminal, transitions)
