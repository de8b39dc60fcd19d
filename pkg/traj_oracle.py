"""
BolumZ - Yörünge Kahini
Ω(s) ve Ω(s,a) yörünge kümelerini kaba kuvvetle sayarak referans bölüm fonksiyonları,
kuyruk sınırları ve N_max entropik çarpanını hesaplar. Tüm çözücüler buna karşı sınanır.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import logsumexp

import config
from mdp_core import Mdp, SolverError, check_mu, require_valid

logger = logging.getLogger(__name__)

# Ödül toplamları arasındaki eşitlik toleransı (N_max)
TIE_TOL = 1e-12
# logsumexp'e verilmeden önce biriktirilen log-ağırlık sayısı
_CHUNK = 4096


# === VERİ TİPLERİ ===
@dataclass(frozen=True)
class Trajectory:
    """Bir terminal duruma ulaşan (durum, eylem, ödül) dizisi."""

    steps: tuple[tuple[str, str, float], ...]
    terminal_state: str
    length: int
    energy: float
    log_likelihood: float = 0.0


@dataclass(frozen=True)
class OracleResult:
    log_z_estimate: float
    tail_bound: float
    n_trajectories_enumerated: int
    truncated: bool
    max_len: int = 0


@dataclass
class EnumerationStats:
    """iter_trajectories'in yan çıktısı: üretilen yörünge sayısı ve kesilme bilgisi."""

    count: int = 0
    truncated: bool = False
    cap: int = field(default_factory=lambda: config.ORACLE_CAP)


# === SAYIM ===
def default_max_len(mdp: Mdp, has_cycles: bool) -> int:
    """Döngülü MDP'de 10·|S|; döngüsüzde |S| (hiçbir yol daha uzun olamaz)."""
    if has_cycles:
        return config.CYCLIC_MAX_LEN_FACTOR * mdp.n_states
    return mdp.n_states


def iter_trajectories(
    mdp: Mdp,
    s: str | int,
    max_len: int,
    first_action: str | int | None = None,
    stats: EnumerationStats | None = None,
) -> Iterator[Trajectory]:
    """Ω(s) (ya da first_action verilirse Ω(s,a)) içindeki |ω| <= max_len yörüngeleri derinlik öncelikli üretir.

    Açık yığın kullanılır; üretilen yörünge sayısı stats.cap'i aşarsa SolverError.
    Eylemler ve inişler dosya sırasıyla gezilir.
    """
    stats = stats if stats is not None else EnumerationStats()
    start = mdp.index(s)

    if mdp.is_terminal(start):
        if first_action is not None:
            raise SolverError(f"{mdp.states[start]} terminal; eylem seçilemez")
        stats.count += 1
        yield Trajectory((), mdp.states[start], 0, -mdp.terminal_reward(start))
        return

    slots = range(len(mdp.actions[start]))
    if first_action is not None:
        slots = [mdp.action_slot(start, first_action)]

    # yığın girdisi: (durum, bu durumda denenecek eylem dilimleri, adımlar, log olabilirlik)
    stack = [(start, tuple(slots), (), 0.0)]
    while stack:
        state, allowed, steps, log_lik = stack.pop()
        if mdp.is_terminal(state):
            stats.count += 1
            if stats.count > stats.cap:
                raise SolverError(
                    f"Yörünge sınırı aşıldı ({stats.cap}); max_len'i düşürün ya da BOLUMZ_ORACLE_CAP'i artırın"
                )
            reward_sum = math.fsum(r for _, _, r in steps)
            yield Trajectory(
                steps=steps,
                terminal_state=mdp.states[state],
                length=len(steps),
                energy=-(reward_sum + mdp.terminal_reward(state)),
                log_likelihood=log_lik,
            )
            continue
        if len(steps) >= max_len:
            stats.truncated = True
            continue

        children = []
        for slot in allowed:
            action = mdp.actions[state][slot]
            for o in mdp.outcomes[state][slot]:
                if o.prob <= 0.0:
                    continue
                nxt = o.next_state
                children.append((
                    nxt,
                    tuple(range(len(mdp.actions[nxt]))),
                    steps + ((mdp.states[state], action, o.reward),),
                    log_lik + math.log(o.prob),
                ))
        stack.extend(reversed(children))


def _growth_factor(mdp: Mdp, d: int, weighted: bool) -> int:
    if weighted or mdp.is_deterministic:
        return d
    return max(
        (sum(1 for outs in mdp.outcomes[s] for o in outs if o.prob > 0.0) for s in range(mdp.n_states)),
        default=0,
    )


def _tail_bound(beta: float, k: float, x: float, max_len: int, longest: int | None) -> float:
    """e^{βK}·Σ_{max_len < n <= longest} x^n (longest None ise sonsuz seri)."""
    if longest is not None:
        n = np.arange(max_len + 1, longest + 1)
        series = float(np.sum(x ** n)) if n.size else 0.0
    else:
        series = x ** (max_len + 1) / (1.0 - x)
    with np.errstate(over="ignore"):
        return float(np.exp(beta * k) * series)


def _fold(
    mdp: Mdp,
    s: str | int,
    beta: float,
    mu: float,
    max_len: int | None,
    first_action: str | int | None,
    weighted: bool,
    cap: int | None,
) -> OracleResult:
    report = require_valid(mdp)
    check_mu(report, mu)
    x = _growth_factor(mdp, report.d, weighted) * math.exp(mu)
    if report.has_cycles and x >= 1.0:
        raise SolverError(
            f"Döngülü MDP'de Z ıraksar: büyüme çarpanı·e^mu = {x!r} >= 1; mu < -log d gerekli"
        )
    if max_len is None:
        max_len = default_max_len(mdp, report.has_cycles)

    stats = EnumerationStats() if cap is None else EnumerationStats(cap=cap)
    total, chunk = -np.inf, []
    for traj in iter_trajectories(mdp, s, max_len, first_action, stats):
        log_w = -beta * traj.energy + mu * traj.length
        if weighted:
            log_w += traj.log_likelihood
        chunk.append(log_w)
        if len(chunk) >= _CHUNK:
            total = np.logaddexp(total, logsumexp(chunk))
            chunk.clear()
    if chunk:
        total = np.logaddexp(total, logsumexp(chunk))

    tail = 0.0
    if stats.truncated:
        longest = None if report.has_cycles else int((~mdp.terminal_mask).sum())
        tail = _tail_bound(beta, report.r_terminal_max, x, max_len, longest)
        logger.debug(f"Sayım max_len={max_len}'de kesildi, kuyruk sınırı {tail:.3e}")

    return OracleResult(
        log_z_estimate=float(total),
        tail_bound=tail,
        n_trajectories_enumerated=stats.count,
        truncated=stats.truncated,
        max_len=max_len,
    )


def enumerate_z(
    mdp: Mdp, s: str | int, beta: float, mu: float, max_len: int | None = None, cap: int | None = None
) -> OracleResult:
    """log Σ_{ω∈Ω(s)} e^{−βE(ω)+μ|ω|}, |ω| <= max_len."""
    return _fold(mdp, s, beta, mu, max_len, None, weighted=False, cap=cap)


def enumerate_z_sa(
    mdp: Mdp,
    s: str | int,
    a: str | int,
    beta: float,
    mu: float,
    max_len: int | None = None,
    cap: int | None = None,
) -> OracleResult:
    """Ω(s,a) ile sınırlı toplam: ilk adımı (s, a) olan yörüngeler."""
    return _fold(mdp, s, beta, mu, max_len, a, weighted=False, cap=cap)


def enumerate_z_stochastic(
    mdp: Mdp, s: str | int, beta: float, mu: float, max_len: int | None = None, cap: int | None = None
) -> OracleResult:
    """Olabilirlik ağırlıklı toplam: e^{−βE(ω)+μ|ω|+L(ω)}. Deterministik MDP'de enumerate_z ile aynıdır."""
    return _fold(mdp, s, beta, mu, max_len, None, weighted=True, cap=cap)


def enumerate_n_max(
    mdp: Mdp, s: str | int, mu: float, max_len: int | None = None, cap: int | None = None
) -> tuple[float, float]:
    """(v*, N_max): en iyi kümülatif ödül ve onu veren yörüngelerin Σ e^{μ|ω|} ağırlığı."""
    report = require_valid(mdp)
    if max_len is None:
        if report.has_cycles:
            raise SolverError("Döngülü MDP'de Ω(s) sonsuz; N_max için max_len gerekli")
        max_len = default_max_len(mdp, False)

    stats = EnumerationStats() if cap is None else EnumerationStats(cap=cap)
    v_star, weights = -math.inf, []
    for traj in iter_trajectories(mdp, s, max_len, stats=stats):
        value = -traj.energy
        if value > v_star + TIE_TOL:
            v_star, weights = value, [mu * traj.length]
        elif abs(value - v_star) <= TIE_TOL:
            weights.append(mu * traj.length)
    if not weights:
        raise SolverError(
            f"{mdp.states[mdp.index(s)]} için max_len={max_len} içinde terminale ulaşan yörünge yok"
        )
    if stats.truncated:
        logger.debug(f"N_max sayımı max_len={max_len}'de kesildi")
    return v_star, float(np.exp(logsumexp(weights)))
