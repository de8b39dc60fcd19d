"""
BolumZ - Deterministik Planlayıcı
Doğrusal Z Bellman denklemini kuvvet iterasyonu ve doğrudan doğrusal çözümle çözer,
değer fonksiyonunu ve politikayı Z'den türetir, Boltzmann karşılaştırma tabanını sağlar.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve

from mdp_core import (
    Mdp, SolverConfig, SolverError,
    check_mu, require_valid, resolve_max_iters,
)

logger = logging.getLogger(__name__)

# Politika satırlarının analitik normalizasyon toleransı
POLICY_NORM_TOL = 1e-10


# === TABLOLAR ===
@dataclass(frozen=True, eq=False)
class ZTable:
    """Sabit (β, μ) için durum başına log Z."""

    states: tuple[str, ...]
    log_z: np.ndarray
    beta: float
    mu: float
    residual: float
    iterations: int
    converged: bool
    tol: float
    method: str
    linear_deltas: tuple[float, ...] = ()

    def __getitem__(self, state: str) -> float:
        return float(self.log_z[self.states.index(state)])

    def as_dict(self) -> dict[str, float]:
        return {s: float(v) for s, v in zip(self.states, self.log_z)}

    def records(self) -> list[dict]:
        return [{"state": s, "log_z": float(v)} for s, v in zip(self.states, self.log_z)]


@dataclass(frozen=True, eq=False)
class TransitionOperator:
    """C(β): seyrek |S|×|S| Bellman matrisi (satır: kaynak, sütun: ardıl)."""

    states: tuple[str, ...]
    matrix: sp.csr_matrix
    beta: float
    mu: float


@dataclass(frozen=True, eq=False)
class VTable:
    """V(s, β) = ∂β log Z; terminal durumlarda V = R(s_f)."""

    states: tuple[str, ...]
    v: np.ndarray
    beta: float
    method: str
    converged: bool = True
    residual: float = 0.0
    iterations: int = 0

    def __getitem__(self, state: str) -> float:
        return float(self.v[self.states.index(state)])

    def records(self) -> list[dict]:
        return [{"state": s, "v": float(x)} for s, x in zip(self.states, self.v)]


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Durum başına eylem dağılımı; çiftler EdgeTable sırasındadır."""

    states: tuple[str, ...]
    pair_state: np.ndarray
    pair_action: tuple[str, ...]
    probs: np.ndarray
    normalization_error: float = 0.0

    @property
    def pi(self) -> dict[tuple[str, str], float]:
        return {
            (self.states[s], a): float(p)
            for s, a, p in zip(self.pair_state, self.pair_action, self.probs)
        }

    def row(self, state: str) -> dict[str, float]:
        s = self.states.index(state)
        return {
            a: float(p)
            for k, (a, p) in enumerate(zip(self.pair_action, self.probs))
            if self.pair_state[k] == s
        }

    def prob(self, state: str, action: str) -> float:
        return self.row(state)[action]

    def records(self) -> list[dict]:
        return [
            {"state": self.states[s], "action": a, "prob": float(p)}
            for s, a, p in zip(self.pair_state, self.pair_action, self.probs)
        ]


# === LOG-ALAN YARDIMCILARI ===
def _group_counts(starts: np.ndarray, total: int) -> np.ndarray:
    return np.diff(np.append(starts, total))


def grouped_logsumexp(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Ardışık gruplar üzerinde kararlı log-sum-exp (gruplar starts ile başlar)."""
    if starts.size == 0:
        return np.empty(0)
    peak = np.maximum.reduceat(values, starts)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    shifted = values - np.repeat(safe, _group_counts(starts, values.size))
    with np.errstate(divide="ignore"):
        return safe + np.log(np.add.reduceat(np.exp(shifted), starts))


def pair_log_targets(mdp: Mdp, log_z: np.ndarray, beta: float, mu: float, mode: str) -> np.ndarray:
    """Her (s, a) çifti için log katkı.

    naive:     log Σ_s' P(s'|s,a) e^{βR+μ} Z(s')
    geometric: Σ_s' P(s'|s,a) [βR + μ + log Z(s')]
    """
    e = mdp.edges
    exponent = beta * e.edge_reward + mu + log_z[e.edge_dst]
    if mode == "naive":
        return grouped_logsumexp(np.log(e.edge_prob) + exponent, e.pair_start)
    if mode == "geometric":
        return np.add.reduceat(e.edge_prob * exponent, e.pair_start)
    raise ValueError(f"Bilinmeyen Bellman modu: {mode}")


def bellman_log(mdp: Mdp, log_z: np.ndarray, beta: float, mu: float, mode: str = "naive") -> np.ndarray:
    """Log-alanda tek Bellman taraması; terminal durumlar β·R(s_f)'ye sabitlenir."""
    e = mdp.edges
    out = beta * mdp.terminal_values.copy()
    if e.n_pairs:
        per_pair = pair_log_targets(mdp, log_z, beta, mu, mode)
        out[e.nonterminal] = grouped_logsumexp(per_pair, e.state_start)
    return out


def _sup_change(new: np.ndarray, old: np.ndarray) -> float:
    if new.size == 0:
        return 0.0
    with np.errstate(invalid="ignore"):
        diff = np.where(new == old, 0.0, np.abs(new - old))
    return float(np.max(diff))


def solve_log_fixed_point(
    mdp: Mdp,
    cfg: SolverConfig,
    mode: str,
    method: str,
    init_log_z: np.ndarray | None = None,
    damping: float = 1.0,
) -> ZTable:
    """Log-alan sabit nokta iterasyonu; deterministik, ortalamalı ve geometrik Bellman'ın ortak motoru."""
    report = require_valid(mdp)
    check_mu(report, cfg.mu)
    max_iters = resolve_max_iters(cfg, mdp, report)
    live = ~mdp.terminal_mask
    boundary = cfg.beta * mdp.terminal_values

    if init_log_z is None:
        r_floor = min(min(mdp.transition_rewards(), default=0.0), 0.0)
        log_z = np.full(mdp.n_states, cfg.beta * r_floor * mdp.n_states)
    else:
        log_z = np.array(init_log_z, dtype=float)
    log_z[~live] = boundary[~live]

    logger.info(f"{method}: β={cfg.beta}, μ={cfg.mu}, en fazla {max_iters} tarama")
    linear_deltas = []
    iterations = 0
    for iterations in range(1, max_iters + 1):
        target = bellman_log(mdp, log_z, cfg.beta, cfg.mu, mode)
        if damping == 1.0:
            new = target
        else:
            with np.errstate(invalid="ignore"):
                new = np.where(np.isneginf(target), -np.inf, (1.0 - damping) * log_z + damping * target)
        delta = _sup_change(new[live], log_z[live])
        linear_deltas.append(_sup_change(np.exp(new[live]), np.exp(log_z[live])))
        log_z = new
        if delta < cfg.tol:
            break

    residual = _sup_change(bellman_log(mdp, log_z, cfg.beta, cfg.mu, mode)[live], log_z[live])
    converged = residual <= cfg.tol
    if converged:
        logger.info(f"{method}: {iterations} taramada yakınsadı (artık {residual:.3e})")
    else:
        logger.warning(f"{method}: {iterations} taramada yakınsamadı (artık {residual:.3e} > tol {cfg.tol:.1e})")

    return ZTable(
        states=mdp.states,
        log_z=log_z,
        beta=cfg.beta,
        mu=cfg.mu,
        residual=residual,
        iterations=iterations,
        converged=converged,
        tol=cfg.tol,
        method=method,
        linear_deltas=tuple(linear_deltas),
    )


def _require_deterministic(mdp: Mdp) -> None:
    if not mdp.is_deterministic:
        raise SolverError("Stokastik MDP: deterministik planlayıcı yerine stoch_planner kullanın")


def _require_converged(z: ZTable) -> None:
    if not z.converged:
        raise SolverError(f"Z tablosu yakınsamamış (artık {z.residual:.3e} > tol {z.tol:.1e})")


# === OPERATÖR ===
def build_transition_operator(mdp: Mdp, beta: float, mu: float) -> TransitionOperator:
    """C(β)_{s,s'} = 1_{s→s'} e^{βR(s→s')+μ} + 1_{s=s'=terminal}.

    Aynı s→s' geçişine giden birden çok eylem tek girdide toplanır.
    """
    require_valid(mdp)
    _require_deterministic(mdp)
    e = mdp.edges
    terminals = np.flatnonzero(mdp.terminal_mask)
    rows = np.concatenate([e.pair_state[e.edge_pair], terminals])
    cols = np.concatenate([e.edge_dst, terminals])
    data = np.concatenate([np.exp(beta * e.edge_reward + mu), np.ones(terminals.size)])
    matrix = sp.coo_matrix((data, (rows, cols)), shape=(mdp.n_states, mdp.n_states)).tocsr()
    return TransitionOperator(states=mdp.states, matrix=matrix, beta=beta, mu=mu)


# === ÇÖZÜCÜLER ===
def z_power_iteration(mdp: Mdp, cfg: SolverConfig, init_log_z: np.ndarray | None = None) -> ZTable:
    """Z_{n+1} = C(β) Z_n kuvvet yöntemi, log-alanda."""
    _require_deterministic(mdp)
    return solve_log_fixed_point(mdp, cfg, mode="naive", method="power", init_log_z=init_log_z)


def z_linear_solve(mdp: Mdp, cfg: SolverConfig) -> ZTable:
    """[I − C(β)] Z = 0 sistemini sınır koşullarıyla çözer.

    Terminal değerler sabitlenir, (I − C_NN) z_N = C_NT z_T indirgenmiş sistemi satır/sütun
    dengelemesiyle doğrusal ölçekte çözülür. Yalnızca ılımlı β için güvenilirdir (|βR| ≲ 300).
    """
    report = require_valid(mdp)
    _require_deterministic(mdp)
    check_mu(report, cfg.mu)

    term = mdp.terminal_mask
    live = ~term
    log_z = cfg.beta * mdp.terminal_values

    if live.any():
        # doğrusal sistem ölçekten bağımsız: sınır değerlerini en büyüğüne göre kaydır
        shift = float(np.max(log_z[term])) if term.any() else 0.0
        z_t = np.exp(log_z[term] - shift)
        c = build_transition_operator(mdp, cfg.beta, cfg.mu).matrix
        c_live = c[live]
        a = (sp.identity(int(live.sum()), format="csr") - c_live[:, live]).tocsr()
        b = c_live[:, term] @ z_t

        row_scale = abs(a).max(axis=1).toarray().ravel()
        if np.any(row_scale == 0.0):
            raise SolverError("İndirgenmiş sistem tekil (sıfır satır): d·e^μ >= 1 ya da yapısal kusur")
        a = sp.diags(1.0 / row_scale) @ a
        col_scale = abs(a).max(axis=0).toarray().ravel()
        if np.any(col_scale == 0.0):
            raise SolverError("İndirgenmiş sistem tekil (sıfır sütun): d·e^μ >= 1 ya da yapısal kusur")
        a = (a @ sp.diags(1.0 / col_scale)).tocsc()

        try:
            y = splu(a).solve(b / row_scale)
        except RuntimeError as exc:
            raise SolverError(f"İndirgenmiş sistem makine hassasiyetinde tekil: {exc}") from exc
        z_n = y / col_scale
        if not np.all(np.isfinite(z_n)):
            raise SolverError("İndirgenmiş sistem çözümü sonlu değil: d·e^μ >= 1 ya da yapısal kusur")
        if np.any(z_n <= 0.0):
            bad = [mdp.states[s] for s, z in zip(np.flatnonzero(live), z_n) if z <= 0.0]
            raise SolverError(f"Pozitif olmayan Z bileşeni: {', '.join(bad)}")
        log_z[live] = np.log(z_n) + shift

    residual = _sup_change(bellman_log(mdp, log_z, cfg.beta, cfg.mu)[live], log_z[live])
    logger.info(f"linear: β={cfg.beta}, μ={cfg.mu}, artık {residual:.3e}")
    return ZTable(
        states=mdp.states,
        log_z=log_z,
        beta=cfg.beta,
        mu=cfg.mu,
        residual=residual,
        iterations=1,
        converged=residual <= max(cfg.tol, 1e-10),
        tol=cfg.tol,
        method="linear",
    )


# === POLİTİKA VE DEĞER ===
def policy_from_pair_logits(mdp: Mdp, logits: np.ndarray, log_z: np.ndarray | None = None) -> PolicyTable:
    """Çift logitlerini durum başına normalize eder.

    log_z verilirse Σ_a e^{logit − log Z(s)} ile 1 arasındaki fark normalizasyon hatası olarak raporlanır.
    """
    e = mdp.edges
    norm = grouped_logsumexp(logits, e.state_start)
    counts = _group_counts(e.state_start, e.n_pairs)
    probs = np.exp(logits - np.repeat(norm, counts))

    error = 0.0
    if log_z is not None and e.n_pairs:
        raw = np.exp(logits - log_z[e.pair_state])
        error = float(np.max(np.abs(np.add.reduceat(raw, e.state_start) - 1.0)))
        if error > POLICY_NORM_TOL:
            logger.warning(f"Politika normalizasyon hatası {error:.3e} > {POLICY_NORM_TOL:.0e}")

    return PolicyTable(
        states=mdp.states,
        pair_state=e.pair_state,
        pair_action=tuple(mdp.actions[s][slot] for s, slot in zip(e.pair_state, e.pair_slot)),
        probs=probs,
        normalization_error=error,
    )


def policy_from_z(mdp: Mdp, z: ZTable) -> PolicyTable:
    """π(a|s) = Z(s+a) e^{βR(s,a)+μ} / Z(s)."""
    _require_converged(z)
    _require_deterministic(mdp)
    logits = pair_log_targets(mdp, z.log_z, z.beta, z.mu, "naive")
    return policy_from_pair_logits(mdp, logits, z.log_z)


def beta_derivative(
    solve: Callable[[SolverConfig], ZTable],
    cfg: SolverConfig,
    h: float,
    stencil: int = 3,
) -> np.ndarray:
    """∂β log Z sonlu farkla. β < stencil·h/2 iken ileri fark kullanılır (β >= 0 korunur)."""
    f = lambda beta: solve(cfg.with_beta(beta)).log_z
    beta = cfg.beta
    if stencil == 3:
        if beta >= h:
            return (f(beta + h) - f(beta - h)) / (2 * h)
        return (-3 * f(beta) + 4 * f(beta + h) - f(beta + 2 * h)) / (2 * h)
    if stencil == 5:
        if beta >= 2 * h:
            return (-f(beta + 2 * h) + 8 * f(beta + h) - 8 * f(beta - h) + f(beta - 2 * h)) / (12 * h)
        return (-25 * f(beta) + 48 * f(beta + h) - 36 * f(beta + 2 * h)
                + 16 * f(beta + 3 * h) - 3 * f(beta + 4 * h)) / (12 * h)
    raise ValueError(f"Desteklenmeyen şablon: {stencil}")


def _policy_value_system(mdp: Mdp, probs: np.ndarray, beta: float, method: str) -> VTable:
    """V(s) = Σ_a π(a|s) Σ_s' P(s'|s,a)[R(s,a,s') + V(s')], V(s_f) = R(s_f)."""
    e = mdp.edges
    term = mdp.terminal_mask
    live_idx = np.flatnonzero(~term)
    v = mdp.terminal_values.copy()
    if live_idx.size == 0:
        return VTable(states=mdp.states, v=v, beta=beta, method=method)

    pos = np.full(mdp.n_states, -1)
    pos[live_idx] = np.arange(live_idx.size)
    weight = probs[e.edge_pair] * e.edge_prob
    src = pos[e.pair_state[e.edge_pair]]
    to_live = ~term[e.edge_dst]

    rhs = np.bincount(src, weights=weight * e.edge_reward, minlength=live_idx.size)
    rhs += np.bincount(src[~to_live], weights=weight[~to_live] * v[e.edge_dst[~to_live]],
                       minlength=live_idx.size)
    m = sp.coo_matrix(
        (weight[to_live], (src[to_live], pos[e.edge_dst[to_live]])),
        shape=(live_idx.size, live_idx.size),
    ).tocsc()
    a = sp.identity(live_idx.size, format="csc") - m
    v[live_idx] = np.atleast_1d(spsolve(a, rhs))
    if not np.all(np.isfinite(v)):
        raise SolverError("Değer sistemi tekil: politika altında terminale ulaşılamayan durum var")
    return VTable(states=mdp.states, v=v, beta=beta, method=method)


def value_from_z(
    mdp: Mdp,
    z: ZTable,
    method: str = "linear_system",
    solver: Callable[[Mdp, SolverConfig], ZTable] | None = None,
) -> VTable:
    """Z'den değer fonksiyonu.

    linear_system: politika ağırlıklı doğrusal V sistemi.
    finite_difference: [log Z(β+h) − log Z(β−h)] / 2h, h = 1e-4·max(1, β).
    """
    _require_converged(z)
    if method == "linear_system":
        policy = policy_from_z(mdp, z)
        return _policy_value_system(mdp, policy.probs, z.beta, method)
    if method == "finite_difference":
        solver = solver or z_power_iteration
        cfg = SolverConfig(beta=z.beta, mu=z.mu, tol=z.tol)
        h = 1e-4 * max(1.0, z.beta)
        v = beta_derivative(lambda c: solver(mdp, c), cfg, h)
        term = mdp.terminal_mask
        v[term] = mdp.terminal_values[term]
        return VTable(states=mdp.states, v=v, beta=z.beta, method=method)
    raise ValueError(f"Bilinmeyen değer yöntemi: {method}")


# === BOLTZMANN TABANI ===
def boltzmann_baseline(mdp: Mdp, cfg: SolverConfig) -> tuple[VTable, PolicyTable]:
    """Doğrusal olmayan V denklemi: V(s) = Σ_a softmax_a(β[R + γV(s+a)]) [R + γV(s+a)].

    Sönümlü sabit nokta iterasyonu; normalizasyon W(s, β) Z'den farklıdır. Yalnızca karşılaştırma içindir.
    """
    report = require_valid(mdp)
    _require_deterministic(mdp)
    e = mdp.edges
    live = ~mdp.terminal_mask
    v = mdp.terminal_values.copy()

    if cfg.max_iters is not None:
        max_iters = cfg.max_iters
    else:
        max_iters = 10 * (mdp.n_states + 1)
        if cfg.gamma > 0.0:
            max_iters = max(max_iters, 10 * math.ceil(math.log(cfg.tol) / math.log(cfg.gamma)))

    counts = _group_counts(e.state_start, e.n_pairs)
    delta, iterations = math.inf, 0
    q = np.empty(0)
    for iterations in range(1, max_iters + 1):
        q = e.edge_reward + cfg.gamma * v[e.edge_dst]
        logits = cfg.beta * q
        w = np.exp(logits - np.repeat(grouped_logsumexp(logits, e.state_start), counts))
        target = np.add.reduceat(w * q, e.state_start) if e.n_pairs else np.empty(0)
        new = v.copy()
        new[e.nonterminal] = (1.0 - cfg.damping) * v[e.nonterminal] + cfg.damping * target
        delta = _sup_change(new[live], v[live])
        v = new
        if delta < cfg.tol:
            break

    converged = delta < cfg.tol
    if not converged:
        logger.warning(f"Boltzmann tabanı {iterations} taramada yakınsamadı (değişim {delta:.3e})")
    q = e.edge_reward + cfg.gamma * v[e.edge_dst]
    policy = policy_from_pair_logits(mdp, cfg.beta * q)
    values = VTable(
        states=mdp.states, v=v, beta=cfg.beta, method="boltzmann_baseline",
        converged=converged, residual=delta, iterations=iterations,
    )
    logger.info(f"Boltzmann tabanı: d={report.d}, {iterations} tarama")
    return values, policy


def boltzmann_vs_partition(mdp: Mdp, cfg: SolverConfig) -> list[dict]:
    """Bölüm fonksiyonu politikası ile Boltzmann politikasını yan yana koyar (entropik fark)."""
    z = z_power_iteration(mdp, cfg)
    partition = policy_from_z(mdp, z)
    values, boltzmann = boltzmann_baseline(mdp, cfg)
    rows = []
    for k, (s, action) in enumerate(zip(partition.pair_state, partition.pair_action)):
        rows.append({
            "state": mdp.states[s],
            "action": action,
            "pi_partition": float(partition.probs[k]),
            "pi_boltzmann": float(boltzmann.probs[k]),
            "v_boltzmann": float(values.v[s]),
        })
    return rows


# === BÜZÜLME ===
def contraction_check(mdp: Mdp, cfg: SolverConfig, trials: int, seed: int) -> float:
    """ψ(X) = C(β)X için örneklenmiş ‖ψ(X1) − ψ(X2)‖∞ / ‖X1 − X2‖∞ oranlarının en büyüğü.

    X1, X2 pozitif ve sınırda aynıdır; norm terminal olmayan koordinatlarla sınırlıdır. Teorik üst sınır d·e^μ.
    """
    live = ~mdp.terminal_mask
    if not live.any():
        return 0.0
    c = build_transition_operator(mdp, cfg.beta, cfg.mu).matrix
    boundary = np.exp(cfg.beta * mdp.terminal_values)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for _ in range(trials):
        x1, x2 = boundary.copy(), boundary.copy()
        x1[live] = np.exp(rng.normal(size=int(live.sum())))
        x2[live] = np.exp(rng.normal(size=int(live.sum())))
        spread = float(np.max(np.abs(x1[live] - x2[live])))
        if spread == 0.0:
            continue
        image = float(np.max(np.abs((c @ x1 - c @ x2)[live])))
        worst = max(worst, image / spread)
    return worst
