"""
BolumZ - Stokastik Planlayıcı
Stokastik MDP'ler için iki yol: ortalamalı (naif) Bellman denklemi ve tanısı,
inanç uzayındaki varyasyonel yapı (geometrik ortalama Bellman) ve gerçekçi politika.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from det_planner import (
    PolicyTable, VTable, ZTable,
    bellman_log, beta_derivative, pair_log_targets, policy_from_pair_logits, solve_log_fixed_point,
)
from mdp_core import Mdp, SolverConfig, SolverError, require_valid

logger = logging.getLogger(__name__)

BELIEF_TOL = 1e-12
# Gradyan kontrolü: merkezi fark adımı ve kabul edilen göreli hata
GRAD_CHECK_STEP = 1e-5
GRAD_CHECK_TOL = 1e-5
ARMIJO_C = 1e-4
MAX_BACKTRACK = 40


# === İNANÇ DURUMU ===
@dataclass(frozen=True, eq=False)
class BeliefState:
    """S üzerinde olasılık dağılımı ρ."""

    states: tuple[str, ...]
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        if self.rho.shape != (len(self.states),):
            raise SolverError(f"İnanç boyutu {self.rho.shape} durum sayısıyla uyuşmuyor")
        if np.any(self.rho < 0.0) or abs(math.fsum(self.rho) - 1.0) > BELIEF_TOL:
            raise SolverError("İnanç durumu geçerli bir olasılık dağılımı değil")

    @classmethod
    def dirac(cls, mdp: Mdp, state: str | int) -> BeliefState:
        rho = np.zeros(mdp.n_states)
        rho[mdp.index(state)] = 1.0
        return cls(mdp.states, rho)

    @classmethod
    def from_mapping(cls, mdp: Mdp, weights: Mapping[str, float]) -> BeliefState:
        rho = np.zeros(mdp.n_states)
        for state, w in weights.items():
            rho[mdp.index(state)] = float(w)
        return cls(mdp.states, rho)

    def as_dict(self) -> dict[str, float]:
        return {s: float(p) for s, p in zip(self.states, self.rho) if p > 0.0}


@dataclass(frozen=True, eq=False)
class ActionModel:
    """Ortak eylem kümesi için P_a (terminal satırları birim) ve beklenen ödül R̄_a."""

    actions: tuple[str, ...]
    transitions: tuple[sp.csr_matrix, ...]
    expected_reward: tuple[np.ndarray, ...]


def _uniform_actions(mdp: Mdp, strict: bool, operation: str) -> None:
    if mdp.has_uniform_actions():
        return
    message = f"{operation}: inanç uzayı yapısı tüm terminal olmayan durumlarda aynı eylem kümesini varsayar"
    if strict:
        raise SolverError(message)
    logger.warning(message + "; durum başına mevcut eylemlerle devam ediliyor")


def action_model(mdp: Mdp) -> ActionModel:
    require_valid(mdp)
    _uniform_actions(mdp, strict=True, operation="belief_step")
    live = np.flatnonzero(~mdp.terminal_mask)
    terminals = np.flatnonzero(mdp.terminal_mask)
    names = mdp.actions[live[0]] if live.size else ()

    transitions, rewards = [], []
    for slot, _ in enumerate(names):
        rows, cols, data = list(terminals), list(terminals), [1.0] * terminals.size
        rbar = np.zeros(mdp.n_states)
        for s in live:
            for o in mdp.outcomes[s][slot]:
                rows.append(s)
                cols.append(o.next_state)
                data.append(o.prob)
                rbar[s] += o.prob * o.reward
        shape = (mdp.n_states, mdp.n_states)
        transitions.append(sp.coo_matrix((data, (rows, cols)), shape=shape).tocsr())
        rewards.append(rbar)
    return ActionModel(tuple(names), tuple(transitions), tuple(rewards))


def belief_step(mdp: Mdp, rho: BeliefState, a: str, model: ActionModel | None = None) -> tuple[BeliefState, float]:
    """(ρ', R̃) = (P_aᵀρ, E_{s∼ρ} E_{s'|s,a}[R])."""
    model = model or action_model(mdp)
    if a not in model.actions:
        raise SolverError(f"Bilinmeyen eylem: {a!r}")
    k = model.actions.index(a)
    nxt = model.transitions[k].T @ rho.rho
    # yuvarlama birikimini tek adımda temizle
    nxt = np.clip(nxt, 0.0, None)
    nxt = nxt / math.fsum(nxt)
    return BeliefState(mdp.states, nxt), float(rho.rho @ model.expected_reward[k])


# === NAİF ORTALAMALI BELLMAN ===
def naive_avg_bellman_solve(mdp: Mdp, cfg: SolverConfig) -> ZTable:
    """log Z(s) ← log Σ_{a,s'} P(s'|s,a) e^{βR+μ} Z(s')."""
    return solve_log_fixed_point(mdp, cfg, mode="naive", method="naive_avg")


@dataclass(frozen=True, eq=False)
class NaiveDiagnostic:
    """Ortalamalı denklemin ima ettiği (s, a, s') ağırlıkları; yalnızca tanı amaçlıdır."""

    records: list[dict]
    weight_sums: dict[str, float]
    values: VTable
    recursion_residual: float


def naive_value_diagnostic(mdp: Mdp, z: ZTable, h: float = 1e-3) -> NaiveDiagnostic:
    """w(s,a,s') = e^{βR+μ} Z(s') P(s'|s,a) / Z(s) ve bu ağırlıklarla V özyinelemesinin artığı.

    Ağırlıklar iniş durumuna bağlı olduğundan gerçekçi bir politikaya karşılık gelmez.
    """
    if not z.converged:
        raise SolverError(f"Z tablosu yakınsamamış (artık {z.residual:.3e} > tol {z.tol:.1e})")
    e = mdp.edges
    src = e.pair_state[e.edge_pair]
    log_w = np.log(e.edge_prob) + z.beta * e.edge_reward + z.mu + z.log_z[e.edge_dst] - z.log_z[src]
    w = np.exp(log_w)

    cfg = SolverConfig(beta=z.beta, mu=z.mu, tol=z.tol)
    v = beta_derivative(lambda c: naive_avg_bellman_solve(mdp, c), cfg, h, stencil=5)
    term = mdp.terminal_mask
    v[term] = mdp.terminal_values[term]

    live = np.flatnonzero(~term)
    backed = np.bincount(src, weights=w * (e.edge_reward + v[e.edge_dst]), minlength=mdp.n_states)
    residual = float(np.max(np.abs(v[live] - backed[live]))) if live.size else 0.0
    sums = np.bincount(src, weights=w, minlength=mdp.n_states)

    logger.warning(
        "naive_value_diagnostic: ağırlıklar iniş durumuna bağlı, gerçekçi politika değil (diagnostic-only)"
    )
    records = [
        {
            "state": mdp.states[s],
            "action": mdp.actions[s][e.pair_slot[k]],
            "next_state": mdp.states[dst],
            "prob": float(p),
            "weight": float(wk),
        }
        for s, k, dst, p, wk in zip(src, e.edge_pair, e.edge_dst, e.edge_prob, w)
    ]
    return NaiveDiagnostic(
        records=records,
        weight_sums={mdp.states[s]: float(sums[s]) for s in live},
        values=VTable(states=mdp.states, v=v, beta=z.beta, method="naive_diagnostic",
                      residual=residual),
        recursion_residual=residual,
    )


# === VARYASYONEL (GEOMETRİK ORTALAMA) BELLMAN ===
def variational_fixed_point(mdp: Mdp, cfg: SolverConfig, init_log_z: np.ndarray | None = None) -> ZTable:
    """log Z(s) ← log Σ_a exp(Σ_{s'} P(s'|s,a)[βR + μ + log Z(s')]), sönümlü."""
    _uniform_actions(mdp, strict=False, operation="variational_fixed_point")
    return solve_log_fixed_point(
        mdp, cfg, mode="geometric", method="variational_fp",
        init_log_z=init_log_z, damping=cfg.damping,
    )


def variational_policy(mdp: Mdp, z: ZTable) -> PolicyTable:
    """log π(a|s) ∝ Σ_{s'} P(s'|s,a)[βR + μ + log Z(s')]; yalnızca s'ye bağlıdır."""
    if not z.converged:
        raise SolverError(f"Z tablosu yakınsamamış (artık {z.residual:.3e} > tol {z.tol:.1e})")
    logits = pair_log_targets(mdp, z.log_z, z.beta, z.mu, "geometric")
    return policy_from_pair_logits(mdp, logits, z.log_z)


@dataclass(frozen=True, eq=False)
class VariationalParams:
    """Z_θ(ρ) = ∏ θ_i^{ρ_i} ailesi; log θ terminallerde β·R(f_i)'ye sabitlenir."""

    states: tuple[str, ...]
    log_theta: np.ndarray
    beta: float
    mu: float
    loss: float = math.nan
    normalized_loss: float = math.nan
    steps: int = 0
    residuals: np.ndarray | None = None
    gradient_check_error: float = math.nan
    converged: bool = False

    @classmethod
    def from_z(cls, mdp: Mdp, z: ZTable) -> VariationalParams:
        log_theta = z.log_z.copy()
        loss, normalized, residuals = _loss_terms(mdp, log_theta, z.beta, z.mu)
        return cls(
            states=mdp.states, log_theta=log_theta, beta=z.beta, mu=z.mu,
            loss=loss, normalized_loss=normalized, residuals=residuals, converged=z.converged,
        )

    def evaluate(self, rho: BeliefState | np.ndarray) -> float:
        """log Z_θ(ρ) = Σ_i ρ_i log θ_i."""
        weights = rho.rho if isinstance(rho, BeliefState) else np.asarray(rho, dtype=float)
        return float(weights @ self.log_theta)

    def boundary_log_z(self, mdp: Mdp, alphas: Mapping[str, float]) -> float:
        """Terminal karışım ρ_f = Σ α_i δ_{f_i} için log Z = Σ α_i β R(f_i)."""
        rho = BeliefState.from_mapping(mdp, alphas)
        if np.any(rho.rho[~mdp.terminal_mask] > 0.0):
            raise SolverError("Sınır karışımı yalnızca terminal durumlardan oluşmalı")
        return self.evaluate(rho)

    def records(self) -> list[dict]:
        rows = []
        for i, (s, lt) in enumerate(zip(self.states, self.log_theta)):
            row = {"state": s, "log_theta": float(lt)}
            if self.residuals is not None:
                row["residual"] = float(self.residuals[i])
            rows.append(row)
        return rows


def _pair_terms(mdp: Mdp, log_theta: np.ndarray, beta: float, mu: float) -> np.ndarray:
    return pair_log_targets(mdp, log_theta, beta, mu, "geometric")


def variational_residuals(
    mdp: Mdp, log_theta: np.ndarray, beta: float, mu: float, scale: float
) -> np.ndarray:
    """θ_s − Σ_a e^{βR̃(δ_s,a)+μ} Z_θ(P_aᵀδ_s), e^{scale} biriminde; terminaller 0."""
    e = mdp.edges
    res = np.zeros(mdp.n_states)
    if e.n_pairs:
        g = np.exp(_pair_terms(mdp, log_theta, beta, mu) - scale)
        res[e.nonterminal] = np.exp(log_theta[e.nonterminal] - scale) - np.add.reduceat(g, e.state_start)
    return res


def _loss_terms(mdp: Mdp, log_theta: np.ndarray, beta: float, mu: float) -> tuple[float, float, np.ndarray]:
    scale = float(np.max(log_theta))
    res = variational_residuals(mdp, log_theta, beta, mu, scale)
    normalized = float(np.mean(res ** 2))
    with np.errstate(over="ignore"):
        loss = float(np.exp(2.0 * scale) * normalized)
    return loss, normalized, res


def variational_loss(mdp: Mdp, params: VariationalParams, normalized: bool = False) -> float:
    """Δ(θ) = (1/|S|) Σ_s (Z_θ(δ_s) − Σ_a e^{βR+μ} Z_θ(P_aᵀδ_s))².

    normalized=True ise Δ / max_s Z_θ(δ_s)² döner (β'lar arasında karşılaştırılabilir).
    """
    loss, norm, _ = _loss_terms(mdp, params.log_theta, params.beta, params.mu)
    return norm if normalized else loss


def _scaled_loss_and_grad(
    mdp: Mdp, log_theta: np.ndarray, beta: float, mu: float, scale: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sabit ölçekte kayıp, log θ'ya göre analitik gradyan ve Jacobi (Gauss-Newton köşegeni) ön koşulu."""
    e = mdp.edges
    n = mdp.n_states
    res = variational_residuals(mdp, log_theta, beta, mu, scale)
    loss = float(np.mean(res ** 2))
    u = np.exp(log_theta - scale)

    g = np.exp(_pair_terms(mdp, log_theta, beta, mu) - scale)
    src = e.pair_state[e.edge_pair]
    # J[s, j] = Σ_a g(s,a) Σ_{s'=j} P(s'|s,a)
    jac = sp.coo_matrix((g[e.edge_pair] * e.edge_prob, (src, e.edge_dst)), shape=(n, n)).tocsr()
    a = (sp.diags(np.where(mdp.terminal_mask, 0.0, u)) - jac).tocsr()

    grad = (2.0 / n) * (a.T @ res)
    precond = (2.0 / n) * np.asarray(a.multiply(a).sum(axis=0)).ravel()
    grad[mdp.terminal_mask] = 0.0
    return loss, grad, precond


def _finite_difference_grad(
    mdp: Mdp, log_theta: np.ndarray, beta: float, mu: float, scale: float, step: float
) -> np.ndarray:
    grad = np.zeros_like(log_theta)
    for j in np.flatnonzero(~mdp.terminal_mask):
        hi, lo = log_theta.copy(), log_theta.copy()
        hi[j] += step
        lo[j] -= step
        f_hi = np.mean(variational_residuals(mdp, hi, beta, mu, scale) ** 2)
        f_lo = np.mean(variational_residuals(mdp, lo, beta, mu, scale) ** 2)
        grad[j] = (f_hi - f_lo) / (2.0 * step)
    return grad


def gradient_check(mdp: Mdp, log_theta: np.ndarray, beta: float, mu: float) -> float:
    """Analitik gradyan ile merkezi sonlu farkın en büyük göreli farkı."""
    scale = float(np.max(log_theta))
    _, analytic, _ = _scaled_loss_and_grad(mdp, log_theta, beta, mu, scale)
    numeric = _finite_difference_grad(mdp, log_theta, beta, mu, scale, GRAD_CHECK_STEP)
    denom = max(float(np.max(np.abs(numeric))), np.finfo(float).tiny)
    return float(np.max(np.abs(analytic - numeric)) / denom)


def variational_gd(
    mdp: Mdp,
    cfg: SolverConfig,
    lr: float = 0.5,
    iters: int = 2000,
    init_log_theta: np.ndarray | None = None,
) -> VariationalParams:
    """Δ'yı terminal olmayan log θ koordinatlarında Armijo geri izlemeli gradyan inişiyle küçültür.

    init_log_theta verilmezse cfg.seed ile rastgele başlatılır. Kayıp her kabul edilen adımda artmaz.
    """
    require_valid(mdp)
    _uniform_actions(mdp, strict=False, operation="variational_gd")
    if not lr > 0.0 or iters < 0:
        raise SolverError(f"lr > 0 ve iters >= 0 olmalı (verilen lr={lr}, iters={iters})")

    term = mdp.terminal_mask
    if init_log_theta is None:
        rng = np.random.default_rng(cfg.seed)
        log_theta = rng.normal(size=mdp.n_states)
    else:
        log_theta = np.array(init_log_theta, dtype=float)
    log_theta[term] = cfg.beta * mdp.terminal_values[term]

    scale = float(np.max(log_theta))
    check_error = gradient_check(mdp, log_theta, cfg.beta, cfg.mu) if (~term).any() else 0.0
    if check_error > GRAD_CHECK_TOL:
        logger.warning(f"Gradyan kontrolü: göreli hata {check_error:.3e} > {GRAD_CHECK_TOL:.0e}")

    target = cfg.tol ** 2
    loss, grad, precond = _scaled_loss_and_grad(mdp, log_theta, cfg.beta, cfg.mu, scale)
    trace = [loss]
    steps = 0
    logger.info(f"variational_gd: β={cfg.beta}, μ={cfg.mu}, başlangıç kaybı {loss:.3e}")

    def normalized(value: float, lt: np.ndarray) -> float:
        return value * math.exp(2.0 * (scale - float(np.max(lt))))

    while steps < iters and normalized(loss, log_theta) > target:
        direction = -grad / np.where(precond > 0.0, precond, 1.0)
        slope = float(grad @ direction)
        if slope >= 0.0:
            break
        t = lr
        accepted = False
        for _ in range(MAX_BACKTRACK):
            candidate = log_theta + t * direction
            new_loss = float(np.mean(variational_residuals(mdp, candidate, cfg.beta, cfg.mu, scale) ** 2))
            if new_loss <= loss + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # yuvarlama tabanında durgunluk: kayıp artmıyorsa dur
            if new_loss <= loss:
                break
            tail = ", ".join(f"{x:.3e}" for x in trace[-5:])
            raise SolverError(f"variational_gd ıraksadı: geri izleme tükendi (son kayıplar: {tail})")
        log_theta = candidate
        steps += 1
        loss, grad, precond = _scaled_loss_and_grad(mdp, log_theta, cfg.beta, cfg.mu, scale)
        trace.append(loss)

    final_loss, final_norm, residuals = _loss_terms(mdp, log_theta, cfg.beta, cfg.mu)
    converged = final_norm <= target
    if converged:
        logger.info(f"variational_gd: {steps} adımda yakınsadı (normalize kayıp {final_norm:.3e})")
    else:
        logger.warning(f"variational_gd: {steps} adımda yakınsamadı (normalize kayıp {final_norm:.3e})")

    return VariationalParams(
        states=mdp.states,
        log_theta=log_theta,
        beta=cfg.beta,
        mu=cfg.mu,
        loss=final_loss,
        normalized_loss=final_norm,
        steps=steps,
        residuals=residuals,
        gradient_check_error=check_error,
        converged=converged,
    )


def params_to_z(mdp: Mdp, params: VariationalParams, tol: float) -> ZTable:
    """GD sonucunu ZTable'a çevirir; artık geometrik Bellman'ın log-alan artığıdır."""
    live = ~mdp.terminal_mask
    target = bellman_log(mdp, params.log_theta, params.beta, params.mu, "geometric")
    residual = float(np.max(np.abs(target[live] - params.log_theta[live]))) if live.any() else 0.0
    return ZTable(
        states=mdp.states, log_z=params.log_theta, beta=params.beta, mu=params.mu,
        residual=residual, iterations=params.steps, converged=residual <= max(tol, 1e-10),
        tol=tol, method="variational_gd",
    )


# === İNANÇ UZAYINDA BÜZÜLME ===
def belief_operator_ratio(
    mdp: Mdp,
    cfg: SolverConfig,
    rhos: np.ndarray,
    log_theta_1: np.ndarray,
    log_theta_2: np.ndarray,
    model: ActionModel | None = None,
) -> float:
    """Tek aday çifti için sup_ρ |T Z1(ρ) − T Z2(ρ)| / sup |Z1 − Z2|.

    T Z(ρ) = Σ_a e^{βR̃(ρ,a)+μ} Z(P_aᵀρ); payda örneklenen inançlar ve ardıllarının tümü üzerindedir.
    Adaylar özdeşse (0/0) 0 döner.
    """
    model = model or action_model(mdp)
    z1 = lambda r: np.exp(r @ log_theta_1)
    z2 = lambda r: np.exp(r @ log_theta_2)

    image = np.zeros(rhos.shape[0])
    spread = float(np.max(np.abs(z1(rhos) - z2(rhos)))) if rhos.size else 0.0
    for p, rbar in zip(model.transitions, model.expected_reward):
        succ = (p.T @ rhos.T).T
        weight = np.exp(cfg.beta * (rhos @ rbar) + cfg.mu)
        d1, d2 = z1(succ), z2(succ)
        image += weight * (d1 - d2)
        spread = max(spread, float(np.max(np.abs(d1 - d2))))
    if spread == 0.0:
        return 0.0
    return float(np.max(np.abs(image))) / spread


def belief_contraction_check(
    mdp: Mdp, cfg: SolverConfig, n_rho: int, seed: int, pairs: int = 10
) -> float:
    """Simpleksten Dirichlet örnekleri ve Dirac köşeleri üzerinde örneklenmiş büzülme oranı (≤ d·e^μ beklenir)."""
    model = action_model(mdp)
    rng = np.random.default_rng(seed)
    vertices = np.eye(mdp.n_states)[~mdp.terminal_mask]
    rhos = np.vstack([rng.dirichlet(np.ones(mdp.n_states), size=n_rho), vertices])

    term = mdp.terminal_mask
    boundary = cfg.beta * mdp.terminal_values
    worst = 0.0
    for _ in range(pairs):
        t1 = np.where(term, boundary, rng.normal(size=mdp.n_states))
        t2 = np.where(term, boundary, rng.normal(size=mdp.n_states))
        worst = max(worst, belief_operator_ratio(mdp, cfg, rhos, t1, t2, model))
    logger.info(f"İnanç büzülme oranı {worst:.6f} (sınır {len(model.actions) * math.exp(cfg.mu):.6f})")
    return worst
