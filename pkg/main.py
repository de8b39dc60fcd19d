"""
BolumZ - Komut Satırı
MDP dosyalarını yükler, çözücüleri/öğrenicileri/kahini çalıştırır, β taramaları yapar
ve makine tarafından okunabilir sonuç tabloları yazar. Çıkış kodu: 0 başarı, 2 hata.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import yaml

import config
from dashboard import records_table, show, show_error, summary_panel, validation_panel
from det_planner import (
    boltzmann_vs_partition, contraction_check, policy_from_z,
    value_from_z, z_linear_solve, z_power_iteration,
)
from mdp_core import BolumZError, ConfigError, SolverConfig, gridworld_mdp, random_mdp, validate
from model_free import AgentConfig, EXPLORATIONS, SCHEDULES, greedy_policy, run_episodes
from stoch_planner import (
    belief_contraction_check, naive_avg_bellman_solve, naive_value_diagnostic,
    params_to_z, variational_fixed_point, variational_gd, variational_policy,
)
from storage import FORMATS, emit_table, load_mdp, save_mdp
from traj_oracle import enumerate_n_max, enumerate_z, enumerate_z_sa, enumerate_z_stochastic

# === LOGGING ===
logging.basicConfig(
    level=config.LOG_LEVEL,
    format='%(asctime)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

EPILOG = """
Örnekler:
  python main.py validate fixtures/tree.json
  python main.py plan-det fixtures/tree.json --beta 1 --mu -2 --method power --out z.csv
  python main.py sweep-beta fixtures/tree.json --betas 0,1,5,50 --mu -2 --out sweep.csv
  python main.py learn grid.json --beta 10 --mu -1.5 --episodes 5000 --seed 11 --out log.csv
  python main.py plan-det fixtures/tree.json --config run.yaml
"""


# === ARGÜMANLAR ===
def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"virgülle ayrılmış sayı listesi bekleniyordu: {text!r}") from None


def _grid_shape(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"SATIRxSÜTUN bekleniyordu: {text!r}") from None
    return rows, cols


def _add_output(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", type=Path, default=None, help="Sonuç tablosu dosyası")
    sub.add_argument("--format", choices=FORMATS, default=config.DEFAULT_FORMAT, help="csv ya da json")


def _add_solver(sub: argparse.ArgumentParser, gamma: bool = False) -> None:
    sub.add_argument("mdp", type=Path, help="MDP JSON dosyası")
    sub.add_argument("--beta", type=float, default=config.DEFAULT_BETA, help="Ters sıcaklık β >= 0")
    sub.add_argument("--mu", type=float, default=config.DEFAULT_MU, help="Kimyasal potansiyel μ <= 0")
    sub.add_argument("--tol", type=float, default=config.DEFAULT_TOL)
    sub.add_argument("--max-iters", type=int, default=None)
    sub.add_argument("--damping", type=float, default=config.DEFAULT_DAMPING)
    sub.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    if gamma:
        sub.add_argument("--gamma", type=float, default=config.DEFAULT_GAMMA, help="Yalnızca Boltzmann tabanı")
    _add_output(sub)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="bolumz",
        description="BolumZ: bölüm fonksiyonu tabanlı pekiştirmeli öğrenme araçları",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--config", type=Path, default=None, help="YAML çalışma dosyası (bayrak varsayılanları)")
    parser.add_argument(
        "--log-level", type=str.upper, default=None, choices=LOG_LEVELS, help="Log seviyesi (stderr)"
    )
    subs = parser.add_subparsers(dest="command", required=True)
    commands = {}

    sub = commands["validate"] = subs.add_parser("validate", help="MDP varsayımlarını denetle")
    sub.add_argument("mdp", type=Path)
    _add_output(sub)

    sub = commands["oracle"] = subs.add_parser("oracle", help="Yörünge sayımıyla referans Z")
    _add_solver(sub)
    sub.add_argument("--method", choices=("z", "stochastic", "n-max"), default="z")
    sub.add_argument("--max-len", type=int, default=None)
    sub.add_argument("--state", default=None, help="Yalnızca bu durum (varsayılan: tümü)")
    sub.add_argument("--action", default=None, help="Ω(s,a) ile sınırla (--state gerekir)")

    sub = commands["plan-det"] = subs.add_parser("plan-det", help="Deterministik Z çözümü")
    _add_solver(sub)
    sub.add_argument("--method", choices=("power", "linear"), default="power")

    sub = commands["value"] = subs.add_parser("value", help="V(s, β) = ∂β log Z")
    _add_solver(sub)
    sub.add_argument("--method", choices=("linear_system", "finite_difference"), default="linear_system")

    sub = commands["policy"] = subs.add_parser("policy", help="π(a|s) Z'den")
    _add_solver(sub)

    sub = commands["baseline-boltzmann"] = subs.add_parser("baseline-boltzmann", help="Boltzmann politikası karşılaştırması")
    _add_solver(sub, gamma=True)

    sub = commands["check-contraction"] = subs.add_parser("check-contraction", help="Örneklenmiş büzülme oranı")
    _add_solver(sub)
    sub.add_argument("--trials", type=int, default=100)
    sub.add_argument("--belief", type=int, default=None, metavar="N_RHO",
                     help="İnanç uzayı denetimi, N_RHO Dirichlet örneği")

    sub = commands["plan-stoch"] = subs.add_parser("plan-stoch", help="Stokastik MDP planlama")
    _add_solver(sub)
    sub.add_argument("--method", choices=("naive", "variational-fp", "variational-gd"), default="naive")
    sub.add_argument("--lr", type=float, default=0.5)
    sub.add_argument("--iters", type=int, default=2000)
    sub.add_argument("--diagnostic", action="store_true", help="naive: (s, a, s') ağırlık tablosunu yaz")
    sub.add_argument("--policy", action="store_true", help="variational: politika tablosunu yaz")

    sub = commands["learn"] = subs.add_parser("learn", help="Z-öğrenme bölümleri")
    sub.add_argument("mdp", type=Path)
    sub.add_argument("--beta", type=float, default=config.DEFAULT_BETA)
    sub.add_argument("--mu", type=float, default=config.DEFAULT_MU)
    sub.add_argument("--alpha", type=float, default=config.DEFAULT_ALPHA)
    sub.add_argument("--schedule", choices=SCHEDULES, default=config.DEFAULT_SCHEDULE)
    sub.add_argument("--epsilon", type=float, default=config.DEFAULT_EPSILON)
    sub.add_argument("--exploration", choices=EXPLORATIONS, default=config.DEFAULT_EXPLORATION)
    sub.add_argument("--episodes", type=int, default=config.DEFAULT_EPISODES)
    sub.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    sub.add_argument("--max-steps", type=int, default=None)
    sub.add_argument("--start-state", default=None)
    _add_output(sub)

    sub = commands["sweep-beta"] = subs.add_parser("sweep-beta", help="β taraması, politika satırları")
    _add_solver(sub)
    sub.add_argument("--betas", type=_float_list, default=config.DEFAULT_BETAS)
    sub.add_argument("--workers", type=int, default=config.SWEEP_WORKERS)

    sub = commands["gen-random"] = subs.add_parser("gen-random", help="Tohumlu rastgele MDP üret")
    sub.add_argument("--states", type=int, default=8)
    sub.add_argument("--d", type=int, default=3)
    sub.add_argument("--branching", type=int, default=2)
    sub.add_argument("--stochastic", action="store_true")
    sub.add_argument("--cyclic", action="store_true")
    sub.add_argument("--uniform-actions", action="store_true")
    sub.add_argument("--gridworld", type=_grid_shape, default=None, metavar="SATIRxSÜTUN")
    sub.add_argument("--jitter", type=float, default=0.0)
    sub.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    sub.add_argument("--out", type=Path, required=True)

    return parser, commands


def _apply_run_file(path: Path, argv: list[str], commands: dict[str, argparse.ArgumentParser]) -> None:
    """YAML dosyasındaki anahtarları seçilen alt komutun varsayılanı yapar; bilinmeyen anahtar ConfigError."""
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: anahtar/değer eşlemesi bekleniyordu")

    command = next((a for a in argv if a in commands), None)
    if command is None:
        return
    sub = commands[command]
    known = {action.dest for action in sub._actions}
    values = {str(k).replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{path}: bilinmeyen anahtar(lar): {', '.join(unknown)}")

    # dosya değerleri de bayraklarla aynı dönüşümden geçer
    for action in sub._actions:
        if action.dest in values and action.type is not None and values[action.dest] is not None:
            raw = values[action.dest]
            if action.type is _float_list and isinstance(raw, list):
                values[action.dest] = [float(x) for x in raw]
            elif not isinstance(raw, bool):
                values[action.dest] = action.type(str(raw))
    sub.set_defaults(**values)


# === YARDIMCILAR ===
def solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(
        beta=args.beta,
        mu=args.mu,
        gamma=getattr(args, "gamma", config.DEFAULT_GAMMA),
        tol=args.tol,
        max_iters=args.max_iters,
        damping=args.damping,
        seed=args.seed,
    )


def _emit(args: argparse.Namespace, title: str, records: list[dict], columns: list[str]) -> None:
    show(records_table(title, records, columns))
    if args.out is not None:
        emit_table(records, args.format, args.out, columns)


def _z_summary(z) -> dict:
    return {
        "yöntem": z.method, "β": z.beta, "μ": z.mu, "yakınsadı": z.converged,
        "artık": z.residual, "iterasyon": z.iterations,
    }


# === KOMUTLAR ===
def cmd_validate(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    report = validate(mdp)
    show(validation_panel(mdp, report))
    if args.out is not None:
        record = {
            "d": report.d, "mu_threshold": report.mu_threshold, "r_terminal_max": report.r_terminal_max,
            "is_deterministic": report.is_deterministic, "has_cycles": report.has_cycles,
            "uniform_actions": report.uniform_actions, "violations": len(report.violations),
        }
        emit_table([record], args.format, args.out, list(record))
    return 0 if report.ok else 2


def cmd_oracle(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    states = [args.state] if args.state is not None else list(mdp.states)
    if args.action is not None and args.state is None:
        raise ConfigError("--action için --state gerekli")

    if args.method == "n-max":
        records = []
        for s in states:
            v_star, n_max = enumerate_n_max(mdp, s, args.mu, args.max_len)
            records.append({"state": s, "v_star": v_star, "n_max": n_max})
        _emit(args, "N_max", records, ["state", "v_star", "n_max"])
        return 0

    records = []
    for s in states:
        if args.action is not None:
            result = enumerate_z_sa(mdp, s, args.action, args.beta, args.mu, args.max_len)
        elif args.method == "stochastic":
            result = enumerate_z_stochastic(mdp, s, args.beta, args.mu, args.max_len)
        else:
            result = enumerate_z(mdp, s, args.beta, args.mu, args.max_len)
        records.append({
            "state": s,
            "log_z": result.log_z_estimate,
            "tail_bound": result.tail_bound,
            "n_trajectories": result.n_trajectories_enumerated,
            "truncated": result.truncated,
        })
    _emit(args, "Kahin log Z", records, ["state", "log_z", "tail_bound", "n_trajectories", "truncated"])
    return 0


def cmd_plan_det(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    cfg = solver_config(args)
    z = z_power_iteration(mdp, cfg) if args.method == "power" else z_linear_solve(mdp, cfg)
    show(summary_panel("Deterministik Z", _z_summary(z)))
    _emit(args, "log Z", z.records(), ["state", "log_z"])
    return 0


def cmd_value(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    z = z_power_iteration(mdp, solver_config(args))
    values = value_from_z(mdp, z, args.method)
    _emit(args, f"V ({args.method})", values.records(), ["state", "v"])
    return 0


def cmd_policy(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    z = z_power_iteration(mdp, solver_config(args))
    policy = policy_from_z(mdp, z)
    show(summary_panel("Politika", {"normalizasyon hatası": policy.normalization_error}))
    _emit(args, "π(a|s)", policy.records(), ["state", "action", "prob"])
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    rows = boltzmann_vs_partition(mdp, solver_config(args))
    _emit(args, "Bölüm fonksiyonu vs Boltzmann", rows,
          ["state", "action", "pi_partition", "pi_boltzmann", "v_boltzmann"])
    return 0


def cmd_check_contraction(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    cfg = solver_config(args)
    bound = validate(mdp).contraction_bound(cfg.mu)
    if args.belief is not None:
        ratio, kind = belief_contraction_check(mdp, cfg, args.belief, args.seed), "belief"
    else:
        ratio, kind = contraction_check(mdp, cfg, args.trials, args.seed), "state"
    record = {"kind": kind, "max_ratio": ratio, "bound": bound, "holds": ratio <= bound}
    _emit(args, "Büzülme denetimi", [record], list(record))
    return 0


def cmd_plan_stoch(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    cfg = solver_config(args)

    if args.method == "naive":
        z = naive_avg_bellman_solve(mdp, cfg)
        show(summary_panel("Ortalamalı Bellman", _z_summary(z)))
        if args.diagnostic:
            diag = naive_value_diagnostic(mdp, z)
            show(summary_panel("Tanı (diagnostic-only)", {"özyineleme artığı": diag.recursion_residual}))
            _emit(args, "Naif ağırlıklar", diag.records, ["state", "action", "next_state", "prob", "weight"])
        else:
            _emit(args, "log Z", z.records(), ["state", "log_z"])
        return 0

    if args.method == "variational-fp":
        z = variational_fixed_point(mdp, cfg)
        show(summary_panel("Varyasyonel sabit nokta", _z_summary(z)))
    else:
        params = variational_gd(mdp, cfg, lr=args.lr, iters=args.iters)
        show(summary_panel("Varyasyonel GD", {
            "adım": params.steps, "Δ": params.loss, "Δ (normalize)": params.normalized_loss,
            "gradyan kontrolü": params.gradient_check_error, "yakınsadı": params.converged,
        }))
        z = params_to_z(mdp, params, cfg.tol)

    if args.policy:
        _emit(args, "Gerçekçi politika", variational_policy(mdp, z).records(), ["state", "action", "prob"])
    else:
        _emit(args, "log Z", z.records(), ["state", "log_z"])
    return 0


def cmd_learn(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    agent = AgentConfig(
        alpha=args.alpha, schedule=args.schedule, epsilon=args.epsilon, exploration=args.exploration,
        beta=args.beta, mu=args.mu, episodes=args.episodes, seed=args.seed,
        max_steps=args.max_steps, start_state=args.start_state,
    )
    log = run_episodes(mdp, agent)
    show(summary_panel("Öğrenme", {
        "bölüm": len(log), "kesilen": log.truncated_episodes,
        "açgözlü politika": json.dumps(greedy_policy(log.table), ensure_ascii=False),
    }))
    if args.out is not None:
        emit_table(log.records, args.format, args.out, ["episode", "return", "length", "delta", "truncated"])
    return 0


def _sweep_one(mdp, cfg: SolverConfig) -> list[dict]:
    if mdp.is_deterministic:
        policy = policy_from_z(mdp, z_power_iteration(mdp, cfg))
    else:
        policy = variational_policy(mdp, variational_fixed_point(mdp, cfg))
    return [{"beta": cfg.beta, **row} for row in policy.records()]


def cmd_sweep_beta(args: argparse.Namespace) -> int:
    mdp = load_mdp(args.mdp)
    base = solver_config(args)
    betas = sorted(set(args.betas))
    configs = [base.with_beta(b) for b in betas]
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        chunks = list(pool.map(lambda c: _sweep_one(mdp, c), configs))
    records = [row for chunk in chunks for row in chunk]
    _emit(args, "β taraması", records, ["beta", "state", "action", "prob"])
    return 0


def cmd_gen_random(args: argparse.Namespace) -> int:
    if args.gridworld is not None:
        rows, cols = args.gridworld
        mdp = gridworld_mdp(rows, cols, jitter=args.jitter, seed=args.seed)
    else:
        mdp = random_mdp(
            n_states=args.states, d=args.d, branching=args.branching,
            deterministic=not args.stochastic, acyclic=not args.cyclic,
            seed=args.seed, uniform_actions=args.uniform_actions,
        )
    save_mdp(mdp, args.out)
    report = validate(mdp)
    show(validation_panel(mdp, report))
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "oracle": cmd_oracle,
    "plan-det": cmd_plan_det,
    "value": cmd_value,
    "policy": cmd_policy,
    "baseline-boltzmann": cmd_baseline,
    "check-contraction": cmd_check_contraction,
    "plan-stoch": cmd_plan_stoch,
    "learn": cmd_learn,
    "sweep-beta": cmd_sweep_beta,
    "gen-random": cmd_gen_random,
}


# === GİRİŞ ===
def run(argv: list[str] | None = None) -> int:
    """CLI'yi çalıştırır ve çıkış kodunu döndürür (0 başarı, 2 kullanım/doğrulama/çözücü hatası)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()

    try:
        # --config komutun önünde ya da arkasında olabilir; ayrıştırmadan önce çekilir
        if "--config" in argv:
            i = argv.index("--config")
            if i + 1 >= len(argv):
                parser.error("--config bir dosya yolu bekliyor")
            config_path = Path(argv[i + 1])
            argv = argv[:i] + argv[i + 2:]
            _apply_run_file(config_path, argv, commands)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (BolumZError, OSError, yaml.YAMLError, ValueError) as e:
        show_error(str(e))
        return 2

    try:
        if args.log_level:
            logging.getLogger().setLevel(args.log_level)
        return COMMANDS[args.command](args)
    except (BolumZError, OSError, json.JSONDecodeError, ValueError) as e:
        show_error(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(run())
