"""Command-line entry point.

Verbs: simulate, train, evaluate, sweep-omega, calibrate-duty-cycle, compare.
Failures print one JSON object to stderr and exit with a code that names the
failure class: 2 config, 3 infeasible calibration, 4 oversize exhaustive
space, 5 diverged training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .association import calibrate_duty_cycle
from .errors import ConfigError, InfeasibleError, SearchSpaceError, TrainingDiverged
from .io import write_csv, write_json
from .scenario import ScenarioConfig, generate_deployment, load_config
from .sim import ExhaustiveSolver, MaxSnrSolver, RunMetrics, Simulator, deployment_seeds, run, sweep_omega

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SEARCH, EXIT_DIVERGED = 0, 2, 3, 4, 5
VERBS = ("simulate", "train", "evaluate", "sweep-omega", "calibrate-duty-cycle", "compare")
SOLVERS = ("exhaustive", "max-snr", "learned")
METRIC_COLUMNS = ("deployment",) + RunMetrics.SCALARS + ("slots", "first_failure")
TRACE_HEADERS = {
    "queues": ("t", "ue", "q_local", "q_server", "z"),
    "energy": ("t", "e_ue", "e_ap", "e_es", "e_w"),
    "associations": ("t", "ue", "action", "ack", "rate", "n_up", "n_comp"),
}

log = logging.getLogger("mecoffload")


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, key=None):
        super().__init__(message)
        self.code, self.kind, self.key = code, kind, key


def _float_list(text: str, flag: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "bad_argument", f"{flag}: {exc}", flag) from exc
    if not vals:
        raise CliError(EXIT_CONFIG, "bad_argument", f"{flag} is empty", flag)
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mecoffload", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, solver=True):
        sp.add_argument("--config", help="JSON scenario file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, help="master seed (default: rng_seed of the config)")
        sp.add_argument("--slots", type=int, default=1000)
        sp.add_argument("--deployments", type=int, default=1)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (1 is deterministic)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if solver:
            sp.add_argument("--solver", choices=SOLVERS, default="exhaustive")
            sp.add_argument("--checkpoint", help="policy checkpoint for --solver learned")
            sp.add_argument("--duty-cycle", type=float, help="Max-SNR activity probability (default: calibrate)")
            sp.add_argument("--omega", type=float, help="override the config's omega")

    sp = sub.add_parser("simulate", help="run one solver and write metrics")
    common(sp)
    sp.add_argument("--traces", action="store_true", help="also write per-slot traces of deployment 0")

    sp = sub.add_parser("evaluate", help="score a trained policy")
    common(sp)
    sp.set_defaults(solver="learned")

    sp = sub.add_parser("train", help="train the shared policy")
    common(sp, solver=False)
    sp.add_argument("--episodes", type=int, help="override marl.episodes")
    sp.add_argument("--omega", type=float, help="override the config's omega")

    sp = sub.add_parser("sweep-omega", help="energy/delay trade-off over a list of omegas")
    common(sp)
    sp.add_argument("--omega-list", required=True, help="comma-separated, e.g. 1e6,1e7,1e8,1e9")

    sp = sub.add_parser("calibrate-duty-cycle", help="smallest Max-SNR duty cycle meeting a delay target")
    common(sp, solver=False)
    sp.add_argument("--target-delay", type=float, help="seconds (default: delay_target of the config)")
    sp.set_defaults(slots=5000, deployments=4)

    sp = sub.add_parser("compare", help="solvers against each other over several UE counts")
    common(sp)
    sp.add_argument("--k-list", default="6,9", help="comma-separated UE counts")
    sp.add_argument("--solvers", default="learned,max-snr", help="comma-separated solver names")
    return p


def _load(args) -> tuple[ScenarioConfig, dict]:
    if not args.config:
        raise CliError(EXIT_CONFIG, "config", "--config is required", "config")
    cfg, marl = load_config(args.config)
    if getattr(args, "omega", None) is not None:
        cfg = cfg.replace(omega=args.omega)
    if args.slots < 1 or args.deployments < 1 or args.jobs < 1:
        raise CliError(EXIT_CONFIG, "bad_argument", "--slots, --deployments and --jobs must be >= 1")
    return cfg, marl


def _seed(args, cfg) -> int:
    return cfg.rng_seed if args.seed is None else args.seed


def _policy(args, cfg):
    from .marl import load_checkpoint
    if not args.checkpoint:
        raise CliError(EXIT_CONFIG, "bad_argument", "--checkpoint is required for the learned solver", "checkpoint")
    if not Path(args.checkpoint).exists():
        raise CliError(EXIT_CONFIG, "bad_argument", f"checkpoint not found: {args.checkpoint}", "checkpoint")
    policy, meta = load_checkpoint(args.checkpoint)
    if policy.n_aps != cfg.n_aps:
        raise CliError(EXIT_CONFIG, "config", f"checkpoint has n_aps={policy.n_aps}, config has {cfg.n_aps}", "n_aps")
    return policy, meta


def _calibrate(args, cfg, seed, out: dict | None = None) -> float:
    p_star, probes = calibrate_duty_cycle(cfg, cfg.delay_target, slots=max(args.slots, 5000),
                                          deployments=args.deployments, seed=seed)
    log.info("calibrated duty cycle %.2f for K=%d", p_star, cfg.n_ues)
    if out is not None:
        out.update(duty_cycle=p_star, probes=probes)
    return p_star


def make_solver(name: str, args, cfg, seed, info: dict | None = None):
    info = {} if info is None else info
    if name == "exhaustive":
        return ExhaustiveSolver()
    if name == "max-snr":
        p = args.duty_cycle if args.duty_cycle is not None else _calibrate(args, cfg, seed, info)
        if not 0.0 <= p <= 1.0:
            raise CliError(EXIT_CONFIG, "bad_argument", "--duty-cycle must lie in [0, 1]", "duty_cycle")
        info["duty_cycle"] = p
        return MaxSnrSolver(p)
    if name == "learned":
        from .marl import LearnedSolver
        policy, meta = _policy(args, cfg)
        info["checkpoint"] = {"path": str(args.checkpoint), "m": meta["m"], "n_aps": meta["n_aps"]}
        return LearnedSolver(policy, "greedy")
    raise CliError(EXIT_CONFIG, "bad_argument", f"unknown solver {name!r}", "solver")


def _metric_rows(result) -> list[dict]:
    return [{"deployment": i, **m.as_row()} for i, m in enumerate(result.per_deployment)]


def _summary(verb, cfg, seed, args, **extra) -> dict:
    return {"verb": verb, "version": __version__, "config_hash": cfg.digest(), "seed": seed,
            "config": cfg.to_dict(), "slots": args.slots, "deployments": args.deployments, **extra}


def cmd_simulate(args, verb="simulate") -> int:
    cfg, _ = _load(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    info = {}
    solver = make_solver(args.solver, args, cfg, seed, info)
    result = run(cfg, solver, args.slots, seed=seed, deployments=args.deployments, jobs=args.jobs)
    h = cfg.digest()
    write_csv(out / "metrics.csv", METRIC_COLUMNS, _metric_rows(result), h, seed)
    if getattr(args, "traces", False):
        dep_seed, sim_seed = deployment_seeds(seed, 1)[0]
        sim = Simulator(cfg, solver, generate_deployment(cfg, dep_seed), sim_seed, record=True)
        sim.run(args.slots)
        for name, header in TRACE_HEADERS.items():
            write_csv(out / f"trace_{name}.csv", header, sim.traces[name], h, seed)
    write_json(out / "summary.json", _summary(verb, cfg, seed, args, solver=args.solver, solver_info=info,
                                               metrics=result.summary()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    args.solver = "learned"
    return cmd_simulate(args, verb="evaluate")


def cmd_train(args) -> int:
    from .marl import TrainConfig, save_checkpoint, train
    cfg, marl = _load(args)
    seed = _seed(args, cfg)
    try:
        tc_dict = {**marl, "seed": seed}
        if args.episodes is not None:
            tc_dict["episodes"] = args.episodes
        tc = TrainConfig.from_dict(tc_dict)
    except TypeError as exc:
        raise CliError(EXIT_CONFIG, "config", str(exc), "marl") from exc
    out = Path(args.out)

    def progress(ep, summary, curve):
        log.info("episode %d: validation E_w=%.4f delay=%.1f ms failures=%.2f", ep, summary["energy_w"],
                 summary["delay"] * 1e3, summary["failure_rate"])

    res = train(cfg, tc, progress=progress)
    h = cfg.digest()
    save_checkpoint(out / "policy.npz", res.policy, extra={"config_hash": h, "seed": seed})
    curve_cols = ("episode", "mean_reward", "failure_rate", "mean_delay", "mean_energy", "slots")
    rows = [{**c, "failure_rate": float(c["failed"])} for c in res.curve]
    write_csv(out / "learning_curve.csv", curve_cols, rows, h, seed)
    val_cols = ("episode", "agent_steps", "energy_w", "delay", "failure_rate", "mean_reward")
    write_csv(out / "validation.csv", val_cols, res.validations, h, seed)
    write_json(out / "summary.json", _summary("train", cfg, seed, args, train_config=tc.to_dict(),
                                               best_score=list(res.best_score), episodes_run=len(res.curve)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, _ = _load(args)
    seed = _seed(args, cfg)
    omegas = _float_list(args.omega_list, "--omega-list")
    info = {}
    solver = make_solver(args.solver, args, cfg, seed, info)
    rows = sweep_omega(cfg, omegas, solver, args.slots, seed=seed, deployments=args.deployments, jobs=args.jobs)
    out, h = Path(args.out), cfg.digest()
    cols = ("omega", "energy_w", "energy_w_stderr", "delay", "delay_stderr", "energy_ue", "energy_ap",
            "energy_es", "failure_rate", "z_ratio_max")
    write_csv(out / "sweep.csv", cols, rows, h, seed)
    write_csv(out / "omega_vs_energy.csv", ("omega", "energy_w"), rows, h, seed)
    write_csv(out / "omega_vs_delay.csv", ("omega", "delay"), rows, h, seed)
    write_json(out / "summary.json", _summary("sweep-omega", cfg, seed, args, solver=args.solver,
                                               solver_info=info, rows=rows))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg, _ = _load(args)
    seed = _seed(args, cfg)
    target = cfg.delay_target if args.target_delay is None else args.target_delay
    p_star, probes = calibrate_duty_cycle(cfg, target, slots=args.slots, deployments=args.deployments, seed=seed)
    out, h = Path(args.out), cfg.digest()
    write_csv(out / "calibration.csv", ("duty_cycle", "delay"), sorted(probes.items()), h, seed)
    write_json(out / "summary.json", _summary("calibrate-duty-cycle", cfg, seed, args, target_delay=target,
                                               duty_cycle=p_star, probes=sorted(probes.items())))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg, _ = _load(args)
    seed = _seed(args, cfg)
    ks = [int(k) for k in _float_list(args.k_list, "--k-list")]
    names = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for name in names:
        if name not in SOLVERS:
            raise CliError(EXIT_CONFIG, "bad_argument", f"unknown solver {name!r}", "solvers")
    rows, infos = [], {}
    for k in ks:
        cfg_k = cfg.replace(n_ues=k)
        for name in names:
            info = {}
            solver = make_solver(name, args, cfg_k, seed, info)
            res = run(cfg_k, solver, args.slots, seed=seed, deployments=args.deployments, jobs=args.jobs)
            s = res.summary()
            rows.append({"n_ues": k, "solver": name, "energy_w": s["energy_w"], "energy_w_stderr": s["energy_w_stderr"],
                         "delay": s["delay"], "delay_stderr": s["delay_stderr"], "failure_rate": s["failure_rate"],
                         "duty_cycle": info.get("duty_cycle", "")})
            infos[f"{name}@K={k}"] = info
    out, h = Path(args.out), cfg.digest()
    cols = ("n_ues", "solver", "energy_w", "energy_w_stderr", "delay", "delay_stderr", "failure_rate", "duty_cycle")
    write_csv(out / "compare.csv", cols, rows, h, seed)
    for name in names:
        write_csv(out / f"k_vs_energy_{name}.csv", ("n_ues", "energy_w"),
                  [r for r in rows if r["solver"] == name], h, seed)
    write_json(out / "summary.json", _summary("compare", cfg, seed, args, rows=rows, solver_info=infos))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "evaluate": cmd_evaluate, "train": cmd_train, "sweep-omega": cmd_sweep,
            "calibrate-duty-cycle": cmd_calibrate, "compare": cmd_compare}


def _fail(code: int, kind: str, message: str, key=None) -> int:
    print(json.dumps({"error": kind, "message": message, "key": key, "exit_code": code}, sort_keys=True),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.verb](args)
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc), exc.key)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), exc.key)
    except InfeasibleError as exc:
        return _fail(EXIT_INFEASIBLE, "infeasible", str(exc))
    except SearchSpaceError as exc:
        return _fail(EXIT_SEARCH, "search_space", str(exc))
    except TrainingDiverged as exc:
        return _fail(EXIT_DIVERGED, "diverged", str(exc))


if __name__ == "__main__":
    sys.exit(main())
