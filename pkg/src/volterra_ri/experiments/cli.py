"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (bad flags, configuration or
parameters) or a failed verification, 2 runtime error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import (
    ConfigError,
    DomainError,
    FitError,
    ParameterError,
    RegimeError,
    ResolutionError,
    ShapeError,
    VolterraRIError,
)
from ..market import simulate_scenarios
from ..mortality import simulate_paths
from ..objective import ConstantPolicy, StateDependentPolicy, build_ensemble, evaluate_objective
from ..strategies import CONSTANT, UNIT_INTERVAL, check_assumptions, constant_ra_strategy, constrained_ra_strategy
from .config import default_config, load_config
from .export import export_csv, fmt, objective_rows, write_table
from .harness import run_section5
from .verify import run_verify

log = logging.getLogger(__name__)

VALIDATION_ERRORS = (ConfigError, ParameterError, RegimeError, DomainError, ShapeError, FitError, ResolutionError)
U64_MAX = 2**64 - 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text):
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="configuration file (defaults when omitted)")
    common.add_argument("--seed", type=_u64, help="root seed, overrides run.seed")
    common.add_argument("--out", type=Path, help="output directory, overrides output.dir")
    common.add_argument("--paths", type=_positive, help="number of Monte Carlo paths")
    common.add_argument("--steps", type=_positive, help="time steps per year, overrides grid.steps_per_year")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    p = _Parser(prog="volterra-ri", description="Volterra mortality and equilibrium reinsurance-investment tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="simulate mortality and market paths")
    sub.add_parser("strategy", parents=[common], help="tabulate the equilibrium controls")
    sub.add_parser("compare", parents=[common], help="Volterra versus Markov comparison, figure tables")
    sub.add_parser("verify", parents=[common], help="first-order and perturbation checks")
    sub.add_parser("check", parents=[common], help="report the sufficient conditions")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config is not None else default_config()
    if args.steps is not None:
        cfg = cfg.with_overrides(grid__steps_per_year=args.steps)
    return cfg


def _out_dir(args, cfg):
    return args.out if args.out is not None else Path(cfg["output.dir"])


def _seed(args, cfg):
    return int(cfg["run.seed"] if args.seed is None else args.seed)


def cmd_simulate(args, cfg):
    seed, n = _seed(args, cfg), args.paths or cfg["run.n_paths"]
    grid = cfg.grid
    batch = simulate_paths(cfg.mortality, grid, seed, n)
    cgrid = grid.subgrid(0.0) if grid.t0 < 0 else grid
    scen = simulate_scenarios(cfg.market, cfg.claims, batch.lam_hat, cgrid, seed,
                              path_indices=batch.path_indices, mortality_grid=grid, s0=cfg["market.s0"])
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    times = grid.times
    age = cfg["mortality.start_age"] + (times - cfg["mortality.history_start"])
    header = ["t", "age"] + [f"lambda_hat_{p}" for p in range(n)]
    rows = [[fmt(t), fmt(age[i])] + [fmt(v) for v in batch.lam_hat[:, i]] for i, t in enumerate(times)]
    write_table(out / "mortality.csv", header, rows)
    counts = np.concatenate([np.zeros((n, 1)), np.cumsum(scen.claim_size > 0, axis=1)], axis=1)
    header = ["t"] + [f"asset_{p}" for p in range(n)] + [f"claims_{p}" for p in range(n)]
    rows = [[fmt(t)] + [fmt(v) for v in scen.asset[:, i]] + [fmt(v) for v in counts[:, i]]
            for i, t in enumerate(cgrid.times)]
    write_table(out / "market.csv", header, rows)
    print(f"simulated {n} paths on [{grid.t0:g}, {grid.T:g}] with {grid.n_steps} steps; wrote {out}")
    print(f"mean lambda_hat at T: {batch.lam_hat[:, -1].mean():.6g}; mean claims per path: "
          f"{scen.claim_counts.mean():.6g}")
    return 0


def cmd_strategy(args, cfg):
    risk = cfg.risk
    grid = cfg.grid
    cgrid = grid.subgrid(0.0) if grid.t0 < 0 else grid
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    if risk.regime == CONSTANT:
        build = constrained_ra_strategy if cfg["risk.constraint"] == UNIT_INTERVAL else constant_ra_strategy
        s = build(cfg.market, cfg.claims, risk, cgrid)
        rows = [[fmt(t), fmt(s.pi[i]), fmt(s.a[i])] for i, t in enumerate(cgrid.times)]
        write_table(out / "strategy.csv", ["t", "pi", "a"], rows)
        print(f"constant risk aversion phi2={risk.phi2:g}: pi(0)={s.pi[0]:.6g}, a(0)={s.a[0]:.6g}, "
              f"pi(T)={s.pi[-1]:.6g}, a(T)={s.a[-1]:.6g}")
    else:
        res = run_section5(cfg.with_overrides(risk__phi1_sweep=(risk.phi1,)), seed=_seed(args, cfg), n_paths=1)
        lrd, mk = res.lrd[risk.phi1], res.markov[risk.phi1]
        header = ["t", "pi_lrd", "a_lrd", "M_lrd", "pi_markov", "a_markov", "M_markov"]
        rows = [[fmt(t), fmt(lrd.pi[i]), fmt(lrd.a[i]), fmt(lrd.M[i]), fmt(mk.pi[i]), fmt(mk.a[i]), fmt(mk.M[i])]
                for i, t in enumerate(res.control_grid.times)]
        write_table(out / "strategy.csv", header, rows)
        print(f"state-dependent risk aversion phi1={risk.phi1:g}, x0={cfg['market.x0']:g}: "
              f"a(0) volterra {lrd.a[0]:.6g}, markov {mk.a[0]:.6g}; M(0) volterra {lrd.M[0]:.6g}, "
              f"markov {mk.M[0]:.6g}")
    print(f"wrote {out / 'strategy.csv'}")
    return 0


def cmd_compare(args, cfg):
    res = run_section5(cfg, seed=_seed(args, cfg), n_paths=args.paths)
    out = _out_dir(args, cfg)
    export_csv(res, out)
    label = "phi2" if res.regime == CONSTANT else "phi1"
    print(f"comparison on seed {res.seed}, {res.n_paths} path(s), regime {res.regime}")
    for row in res.summary:
        print(f"  {label}={row.phi1:g}: max |pct a| = {row.max_pct_a:.4g}%, max |pct X| = {row.max_pct_x:.4g}%")
    print(f"wrote {out}")
    return 0


def cmd_verify(args, cfg):
    seed = _seed(args, cfg)
    n = args.paths or cfg["run.verify_paths"]
    rep = run_verify(cfg, seed=seed, n_paths=n)
    for line in rep.lines():
        print(line)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for eq, an in zip(rep.equilibrium, rep.anti):
        s = eq.spec
        for k in range(len(eq.epsilons)):
            rows.append([fmt(s.t), fmt(s.rho1), "" if s.rho2 is None else fmt(s.rho2), fmt(eq.epsilons[k]),
                         fmt(eq.estimates[k]), fmt(eq.std_errors[k], "nan"),
                         fmt(an.estimates[k]), fmt(an.std_errors[k], "nan")])
    write_table(out / "verify_perturbation.csv",
                ["t", "rho1", "rho2", "eps", "eq_diff", "eq_se", "anti_diff", "anti_se"], rows)
    ens = build_ensemble(cfg.mortality, cfg.market, cfg.claims, cfg.grid, n, seed)
    if cfg.risk.regime == CONSTANT:
        build = constrained_ra_strategy if cfg["risk.constraint"] == UNIT_INTERVAL else constant_ra_strategy
        pol = ConstantPolicy(build(cfg.market, cfg.claims, cfg.risk, ens.control_grid))
    else:
        pol = StateDependentPolicy(cfg.market, cfg.claims, cfg.risk)
    est = evaluate_objective(pol, cfg.market, cfg.claims, cfg.risk, cfg["market.x0"], 0.0, ens)
    header, rows = objective_rows({"equilibrium": est})
    write_table(out / "objective.csv", header, rows)
    print(f"wrote {out}")
    return 0 if rep.passed else 1


def cmd_check(args, cfg):
    steps = cfg["grid.steps_per_year"]
    rep = check_assumptions(cfg.market, cfg.claims, cfg.mortality, cfg.risk, T=cfg["grid.T"], steps_per_year=steps)
    for line in rep.lines():
        print(line)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "strategy": cmd_strategy,
    "compare": cmd_compare,
    "verify": cmd_verify,
    "check": cmd_check,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:
        # --help exits 0 through argparse
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (VolterraRIError, OSError, ArithmeticError, MemoryError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
