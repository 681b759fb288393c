"""Command-line entry point: ``risisac <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .beamforming import InfeasibleError
from .benchmarks import BENCHMARKS, run_benchmark, solve_proposed
from .config import ConfigError, ScenarioConfig, load_scenario
from .experiments import CATALOG, catalog_listing, monte_carlo, run_experiment
from .feasibility import max_detection_probability, required_T0, udr_search

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID = 0, 2, 3


def _config(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario)
    if args.paper_scale:
        cfg = cfg.replace(M=32, N_x=8, N_y=8, quadrature_divisions=100)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _print_solution(sol, label="solution"):
    print(f"{label}: snr_db={sol.snr_db:.4f} echo_dbm={sol.echo_power_dbm:.4f} "
          f"pd={sol.detection_probability:.6f}")


def _cmd_solve(args):
    cfg = _config(args)
    sol = solve_proposed(cfg.problem())
    _print_solution(sol)
    print("omega_phase_rad=" + " ".join(f"{x:.6f}" for x in np.angle(sol.omega)))
    return EXIT_OK


def _cmd_feasibility(args):
    cfg = _config(args)
    prob = cfg.problem()
    rep = max_detection_probability(prob)
    print(f"U={rep.U:.6f} max_echo_dbm={10 * np.log10(rep.max_echo_power):.4f} "
          f"threshold_dbm={10 * np.log10(prob.echo_threshold):.4f} feasible={rep.feasible}")
    print(f"required_t0_s={required_T0(prob, report=rep):.6g}")
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def _cmd_udr(args):
    cfg = _config(args)
    if not 0 < args.gamma < 1:
        raise ConfigError("detection.gamma: must lie strictly between 0 and 1")
    res = udr_search(cfg.problem(), gamma=args.gamma)
    print(f"delta_star_rad={res.delta_star:.6g} area_m2={res.area_m2:.6g} U={res.U_at_delta:.6f}")
    return EXIT_OK


def _cmd_benchmark(args):
    cfg = _config(args)
    sol = run_benchmark(args.kind, cfg.problem(), trials=args.trials, seed=cfg.seed)
    _print_solution(sol, args.kind)
    return EXIT_OK


def _cmd_experiment(args):
    cfg = _config(args)
    if args.name not in CATALOG:
        print(f"unknown experiment {args.name!r}; available:\n{catalog_listing()}", file=sys.stderr)
        return EXIT_INVALID
    if args.trials > 1:
        table = monte_carlo(args.name, cfg, args.trials, cfg.seed, workers=args.workers)
    else:
        table = run_experiment(args.name, cfg, workers=args.workers)
    text = table.to_csv()
    if args.out:
        table.save(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_catalog(args):
    print(catalog_listing())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risisac", description="RIS-assisted sensing and communication design")
    p.add_argument("--paper-scale", action="store_true",
                   help="override arrays to M=32, N=8x8 and 100 quadrature divisions (slow)")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario(sp):
        sp.add_argument("scenario", help="scenario file (INI sections as in ScenarioConfig)")

    sp = sub.add_parser("solve", help="joint design at the detection requirement")
    scenario(sp)
    sp.set_defaults(func=_cmd_solve)

    sp = sub.add_parser("feasibility", help="maximum detection probability and feasibility gate")
    scenario(sp)
    sp.set_defaults(func=_cmd_feasibility)

    sp = sub.add_parser("udr", help="smallest detectable target size")
    scenario(sp)
    sp.add_argument("--gamma", type=float, required=True)
    sp.set_defaults(func=_cmd_udr)

    sp = sub.add_parser("benchmark", help="one reference design, scored with the finite-patch echo")
    sp.add_argument("kind", choices=BENCHMARKS)
    scenario(sp)
    sp.add_argument("--trials", type=int, default=300, help="random-phase trials")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=_cmd_benchmark)

    sp = sub.add_parser("experiment", help="run a catalog sweep and emit CSV")
    sp.add_argument("name")
    scenario(sp)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None, help="(base) seed; defaults to the scenario's")
    sp.add_argument("--out", default=None, help="output CSV path (stdout when omitted)")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=_cmd_experiment)

    sp = sub.add_parser("catalog", help="list experiments")
    sp.set_defaults(func=_cmd_catalog)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as e:
        # raised by the limit searches when the target cannot be reached
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
