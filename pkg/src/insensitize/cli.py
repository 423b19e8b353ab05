"""Command-line front end.

    insensitize {simulate,control,insensitize-check,carleman-scan,convergence}
                --config run.yaml [--out DIR] [--seed INT]

Exit status: 0 on success, 2 on configuration/validation errors, 3 on
numerical failure. Every file written carries the resolved configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiments as ex
from .cascade import CascadeProblem
from .config import RunConfig, initial_field, load_config, sources
from .control import ControlSpec
from .errors import ConfigurationError, NumericalError
from .io import read_field_file, write_field_file, write_table

log = logging.getLogger("insensitize")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _problem(cfg: RunConfig, grid, need_overlap=True) -> CascadeProblem:
    omega, obs = cfg.build_masks(grid, need_overlap)
    f0, f1 = sources(cfg, grid)
    return CascadeProblem(grid, omega, obs, u0=initial_field(cfg, grid), f0=f0, f1=f1,
                          zeta=cfg.physics.zeta, check_overlap=need_overlap)


def _specs(cfg: RunConfig, grid, epsilons) -> list:
    c = cfg.control
    wp = cfg.weights.build(grid)
    return [ControlSpec(epsilon=e, mode=c.mode, cg_tol=c.cg_tol, cg_maxit=c.cg_maxit,
                        weight_params=wp, n_test_directions=c.test_directions, test_seed=cfg.seed,
                        smallness_c=c.smallness_c, smallness_delta=c.smallness_delta)
            for e in epsilons]


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    """Forward solve; trajectory plus mass/energy series."""
    grid = cfg.build_grid()
    f0, _ = sources(cfg, grid)
    traj, q, summary = ex.run_simulate(grid, initial_field(cfg, grid), f0, cfg.physics.zeta)
    conf = cfg.resolved()
    write_field_file(out / "trajectory", traj.values, conf,
                     {"quantity": "u", "time_start": 0.0, "time_step": grid.dt, "dx": grid.dx})
    rows = [{"t": t, "norm": n, "mass": m, "energy": e}
            for t, n, m, e in zip(q["t"], q["norm"], q["mass"], q["energy"])]
    write_table(out / "conserved.csv", rows, conf)
    write_table(out / "summary.csv", [summary], conf)
    return summary


def cmd_control(cfg: RunConfig, out: Path) -> dict:
    """Penalized-HUM controls over the epsilon list."""
    grid = cfg.build_grid()
    problem = _problem(cfg, grid)
    results = ex.run_control(problem, _specs(cfg, grid, cfg.control.epsilons),
                             cfg.control.outer_tol, cfg.control.outer_maxit, cfg.control.workers)
    conf = cfg.resolved()
    write_table(out / "control.csv", ex.control_records(results), conf)
    base = ex.v_profile(problem, None)
    profile = {"t": base[:, 0], "v_norm_uncontrolled": base[:, 1]}
    for k, r in enumerate(results):
        write_field_file(out / f"control_{k}", r.h, conf,
                         {"quantity": "h", "epsilon": r.epsilon, "time_start": grid.dt / 2,
                          "time_step": grid.dt, "dx": grid.dx})
        profile[f"v_norm_eps_{r.epsilon:g}"] = ex.v_profile(problem, r.h)[:, 1]
    rows = [dict(zip(profile, vals)) for vals in zip(*profile.values())]
    write_table(out / "v_profile.csv", rows, conf)
    norms = [r.v0_norm for r in results]
    return {"v0_norms": norms, "all_converged": all(r.converged for r in results)}


def cmd_insensitize_check(cfg: RunConfig, out: Path) -> dict:
    """Adjoint vs finite-difference sentinel derivatives."""
    grid = cfg.build_grid()
    problem = _problem(cfg, grid)
    ic = cfg.insensitize
    if ic.control_file:
        h, _ = read_field_file(ic.control_file)
        if h.shape != (grid.M, grid.N):
            raise ConfigurationError(f"control file holds {h.shape}, grid needs {(grid.M, grid.N)}")
    else:
        h = ex.run_control(problem, _specs(cfg, grid, [ic.epsilon]),
                           cfg.control.outer_tol, cfg.control.outer_maxit)[0].h
    rows, summary = ex.insensitivity_table(problem, h, ic.directions, cfg.seed, ic.taus)
    conf = cfg.resolved()
    write_table(out / "insensitivity.csv", rows, conf)
    write_table(out / "summary.csv", [summary], conf)
    return summary


def cmd_carleman_scan(cfg: RunConfig, out: Path) -> dict:
    """Empirical weighted-inequality constants over (lam, mu)."""
    grid = cfg.build_grid()
    omega, obs = cfg.build_masks(grid)
    a = cfg.audit
    rows, samples, summary = ex.run_carleman_scan(
        grid, omega, obs, a.lambda_values(grid.T), a.mus, a.samples, cfg.seed,
        cfg.weights.x0, a.evaluator, a.source_scale, a.rho)
    conf = cfg.resolved()
    write_table(out / "constant_scan.csv", rows, conf)
    write_table(out / "observability.csv", samples, conf)
    write_table(out / "summary.csv", [summary], conf)
    return summary


def cmd_convergence(cfg: RunConfig, out: Path) -> dict:
    """Manufactured-solution refinement study."""
    c = cfg.convergence
    rows, orders = ex.convergence_study(cfg.grid.L, cfg.grid.T, c.grids, c.zeta, c.amplitude)
    write_table(out / "convergence.csv", rows, cfg.resolved())
    return {"observed_orders": orders}


COMMANDS = {
    "simulate": cmd_simulate,
    "control": cmd_control,
    "insensitize-check": cmd_insensitize_check,
    "carleman-scan": cmd_carleman_scan,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insensitize",
        description="Insensitizing controls for the fourth-order Schrodinger equation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().split("\n")[0] or None)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_seed(args.seed).with_output(args.out)
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        with np.errstate(over="raise", invalid="raise"):
            summary = COMMANDS[args.command](cfg, out)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"diagnostics: {diag}", file=sys.stderr)
        return EXIT_NUMERICAL
    for k, v in summary.items():
        print(f"{k}: {v}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
