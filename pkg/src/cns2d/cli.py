"""Command-line driver.

    cns2d simulate      --config cfg.json --out DIR
    cns2d optimize      --config cfg.json --out DIR
    cns2d grad-check    --config cfg.json --out DIR
    cns2d invariants    [--config cfg.json] --out DIR --seed N
    cns2d adjoint-check [--config cfg.json] --out DIR

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical divergence.  ``CNS2D_THREADS`` sets the number of worker
threads for independent solves (default 1); results do not depend on it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, DivergenceError, InputError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _threads() -> int:
    raw = os.environ.get("CNS2D_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"CNS2D_THREADS must be an integer, got {raw!r}")


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _load(args) -> RunConfig:
    if args.config is None:
        if args.command in ("invariants", "adjoint-check"):
            return RunConfig.model_validate({"solver": {"n": 16}}).with_seed(args.seed)
        raise ConfigError(f"{args.command} needs --config")
    return RunConfig.load(args.config).with_seed(args.seed)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(rc: RunConfig, out: Path, args) -> int:
    from .dynamics import export_trajectory, solve_state
    cfg = rc.solver_config()
    traj = solve_state(rc.initial_state(cfg.grid), cfg)
    export_trajectory(traj, out)
    _write_json(out / "config.json", rc.echo())
    h = traj.norm_series("H")
    _say(args, f"simulated {cfg.n_steps} steps; |u|_H in [{h.min():.12f}, {h.max():.12f}]")
    return EXIT_OK


def cmd_optimize(rc: RunConfig, out: Path, args) -> int:
    from .control import PGDOptions, optimize_pgd
    from .dynamics import export_trajectory
    from .sampling import random_control
    o = rc.optimize
    cfg = rc.solver_config()
    if cfg.forcing.kind != "none":
        raise ConfigError("optimize uses the control as forcing; set solver.forcing.kind = 'none'")
    cfg = cfg.replace(store_stride=1)
    u0 = rc.initial_state(cfg.grid)
    U0 = random_control(rc.derived_seed("control", o.control_seed), cfg.grid, cfg.times,
                        scale=o.control_scale, v_bound=o.v_bound)
    opt = PGDOptions(max_iters=o.max_iters, armijo_c=o.armijo_c, shrink=o.shrink,
                     initial_step=o.initial_step, max_shrinks=o.max_shrinks, tol_grad=o.tol_grad,
                     tol_rel=o.tol_rel, tangency=o.tangency, residual_samples=o.samples,
                     residual_seed=rc.derived_seed("control", o.control_seed) + 1)
    rep = optimize_pgd(U0, u0, cfg, opt)
    totals = [c.total for c in rep.cost_history]
    checks = {
        "monotone": bool(all(b < a for a, b in zip(totals, totals[1:]))),
        "converged": rep.status == "converged",
        "variational_inequality": rep.optimality["variational_inequality_min"] >= -o.vi_tol,
        "stationarity": rep.optimality["lagrangian_stationarity_residual"] <= o.stationarity_tol,
    }
    payload = rep.to_dict()
    payload.update({"checks": checks, "config": rc.echo()})
    _write_json(out / "report.json", payload)
    if o.export_control:
        export_trajectory(rep.control, out / "control", name="control")
        export_trajectory(rep.state, out / "state")
    _say(args, f"pgd {rep.status} after {rep.iterations} iterations; J = {totals[-1]:.12g}")
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def cmd_grad_check(rc: RunConfig, out: Path, args) -> int:
    from .control import admissible_project, gradient_check
    from .linearization import loglog_slope
    from .sampling import random_control
    gc = rc.grad_check
    cfg = rc.solver_config()
    if cfg.forcing.kind != "none":
        raise ConfigError("grad-check uses the control as forcing; set solver.forcing.kind = 'none'")
    cfg = cfg.replace(store_stride=1)
    u0 = rc.initial_state(cfg.grid)
    times = cfg.times
    U = admissible_project(random_control(rc.derived_seed("control", gc.control_seed),
                                          cfg.grid, times), u0)
    h = random_control(rc.derived_seed("direction", gc.direction_seed), cfg.grid, times)
    eps = sorted(set(gc.eps) | {gc.check_eps}, reverse=True)
    recs = gradient_check(U, h, u0, cfg, eps, workers=_threads())
    # the smallest-eps quotient estimates the eps-independent discretisation bias
    ref = recs[-1]["lhs"] - recs[-1]["rhs"]
    scale = abs(recs[0]["rhs"])
    for r in recs:
        r["debiased_err"] = abs(r["lhs"] - r["rhs"] - ref) / scale
    fit = recs[:-1]
    slope = loglog_slope([r["eps_or_dt"] for r in fit], [r["debiased_err"] for r in fit])
    at = next(r for r in recs if r["eps_or_dt"] == gc.check_eps)
    checks = {"rel_err_at_check_eps": at["rel_err"] <= gc.tol,
              "slope": abs(slope - gc.slope_target) <= gc.slope_tol}
    with open(out / "grad_check.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "fd", "adjoint", "rel_err", "debiased_err"])
        for r in recs:
            w.writerow([repr(r["eps_or_dt"]), repr(r["lhs"]), repr(r["rhs"]),
                        repr(r["rel_err"]), repr(r["debiased_err"])])
    _write_json(out / "grad_check.json", {"records": recs, "slope": slope, "checks": checks,
                                          "config": rc.echo()})
    _say(args, f"gradient check: rel err {at['rel_err']:.3e} at eps={gc.check_eps}, slope {slope:.3f}")
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def cmd_invariants(rc: RunConfig, out: Path, args) -> int:
    from .checks import run_invariants
    iv = rc.invariants
    recs = run_invariants(rc.derived_seed("invariants"), iv.n, iv.samples, iv.pairs)
    _write_json(out / "invariants.json", {"checks": recs, "config": rc.echo()})
    failed = [r["name"] for r in recs if not r["passed"]]
    _say(args, f"{len(recs) - len(failed)}/{len(recs)} invariants passed"
         + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_OK


def cmd_adjoint_check(rc: RunConfig, out: Path, args) -> int:
    from .checks import adjoint_term_checks, duality_checks
    ac = rc.adjoint_check
    seed = rc.derived_seed("adjoint")
    s = rc.solver
    recs = adjoint_term_checks(seed, s.n, ac.samples, ac.term_tol)
    recs += duality_checks(seed, s.n, min(s.horizon, 0.5), s.dt, ac.duality_tol)
    _write_json(out / "adjoint_check.json", {"checks": recs, "config": rc.echo()})
    failed = [r["name"] for r in recs if not r["passed"]]
    _say(args, f"{len(recs) - len(failed)}/{len(recs)} adjoint checks passed"
         + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "grad-check": cmd_grad_check,
            "invariants": cmd_invariants, "adjoint-check": cmd_adjoint_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cns2d", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("--quiet", action="store_true", help="suppress the summary line")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = _load(args)
        args.out.mkdir(parents=True, exist_ok=True)
        with np.errstate(over="ignore", invalid="ignore"):
            return COMMANDS[args.command](rc, args.out, args)
    except DivergenceError as exc:
        print(f"error: numerical divergence at step {exc.step}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
