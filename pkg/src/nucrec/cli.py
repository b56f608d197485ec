"""Command-line entry points.

Subcommands:
  generate    draw one observation set and write it to disk
  solve       load an observation set, run the solver, print a summary
  experiment  run a sweep described by a config file, emit CSV + plot
  check       run one Monte-Carlo suite: wishart | var | prop1 | meta
  lambda      print a regularization rule's value for given parameters
"""

import argparse
import dataclasses
import sys

import numpy as np

from .analysis import (check_gaussian_lower_bound, check_gaussian_norm_concentration,
                       check_var_spectrum, check_wishart_spectrum, rsc_report_csv,
                       rsc_report_summary)
from .harness import emit_csv, emit_plot, load_config, run_experiment
from .matcore import frobenius_norm, operator_norm
from .models import (generate_exact_lowrank, generate_near_lowrank, load_observations,
                     make_var_params, sample_compressed, sample_multivar, sample_var,
                     save_observations)
from .regsel import (lambda_compressed, lambda_generic, lambda_manual,
                     lambda_multivar, lambda_var)
from .solver import SolverConfig, solve, solve_noiseless

__all__ = ["main"]


def _build_parser():
    top = argparse.ArgumentParser(prog="nucrec",
                                  description="low-rank matrix recovery toolkit")
    sub = top.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="draw an observation set")
    gen.add_argument("--model", required=True,
                     choices=["regression", "var", "compressed"])
    gen.add_argument("--p", type=int, required=True)
    gen.add_argument("--k", type=int, default=None, help="defaults to p")
    gen.add_argument("--r", type=int, default=10, help="ground-truth rank")
    gen.add_argument("--n", type=int, required=True,
                     help="covariate rows / path length / observation count")
    gen.add_argument("--nu", type=float, default=1.0)
    gen.add_argument("--gamma", type=float, default=0.5)
    gen.add_argument("--q", type=float, default=None,
                     help="near-low-rank exponent (with --rq)")
    gen.add_argument("--rq", type=float, default=None,
                     help="near-low-rank ball radius (with --q)")
    gen.add_argument("--scale", type=float, default=1.0,
                     help="exact-rank singular value")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output stem (.json/.npz)")

    sol = sub.add_parser("solve", help="solve a stored observation set")
    sol.add_argument("input", help="observation stem written by generate")
    sol.add_argument("--lambda", dest="lam", default="auto",
                     help="'auto' (model rule; continuation when noiseless) "
                          "or an explicit solver weight")
    sol.add_argument("--out", default=None, help="summary file (default stdout)")

    exp = sub.add_parser("experiment", help="run a sweep from a config file")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", default=None, help="override output_path")
    exp.add_argument("--workers", type=int, default=None)
    exp.add_argument("--trials", type=int, default=None,
                     help="override trials_per_point")
    exp.add_argument("--seed", type=int, default=None, help="override master_seed")

    chk = sub.add_parser("check", help="run a Monte-Carlo check suite")
    chk.add_argument("suite", choices=["wishart", "var", "prop1", "meta"])
    chk.add_argument("--p", type=int, default=None)
    chk.add_argument("--k", type=int, default=None)
    chk.add_argument("--n", type=int, default=None)
    chk.add_argument("--r", type=int, default=10)
    chk.add_argument("--nu", type=float, default=1.0)
    chk.add_argument("--gamma", type=float, default=0.5)
    chk.add_argument("--t", type=float, default=0.2,
                     help="deviation scale for the meta suite")
    chk.add_argument("--trials", type=int, default=None)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--out", default=None, help="per-trial CSV path")

    lam = sub.add_parser("lambda", help="print a regularization rule value")
    lam.add_argument("--model", required=True,
                     choices=["regression", "var", "compressed"])
    lam.add_argument("--p", type=int, required=True)
    lam.add_argument("--k", type=int, default=None, help="defaults to p")
    lam.add_argument("--n", type=int, required=True,
                     help="covariate rows / path length / observation count")
    lam.add_argument("--nu", type=float, default=1.0)
    lam.add_argument("--gamma", type=float, default=0.5)
    lam.add_argument("--sigma-max", type=float, default=1.0,
                     help="design covariance extreme (regression) or "
                          "stationary covariance operator norm (var)")
    return top


def _cmd_generate(args):
    k = args.k if args.k is not None else args.p
    if (args.q is None) != (args.rq is None):
        raise ValueError("--q and --rq must be given together")
    if args.model == "var":
        if args.q is not None:
            raise ValueError("near-low-rank ground truth is not supported "
                             "for the autoregression (stability constraint)")
        truth = generate_exact_lowrank(args.p, args.p, args.r,
                                       scale=args.gamma, seed=args.seed)
        params = make_var_params(truth.theta_star, args.nu, args.n)
        obs = sample_var(params, seed=args.seed + 1)
    else:
        if args.q is not None:
            truth = generate_near_lowrank(k, args.p, args.q, args.rq,
                                          seed=args.seed)
        else:
            truth = generate_exact_lowrank(k, args.p, args.r,
                                           scale=args.scale, seed=args.seed)
        if args.model == "regression":
            obs = sample_multivar(truth, args.n, nu=args.nu, seed=args.seed + 1)
        else:
            obs = sample_compressed(truth, args.n, nu=args.nu, seed=args.seed + 1)
    save_observations(args.out, obs, truth)
    print(f"wrote {args.out}.json / {args.out}.npz "
          f"(model={args.model}, k={obs.operator.k}, p={obs.operator.p}, "
          f"N={obs.operator.n_obs})")
    return 0


def _auto_choice(obs):
    op = obs.operator
    mp = obs.model_params
    if isinstance(mp, dict) and mp.get("model") == "regression":
        n = op.n_obs // op.k
        return lambda_multivar(obs.noise_level, mp["sigma_max"], op.k, op.p, n)
    if hasattr(mp, "theta_star"):  # VarParams
        return lambda_var(operator_norm(mp.sigma), mp.gamma, op.p, mp.n)
    if isinstance(mp, dict) and mp.get("model") == "compressed":
        return lambda_compressed(obs.noise_level, op.k, op.p, op.n_obs)
    return lambda_generic(obs)


def _cmd_solve(args):
    obs, truth = load_observations(args.input)
    if args.lam == "auto" and obs.noise_level == 0:
        result = solve_noiseless(obs)
        lam_line = "lambda: continuation (auto)"
    else:
        choice = _auto_choice(obs) if args.lam == "auto" \
            else lambda_manual(float(args.lam))
        result = solve(obs, SolverConfig(lam=choice.solver_weight))
        lam_line = (f"lambda: {choice.solver_weight!r} "
                    f"(rule {choice.rule}, value {choice.value!r})")
    lines = [
        f"input: {args.input}",
        lam_line,
        f"iterations: {result.iterations}",
        f"converged: {result.converged}",
        f"optimality_residual: {result.optimality_residual!r}",
        f"fit_residual: {result.fit_residual!r}",
    ]
    if truth is not None:
        err = frobenius_norm(result.theta_hat - truth.theta_star)
        rel = err / frobenius_norm(truth.theta_star)
        lines += [f"frob_error: {err!r}", f"relative_error: {rel!r}"]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_experiment(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.out is not None:
        overrides["output_path"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.trials is not None:
        overrides["trials_per_point"] = args.trials
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    records = run_experiment(cfg)
    failures = sum(1 for rec in records if rec.failure is not None)
    print(f"{len(records)} trials, {failures} failures")
    if cfg.output_path:
        emit_csv(records, cfg.output_path)
        plot_path = (cfg.output_path[:-4] if cfg.output_path.endswith(".csv")
                     else cfg.output_path) + ".svg"
        emit_plot(records, plot_path)
        print(f"wrote {cfg.output_path} and {plot_path}")
    return 0


def _cmd_check(args):
    suite = args.suite
    if suite == "wishart":
        p = args.p if args.p is not None else 50
        n = args.n if args.n is not None else 200
        trials = args.trials if args.trials is not None else 100
        report = check_wishart_spectrum(p, n, None, trials, args.seed)
    elif suite == "var":
        p = args.p if args.p is not None else 20
        n = args.n if args.n is not None else 400
        trials = args.trials if args.trials is not None else 100
        theta = generate_exact_lowrank(p, p, min(args.r, p), scale=args.gamma,
                                       seed=args.seed).theta_star
        report = check_var_spectrum(theta, args.nu, n, trials, args.seed + 1)
    elif suite == "prop1":
        p = args.p if args.p is not None else 20
        k = args.k if args.k is not None else p
        n = args.n if args.n is not None else 3200
        trials = args.trials if args.trials is not None else 50
        report = check_gaussian_lower_bound(k, p, n, trials, 100, args.seed)
    else:
        n = args.n if args.n is not None else 500
        trials = args.trials if args.trials is not None else 1000
        report = check_gaussian_norm_concentration(np.eye(n), n, args.t,
                                                   trials, args.seed)
    print(rsc_report_summary(report))
    if args.out:
        rsc_report_csv(report, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_lambda(args):
    k = args.k if args.k is not None else args.p
    if args.model == "regression":
        choice = lambda_multivar(args.nu, args.sigma_max, k, args.p, args.n)
    elif args.model == "var":
        choice = lambda_var(args.sigma_max, args.gamma, args.p, args.n)
    else:
        choice = lambda_compressed(args.nu, k, args.p, args.n)
    print(f"rule: {choice.rule}")
    print(f"value: {choice.value!r}")
    print(f"solver_weight: {choice.solver_weight!r}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "experiment": _cmd_experiment,
    "check": _cmd_check,
    "lambda": _cmd_lambda,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
