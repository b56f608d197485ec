"""Experiment orchestration: sweeps over (model, p, rescaled sample
size, trial), per-trial seeding, weight selection, solving, and CSV /
plot emission for the curve-collapse studies.

Determinism contract: every trial's random streams derive from
(master_seed, model, p, grid index, trial index), so record values are
independent of worker count and run order. runtime_ms is the one
wall-clock column and is excluded from that guarantee.
"""

import concurrent.futures
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import empirical_vs_bound
from .matcore import frobenius_norm, nuclear_norm, operator_norm
from .models import (generate_exact_lowrank, make_var_params, sample_compressed,
                     sample_multivar, sample_var)
from .regsel import lambda_compressed, lambda_manual, lambda_multivar, lambda_var
from .solver import SolverConfig, solve

__all__ = ["ExperimentConfig", "TrialRecord", "CSV_HEADER", "derive_seed",
           "run_experiment", "collapse_metric", "emit_csv", "read_csv",
           "emit_plot", "load_config"]

_MODELS = ("regression", "var", "compressed")
_MODEL_CODES = {m: i + 1 for i, m in enumerate(_MODELS)}

CSV_HEADER = ("model,p,k,r,N,rescaled_N,trial,seed,lambda,frob_error,"
              "relative_error,nuclear_error,iterations,runtime_ms,"
              "bound_value,bound_ratio")

# Materialized compressed designs above this p need an explicit opt-in.
_COMPRESSED_P_CAP = 40


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep description.

    k_rule is "square" (k = p) or an explicit integer output dimension.
    rescaled_grid lists target values of N/(r*p), where N counts model
    observations: covariate-output pairs for regression, time steps
    for the autoregression, scalar projections for compressed sensing.
    (Each regression pair carries k scalars and each step p, so the
    solver sees N*k or N*p residuals; the error curves align across p
    only in this per-observation count.) N is rounded to the nearest
    integer and rescaled_N recomputed from it. lambda_rule "auto" picks
    the model's closed-form weight; a number fixes the solver weight
    directly. signal_scale "auto" sets the ground-truth singular values
    to 8 for regression, gamma for the autoregression (its stability
    budget), and 4 for compressed sensing; a number overrides.
    """

    model: str
    p_list: tuple = (40,)
    k_rule: object = "square"
    r: int = 10
    nu: float = 1.0
    gamma: float = 0.5
    sigma_spec: object = "identity"
    rescaled_grid: tuple = (2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0)
    trials_per_point: int = 20
    master_seed: int = 0
    lambda_rule: object = "auto"
    signal_scale: object = "auto"
    solver_cfg: SolverConfig = field(default_factory=lambda: SolverConfig(lam=0.0))
    output_path: str | None = None
    workers: int = 1
    allow_large: bool = False

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if not self.p_list or any(p < 1 for p in self.p_list):
            raise ValueError("p_list must be nonempty positive integers")
        if self.k_rule != "square" and (not isinstance(self.k_rule, int)
                                        or self.k_rule < 1):
            raise ValueError("k_rule must be 'square' or a positive integer")
        grid = self.rescaled_grid
        if not grid or any(t < 1 for t in grid):
            raise ValueError("rescaled_grid values must be >= 1")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("rescaled_grid must be strictly increasing")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if self.r < 1 or any(self.r > min(self._k_of(p), p) for p in self.p_list):
            raise ValueError("r must satisfy 1 <= r <= min(k, p)")
        if self.nu < 0:
            raise ValueError("nu must be >= 0")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.lambda_rule != "auto" and not isinstance(self.lambda_rule, (int, float)):
            raise ValueError("lambda_rule must be 'auto' or a number")
        if self.signal_scale != "auto" and not isinstance(self.signal_scale, (int, float)):
            raise ValueError("signal_scale must be 'auto' or a number")
        if (self.model == "compressed" and not self.allow_large
                and any(p > _COMPRESSED_P_CAP for p in self.p_list)):
            raise ValueError(
                f"compressed sweeps above p={_COMPRESSED_P_CAP} materialize "
                "large designs; set allow_large to proceed")

    def _k_of(self, p):
        return p if self.k_rule == "square" else self.k_rule


@dataclass(frozen=True)
class TrialRecord:
    """One CSV row; `lam` is emitted under the column name `lambda`.

    failure carries the reason for an aborted trial (error columns are
    NaN then) and is reported in a sidecar file, not in the CSV.
    """

    model: str
    p: int
    k: int
    r: int
    N: int
    rescaled_N: float
    trial: int
    seed: int
    lam: float
    frob_error: float
    relative_error: float
    nuclear_error: float
    iterations: int
    runtime_ms: float
    bound_value: float
    bound_ratio: float
    failure: str | None = None


def derive_seed(master_seed, model, p, t_index, trial_index):
    """Two independent 64-bit seeds (truth draw, observation draw).

    Deterministic in all coordinates; changing any one changes both
    streams. The first value doubles as the record's seed column.
    """
    ss = np.random.SeedSequence(
        entropy=master_seed,
        spawn_key=(_MODEL_CODES[model], p, t_index, trial_index))
    state = ss.generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


def _resolve_scale(model, signal_scale, p, r, gamma):
    if signal_scale != "auto":
        return float(signal_scale)
    if model == "regression":
        # Size-independent signal level; with the per-pair observation
        # count both the noise and the weight scale the same way in p,
        # so a fixed scale keeps the curves comparable across sizes.
        return 8.0
    if model == "var":
        return gamma  # the stability budget fixes the scale
    return 4.0


def _round_n(t, r, p):
    return max(1, int(round(t * r * p)))


def _run_trial(a):
    """One (generate, select weight, solve, measure) cycle.

    Top-level and primitive-typed so worker processes can receive it;
    any exception becomes a failed record rather than aborting a sweep.
    """
    model, p, k, r, n_obs = a["model"], a["p"], a["k"], a["r"], a["N"]
    nu = a["nu"]
    seed_truth, seed_obs = a["seed_truth"], a["seed_obs"]
    start = time.perf_counter()
    try:
        if model == "regression":
            truth = generate_exact_lowrank(k, p, r, scale=a["scale"], seed=seed_truth)
            obs = sample_multivar(truth, n_obs, sigma_x=a["sigma"], nu=nu,
                                  seed=seed_obs)
            if a["lam"] is None:
                choice = lambda_multivar(nu, obs.model_params["sigma_max"], k, p,
                                         n_obs)
            else:
                choice = lambda_manual(a["lam"])
        elif model == "var":
            truth = generate_exact_lowrank(p, p, r, scale=a["gamma"], seed=seed_truth)
            params = make_var_params(truth.theta_star, nu, n_obs)
            obs = sample_var(params, seed=seed_obs)
            if a["lam"] is None:
                choice = lambda_var(operator_norm(params.sigma), params.gamma, p,
                                    n_obs)
            else:
                choice = lambda_manual(a["lam"])
        else:
            truth = generate_exact_lowrank(k, p, r, scale=a["scale"], seed=seed_truth)
            obs = sample_compressed(truth, n_obs, nu=nu, seed=seed_obs)
            if a["lam"] is None:
                choice = lambda_compressed(nu, k, p, n_obs)
            else:
                choice = lambda_manual(a["lam"])

        cfg = SolverConfig(lam=choice.solver_weight, max_iters=a["max_iters"],
                           rel_tol=a["rel_tol"])
        res = solve(obs, cfg)
        diff = res.theta_hat - truth.theta_star
        frob = frobenius_norm(diff)
        bound = empirical_vs_bound(truth, res.theta_hat, choice, obs)
        runtime = 1e3 * (time.perf_counter() - start)
        return TrialRecord(
            model=model, p=p, k=k, r=r, N=n_obs, rescaled_N=n_obs / (r * p),
            trial=a["trial"], seed=seed_truth, lam=choice.solver_weight,
            frob_error=frob,
            relative_error=frob / frobenius_norm(truth.theta_star),
            nuclear_error=nuclear_norm(diff),
            iterations=res.iterations, runtime_ms=runtime,
            bound_value=bound["bound_value"], bound_ratio=bound["bound_ratio"])
    except Exception as exc:
        nan = float("nan")
        runtime = 1e3 * (time.perf_counter() - start)
        return TrialRecord(
            model=model, p=p, k=k, r=r, N=n_obs, rescaled_N=n_obs / (r * p),
            trial=a["trial"], seed=seed_truth, lam=nan, frob_error=nan,
            relative_error=nan, nuclear_error=nan, iterations=0,
            runtime_ms=runtime, bound_value=nan, bound_ratio=nan,
            failure=f"{type(exc).__name__}: {exc}")


def run_experiment(cfg):
    """Run the full sweep; returns records in canonical order.

    Trials are independent work items; workers > 1 runs them in a
    process pool. Failed trials are recorded with a reason and never
    abort the sweep.
    """
    sigma = None if (isinstance(cfg.sigma_spec, str) and cfg.sigma_spec == "identity") \
        else np.asarray(cfg.sigma_spec, dtype=float)
    lam_fixed = None if cfg.lambda_rule == "auto" else float(cfg.lambda_rule)
    jobs = []
    for p in cfg.p_list:
        k = cfg._k_of(p)
        scale = _resolve_scale(cfg.model, cfg.signal_scale, p, cfg.r, cfg.gamma)
        for t_index, t in enumerate(cfg.rescaled_grid):
            n_obs = _round_n(t, cfg.r, p)
            for trial in range(cfg.trials_per_point):
                seed_truth, seed_obs = derive_seed(cfg.master_seed, cfg.model,
                                                   p, t_index, trial)
                jobs.append({
                    "model": cfg.model, "p": p, "k": k, "r": cfg.r, "N": n_obs,
                    "nu": cfg.nu, "gamma": cfg.gamma, "sigma": sigma,
                    "scale": scale, "lam": lam_fixed, "trial": trial,
                    "seed_truth": seed_truth, "seed_obs": seed_obs,
                    "max_iters": cfg.solver_cfg.max_iters,
                    "rel_tol": cfg.solver_cfg.rel_tol,
                })
    if cfg.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_trial, jobs))
    else:
        records = [_run_trial(j) for j in jobs]
    records.sort(key=lambda rec: (rec.model, rec.p, rec.rescaled_N, rec.trial))
    return records


def collapse_metric(records, t, metric="relative_error", match_tol=0.05):
    """Cross-size alignment at one rescaled grid value.

    Collects successful records whose rescaled_N is within match_tol
    (relative) of t, averages `metric` per p, and returns
    (max - min) / mean over those per-p means. Needs at least two
    distinct p values at that grid point.
    """
    groups = {}
    for rec in records:
        if rec.failure is not None:
            continue
        val = getattr(rec, metric)
        if not np.isfinite(val):
            continue
        if abs(rec.rescaled_N - t) <= match_tol * t:
            groups.setdefault(rec.p, []).append(val)
    if len(groups) < 2:
        raise ValueError(f"need records for >= 2 distinct p at t={t}, "
                         f"found {sorted(groups)}")
    means = np.array([np.mean(v) for v in groups.values()])
    return float((means.max() - means.min()) / means.mean())


_INT_FIELDS = {"p", "k", "r", "N", "trial", "seed", "iterations"}
_FIELD_ORDER = ("model", "p", "k", "r", "N", "rescaled_N", "trial", "seed",
                "lam", "frob_error", "relative_error", "nuclear_error",
                "iterations", "runtime_ms", "bound_value", "bound_ratio")


def emit_csv(records, path):
    """Write records under the fixed header; floats use repr so parsing
    them back reproduces the exact values. Failure reasons, if any, go
    to `<path>.failures.txt` (the CSV row keeps NaN error columns)."""
    if not records:
        raise ValueError("no records to emit")
    lines = [CSV_HEADER]
    for rec in records:
        cells = []
        for name in _FIELD_ORDER:
            v = getattr(rec, name)
            cells.append(str(v) if name == "model" or name in _INT_FIELDS
                         else repr(float(v)))
        lines.append(",".join(cells))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    failures = [rec for rec in records if rec.failure is not None]
    if failures:
        with open(f"{path}.failures.txt", "w", encoding="utf-8", newline="\n") as fh:
            for rec in failures:
                fh.write(f"model={rec.model} p={rec.p} N={rec.N} "
                         f"trial={rec.trial}: {rec.failure}\n")


def read_csv(path):
    """Parse a CSV written by emit_csv back into TrialRecords."""
    with open(path, encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} does not carry the expected header")
    records = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(_FIELD_ORDER):
            raise ValueError(f"malformed row: {ln!r}")
        kwargs = {}
        for name, cell in zip(_FIELD_ORDER, cells):
            if name == "model":
                kwargs[name] = cell
            elif name in _INT_FIELDS:
                kwargs[name] = int(cell)
            else:
                kwargs[name] = float(cell)
        records.append(TrialRecord(**kwargs))
    return records


def emit_plot(records, path, metric="relative_error"):
    """Two-panel vector plot: mean error versus raw N and versus the
    rescaled sample size, one series per p, log error axis. Written as
    a self-contained SVG document."""
    if not records:
        raise ValueError("no records to plot")
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    by_p = {}
    for rec in records:
        val = getattr(rec, metric)
        if rec.failure is None and np.isfinite(val):
            by_p.setdefault(rec.p, {}).setdefault(rec.N, []).append(
                (rec.rescaled_N, val))
    fig, (ax_raw, ax_rescaled) = plt.subplots(1, 2, figsize=(11.0, 4.4))
    for p in sorted(by_p):
        ns = sorted(by_p[p])
        ts = [np.mean([pair[0] for pair in by_p[p][n]]) for n in ns]
        means = [np.mean([pair[1] for pair in by_p[p][n]]) for n in ns]
        ax_raw.semilogy(ns, means, marker="o", label=f"p={p}")
        ax_rescaled.semilogy(ts, means, marker="o", label=f"p={p}")
    ax_raw.set_xlabel("sample size N")
    ax_raw.set_ylabel(f"mean {metric.replace('_', ' ')}")
    ax_rescaled.set_xlabel("rescaled sample size N/(rp)")
    for ax in (ax_raw, ax_rescaled):
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# Config-file keys, mirroring ExperimentConfig (plus solver overrides).
_CONFIG_KEYS = {"model", "p_list", "k_rule", "r", "nu", "gamma", "sigma_spec",
                "rescaled_grid", "trials_per_point", "master_seed",
                "lambda_rule", "signal_scale", "output_path", "workers",
                "allow_large", "max_iters", "rel_tol"}


def load_config(path):
    """Parse a flat key = value experiment description.

    One assignment per line, '#' starts a comment, blank lines ignored.
    Lists are comma-separated. Unknown keys are rejected so typos fail
    loudly instead of silently running defaults.
    """
    raw = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in text.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in raw:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = val

    if "model" not in raw:
        raise ValueError(f"{path}: missing required key 'model'")
    kwargs = {"model": raw.pop("model")}
    solver_kwargs = {}
    for key, val in raw.items():
        if key == "p_list":
            kwargs[key] = tuple(int(s) for s in val.split(","))
        elif key == "rescaled_grid":
            kwargs[key] = tuple(float(s) for s in val.split(","))
        elif key == "k_rule":
            kwargs[key] = val if val == "square" else int(val)
        elif key in {"r", "trials_per_point", "master_seed", "workers"}:
            kwargs[key] = int(val)
        elif key in {"nu", "gamma"}:
            kwargs[key] = float(val)
        elif key in {"lambda_rule", "signal_scale"}:
            kwargs[key] = val if val == "auto" else float(val)
        elif key == "sigma_spec":
            if val != "identity":
                raise ValueError(f"{path}: only sigma_spec = identity is "
                                 "supported in config files")
            kwargs[key] = val
        elif key == "allow_large":
            if val not in {"true", "false"}:
                raise ValueError(f"{path}: allow_large must be true or false")
            kwargs[key] = val == "true"
        elif key == "output_path":
            kwargs[key] = val
        elif key == "max_iters":
            solver_kwargs["max_iters"] = int(val)
        elif key == "rel_tol":
            solver_kwargs["rel_tol"] = float(val)
    if solver_kwargs:
        kwargs["solver_cfg"] = SolverConfig(lam=0.0, **solver_kwargs)
    return ExperimentConfig(**kwargs)
