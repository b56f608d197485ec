"""Proximal-gradient solver for nuclear-norm regularized least squares.

Minimizes ``F(T) = (1/2N) ||y - A(T)||^2 + lam * ||T||_*`` over k x p
matrices, where A is a LinearMatrixOperator and ||.||_* the nuclear
norm. The smooth-part gradient is ``(1/N) A*(A(T) - y)`` and each
iteration is one singular-value soft-thresholding step; with
acceleration on, a standard two-sequence momentum scheme with restart
on objective increase is used.

The per-observation normalization matters: `lam` here multiplies the
nuclear norm against the (1/2N)-scaled quadratic. The regularization
module converts published per-model weights into this normalization.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .matcore import (composed_operator_norm, nuclear_norm, operator_norm, svd,
                      svt_with_values)

__all__ = ["SolverConfig", "SolveResult", "SolverDivergenceError", "solve",
           "solve_noiseless"]

_EPS = float(np.finfo(np.float64).eps)


class SolverDivergenceError(RuntimeError):
    """Objective became non-finite; the step size is too large."""


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.

    step=None selects the automatic step 0.99/L with L the largest
    eigenvalue of the composed map T -> (1/N) A*(A(T)): exact via the
    design Gram matrix for the regression-style and identity operators,
    estimated by power iteration (inflated 5% for safety margin) for
    dense compressed designs. A float fixes the step directly.

    theta0 warm-starts the iteration (zeros when None).
    """

    lam: float
    max_iters: int = 5000
    rel_tol: float = 1e-9
    step: float | None = None
    acceleration: bool = True
    theta0: np.ndarray | None = None
    power_iters: int = 60
    power_seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.step is not None and not self.step > 0:
            raise ValueError("fixed step must be positive")
        if self.power_iters < 1:
            raise ValueError("power_iters must be >= 1")


@dataclass(frozen=True)
class SolveResult:
    """Estimate plus the evidence the run left behind.

    optimality_residual is max(||(1/N) A*(A(T)-y)||_op - lam, 0): the
    amount by which the gradient exceeds the subdifferential bound.
    converged means the relative-change stop fired and the first-order
    certificate (gradient norm within lam*(1+1e-3), gradient aligned
    with -lam*UV' on the estimate's singular span) passed.
    fit_residual is ||A(T)-y|| / ||y|| (absolute when y = 0).
    """

    theta_hat: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    optimality_residual: float
    converged: bool
    fit_residual: float


def _auto_step(op, power_iters, power_seed):
    """0.99 / (largest eigenvalue of the composed map), robustly."""
    if op.kind == "identity":
        lmax = 1.0 / op.n_obs
    elif op.kind == "multivar":
        # Composed map is T -> T (X'X)/N; its top eigenvalue is exact
        # and cheap at p x p scale.
        gram = op.design.T @ op.design
        lmax = float(np.linalg.eigvalsh(gram)[-1]) / op.n_obs
    else:
        est = composed_operator_norm(op, iters=power_iters, seed=power_seed)
        lmax = 1.05 * est  # power iteration underestimates; keep descent safe
    if lmax <= 0:
        return 1.0
    return 0.99 / lmax


def _certificate(theta, grad, lam, slack):
    """First-order optimality check at theta.

    Returns (excess, ok): excess = max(||grad||_op - lam, 0); ok
    requires the norm condition and, when theta != 0, alignment
    ||U' grad V + lam I||_op <= slack on the singular span of theta.
    """
    gnorm = operator_norm(grad)
    excess = max(gnorm - lam, 0.0)
    ok = gnorm <= lam + slack
    if ok and np.any(theta):
        f = svd(theta)
        keep = f.s > 1e-10 * f.s[0]
        u, v = f.U[:, keep], f.V[:, keep]
        align = u.T @ grad @ v + lam * np.eye(int(np.sum(keep)))
        ok = operator_norm(align) <= slack
    return excess, ok


def solve(obs, cfg):
    """Run the proximal-gradient iteration on one observation set.

    Stops when the relative objective change drops below cfg.rel_tol
    (with an absolute floor at rounding-noise scale) or at max_iters;
    the returned `converged` flag additionally requires the first-order
    certificate. Raises SolverDivergenceError if the objective becomes
    non-finite, which indicates a too-large fixed step.
    """
    if cfg.lam < 0:
        raise ValueError("lam must be >= 0")
    op = obs.operator
    y = obs.y
    k, p, n_obs = op.shape
    lam = float(cfg.lam)

    eta = cfg.step if cfg.step is not None else _auto_step(op, cfg.power_iters,
                                                           cfg.power_seed)

    if cfg.theta0 is not None:
        theta = np.array(cfg.theta0, dtype=float)
        if theta.shape != (k, p) or not np.all(np.isfinite(theta)):
            raise ValueError(f"theta0 must be a finite {(k, p)} matrix")
    else:
        theta = np.zeros((k, p))

    def objective(resid, nuc):
        # overflow here is handled explicitly (divergence error below)
        with np.errstate(over="ignore"):
            return 0.5 * float(resid @ resid) / n_obs + lam * nuc

    a_theta = op.apply(theta)
    nuc0 = nuclear_norm(theta) if np.any(theta) else 0.0
    f_cur = objective(a_theta - y, nuc0)
    trace = [f_cur]

    # Scale for "the objective stopped moving at rounding noise":
    # without it, tiny-lam continuation stages spin on +-1 ulp jitter.
    obj_scale = max(abs(f_cur), 0.5 * float(y @ y) / n_obs, _EPS)
    grad0_norm = operator_norm(op.adjoint(y) / n_obs)
    cert_slack = 1e-3 * lam + 1e-8 * max(grad0_norm, _EPS)

    theta_prev = theta
    a_prev = a_theta
    z = theta
    a_z = a_theta
    t_mom = 1.0
    iters = 0
    plateaued = False

    for _ in range(cfg.max_iters):
        grad = op.adjoint(a_z - y) / n_obs
        theta_new, shrunk = svt_with_values(z - eta * grad, eta * lam)
        a_new = op.apply(theta_new)
        f_new = objective(a_new - y, float(np.sum(shrunk)))
        if not np.isfinite(f_new):
            raise SolverDivergenceError(
                "objective became non-finite; reduce the step size "
                "(or use the automatic step)")
        iters += 1

        if not cfg.acceleration and f_new > f_cur:
            # Descent is guaranteed at this step size, so an increase
            # means rounding noise: keep the previous (better) iterate.
            break

        trace.append(f_new)
        delta = abs(f_cur - f_new)
        theta_prev, a_prev, f_prev = theta, a_theta, f_cur
        theta, a_theta, f_cur = theta_new, a_new, f_new

        if cfg.acceleration:
            if f_new > f_prev:
                t_mom = 1.0  # restart: momentum overshot
                z, a_z = theta, a_theta
            else:
                t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
                beta = (t_mom - 1.0) / t_next
                z = theta + beta * (theta - theta_prev)
                a_z = a_theta + beta * (a_theta - a_prev)  # apply is linear
                t_mom = t_next
        else:
            z, a_z = theta, a_theta

        if delta <= max(cfg.rel_tol * max(abs(f_new), _EPS), 64 * _EPS * obj_scale):
            plateaued = True
            break

    grad_final = op.adjoint(a_theta - y) / n_obs
    excess, cert_ok = _certificate(theta, grad_final, lam, cert_slack)
    y_norm = float(np.linalg.norm(y))
    resid_norm = float(np.linalg.norm(a_theta - y))
    fit = resid_norm / y_norm if y_norm > 0 else resid_norm
    return SolveResult(
        theta_hat=theta,
        objective_trace=np.asarray(trace),
        iterations=iters,
        optimality_residual=float(excess),
        converged=bool(plateaued and cert_ok),
        fit_residual=fit,
    )


def solve_noiseless(obs, lambda0=None, decay=0.5, stages=20, cfg=None):
    """Continuation toward the equality-constrained problem.

    Solves a sequence of regularized problems with geometrically
    decaying weight, warm-starting each stage at the previous estimate:
    lam = lambda0 * decay**j for j = 0..stages-1. Defaults: lambda0 at
    half the over-regularization boundary ||(1/N) A*(y)||_op, decay
    0.5, 20 stages. Requires a noiseless observation set.

    The returned result carries the final stage's trace and certificate
    but the total iteration count across stages.
    """
    if obs.noise_level != 0:
        raise ValueError("continuation expects a noiseless observation set")
    if not 0 < decay < 1:
        raise ValueError("decay must lie in (0, 1)")
    if stages < 1:
        raise ValueError("stages must be >= 1")
    base = cfg if cfg is not None else SolverConfig(lam=0.0)
    if lambda0 is None:
        lambda0 = 0.5 * operator_norm(obs.operator.adjoint(obs.y) / obs.operator.n_obs)
    if lambda0 < 0:
        raise ValueError("lambda0 must be >= 0")

    theta0 = base.theta0
    total = 0
    result = None
    for j in range(stages):
        stage_cfg = dataclasses.replace(base, lam=lambda0 * decay**j, theta0=theta0)
        result = solve(obs, stage_cfg)
        total += result.iterations
        theta0 = result.theta_hat
    return dataclasses.replace(result, iterations=total)
