"""Error-geometry constructions and statistical checks.

Three groups live here:

  * the split of an estimation error into a low-rank part aligned with
    the target's singular subspaces and a residual part orthogonal to
    them, plus the cone-membership test built on it;
  * evaluators for the deterministic recovery-error bounds (exact-rank
    and near-low-rank forms) and the per-trial empirical-versus-bound
    comparison;
  * Monte-Carlo frequency checks for the spectral and concentration
    events the guarantees rest on. Each check reports the empirical
    pass rate next to the theoretical floor when one exists. The
    "for all matrices" inequality is sampled over a documented rank
    mixture, so it is a necessary-condition check only.

Normalization: bounds pair the weight lambda with the curvature
constant kappa expressed against the same objective scaling. The
per-model pairings used by empirical_vs_bound are written out in its
docstring.
"""

from dataclasses import dataclass

import numpy as np

from .matcore import SubspacePair, as_matrix, frobenius_norm, nuclear_norm, operator_norm
from .models import VarParams, make_var_params, sample_var
from .models import _haar_frame  # shared subspace sampler

__all__ = [
    "ErrorDecomposition",
    "RestrictedSetParams",
    "RscReport",
    "decompose_error",
    "in_restricted_set",
    "recovery_error_bound",
    "near_lowrank_error_bound",
    "check_wishart_spectrum",
    "check_var_spectrum",
    "check_gaussian_lower_bound",
    "check_gaussian_norm_concentration",
    "empirical_vs_bound",
    "rsc_report_csv",
    "rsc_report_summary",
]


@dataclass(frozen=True)
class ErrorDecomposition:
    """delta = delta_prime + delta_dblprime with rank(delta_prime) <= 2r.

    delta_dblprime lives entirely in the orthogonal complements of the
    reference subspaces, so its nuclear norm adds exactly to that of
    any matrix supported on the subspaces themselves.
    """

    delta_prime: np.ndarray
    delta_dblprime: np.ndarray
    r: int


@dataclass(frozen=True)
class RestrictedSetParams:
    """Membership parameters: subspace rank r, norm tolerance delta,
    and the reference subspace pair (top-r singular vectors of the
    target)."""

    r: int
    delta: float
    subspaces: SubspacePair

    def __post_init__(self):
        if self.r != self.subspaces.r:
            raise ValueError("r must match the subspace pair")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")


@dataclass(frozen=True)
class RscReport:
    """Outcome of a Monte-Carlo frequency check.

    statistics maps named per-trial arrays (always including "pass");
    floor is the theoretical success-probability lower bound, NaN when
    the source states none for the regime.
    """

    kind: str
    trials: int
    pass_rate: float
    statistics: dict
    floor: float

    def __post_init__(self):
        if not 0.0 <= self.pass_rate <= 1.0:
            raise ValueError("pass_rate must lie in [0, 1]")


def decompose_error(delta, factors):
    """Split delta against a subspace pair (U, V) of rank r.

    delta_dblprime = (I - UU')delta(I - VV') has row space orthogonal
    to V and column space orthogonal to U; the remainder delta_prime
    touches at most r extra directions on each side, so its rank is at
    most 2r. The split is exact: the parts sum to delta.
    """
    d = as_matrix(delta, "delta")
    u, v = factors.U, factors.V
    if u.shape[0] != d.shape[0] or v.shape[0] != d.shape[1]:
        raise ValueError(
            f"factors {u.shape[0]} x {v.shape[0]} do not match delta {d.shape}")
    left = d - u @ (u.T @ d)       # (I - UU') delta
    dbl = left - (left @ v) @ v.T  # ... (I - VV')
    return ErrorDecomposition(d - dbl, dbl, factors.r)


def in_restricted_set(delta, params, theta_star):
    """Evaluate the two cone inequalities; returns (member, margins).

    margins["norm"] = ||delta||_F - delta_tol and margins["cone"] =
    3||delta'||_* + 4||P(theta_star)||_* - ||delta''||_* where P
    projects onto the complements of both reference subspaces.
    Membership requires both margins >= 0.
    """
    theta = as_matrix(theta_star, "theta_star")
    dec = decompose_error(delta, params.subspaces)
    u, v = params.subspaces.U, params.subspaces.V
    left = theta - u @ (u.T @ theta)
    theta_perp = left - (left @ v) @ v.T
    cone = (3.0 * nuclear_norm(dec.delta_prime)
            + 4.0 * nuclear_norm(theta_perp)
            - nuclear_norm(dec.delta_dblprime))
    norm_margin = frobenius_norm(delta) - params.delta
    margins = {"norm": float(norm_margin), "cone": float(cone)}
    return bool(norm_margin >= 0 and cone >= 0), margins


def recovery_error_bound(lam, r, kappa, approx_term=0.0, delta=0.0):
    """Exact-rank Frobenius error bound.

    max(delta, 32*lam*sqrt(r)/kappa, sqrt(16*lam*approx_term/kappa)).
    lam and kappa must share a normalization; approx_term is the
    nuclear norm of the target outside the rank-r reference subspaces
    (zero for exact rank r).
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if lam < 0 or r < 0 or approx_term < 0 or delta < 0:
        raise ValueError("lam, r, approx_term, delta must be >= 0")
    return float(max(delta,
                     32.0 * lam * np.sqrt(r) / kappa,
                     np.sqrt(16.0 * lam * approx_term / kappa)))


def near_lowrank_error_bound(lam, kappa, q, radius, delta=0.0):
    """Near-low-rank Frobenius error bound.

    max(delta, 32*sqrt(radius)*(lam/kappa)**(1 - q/2)) for a target in
    the lq-ball of the given radius. At q = 0 (radius = rank) this
    coincides with recovery_error_bound with no approximation term.
    """
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    if lam < 0 or radius < 0 or delta < 0:
        raise ValueError("lam, radius, delta must be >= 0")
    return float(max(delta, 32.0 * np.sqrt(radius) * (lam / kappa) ** (1.0 - 0.5 * q)))


def _spawn_rngs(seed, trials):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def check_wishart_spectrum(p, n, sigma=None, trials=100, seed=0):
    """Frequency of the sample-covariance eigenvalue sandwich.

    Per trial draws X with n i.i.d. N(0, sigma) rows and records the
    extreme eigenvalues of X'X/n; the pass event is
    sigma_min(X'X/n) >= sigma_min(sigma)/9 and
    sigma_max(X'X/n) <= 9*sigma_max(sigma). Floor: 1 - 4*exp(-n/2).
    """
    if n < p:
        raise ValueError("need n >= p")
    if sigma is None:
        root = None
        smin = smax = 1.0
    else:
        s = as_matrix(sigma, "sigma")
        w, u = np.linalg.eigh(s)
        if w[0] <= 0:
            raise ValueError("sigma must be positive definite")
        root = (u * np.sqrt(w)) @ u.T
        smin, smax = float(w[0]), float(w[-1])
    lo, hi = np.empty(trials), np.empty(trials)
    ok = np.empty(trials, dtype=bool)
    for i, rng in enumerate(_spawn_rngs(seed, trials)):
        x = rng.standard_normal((n, p))
        if root is not None:
            x = x @ root
        ev = np.linalg.eigvalsh(x.T @ x / n)
        lo[i], hi[i] = ev[0], ev[-1]
        ok[i] = ev[0] >= smin / 9.0 and ev[-1] <= 9.0 * smax
    stats = {"sigma_min": lo, "sigma_max": hi, "pass": ok.astype(float)}
    return RscReport("wishart", trials, float(np.mean(ok)), stats,
                     float(1.0 - 4.0 * np.exp(-n / 2.0)))


def check_var_spectrum(theta_star, nu, n, trials=100, seed=0):
    """Frequency of the autoregressive design eigenvalue sandwich.

    Per trial draws a stationary length-n path driven by theta_star and
    records the extreme eigenvalues of X'X/n for the stacked states X;
    the pass event is sigma_min >= sigma_min(S)/4 and
    sigma_max <= 24*sigma_max(S)/(1-g), with S the stationary
    covariance and g the operator norm of theta_star. No closed-form
    floor is claimed for this regime (floor = NaN).
    """
    params = make_var_params(theta_star, nu, n)
    gamma = operator_norm(params.theta_star)
    ev_sigma = np.linalg.eigvalsh(params.sigma)
    lo_bound = ev_sigma[0] / 4.0
    hi_bound = 24.0 * ev_sigma[-1] / (1.0 - gamma)
    lo, hi = np.empty(trials), np.empty(trials)
    ok = np.empty(trials, dtype=bool)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        obs = sample_var(params, seed=child)
        x = obs.operator.design
        ev = np.linalg.eigvalsh(x.T @ x / n)
        lo[i], hi[i] = ev[0], ev[-1]
        ok[i] = ev[0] >= lo_bound and ev[-1] <= hi_bound
    stats = {"sigma_min": lo, "sigma_max": hi, "pass": ok.astype(float)}
    return RscReport("var", trials, float(np.mean(ok)), stats, float("nan"))


def check_gaussian_lower_bound(k, p, n_obs, trials=50, num_test_matrices=100,
                               seed=0):
    """Sampled check of the Gaussian-operator lower bound.

    Per trial draws a fresh operator with i.i.d. N(0,1) observation
    matrices, then tests
        ||A(T)||_2 / sqrt(N) >= ||T||_F/4 - (sqrt(k/N)+sqrt(p/N))*||T||_*
    on a rank mixture of test matrices: ranks cycle 1..min(k,p) with
    Grassmann-uniform subspaces and uniform [0.5, 2] singular values.
    Pass = the inequality holds for every test matrix; floor
    1 - 2*exp(-N/32). Sampling makes this a necessary-condition check.
    """
    if n_obs < 1:
        raise ValueError("N must be >= 1")
    m = min(k, p)
    slack = np.sqrt(k / n_obs) + np.sqrt(p / n_obs)
    min_margin = np.empty(trials)
    ok = np.empty(trials, dtype=bool)
    for i, rng in enumerate(_spawn_rngs(seed, trials)):
        design = rng.standard_normal((n_obs, k * p))
        worst = np.inf
        for j in range(num_test_matrices):
            rank = 1 + j % m
            u = _haar_frame(rng, k, rank)
            v = _haar_frame(rng, p, rank)
            s = rng.uniform(0.5, 2.0, rank)
            theta = (u * s) @ v.T
            lhs = np.linalg.norm(design @ theta.ravel()) / np.sqrt(n_obs)
            rhs = 0.25 * frobenius_norm(theta) - slack * float(np.sum(s))
            worst = min(worst, lhs - rhs)
        min_margin[i] = worst
        ok[i] = worst >= 0
    stats = {"min_margin": min_margin, "pass": ok.astype(float)}
    return RscReport("compressed", trials, float(np.mean(ok)), stats,
                     float(1.0 - 2.0 * np.exp(-n_obs / 32.0)))


def check_gaussian_norm_concentration(q_mat, n, t, trials=1000, seed=0):
    """Frequency of the quadratic-form deviation event.

    Draws y ~ N(0, Q) and records the pass event
    |  ||y||^2 - trace(Q) | / n <= 4*t*||Q||_op. Requires t > 2/sqrt(n);
    floor 1 - 2*exp(-n*(t - 2/sqrt(n))^2/2) - 2*exp(-n/2).
    """
    if t <= 2.0 / np.sqrt(n):
        raise ValueError("t must exceed 2/sqrt(n)")
    q = as_matrix(q_mat, "q_mat")
    if q.shape != (n, n):
        raise ValueError(f"q_mat must be {n} x {n}")
    w, u = np.linalg.eigh(0.5 * (q + q.T))
    if w[0] < -1e-10 * max(1.0, abs(w[-1])):
        raise ValueError("q_mat must be positive semidefinite")
    w = np.clip(w, 0.0, None)
    root = (u * np.sqrt(w)) @ u.T
    tr_q = float(np.trace(q))
    thresh = 4.0 * t * float(w[-1])
    dev = np.empty(trials)
    for i, rng in enumerate(_spawn_rngs(seed, trials)):
        y = root @ rng.standard_normal(n)
        dev[i] = abs(float(y @ y) - tr_q) / n
    ok = dev <= thresh
    stats = {"deviation": dev, "pass": ok.astype(float)}
    edge = t - 2.0 / np.sqrt(n)
    floor = 1.0 - 2.0 * np.exp(-n * edge * edge / 2.0) - 2.0 * np.exp(-n / 2.0)
    return RscReport("meta", trials, float(np.mean(ok)), stats, float(floor))


def empirical_vs_bound(truth, theta_hat, lam_choice, obs, kappa=None):
    """Compare one solved instance against its recovery-error bound.

    Pairs the weight and curvature in the model's native normalization:

      regression   lam = solver_weight * k,  kappa = sigma_min(S)/20
      var          lam = solver_weight * p,  kappa = sigma_min(S)/4
      compressed   lam = solver_weight,      kappa = 1/8, with norm
                   tolerance delta = sqrt(radius * x**(2-q)) for
                   x = sqrt(k/N) + sqrt(p/N) (exact rank: q=0, radius=r)

    kappa overrides the default when given (same normalization).
    Returns a dict with frob_error, bound_value, bound_ratio and the
    inputs used.
    """
    mp = obs.model_params
    op = obs.operator
    k, p, n_obs = op.shape
    if isinstance(mp, VarParams):
        model = "var"
    elif isinstance(mp, dict) and "model" in mp:
        model = mp["model"]
    else:
        model = op.kind
    delta_tol = 0.0
    if model == "regression":
        kap = mp["sigma_min"] / 20.0 if kappa is None else kappa
        lam_b = lam_choice.solver_weight * k
    elif model == "var":
        kap = (np.linalg.eigvalsh(mp.sigma)[0] / 4.0) if kappa is None else kappa
        lam_b = lam_choice.solver_weight * p
    elif model == "compressed":
        kap = 0.125 if kappa is None else kappa
        lam_b = lam_choice.solver_weight
        x = np.sqrt(k / n_obs) + np.sqrt(p / n_obs)
        q_eff = truth.q if truth.kind == "near-lowrank" else 0.0
        rad = truth.radius if truth.kind == "near-lowrank" else truth.r
        delta_tol = float(np.sqrt(rad * x ** (2.0 - q_eff)))
    else:
        if kappa is None:
            raise ValueError(f"no default curvature constant for model {model!r}")
        kap = kappa
        lam_b = lam_choice.solver_weight
    if truth.kind == "near-lowrank":
        bound = near_lowrank_error_bound(lam_b, kap, truth.q, truth.radius, delta_tol)
    else:
        bound = recovery_error_bound(lam_b, truth.r, kap, 0.0, delta_tol)
    err = frobenius_norm(np.asarray(theta_hat) - truth.theta_star)
    return {
        "frob_error": float(err),
        "bound_value": float(bound),
        "bound_ratio": float(err / bound),
        "lam": float(lam_b),
        "kappa": float(kap),
        "delta": float(delta_tol),
    }


def rsc_report_csv(report, path):
    """One row per trial: trial index, pass flag, then the remaining
    recorded statistics in sorted column order."""
    keys = sorted(kk for kk in report.statistics if kk != "pass")
    header = ["trial", "pass"] + keys
    lines = [",".join(header)]
    for i in range(report.trials):
        row = [str(i), repr(float(report.statistics["pass"][i]))]
        row += [repr(float(report.statistics[kk][i])) for kk in keys]
        lines.append(",".join(row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def rsc_report_summary(report):
    """Human-readable block: rate vs floor plus statistic ranges."""
    lines = [
        f"check: {report.kind}",
        f"trials: {report.trials}",
        f"pass_rate: {report.pass_rate:.4f}",
        f"floor: {report.floor:.4f}" if np.isfinite(report.floor) else "floor: n/a",
    ]
    for kk in sorted(report.statistics):
        if kk == "pass":
            continue
        arr = report.statistics[kk]
        lines.append(f"{kk}: mean {np.mean(arr):.6g} min {np.min(arr):.6g} "
                     f"max {np.max(arr):.6g}")
    return "\n".join(lines)
