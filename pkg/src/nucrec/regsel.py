"""Regularization-weight selection.

Each closed-form rule returns a LambdaChoice carrying two numbers:

  value          the published per-model formula, evaluated verbatim;
  solver_weight  the same choice expressed in the solver's
                 per-scalarized-observation normalization.

The two differ for the regression-style models because their natural
objective normalizes by the number of covariate rows n while the solver
normalizes by the total scalarized count N (= k*n or p*n); dividing by
the output dimension converts one into the other. For dense
compressed sensing the two normalizations coincide. Bound evaluation
(analysis module) applies the matching conversion, so value/weight
pairs stay consistent end to end.

All rules treat population quantities (noise level, covariance
extremes, stability margin) as known inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from .matcore import operator_norm

__all__ = ["LambdaChoice", "lambda_multivar", "lambda_var", "lambda_compressed",
           "lambda_generic", "lambda_manual", "GENERIC_FLOOR"]

# Smallest weight lambda_generic reports for noiseless observations.
GENERIC_FLOOR = 1e-12


@dataclass(frozen=True)
class LambdaChoice:
    """A selected regularization weight plus its provenance.

    rule is one of "multivar", "var", "compressed", "generic",
    "manual". inputs records the parameters the rule consumed.
    """

    value: float
    rule: str
    solver_weight: float
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value > 0):
            raise ValueError("lambda value must be positive and finite")
        if not (np.isfinite(self.solver_weight) and self.solver_weight > 0):
            raise ValueError("solver weight must be positive and finite")


def lambda_multivar(nu, sigma_max, k, p, n):
    """Weight for random-design multivariate regression.

    value = 10 * nu * sqrt(sigma_max) * sqrt((k+p)/n), the rule stated
    against the per-row-normalized objective; solver_weight = value/k
    converts to the per-observation (N = k*n) normalization.
    """
    if not (nu > 0 and sigma_max > 0 and k > 0 and p > 0 and n > 0):
        raise ValueError("all inputs must be positive")
    value = 10.0 * nu * np.sqrt(sigma_max) * np.sqrt((k + p) / n)
    return LambdaChoice(float(value), "multivar", float(value) / k,
                        {"nu": nu, "sigma_max": sigma_max, "k": k, "p": p, "n": n})


def lambda_var(sigma_opnorm, gamma, p, n):
    """Weight for the stationary autoregressive design.

    value = 80 * sigma_opnorm / (1 - gamma) * sqrt(p/n) against the
    per-step-normalized objective; solver_weight = value/p for the
    solver's N = p*n normalization.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    if not (sigma_opnorm > 0 and p > 0 and n > 0):
        raise ValueError("sigma_opnorm, p, n must be positive")
    value = 80.0 * sigma_opnorm / (1.0 - gamma) * np.sqrt(p / n)
    return LambdaChoice(float(value), "var", float(value) / p,
                        {"sigma_opnorm": sigma_opnorm, "gamma": gamma, "p": p, "n": n})


def lambda_compressed(nu, k, p, n_obs):
    """Weight for dense Gaussian observation matrices.

    value = 8 * nu * (sqrt(k/N) + sqrt(p/N)): twice a high-probability
    bound on ||A*(noise)||_op / N, so the subdifferential premise holds
    with margin. Already in per-observation normalization.
    """
    if not (nu > 0 and k > 0 and p > 0 and n_obs > 0):
        raise ValueError("all inputs must be positive")
    value = 8.0 * nu * (np.sqrt(k / n_obs) + np.sqrt(p / n_obs))
    return LambdaChoice(float(value), "compressed", float(value),
                        {"nu": nu, "k": k, "p": p, "N": n_obs})


def lambda_generic(obs, noise_draws=200, seed=0, floor=GENERIC_FLOOR):
    """Monte-Carlo weight: 2x the empirical 95th percentile of
    ||A*(e)||_op / N over synthetic noise vectors e ~ N(0, nu^2 I).

    Model-agnostic: every supported model's noise is i.i.d. Gaussian at
    the recorded level. Noiseless observation sets get `floor`. The
    result is already in per-observation normalization.
    """
    if noise_draws < 10:
        raise ValueError("need at least 10 noise draws")
    op = obs.operator
    nu = obs.noise_level
    inputs = {"noise_draws": noise_draws, "seed": seed, "nu": nu}
    if nu == 0:
        return LambdaChoice(floor, "generic", floor, inputs)
    rng = np.random.default_rng(seed)
    vals = np.empty(noise_draws)
    for i in range(noise_draws):
        eps = nu * rng.standard_normal(op.n_obs)
        vals[i] = operator_norm(op.adjoint(eps)) / op.n_obs
    value = 2.0 * float(np.percentile(vals, 95))
    return LambdaChoice(value, "generic", value, inputs)


def lambda_manual(weight):
    """Wrap an explicit solver weight chosen by the caller."""
    return LambdaChoice(float(weight), "manual", float(weight), {})
