"""Solver contracts: closed-form oracles, first-order certificates,
descent behavior, and the noiseless continuation path."""

import numpy as np
import pytest

from nucrec.matcore import frobenius_norm, nuclear_norm, operator_norm, svt
from nucrec.models import (ObservationSet, generate_exact_lowrank,
                           identity_operator, make_var_params,
                           sample_compressed, sample_multivar, sample_var)
from nucrec.solver import (SolverConfig, SolverDivergenceError, solve,
                           solve_noiseless)


def _identity_obs(y_mat, noise_level=0.0, seed=0):
    op = identity_operator(*y_mat.shape)
    return ObservationSet(y_mat.ravel().copy(), op, noise_level, seed,
                          {"model": "identity"})


def test_over_regularized_returns_zero(rng):
    truth = generate_exact_lowrank(5, 5, 2, scale=1.0, seed=0)
    obs = sample_compressed(truth, 60, nu=1.0, seed=1)
    boundary = operator_norm(obs.operator.adjoint(obs.y)) / 60
    res = solve(obs, SolverConfig(lam=1.01 * boundary))
    assert np.all(res.theta_hat == 0.0)
    assert res.iterations <= 2  # zero is already the fixed point
    assert res.converged and res.optimality_residual == 0.0


def test_identity_closed_form_oracle(rng):
    y = rng.standard_normal((6, 5))
    n = 30
    for lam in (0.001, 0.01, 0.05):
        res = solve(_identity_obs(y), SolverConfig(lam=lam))
        oracle = svt(y, n * lam)
        gap = frobenius_norm(res.theta_hat - oracle)
        assert gap <= 1e-6 * max(frobenius_norm(oracle), 1e-12)
        assert res.converged


def test_perturbation_optimality(rng):
    truth = generate_exact_lowrank(5, 5, 2, scale=2.0, seed=2)
    obs = sample_compressed(truth, 60, nu=0.5, seed=3)
    lam = 0.1
    res = solve(obs, SolverConfig(lam=lam, rel_tol=1e-12))
    op = obs.operator

    def objective(t):
        r = op.apply(t) - obs.y
        return 0.5 * float(r @ r) / 60 + lam * nuclear_norm(t)

    base = objective(res.theta_hat)
    for _ in range(1000):
        d = rng.standard_normal((5, 5))
        d *= 1e-3 / np.linalg.norm(d)
        assert objective(res.theta_hat + d) >= base - 1e-12


def test_gradient_matches_finite_differences(rng):
    truth = generate_exact_lowrank(4, 3, 2, scale=1.0, seed=4)
    cases = [
        sample_multivar(truth, 7, nu=0.8, seed=5),
        sample_compressed(truth, 25, nu=0.8, seed=6),
        _identity_obs(rng.standard_normal((4, 3))),
    ]
    h = 1e-5
    for obs in cases:
        op = obs.operator
        n = op.n_obs
        theta = rng.standard_normal((4, 3))

        def f(t, op=op, n=n, y=obs.y):
            r = op.apply(t) - y
            return 0.5 * float(r @ r) / n

        grad = op.adjoint(op.apply(theta) - obs.y) / n
        fd = np.zeros_like(theta)
        for i in range(4):
            for j in range(3):
                e = np.zeros_like(theta)
                e[i, j] = h
                fd[i, j] = (f(theta + e) - f(theta - e)) / (2 * h)
        assert (np.linalg.norm(fd - grad)
                <= 1e-6 * max(np.linalg.norm(grad), 1e-12))


def test_monotone_descent_without_acceleration():
    truth = generate_exact_lowrank(6, 6, 2, scale=2.0, seed=7)
    cases = [
        sample_multivar(truth, 30, nu=1.0, seed=8),
        sample_compressed(truth, 150, nu=1.0, seed=9),
        _identity_obs(truth.theta_star + 0.1),
    ]
    params = make_var_params(0.5 / 2.0 * truth.theta_star, 1.0, 50)
    cases.append(sample_var(params, seed=10))
    for obs in cases:
        res = solve(obs, SolverConfig(lam=0.02, acceleration=False))
        assert np.all(np.diff(res.objective_trace) <= 0.0)


def test_acceleration_reaches_same_solution():
    truth = generate_exact_lowrank(6, 6, 2, scale=2.0, seed=11)
    obs = sample_compressed(truth, 200, nu=0.5, seed=12)
    fast = solve(obs, SolverConfig(lam=0.05, rel_tol=1e-12))
    slow = solve(obs, SolverConfig(lam=0.05, rel_tol=1e-12,
                                   acceleration=False, max_iters=20_000))
    assert (frobenius_norm(fast.theta_hat - slow.theta_hat)
            <= 1e-6 * max(frobenius_norm(slow.theta_hat), 1e-12))


def test_observation_permutation_invariance(rng):
    truth = generate_exact_lowrank(5, 4, 2, scale=1.0, seed=13)
    obs = sample_compressed(truth, 80, nu=0.5, seed=14)
    perm = rng.permutation(80)
    from nucrec.models import LinearMatrixOperator
    op2 = LinearMatrixOperator("compressed", 5, 4, 80,
                               design=obs.operator.design[perm])
    obs2 = ObservationSet(obs.y[perm], op2, 0.5, 14, {"model": "compressed"})
    a = solve(obs, SolverConfig(lam=0.05))
    b = solve(obs2, SolverConfig(lam=0.05))
    assert frobenius_norm(a.theta_hat - b.theta_hat) <= 1e-8


def test_divergent_fixed_step_raises():
    truth = generate_exact_lowrank(4, 4, 2, scale=1.0, seed=15)
    obs = sample_compressed(truth, 40, nu=0.5, seed=16)
    with pytest.raises(SolverDivergenceError):
        solve(obs, SolverConfig(lam=0.01, step=1e6))
    # without momentum the same step cannot blow up: the increase check
    # stops at the best iterate instead
    res = solve(obs, SolverConfig(lam=0.01, step=1e6, acceleration=False))
    assert np.all(np.diff(res.objective_trace) <= 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(lam=0.1, max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(lam=0.1, rel_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(lam=0.1, step=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(lam=0.1, power_iters=0)
    truth = generate_exact_lowrank(3, 3, 1, seed=17)
    obs = sample_compressed(truth, 10, nu=0.0, seed=18)
    with pytest.raises(ValueError):
        solve(obs, SolverConfig(lam=-0.5))
    with pytest.raises(ValueError):
        solve(obs, SolverConfig(lam=0.1, theta0=np.zeros((2, 2))))


def test_trace_starts_at_initial_objective(rng):
    y = rng.standard_normal((4, 4))
    obs = _identity_obs(y)
    res = solve(obs, SolverConfig(lam=0.01))
    start = 0.5 * float(obs.y @ obs.y) / 16  # objective at the zero start
    assert res.objective_trace[0] == pytest.approx(start, rel=1e-12)
    assert res.objective_trace[-1] <= res.objective_trace[0]
    assert res.fit_residual == pytest.approx(
        np.linalg.norm(obs.operator.apply(res.theta_hat) - obs.y)
        / np.linalg.norm(obs.y), rel=1e-12)


def test_warm_start_at_solution_exits_quickly():
    truth = generate_exact_lowrank(5, 5, 2, scale=1.0, seed=19)
    obs = sample_compressed(truth, 100, nu=0.5, seed=20)
    first = solve(obs, SolverConfig(lam=0.05, rel_tol=1e-12))
    again = solve(obs, SolverConfig(lam=0.05, rel_tol=1e-9,
                                    theta0=first.theta_hat))
    assert again.iterations <= 3
    assert (frobenius_norm(again.theta_hat - first.theta_hat)
            <= 1e-5 * frobenius_norm(first.theta_hat))


def test_noiseless_identity_fully_determined():
    truth = generate_exact_lowrank(5, 5, 2, scale=1.0, seed=21)
    obs = _identity_obs(truth.theta_star)
    res = solve_noiseless(obs)
    rel = frobenius_norm(res.theta_hat - truth.theta_star)
    assert rel <= 1e-6 * frobenius_norm(truth.theta_star)


def test_noiseless_underdetermined_sanity():
    truth = generate_exact_lowrank(4, 4, 1, scale=1.0, seed=22)
    obs = sample_compressed(truth, 1, nu=0.0, seed=23)
    res = solve_noiseless(obs)
    assert res.fit_residual <= 1e-6  # one equation is easy to satisfy
    rel = frobenius_norm(res.theta_hat - truth.theta_star)
    assert rel > 0.5 * frobenius_norm(truth.theta_star)


def test_noiseless_interface_contracts():
    truth = generate_exact_lowrank(4, 4, 1, scale=1.0, seed=24)
    noisy = sample_compressed(truth, 40, nu=0.5, seed=25)
    with pytest.raises(ValueError):
        solve_noiseless(noisy)
    clean = sample_compressed(truth, 40, nu=0.0, seed=26)
    with pytest.raises(ValueError):
        solve_noiseless(clean, decay=1.5)
    with pytest.raises(ValueError):
        solve_noiseless(clean, stages=0)
    res = solve_noiseless(clean, stages=3)
    assert res.iterations >= 3  # totals across stages
