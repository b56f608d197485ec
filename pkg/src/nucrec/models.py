"""Observation models: ground-truth generators, the linear observation
operator abstraction, and samplers for the three concrete designs
(multivariate regression, vector autoregression, dense Gaussian
compressed sensing).

An operator maps a k x p matrix to a length-N vector of scalar
observations; its adjoint maps a length-N vector back to matrix space.
The scalarization index map for the regression/VAR designs is
``(a, b) -> a + b*n`` (zero-based), i.e. observation block b stacks the
n responses of output coordinate b. The map is a bijection onto
``{0..N-1}`` and the estimator is invariant to it (tested).

Samplers draw from a single ``numpy.random.default_rng(seed)`` stream in
a documented order, so identical seeds give bit-identical observation
sets.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .matcore import SubspacePair, as_matrix, operator_norm

__all__ = [
    "LinearMatrixOperator",
    "GroundTruth",
    "ObservationSet",
    "VarParams",
    "generate_exact_lowrank",
    "generate_near_lowrank",
    "multivar_operator",
    "sample_multivar",
    "solve_lyapunov",
    "make_var_params",
    "sample_var",
    "sample_compressed",
    "identity_operator",
    "save_observations",
    "load_observations",
    "MEMORY_BUDGET_BYTES",
]

# Refuse to materialize compressed-sensing designs beyond this budget.
MEMORY_BUDGET_BYTES = 2 * 2**30


@dataclass(frozen=True)
class LinearMatrixOperator:
    """Linear map from k x p matrices to length-N observation vectors.

    kind selects the stored-array layout:
      "multivar":   design is the n x p covariate matrix X; apply(T)
                    stacks X @ T.T column-block-wise, adjoint(u) is
                    U.T @ X with u unstacked to n x k.
      "compressed": design is the N x (k*p) matrix of flattened
                    observation matrices; apply is design @ vec(T).
      "identity":   one observation per entry; apply is vectorization.

    Operators are immutable and safe for concurrent apply/adjoint.
    """

    kind: str
    k: int
    p: int
    n_obs: int
    design: np.ndarray | None = None
    description: str = ""

    @property
    def shape(self):
        return (self.k, self.p, self.n_obs)

    def apply(self, theta):
        if theta.shape != (self.k, self.p):
            raise ValueError(f"expected {(self.k, self.p)} matrix, got {theta.shape}")
        if self.kind == "multivar":
            return (theta @ self.design.T).ravel()
        if self.kind == "compressed":
            return self.design @ theta.ravel()
        return theta.ravel().copy()

    def adjoint(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_obs,):
            raise ValueError(f"expected length-{self.n_obs} vector, got {u.shape}")
        if self.kind == "multivar":
            return u.reshape(self.k, -1) @ self.design
        if self.kind == "compressed":
            return (self.design.T @ u).reshape(self.k, self.p)
        return u.reshape(self.k, self.p).copy()


@dataclass(frozen=True)
class GroundTruth:
    """A target matrix plus its generation metadata.

    kind is "exact-rank" (exactly r nonzero singular values) or
    "near-lowrank" (singular values with bounded lq quasi-norm:
    sum(s**q) <= radius). `factors` holds the generating subspace pair:
    the top-r singular subspaces for exact rank, all min(k, p)
    directions for near-lowrank.
    """

    theta_star: np.ndarray
    kind: str
    r: int
    factors: SubspacePair
    q: float | None = None
    radius: float | None = None


@dataclass(frozen=True)
class ObservationSet:
    """Observations y = operator(theta_star) + noise, with provenance."""

    y: np.ndarray
    operator: LinearMatrixOperator
    noise_level: float
    seed: int
    model_params: object = field(default=None)

    def __post_init__(self):
        if self.y.shape != (self.operator.n_obs,):
            raise ValueError(
                f"y has length {self.y.shape}, operator expects {self.operator.n_obs}"
            )


def _haar_frame(rng, dim, r):
    """Column-orthonormal dim x r frame, rotation-invariant in law."""
    g = rng.standard_normal((dim, r))
    q, rr = np.linalg.qr(g)
    # Fix the QR sign ambiguity so the law is exactly Haar and the
    # output is deterministic for a fixed stream.
    d = np.sign(np.diag(rr))
    d[d == 0] = 1.0
    return q * d


def generate_exact_lowrank(k, p, r, scale=1.0, seed=0):
    """Rank-r ground truth with Haar-uniform singular subspaces.

    All r nonzero singular values equal `scale`. The factor pair is the
    generating frame; its span equals the row/column space of the
    output (the individual columns are identified only up to rotation
    because the spectrum is flat).
    """
    if not 1 <= r <= min(k, p):
        raise ValueError(f"rank r={r} out of range for {k} x {p}")
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    u = _haar_frame(rng, k, r)
    v = _haar_frame(rng, p, r)
    theta = scale * (u @ v.T)
    return GroundTruth(theta, "exact-rank", r, SubspacePair(u, v, r))


def generate_near_lowrank(k, p, q, radius, seed=0):
    """Full-rank ground truth inside the lq-ball {sum(s_i**q) <= radius}.

    Singular values follow the power profile s_i = c * i**(-1/q) with c
    chosen so the lq quasi-norm equals `radius` exactly. The profile is
    a modeling choice; only ball membership is contractual. q = 0 is
    rejected here (use generate_exact_lowrank with r = radius).
    """
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    m = min(k, p)
    rng = np.random.default_rng(seed)
    u = _haar_frame(rng, k, m)
    v = _haar_frame(rng, p, m)
    idx = np.arange(1, m + 1, dtype=float)
    c = (radius / np.sum(1.0 / idx)) ** (1.0 / q)
    s = c * idx ** (-1.0 / q)
    theta = (u * s) @ v.T
    return GroundTruth(theta, "near-lowrank", m, SubspacePair(u, v, m), q=q, radius=radius)


def multivar_operator(x_design, k, description="regression"):
    """Observation operator for n covariate rows acting on k x p matrices.

    apply(T)[a + b*n] = (T @ x_a)[b], i.e. block b of the output holds
    the n responses of output coordinate b; adjoint(u) = U.T @ X with U
    the n x k unstacking of u. The output dimension k is explicit
    because the design matrix alone fixes only p and n.
    """
    x = as_matrix(x_design, "x_design")
    n, p = x.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    return LinearMatrixOperator("multivar", int(k), p, int(k) * n,
                                design=x, description=description)


def _sym_sqrt(sigma):
    """Symmetric PSD square root via eigendecomposition; rejects non-PD."""
    s = as_matrix(sigma, "sigma")
    if s.shape[0] != s.shape[1] or np.max(np.abs(s - s.T)) > 1e-10 * max(1.0, np.max(np.abs(s))):
        raise ValueError("sigma must be symmetric")
    w, u = np.linalg.eigh(s)
    if w[0] <= 0:
        raise ValueError(f"sigma must be positive definite (min eigenvalue {w[0]:g})")
    return (u * np.sqrt(w)) @ u.T


def sample_multivar(truth, n, sigma_x=None, nu=1.0, seed=0):
    """Draw a multivariate-regression observation set.

    Covariate rows x_a are i.i.d. N(0, sigma_x) (identity when None),
    responses are theta_star @ x_a plus N(0, nu^2 I_k) noise, scalarized
    to N = k*n observations. Draw order: X first (n x p block), then the
    noise block (n x k), both from one default_rng(seed) stream.

    Returns an ObservationSet whose model_params record the design
    covariance extremes (used by the regularization rules).
    """
    theta = as_matrix(truth.theta_star, "theta_star")
    k, p = theta.shape
    if n < 1:
        raise ValueError("n must be >= 1")
    if nu < 0:
        raise ValueError("nu must be >= 0")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    if sigma_x is not None:
        root = _sym_sqrt(sigma_x)
        x = x @ root
        w_ev = np.linalg.eigvalsh(as_matrix(sigma_x))
        smin, smax = float(w_ev[0]), float(w_ev[-1])
    else:
        smin = smax = 1.0
    noise = nu * rng.standard_normal((n, k)) if nu > 0 else np.zeros((n, k))
    op = multivar_operator(x, k)
    y = op.apply(theta) + noise.T.ravel()
    params = {
        "model": "regression",
        "n": n,
        "sigma_min": smin,
        "sigma_max": smax,
        "sigma": None if sigma_x is None else np.array(sigma_x, dtype=float),
    }
    return ObservationSet(y, op, float(nu), seed, params)


# Direct Kronecker solve is O(p^6) time / O(p^4) memory; past this size
# the geometric fixed-point iteration meets the same residual contract.
_LYAP_DIRECT_MAX = 32


def _lyapunov_direct(theta, nu):
    p = theta.shape[0]
    a = np.eye(p * p) - np.kron(theta, theta)
    rhs = (nu**2) * np.eye(p)
    sigma = np.linalg.solve(a, rhs.ravel()).reshape(p, p)
    return 0.5 * (sigma + sigma.T)


def _lyapunov_iterate(theta, nu, tol):
    p = theta.shape[0]
    q = (nu**2) * np.eye(p)
    sigma = q.copy()
    for _ in range(20000):
        nxt = theta @ sigma @ theta.T + q
        if np.linalg.norm(nxt - sigma) <= 0.25 * tol * max(1.0, np.linalg.norm(nxt)):
            sigma = nxt
            break
        sigma = nxt
    return 0.5 * (sigma + sigma.T)


def solve_lyapunov(theta, nu):
    """Stationary covariance: the unique PD fixed point of
    ``sigma = theta @ sigma @ theta.T + nu^2 I``.

    Requires operator_norm(theta) < 1 (contraction). Solved exactly via
    the vectorized linear system for p <= 32 and by fixed-point
    iteration above that; either path meets the residual contract
    ``||sigma - theta sigma theta' - nu^2 I||_F <= 1e-10 * max(1, ||sigma||_F)``.
    """
    th = as_matrix(theta, "theta")
    if th.shape[0] != th.shape[1]:
        raise ValueError("theta must be square")
    if operator_norm(th) >= 1.0:
        raise ValueError("theta is unstable: operator norm must be < 1")
    tol = 1e-10
    if th.shape[0] <= _LYAP_DIRECT_MAX:
        sigma = _lyapunov_direct(th, nu)
    else:
        sigma = _lyapunov_iterate(th, nu, tol)
    resid = np.linalg.norm(sigma - th @ sigma @ th.T - (nu**2) * np.eye(th.shape[0]))
    if resid > tol * max(1.0, np.linalg.norm(sigma)):
        raise RuntimeError(f"stationary covariance residual {resid:g} exceeds tolerance")
    return sigma


@dataclass(frozen=True)
class VarParams:
    """Parameters of a stationary first-order vector autoregression.

    theta_star drives the recursion Z_{t+1} = theta_star @ Z_t + W_t
    with innovations W_t ~ N(0, nu^2 I); sigma is the stationary state
    covariance. gamma upper-bounds the operator norm of theta_star and
    must be < 1 (stability).
    """

    theta_star: np.ndarray
    nu: float
    n: int
    gamma: float
    sigma: np.ndarray

    def __post_init__(self):
        th = as_matrix(self.theta_star, "theta_star")
        if th.shape[0] != th.shape[1]:
            raise ValueError("theta_star must be square")
        g = operator_norm(th)
        if not g <= self.gamma + 1e-10:
            raise ValueError(f"operator norm {g:g} exceeds declared gamma {self.gamma}")
        if not self.gamma < 1.0:
            raise ValueError("gamma must be < 1 for stationarity")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        sig = as_matrix(self.sigma, "sigma")
        resid = np.linalg.norm(sig - th @ sig @ th.T - (self.nu**2) * np.eye(th.shape[0]))
        if resid > 1e-8 * max(1.0, np.linalg.norm(sig)):
            raise ValueError("sigma does not satisfy the stationarity fixed point")


def make_var_params(theta_star, nu, n, gamma=None):
    """Build VarParams, solving for the stationary covariance.

    gamma defaults to the actual operator norm of theta_star.
    """
    th = as_matrix(theta_star, "theta_star")
    g = operator_norm(th)
    if gamma is None:
        gamma = g
    sigma = solve_lyapunov(th, nu)
    return VarParams(th, float(nu), int(n), float(gamma), sigma)


def sample_var(params, seed=0):
    """Draw one stationary autoregressive path and its observation set.

    Z_1 ~ N(0, sigma) is an exact stationary draw (no burn-in), then
    Z_{t+1} = theta_star @ Z_t + W_t for n steps. The design rows are
    Z_1..Z_n and the responses Z_2..Z_{n+1}, scalarized exactly like the
    regression model (N = n*p). Draw order: the initial state (p
    values), then the innovation block (n x p).
    """
    th = params.theta_star
    p = th.shape[0]
    n = params.n
    rng = np.random.default_rng(seed)
    root = _sym_sqrt(params.sigma)
    z = np.empty((n + 1, p))
    z[0] = root @ rng.standard_normal(p)
    w = params.nu * rng.standard_normal((n, p)) if params.nu > 0 else np.zeros((n, p))
    for t in range(n):
        z[t + 1] = th @ z[t] + w[t]
    op = multivar_operator(z[:n], p, description="var")
    y = z[1:].T.ravel()  # responses stacked under the same index map
    return ObservationSet(y, op, float(params.nu), seed, params)


def sample_compressed(truth, n_obs, nu=1.0, seed=0, memory_budget=MEMORY_BUDGET_BYTES):
    """Draw a dense Gaussian compressed-sensing observation set.

    Each observation matrix has i.i.d. N(0, 1) entries; the N x (k*p)
    design is materialized so apply/adjoint are bit-reproducible.
    Refuses designs whose storage would exceed `memory_budget` bytes.
    Draw order: the design block, then the noise vector.

    model_params["noise_event"] records whether the drawn noise kept
    ||eps||_2 <= 2 nu sqrt(N); the bounded-noise guarantees assume the
    event rather than the Gaussian law, so it is recorded, not enforced.
    """
    theta = as_matrix(truth.theta_star, "theta_star")
    k, p = theta.shape
    if n_obs < 1:
        raise ValueError("N must be >= 1")
    need = 8 * n_obs * k * p
    if need > memory_budget:
        raise MemoryError(
            f"compressed design needs {need / 2**30:.2f} GiB, over the "
            f"{memory_budget / 2**30:.2f} GiB budget"
        )
    rng = np.random.default_rng(seed)
    design = rng.standard_normal((n_obs, k * p))
    op = LinearMatrixOperator("compressed", k, p, n_obs, design=design,
                              description="compressed")
    y = op.apply(theta)
    event = True
    if nu > 0:
        eps = nu * rng.standard_normal(n_obs)
        y = y + eps
        event = bool(np.linalg.norm(eps) <= 2.0 * nu * np.sqrt(n_obs))
    return ObservationSet(y, op, float(nu), seed,
                          {"model": "compressed", "noise_event": event})


def identity_operator(k, p):
    """One observation per entry: apply = vec, adjoint = unvec, N = k*p."""
    return LinearMatrixOperator("identity", k, p, k * p, description="identity")


# ---------------------------------------------------------------------------
# Serialization: a JSON dimensions header next to an .npz of flat arrays,
# so observation generation and solving can run as separate CLI stages.

_FORMAT = "nucrec-observations"


def save_observations(stem, obs, truth=None):
    """Write `<stem>.json` (header) and `<stem>.npz` (flat arrays).

    The header records dimensions, model tag, noise level, seed, and
    scalar model parameters; the npz holds y, the operator design, and
    (optionally) the ground truth and its factors.
    """
    arrays = {"y": obs.y}
    if obs.operator.design is not None:
        arrays["design"] = obs.operator.design
    header = {
        "format": _FORMAT,
        "version": 1,
        "kind": obs.operator.kind,
        "description": obs.operator.description,
        "k": obs.operator.k,
        "p": obs.operator.p,
        "N": obs.operator.n_obs,
        "noise_level": obs.noise_level,
        # Only integer seeds survive the round trip; generator objects
        # passed as seeds are recorded as absent.
        "seed": int(obs.seed) if isinstance(obs.seed, (int, np.integer)) else None,
    }
    mp = obs.model_params
    if isinstance(mp, VarParams):
        header["model"] = "var"
        header["var"] = {"nu": mp.nu, "n": mp.n, "gamma": mp.gamma}
        arrays["var_theta"] = mp.theta_star
        arrays["var_sigma"] = mp.sigma
    elif isinstance(mp, dict):
        header["model"] = mp.get("model", obs.operator.kind)
        scalars = {kk: vv for kk, vv in mp.items()
                   if isinstance(vv, (int, float, str)) or vv is None}
        header["params"] = scalars
        if isinstance(mp.get("sigma"), np.ndarray):
            arrays["sigma_x"] = mp["sigma"]
    else:
        header["model"] = obs.operator.kind
    if truth is not None:
        header["truth"] = {"kind": truth.kind, "r": truth.r,
                           "q": truth.q, "radius": truth.radius}
        arrays["theta_star"] = truth.theta_star
        arrays["truth_u"] = truth.factors.U
        arrays["truth_v"] = truth.factors.V
    with open(f"{stem}.json", "w", encoding="ascii") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")
    np.savez(f"{stem}.npz", **arrays)


def load_observations(stem):
    """Inverse of save_observations. Returns (ObservationSet, GroundTruth|None)."""
    with open(f"{stem}.json", encoding="ascii") as fh:
        header = json.load(fh)
    if header.get("format") != _FORMAT:
        raise ValueError(f"{stem}.json is not a {_FORMAT} header")
    data = np.load(f"{stem}.npz")
    kind = header["kind"]
    k, p, n_obs = header["k"], header["p"], header["N"]
    design = data["design"] if "design" in data else None
    op = LinearMatrixOperator(kind, k, p, n_obs, design=design,
                              description=header.get("description", kind))
    if header["model"] == "var":
        v = header["var"]
        mp = VarParams(data["var_theta"], v["nu"], v["n"], v["gamma"], data["var_sigma"])
    else:
        mp = dict(header.get("params", {}))
        mp["model"] = header["model"]
        if "sigma_x" in data:
            mp["sigma"] = data["sigma_x"]
    obs = ObservationSet(data["y"], op, header["noise_level"], header["seed"], mp)
    truth = None
    if "theta_star" in data:
        t = header["truth"]
        factors = SubspacePair(data["truth_u"], data["truth_v"], int(t["r"]))
        truth = GroundTruth(data["theta_star"], t["kind"], int(t["r"]), factors,
                            q=t["q"], radius=t["radius"])
    return obs, truth
