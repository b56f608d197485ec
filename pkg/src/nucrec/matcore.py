"""Dense matrix primitives: norms, an SVD contract, and singular-value
soft-thresholding.

Everything downstream (observation operators, the proximal solver, the
error decomposition) leans on three guarantees pinned here:

* ``svd`` returns thin factors with a deterministic sign convention,
  orthonormal and reconstructing the input to ``RECON_TOL``;
* the three norms are all derived from singular values, so they cannot
  disagree with each other;
* ``svt`` is the exact proximal operator of ``tau * nuclear_norm``.

All operations are pure functions on validated float64 arrays; 1x1 and
all-zero matrices pass through every code path without special casing.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ORTHO_TOL",
    "RECON_TOL",
    "RANK_TOL",
    "SVDFactors",
    "SubspacePair",
    "as_matrix",
    "svd",
    "singular_values",
    "nuclear_norm",
    "operator_norm",
    "frobenius_norm",
    "svt",
    "composed_operator_norm",
]

# Shared numerical tolerances, defined once. ORTHO_TOL bounds max-abs
# deviation of U'U and V'V from the identity, RECON_TOL the relative
# Frobenius reconstruction error, RANK_TOL the relative singular-value
# cutoff used whenever a numerical rank is needed.
ORTHO_TOL = 1e-10
RECON_TOL = 1e-10
RANK_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Validate `a` as a finite 2-D float64 array and return it.

    Raises ValueError for wrong dimensionality or non-finite entries;
    NaN/Inf are never admitted into any operation.
    """
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SVDFactors:
    """Thin SVD ``A = U @ diag(s) @ V.T`` with m = min(k, p) columns.

    U is k x m and V is p x m, both column-orthonormal to ORTHO_TOL;
    s is nonincreasing and nonnegative.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class SubspacePair:
    """Column-orthonormal factors (U: k x r, V: p x r) spanning a pair of
    r-dimensional column/row subspaces."""

    U: np.ndarray
    V: np.ndarray
    r: int

    def __post_init__(self):
        u = as_matrix(self.U, "U")
        v = as_matrix(self.V, "V")
        if not (1 <= self.r <= min(u.shape[0], v.shape[0])):
            raise ValueError(f"rank {self.r} out of range for shapes {u.shape}, {v.shape}")
        if u.shape[1] != self.r or v.shape[1] != self.r:
            raise ValueError("factor column counts must equal r")
        for name, f in (("U", u), ("V", v)):
            gram = f.T @ f
            if np.max(np.abs(gram - np.eye(self.r))) > 1e-8:
                raise ValueError(f"{name} columns are not orthonormal")


def svd(m):
    """Thin SVD with a deterministic sign convention.

    The sign of each column pair (U[:, j], V[:, j]) is fixed so that the
    largest-magnitude entry of U[:, j] is positive (ties broken by first
    index), making the output reproducible bit-for-bit across calls.
    """
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD failed to converge on a {m.shape} matrix: {exc}"
        ) from exc
    v = vt.T.copy()
    u = u.copy()
    cols = np.arange(u.shape[1])
    anchor = np.argmax(np.abs(u), axis=0)  # first index wins ties
    flip = np.sign(u[anchor, cols])
    flip[flip == 0] = 1.0
    u *= flip
    v *= flip
    return SVDFactors(u, s, v)


def singular_values(m):
    """Singular values only, nonincreasing. Cheaper than full `svd`."""
    m = as_matrix(m)
    return np.linalg.svd(m, compute_uv=False)


def nuclear_norm(m):
    """Sum of singular values (convex surrogate for rank)."""
    return float(np.sum(singular_values(m)))


def operator_norm(m):
    """Largest singular value (spectral norm)."""
    return float(singular_values(m)[0])


def frobenius_norm(m):
    """Entrywise l2 norm; equals sqrt(sum of squared singular values)."""
    return float(np.linalg.norm(as_matrix(m)))


def svt(m, tau):
    """Singular-value soft-thresholding at level ``tau >= 0``.

    Returns the unique minimizer of ``0.5*||Z - m||_F^2 + tau*||Z||_1``
    (nuclear norm), i.e. ``U @ diag(max(s - tau, 0)) @ V.T``. Singular
    values equal to tau map exactly to zero; rank(output) is at most the
    number of singular values strictly above tau.
    """
    out, _ = svt_with_values(m, tau)
    return out


def svt_with_values(m, tau):
    """``svt`` variant also returning the shrunk singular values.

    The second return value sums to the nuclear norm of the output; the
    solver uses it to avoid a second SVD per iteration.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    f = svd(m)
    shrunk = np.maximum(f.s - tau, 0.0)
    return (f.U * shrunk) @ f.V.T, shrunk


def composed_operator_norm(op, iters=100, seed=0):
    """Power-iteration estimate of the top eigenvalue of the composed map
    ``Theta -> op.adjoint(op.apply(Theta)) / N``.

    The composed map is symmetric positive semidefinite, so the Rayleigh
    quotient is monotonically nondecreasing over iterations for a fixed
    start; the estimate approaches the true value from below. The start
    is drawn from ``seed``, making the result deterministic.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    k, p, n_obs = op.shape
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((k, p))
    nt = np.linalg.norm(theta)
    theta /= nt
    est = 0.0
    for _ in range(iters):
        z = op.adjoint(op.apply(theta)) / n_obs
        est = float(np.vdot(theta, z))  # Rayleigh quotient at unit theta
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        theta = z / nz
    return est
