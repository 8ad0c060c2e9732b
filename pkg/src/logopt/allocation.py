"""Allocation utility and its constrained maximization.

The allocation utility of a portfolio ``b`` against first/second moments
``(mu, sigma)`` of the per-period price fluctuation vector is

    log(b @ mu) - (b @ sigma @ b) / (2 * (b @ mu)**2)

a trade-off between logarithmic return and its squared coefficient of
variation. The optimizer maximizes it over the simplex (short-selling is
disabled, so the L1 budget is pinned at 1) intersected with a minimum
expected-return halfspace ``b @ mu >= c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solvers import SolverOptions, maximize_on_simplex
from .weights import one_hot, validate_weights

SYM_TOL = 1e-9
PSD_TOL = -1e-9
ACTIVE_BOUND_TOL = 1e-7


@dataclass(frozen=True)
class MomentEstimate:
    """Expectation vector and covariance matrix of a fluctuation vector."""

    mu: np.ndarray
    sigma: np.ndarray
    sample_count: int = 0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        d = mu.size
        if mu.ndim != 1 or sigma.shape != (d, d):
            raise ValueError(f"moment shapes mismatch: mu {mu.shape}, sigma {sigma.shape}")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sigma)):
            raise ValueError("non-finite moment entry")
        if np.any(mu <= 0):
            raise ValueError("expectation entries must be positive")
        if np.max(np.abs(sigma - sigma.T)) > SYM_TOL:
            raise ValueError("covariance not symmetric")
        if np.min(np.linalg.eigvalsh((sigma + sigma.T) / 2)) < PSD_TOL:
            raise ValueError("covariance not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible region: simplex (L1 budget fixed at 1) plus minimum return."""

    min_return: float = 0.0
    l1_budget: float = 1.0

    def __post_init__(self):
        if self.l1_budget != 1.0:
            raise ValueError("short-selling is disabled; the L1 budget is fixed at 1")
        if self.min_return < 0:
            raise ValueError("minimum return must be >= 0")


def allocation_utility(b: np.ndarray, m: MomentEstimate) -> float:
    """log(b @ mu) minus half the squared coefficient of variation of b @ X."""
    b = np.asarray(b, dtype=np.float64)
    u = float(b @ m.mu)
    if u <= 0:
        raise ValueError(f"portfolio return b @ mu = {u} is not positive")
    v = float(b @ m.sigma @ b)
    return float(np.log(u) - v / (2.0 * u * u))


def utility_gradient(b: np.ndarray, m: MomentEstimate) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    u = float(b @ m.mu)
    sb = m.sigma @ b
    v = float(b @ sb)
    return m.mu / u - sb / u**2 + (v / u**3) * m.mu


def _utility_hessian(b: np.ndarray, m: MomentEstimate) -> np.ndarray:
    u = float(b @ m.mu)
    sb = m.sigma @ b
    v = float(b @ sb)
    mm = np.outer(m.mu, m.mu)
    cross = np.outer(sb, m.mu)
    return (
        -mm / u**2
        - m.sigma / u**2
        + (2.0 / u**3) * (cross + cross.T)
        - (3.0 * v / u**4) * mm
    )


def _batched_value_grad(m: MomentEstimate):
    mu, sigma = m.mu, m.sigma

    def vg(B: np.ndarray):
        B = np.atleast_2d(B)
        u = B @ mu
        SB = B @ sigma
        v = np.einsum("ri,ri->r", SB, B)
        vals = np.log(u) - v / (2.0 * u**2)
        grads = mu[None, :] / u[:, None] - SB / (u**2)[:, None] + (v / u**3)[:, None] * mu[None, :]
        return vals, grads

    return vg


def _pointwise_vgh(m: MomentEstimate):
    def vgh(b: np.ndarray):
        return allocation_utility(b, m), utility_gradient(b, m), _utility_hessian(b, m)

    return vgh


def optimize_allocation(
    m: MomentEstimate,
    cons: ConstraintSet = ConstraintSet(),
    opts: SolverOptions = SolverOptions(),
) -> np.ndarray:
    """Portfolio maximizing the allocation utility over the feasible set.

    Multiplicative-update ascent from several starts plus an active-set
    Newton polish; the result satisfies portfolio invariants and (checkably,
    via :func:`kkt_residual`) the stationarity conditions of the constrained
    problem. Degenerate all-zero covariance reduces to pure return
    maximization with ties broken toward the lowest asset index.
    """
    c = cons.min_return
    top = float(np.max(m.mu))
    if c > top:
        raise ValueError(f"infeasible: min return {c} exceeds max expectation {top}")
    if np.all(m.sigma == 0.0) or c >= top - 1e-15:
        return one_hot(m.dim, int(np.argmax(m.mu)))
    b = maximize_on_simplex(
        _batched_value_grad(m),
        _pointwise_vgh(m),
        m.dim,
        opts,
        mu=m.mu,
        min_return=c,
    )
    return validate_weights(b, "optimize_allocation result")


def kkt_residual(b: np.ndarray, m: MomentEstimate, cons: ConstraintSet = ConstraintSet()) -> float:
    """Max-norm stationarity residual of the constrained problem at ``b``.

    Multipliers for the active constraints (budget, minimum return if tight,
    nonnegativity bounds at entries below ``ACTIVE_BOUND_TOL``) are recovered
    by least squares; an exact optimum yields 0.
    """
    b = validate_weights(b, "kkt_residual input")
    g = utility_gradient(b, m)
    rows = [np.ones(b.size)]
    if cons.min_return > 0 and b @ m.mu <= cons.min_return + 1e-9:
        rows.append(m.mu)
    for i in np.nonzero(b <= ACTIVE_BOUND_TOL)[0]:
        rows.append(np.eye(b.size)[i])
    A = np.asarray(rows)
    mult, *_ = np.linalg.lstsq(A.T, g, rcond=None)
    return float(np.max(np.abs(g - A.T @ mult)))


def robustness_bound(b_hat: np.ndarray, c: float, sigma_err: np.ndarray) -> float:
    """Worst-case utility shift from a covariance estimation error.

    For any portfolio with return at least ``c`` the utility computed from a
    perturbed covariance differs from the true-covariance utility by at most
    ``(1 / (2 c^2)) * (sum_i |b_i|)^2 * max_i sum_j |err_ij|``.
    """
    if c <= 0:
        raise ValueError("the bound requires a positive minimum return c")
    b_hat = np.asarray(b_hat, dtype=np.float64)
    err = np.asarray(sigma_err, dtype=np.float64)
    l1 = float(np.sum(np.abs(b_hat)))
    row = float(np.max(np.sum(np.abs(err), axis=1))) if err.size else 0.0
    return l1 * l1 * row / (2.0 * c * c)
