"""Market backgrounds, similarity search, and the pattern-matched portfolio.

For a target trading period the strategy scans history for periods whose
recent fluctuation matrix ("background") correlates with the target's,
estimates moments of the upcoming fluctuation vector from those similar
periods, maximizes the allocation utility per history span, and blends the
per-span portfolios with weights reflecting their realized growth on the
similar set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .allocation import ConstraintSet, MomentEstimate, optimize_allocation
from .market_data import AssetPanel
from .solvers import SolverOptions
from .weights import uniform_weights, validate_weights

ENSEMBLE_WEIGHT_FLOOR = 1e-9


@dataclass(frozen=True)
class BackgroundMatrix:
    """d x n matrix of fluctuation vectors for the n periods before ``anchor``."""

    values: np.ndarray
    anchor: int
    span: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[1] != self.span or self.span < 1:
            raise ValueError(f"background shape {v.shape} does not match span {self.span}")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("background entries must be positive and finite")


@dataclass(frozen=True)
class SimilarSet:
    """Historical periods whose background resembles the anchor's."""

    anchor: int
    span: int
    threshold: float
    indices: list[int] = field(default_factory=list)


def background(panel: AssetPanel, i: int, n: int) -> BackgroundMatrix:
    """Fluctuation matrix of periods i-n .. i-1 (column j is period i-n+j)."""
    if n < 1:
        raise ValueError("span must be >= 1")
    if i < n or i > panel.periods:
        raise IndexError(f"period {i} lacks {n} periods of history")
    values = panel.close[:, i - n : i] / panel.open[:, i - n : i]
    return BackgroundMatrix(values=values, anchor=i, span=n)


def _pearson_flat(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel(order="C").astype(np.float64)
    b = b.ravel(order="C").astype(np.float64)
    ac = a - a.mean()
    bc = b - b.mean()
    na = np.sqrt(ac @ ac)
    nb = np.sqrt(bc @ bc)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(ac @ bc / (na * nb), -1.0, 1.0))


def similarity(a: BackgroundMatrix, b: BackgroundMatrix) -> float:
    """Pearson correlation of the two backgrounds flattened row-major.

    Zero-variance backgrounds make the correlation undefined; those compare
    as 0 (so they never exceed a nonnegative threshold).
    """
    if a.values.shape != b.values.shape:
        raise ValueError(f"background shapes differ: {a.values.shape} vs {b.values.shape}")
    return _pearson_flat(a.values, b.values)


def similar_set(panel: AssetPanel, k: int, n: int, rho: float) -> SimilarSet:
    """Periods i in [n, k) whose background correlates with period k's above rho.

    Every member has both a full n-period background and a realized
    fluctuation vector strictly before the anchor.
    """
    if k < n + 1:
        raise IndexError(f"anchor {k} lacks history for span {n} plus one candidate")
    flucts = panel.fluctuations()
    target = flucts[:, k - n : k].ravel(order="C")
    tc = target - target.mean()
    tn = np.sqrt(tc @ tc)
    indices: list[int] = []
    if tn == 0.0:
        return SimilarSet(anchor=k, span=n, threshold=rho, indices=indices)
    # windows[j] is the flattened background of period i = n + j
    windows = np.lib.stride_tricks.sliding_window_view(flucts, n, axis=1)
    cand = windows[:, : k - n, :].transpose(1, 0, 2).reshape(k - n, -1)
    cc = cand - cand.mean(axis=1, keepdims=True)
    cn = np.sqrt(np.einsum("ij,ij->i", cc, cc))
    sims = np.zeros(k - n)
    ok = cn > 0
    sims[ok] = np.clip((cc[ok] @ tc) / (cn[ok] * tn), -1.0, 1.0)
    indices = [int(j) + n for j in np.nonzero(sims > rho)[0]]
    return SimilarSet(anchor=k, span=n, threshold=rho, indices=indices)


def estimate_moments(panel: AssetPanel, members: list[int]) -> MomentEstimate:
    """Sample mean and covariance of the members' fluctuation vectors.

    Covariance uses the unbiased denominator and is floored to positive
    semidefinite by clipping negative eigenvalues at zero.
    """
    if len(members) < 2:
        raise ValueError("need at least two similar periods for a covariance")
    xs = np.stack([panel.close[:, i] / panel.open[:, i] for i in members])
    mu = xs.mean(axis=0)
    centered = xs - mu
    sigma = centered.T @ centered / (len(members) - 1)
    sigma = (sigma + sigma.T) / 2
    evals, evecs = np.linalg.eigh(sigma)
    if evals.min() < 0:
        sigma = (evecs * np.maximum(evals, 0.0)) @ evecs.T
        sigma = (sigma + sigma.T) / 2
    return MomentEstimate(mu=mu, sigma=sigma, sample_count=len(members))


def rlos_portfolio(
    panel: AssetPanel,
    k: int,
    max_span: int = 20,
    rho: float = 0.0,
    cons: ConstraintSet = ConstraintSet(),
    opts: SolverOptions = SolverOptions(),
) -> np.ndarray:
    """Pattern-matched robust log-optimal portfolio for trading period ``k``.

    For each span n in 2..max_span with at least two similar periods, the
    optimal portfolio for the estimated moments earns an ensemble weight
    equal to its realized log growth over the similar set; the weighted
    combination is clipped to the simplex. Degenerate cases (no qualifying
    span, or total weight below ``ENSEMBLE_WEIGHT_FLOOR``) fall back to the
    uniform portfolio.
    """
    if k < 3:
        raise IndexError("anchor period must be >= 3")
    d = panel.n_assets
    flucts = panel.fluctuations()
    weights_sum = 0.0
    blend = np.zeros(d)
    any_span = False
    for n in range(2, max_span + 1):
        if k < n + 1:
            break
        members = similar_set(panel, k, n, rho).indices
        if len(members) < 2:
            continue
        m = estimate_moments(panel, members)
        b = optimize_allocation(m, cons, opts)
        growth = float(np.sum(np.log(flucts[:, members].T @ b)))
        blend += growth * b
        weights_sum += growth
        any_span = True
    if not any_span or weights_sum <= ENSEMBLE_WEIGHT_FLOOR:
        return uniform_weights(d)
    combined = blend / weights_sum
    combined = np.maximum(combined, 0.0)
    total = combined.sum()
    if total <= ENSEMBLE_WEIGHT_FLOOR:
        return uniform_weights(d)
    return validate_weights(combined / total, "rlos ensemble")
