"""Exact log-optimal computations on finite discrete distributions.

Everything here works at desk scale: distributions are finite lists of
positive outcome vectors with probabilities, so expected log returns,
optimal portfolios, information gains, KL divergences, and mutual
information are all computed by enumeration (natural log throughout).
These routines are the ground truth against which the quadratic
allocation-utility approximation and the long-run growth claims are
checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .allocation import MomentEstimate, allocation_utility
from .solvers import SolverOptions, maximize_on_simplex
from .weights import validate_weights

PROB_SUM_TOL = 1e-12
NEGLIGIBLE_PROB = 1e-15


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support distribution over positive fluctuation vectors."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        sup = np.atleast_2d(np.asarray(self.support, dtype=np.float64))
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", p)
        if sup.shape[0] != p.size or p.size == 0:
            raise ValueError("support and probs must have matching nonzero length")
        if np.any(sup <= 0) or not np.all(np.isfinite(sup)):
            raise ValueError("support entries must be positive and finite")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}")

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def moments(self) -> MomentEstimate:
        """Exact mean and (population) covariance by enumeration."""
        mu = self.probs @ self.support
        centered = self.support - mu
        sigma = (centered * self.probs[:, None]).T @ centered
        sigma = (sigma + sigma.T) / 2
        return MomentEstimate(mu=mu, sigma=sigma, sample_count=self.probs.size)


@dataclass(frozen=True)
class DiscreteJointDistribution:
    """Side information Y with a conditional outcome distribution per label."""

    y_values: list[str]
    cond: list[DiscreteDistribution]
    y_probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.y_probs, dtype=np.float64)
        object.__setattr__(self, "y_probs", p)
        if not (len(self.y_values) == len(self.cond) == p.size) or p.size == 0:
            raise ValueError("labels, conditionals and probabilities must align")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError("invalid label probabilities")
        dims = {c.dim for c in self.cond}
        if len(dims) != 1:
            raise ValueError("conditional distributions disagree on dimension")

    @property
    def dim(self) -> int:
        return self.cond[0].dim

    def marginal(self) -> DiscreteDistribution:
        """Mixture of the conditionals over the label distribution."""
        keyed: dict[tuple, float] = {}
        order: list[tuple] = []
        for gy, c in zip(self.y_probs, self.cond):
            for x, px in zip(c.support, c.probs):
                key = tuple(x.tolist())
                if key not in keyed:
                    keyed[key] = 0.0
                    order.append(key)
                keyed[key] += float(gy * px)
        support = np.asarray(order)
        probs = np.asarray([keyed[k] for k in order])
        return DiscreteDistribution(support=support, probs=probs / probs.sum())


@dataclass(frozen=True)
class InformationGain:
    """Growth-rate increment from side information, with its bounds."""

    per_y_gain: np.ndarray
    expected_gain: float
    mutual_information: float
    per_y_kl: np.ndarray


def expected_log_return(b: np.ndarray, dist: DiscreteDistribution) -> float:
    """E log(b @ X) by enumeration over the support."""
    b = np.asarray(b, dtype=np.float64)
    return float(dist.probs @ np.log(dist.support @ b))


def _value_grad(dist: DiscreteDistribution):
    X, p = dist.support, dist.probs

    def vg(B: np.ndarray):
        B = np.atleast_2d(B)
        R = B @ X.T
        vals = np.log(R) @ p
        grads = (p / R) @ X
        return vals, grads

    return vg


def _value_grad_hess(dist: DiscreteDistribution):
    X, p = dist.support, dist.probs

    def vgh(b: np.ndarray):
        r = X @ b
        val = float(p @ np.log(r))
        w = p / r
        grad = w @ X
        hess = -(X * (w / r)[:, None]).T @ X
        return val, grad, hess

    return vgh


def glos_optimal(
    dist: DiscreteDistribution,
    tol: float = 1e-10,
    extra_starts: Sequence[np.ndarray] | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Portfolio maximizing the expected log return over the simplex."""
    opts = SolverOptions(restarts=8, max_iter=500, tolerance=tol, seed=seed)
    b = maximize_on_simplex(
        _value_grad(dist),
        _value_grad_hess(dist),
        dist.dim,
        opts,
        extra_starts=list(extra_starts) if extra_starts else None,
    )
    return validate_weights(b, "log-optimal portfolio")


def optimality_gap(b: np.ndarray, dist: DiscreteDistribution) -> float:
    """Duality gap certificate: ``max_i E[X_i / (b @ X)] - 1``.

    Nonnegative everywhere, zero exactly at the log-optimal portfolio, and an
    upper bound on the expected-log-return shortfall of ``b``.
    """
    r = dist.support @ np.asarray(b, dtype=np.float64)
    return float(np.max((dist.probs / r) @ dist.support) - 1.0)


def _kl(cond: DiscreteDistribution, marg_lookup: dict[tuple, float]) -> float:
    total = 0.0
    for x, px in zip(cond.support, cond.probs):
        if px < NEGLIGIBLE_PROB:
            continue
        f = marg_lookup[tuple(x.tolist())]
        total += px * np.log(px / f)
    return float(total)


def information_gain(joint: DiscreteJointDistribution, tol: float = 1e-10) -> InformationGain:
    """Per-label and expected growth gains of knowing Y, with KL/MI bounds.

    The gain for label y is the conditional expected log return of the
    conditionally optimal portfolio minus that of the marginally optimal
    portfolio. The conditional optimizations are warm-started from the
    marginal optimum, so gains are nonnegative by construction.
    """
    marginal = joint.marginal()
    b_star = glos_optimal(marginal, tol)
    marg_lookup = {tuple(x.tolist()): float(p) for x, p in zip(marginal.support, marginal.probs)}
    gains = np.zeros(len(joint.cond))
    kls = np.zeros(len(joint.cond))
    mi = 0.0
    for j, (gy, c) in enumerate(zip(joint.y_probs, joint.cond)):
        b_y = glos_optimal(c, tol, extra_starts=[b_star])
        gains[j] = expected_log_return(b_y, c) - expected_log_return(b_star, c)
        kls[j] = _kl(c, marg_lookup)
        if gy >= NEGLIGIBLE_PROB:
            for x, px in zip(c.support, c.probs):
                if px < NEGLIGIBLE_PROB:
                    continue
                f = marg_lookup[tuple(x.tolist())]
                mi += gy * px * np.log(px / f)
    expected = float(joint.y_probs @ gains)
    return InformationGain(
        per_y_gain=gains,
        expected_gain=expected,
        mutual_information=float(mi),
        per_y_kl=kls,
    )


@dataclass(frozen=True)
class SuperiorityResult:
    """Monte Carlo comparison of a competitor against the log-optimal policy."""

    log_wealth_ratios: np.ndarray
    exceed_fraction: float
    mean_normalized_log_ratio: float
    horizon: int
    trials: int


def superiority_trial(
    dist: DiscreteDistribution,
    competitor: np.ndarray | Callable[[int, np.ndarray], np.ndarray],
    n: int,
    trials: int,
    seed: int,
) -> SuperiorityResult:
    """Simulate i.i.d. horizons and compare final wealths.

    Each trial draws its own substream ``default_rng([seed, trial])``, making
    trials independent and order-free. Reports per-trial
    ``log(S_n / S_n*)``, the fraction of trials whose competitor wealth
    exceeds ``n**2`` times the log-optimal wealth, and the mean per-period
    log ratio.
    """
    if n < 1 or trials < 1:
        raise ValueError("horizon and trial count must be >= 1")
    b_star = glos_optimal(dist)
    fixed = None if callable(competitor) else validate_weights(competitor, "competitor")
    k = dist.probs.size
    ratios = np.empty(trials)
    bound = 2.0 * np.log(n)
    exceed = 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        idx = rng.choice(k, size=n, p=dist.probs)
        X = dist.support[idx]
        log_star = float(np.sum(np.log(X @ b_star)))
        if fixed is not None:
            log_comp = float(np.sum(np.log(X @ fixed)))
        else:
            log_comp = 0.0
            for i in range(n):
                b = validate_weights(competitor(i, X[:i]), "competitor")
                log_comp += float(np.log(X[i] @ b))
        ratios[trial] = log_comp - log_star
        if ratios[trial] > bound:
            exceed += 1
    return SuperiorityResult(
        log_wealth_ratios=ratios,
        exceed_fraction=exceed / trials,
        mean_normalized_log_ratio=float(ratios.mean() / n),
        horizon=n,
        trials=trials,
    )


def taylor_gap(b: np.ndarray, dist: DiscreteDistribution) -> float:
    """Exact expected log return minus its quadratic moment approximation."""
    return expected_log_return(b, dist) - allocation_utility(b, dist.moments())


def save_distribution(dist: DiscreteDistribution, path) -> None:
    """Write one ``prob,x1,...,xd`` line per support point."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, p in zip(dist.support, dist.probs):
            fh.write(",".join([repr(float(p))] + [repr(float(v)) for v in x]) + "\n")


def load_distribution(path) -> DiscreteDistribution:
    """Read a distribution written by :func:`save_distribution`."""
    support, probs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: need prob plus at least one outcome")
            vals = [float(v) for v in parts]
            probs.append(vals[0])
            support.append(vals[1:])
    if not probs:
        raise ValueError(f"{path}: empty distribution file")
    widths = {len(x) for x in support}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent outcome dimension {sorted(widths)}")
    return DiscreteDistribution(support=np.asarray(support), probs=np.asarray(probs))


def save_joint(joint: DiscreteJointDistribution, path) -> None:
    """Write ``label,prob`` group headers followed by the group's support rows.

    Labels must not parse as numbers, otherwise they are indistinguishable
    from one-asset support rows on load.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for label, gy, c in zip(joint.y_values, joint.y_probs, joint.cond):
            _require_symbolic_label(label)
            fh.write(f"{label},{repr(float(gy))}\n")
            for x, p in zip(c.support, c.probs):
                fh.write(",".join([repr(float(p))] + [repr(float(v)) for v in x]) + "\n")


def _require_symbolic_label(label: str) -> None:
    try:
        float(label)
    except ValueError:
        return
    raise ValueError(f"joint label {label!r} would parse as a number; use a symbolic label")


def load_joint(path) -> DiscreteJointDistribution:
    """Read a joint distribution written by :func:`save_joint`."""
    labels: list[str] = []
    gprobs: list[float] = []
    groups: list[tuple[list, list]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                row = [float(v) for v in parts]
                header = False
            except ValueError:
                header = True
            if header:
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: group header must be 'label,prob'")
                labels.append(parts[0])
                gprobs.append(float(parts[1]))
                groups.append(([], []))
            else:
                if not groups:
                    raise ValueError(f"{path}:{lineno}: support row before any group header")
                groups[-1][0].append(row[0])
                groups[-1][1].append(row[1:])
    if not groups:
        raise ValueError(f"{path}: empty joint file")
    cond = [
        DiscreteDistribution(support=np.asarray(sup), probs=np.asarray(pr))
        for pr, sup in groups
    ]
    return DiscreteJointDistribution(y_values=labels, cond=cond, y_probs=np.asarray(gprobs))
