"""Numerical verification of the strategy's mathematical guarantees.

Each check builds randomized instances from a seeded stream, tests the
claimed inequality or equivalence at a fixed tolerance, and reports a
structured pass/fail result. The CLI ``oracle`` subcommand prints these as
a table; the acceptance test suite asserts them one by one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import (
    ConstraintSet,
    MomentEstimate,
    allocation_utility,
    kkt_residual,
    optimize_allocation,
    robustness_bound,
)
from .log_optimal import (
    DiscreteDistribution,
    DiscreteJointDistribution,
    expected_log_return,
    glos_optimal,
    information_gain,
    superiority_trial,
)
from .solvers import SolverOptions


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_psd(rng: np.random.Generator, d: int, scale: float) -> np.ndarray:
    a = rng.normal(size=(d, d))
    s = a @ a.T * (scale / d)
    return (s + s.T) / 2


def simplex_grid(d: int, step: float) -> np.ndarray:
    """All weight vectors on the d-simplex with coordinates in multiples of step."""
    n = int(round(1.0 / step))
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        i = np.arange(n + 1)
        return np.stack([i, n - i], axis=1) / n
    if d == 3:
        ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        mask = ii + jj <= n
        return np.stack([ii[mask], jj[mask], n - ii[mask] - jj[mask]], axis=1) / n
    raise ValueError("grid oracle supports d <= 3")


def grid_search_utility(
    m: MomentEstimate, cons: ConstraintSet, step: float = 1e-3
) -> tuple[np.ndarray, float]:
    """Brute-force maximization of the allocation utility on a simplex grid."""
    grid = simplex_grid(m.dim, step)
    feasible = grid @ m.mu >= cons.min_return
    grid = grid[feasible]
    u = grid @ m.mu
    v = np.einsum("ri,ij,rj->r", grid, m.sigma, grid)
    vals = np.log(u) - v / (2.0 * u * u)
    k = int(np.argmax(vals))
    return grid[k], float(vals[k])


def check_taylor_approximation(
    portfolios: int = 100, draws: int = 1_000_000, seed: int = 0, tol: float = 1e-3
) -> CheckResult:
    """Quadratic utility vs Monte Carlo E log(b @ X) on low-variation normals."""
    worst = 0.0
    for case in range(portfolios):
        rng = np.random.default_rng([seed, case])
        d = int(rng.integers(2, 6))
        mu = rng.uniform(0.95, 1.10, d)
        cv = rng.uniform(0.01, 0.05, d)
        stds = mu * cv
        corr_raw = rng.normal(size=(d, d + 2))
        corr = corr_raw @ corr_raw.T
        dinv = 1.0 / np.sqrt(np.diag(corr))
        corr = corr * np.outer(dinv, dinv)
        sigma = corr * np.outer(stds, stds)
        sigma = (sigma + sigma.T) / 2
        b = rng.dirichlet(np.ones(d))
        chol = np.linalg.cholesky(sigma + 1e-15 * np.eye(d))
        z = rng.standard_normal((draws, d))
        returns = (z @ chol.T + mu) @ b
        if np.any(returns <= 0):
            return CheckResult("taylor_approximation", False, f"nonpositive draw in case {case}")
        mc = float(np.mean(np.log(returns)))
        approx = allocation_utility(b, MomentEstimate(mu=mu, sigma=sigma))
        worst = max(worst, abs(approx - mc))
    return CheckResult(
        "taylor_approximation",
        worst <= tol,
        f"max |utility - MC E log| = {worst:.3e} over {portfolios} portfolios (tol {tol:g})",
    )


def check_optimizer_equivalence(
    instances: int = 200, seed: int = 0, grid_step: float = 1e-3,
    utility_slack: float = 1e-4, residual_tol: float = 1e-6,
) -> CheckResult:
    """Optimizer vs brute-force grid, plus stationarity residual, on d <= 3."""
    worst_gap = -np.inf
    worst_res = 0.0
    for case in range(instances):
        rng = np.random.default_rng([seed, case])
        d = int(rng.integers(1, 4))
        mu = rng.uniform(0.85, 1.25, d)
        sigma = _random_psd(rng, d, float(rng.uniform(1e-5, 5e-2)))
        m = MomentEstimate(mu=mu, sigma=sigma)
        c = float(rng.uniform(0, mu.max())) if case % 3 == 0 else 0.0
        cons = ConstraintSet(min_return=c)
        b = optimize_allocation(m, cons)
        _, grid_val = grid_search_utility(m, cons, grid_step)
        worst_gap = max(worst_gap, grid_val - allocation_utility(b, m))
        worst_res = max(worst_res, kkt_residual(b, m, cons))
    passed = worst_gap <= utility_slack and worst_res <= residual_tol
    return CheckResult(
        "optimizer_equivalence",
        passed,
        f"max grid-minus-optimizer utility gap = {worst_gap:.3e} (slack {utility_slack:g}), "
        f"max KKT residual = {worst_res:.3e} (tol {residual_tol:g})",
    )


def check_covariance_robustness(trials: int = 1000, seed: int = 0) -> CheckResult:
    """Utility shift under a perturbed covariance never exceeds the stated bound."""
    violations = 0
    tightest = np.inf
    for case in range(trials):
        rng = np.random.default_rng([seed, case])
        d = int(rng.integers(2, 7))
        mu = rng.uniform(0.9, 1.2, d)
        scale = float(rng.uniform(1e-4, 5e-2))
        floor = 0.1 * scale
        sigma = _random_psd(rng, d, scale) + floor * np.eye(d)
        pert = rng.normal(0.0, floor / (2 * d), size=(d, d))
        pert = (pert + pert.T) / 2
        sigma_hat = sigma + pert
        if np.min(np.linalg.eigvalsh(sigma_hat)) < 0:
            sigma_hat = sigma  # keep the trial; zero perturbation still satisfies the bound
            pert = np.zeros((d, d))
        b = rng.dirichlet(np.ones(d))
        c = float(rng.uniform(0.1, 1.0) * (b @ mu))
        shift = abs(
            allocation_utility(b, MomentEstimate(mu=mu, sigma=sigma_hat))
            - allocation_utility(b, MomentEstimate(mu=mu, sigma=sigma))
        )
        bound = robustness_bound(b, c, sigma - sigma_hat)
        if shift > bound:
            violations += 1
        if bound > 0:
            tightest = min(tightest, bound - shift)
    return CheckResult(
        "covariance_robustness_bound",
        violations == 0,
        f"{violations}/{trials} violations; smallest bound slack = {tightest:.3e}",
    )


def _random_joint(rng: np.random.Generator) -> DiscreteJointDistribution:
    d = int(rng.integers(2, 4))
    k = int(rng.integers(2, 5))
    labels = int(rng.integers(2, 4))
    support = rng.uniform(0.5, 1.8, size=(k, d))
    conds = [
        DiscreteDistribution(support=support, probs=rng.dirichlet(np.ones(k)))
        for _ in range(labels)
    ]
    return DiscreteJointDistribution(
        y_values=[f"y{i}" for i in range(labels)],
        cond=conds,
        y_probs=rng.dirichlet(np.ones(labels)),
    )


def check_information_benefit(trials: int = 500, seed: int = 0) -> CheckResult:
    """Per-label gains in [0, KL] and expected gain at most the mutual information."""
    gain_floor = 0.0
    kl_excess = -np.inf
    mi_excess = -np.inf
    indep_gain = 0.0
    indep_mi = 0.0
    for case in range(trials):
        rng = np.random.default_rng([seed, case])
        joint = _random_joint(rng)
        if case % 10 == 0:
            shared = joint.cond[0]
            joint = DiscreteJointDistribution(
                y_values=joint.y_values,
                cond=[shared] * len(joint.y_values),
                y_probs=joint.y_probs,
            )
            ig = information_gain(joint)
            indep_gain = max(indep_gain, abs(ig.expected_gain))
            indep_mi = max(indep_mi, abs(ig.mutual_information))
        else:
            ig = information_gain(joint)
        gain_floor = min(gain_floor, float(ig.per_y_gain.min()))
        kl_excess = max(kl_excess, float((ig.per_y_gain - ig.per_y_kl).max()))
        mi_excess = max(mi_excess, ig.expected_gain - ig.mutual_information)
    passed = (
        gain_floor >= -1e-9
        and kl_excess <= 1e-9
        and mi_excess <= 1e-9
        and indep_gain <= 1e-9
        and indep_mi <= 1e-12
    )
    return CheckResult(
        "information_benefit",
        passed,
        f"min gain = {gain_floor:.1e}, max gain-KL = {kl_excess:.1e}, "
        f"max gain-MI = {mi_excess:.1e}, independent |gain| = {indep_gain:.1e}, "
        f"|MI| = {indep_mi:.1e} over {trials} joints",
    )


def check_longterm_superiority(
    trials: int = 2000, seed: int = 11, horizons: tuple[int, ...] = (10, 50, 200)
) -> CheckResult:
    """Competitor wealth exceeds n^2 times log-optimal wealth at most 1/n^2 often."""
    dist = DiscreteDistribution(support=[[2.0, 0.5], [0.5, 2.0]], probs=[0.5, 0.5])
    competitor = np.array([1.0, 0.0])
    details = []
    passed = True
    for n in horizons:
        res = superiority_trial(dist, competitor, n=n, trials=trials, seed=seed)
        ok = res.exceed_fraction <= 1.0 / n**2
        if n == max(horizons):
            ok = ok and res.mean_normalized_log_ratio < 0
        passed = passed and ok
        details.append(
            f"n={n}: exceed {res.exceed_fraction:.2e} (cap {1.0 / n**2:.2e}), "
            f"drift {res.mean_normalized_log_ratio:+.4f}"
        )
    return CheckResult("longterm_superiority", passed, "; ".join(details))


def check_jensen_gap(trials: int = 200, seed: int = 0) -> CheckResult:
    """E log(b @ X) never exceeds log E(b @ X); equality only for constant returns."""
    worst = -np.inf
    for case in range(trials):
        rng = np.random.default_rng([seed, case])
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 6))
        dist = DiscreteDistribution(
            support=rng.uniform(0.4, 2.0, size=(k, d)), probs=rng.dirichlet(np.ones(k))
        )
        b = rng.dirichlet(np.ones(d))
        gap = expected_log_return(b, dist) - float(np.log(b @ (dist.probs @ dist.support)))
        worst = max(worst, gap)
        if gap > -1e-12:
            spread = np.ptp(dist.support @ b) if k > 1 else 0.0
            if spread > 1e-9:
                return CheckResult(
                    "jensen_inequality", False, f"equality at non-constant return, case {case}"
                )
    return CheckResult("jensen_inequality", worst <= 1e-12, f"max E log - log E = {worst:.1e}")


def check_expected_ratio(trials: int = 200, seed: int = 0, tol: float = 1e-9) -> CheckResult:
    """E[(b @ X) / (b* @ X)] <= 1 for the log-optimal b* and any competitor b."""
    worst = -np.inf
    for case in range(trials):
        rng = np.random.default_rng([seed, case])
        d = int(rng.integers(2, 4))
        k = int(rng.integers(2, 6))
        dist = DiscreteDistribution(
            support=rng.uniform(0.4, 2.0, size=(k, d)), probs=rng.dirichlet(np.ones(k))
        )
        b_star = glos_optimal(dist)
        ratio_denominator = dist.support @ b_star
        for _ in range(5):
            b = rng.dirichlet(np.ones(d))
            ratio = float(dist.probs @ ((dist.support @ b) / ratio_denominator))
            worst = max(worst, ratio - 1.0)
    return CheckResult(
        "expected_ratio_bound", worst <= tol, f"max E[ratio] - 1 = {worst:.2e} (tol {tol:g})"
    )


def run_oracle_suite(trials: int = 500, seed: int = 1, taylor_portfolios: int = 20) -> list[CheckResult]:
    """The full theorem table printed by the CLI ``oracle`` subcommand."""
    return [
        check_jensen_gap(trials=min(trials, 200), seed=seed),
        check_expected_ratio(trials=min(trials, 200), seed=seed),
        check_information_benefit(trials=trials, seed=seed),
        check_longterm_superiority(trials=max(trials, 2000), seed=11),
        check_covariance_robustness(trials=max(trials, 1000), seed=seed),
        check_taylor_approximation(portfolios=taylor_portfolios, seed=seed),
        check_optimizer_equivalence(instances=min(trials, 200), seed=seed),
    ]
