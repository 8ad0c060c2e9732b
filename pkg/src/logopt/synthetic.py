"""Seeded synthetic OHLCV panels for tests, demos, and regression fixtures."""

from __future__ import annotations

import numpy as np

from .log_optimal import DiscreteDistribution
from .market_data import AssetPanel

GENERATOR_KINDS = ("const", "iid", "trend", "meanrevert")


def panel_from_fluctuations(
    fluct: np.ndarray,
    seed: int,
    asset_prefix: str = "A",
) -> AssetPanel:
    """Build a valid OHLCV panel whose close/open ratios equal ``fluct``.

    Opens follow the cumulative price path, highs/lows add a small seeded
    margin around the open-close band, and volumes are seeded positives.
    """
    fluct = np.asarray(fluct, dtype=np.float64)
    if fluct.ndim != 2 or np.any(fluct <= 0):
        raise ValueError("fluctuations must be a positive d x T matrix")
    d, t = fluct.shape
    rng = np.random.default_rng(seed)
    opens = np.empty((d, t))
    opens[:, 0] = 1.0
    if t > 1:
        opens[:, 1:] = np.cumprod(fluct[:, :-1], axis=1)
    closes = opens * fluct
    band_hi = np.maximum(opens, closes)
    band_lo = np.minimum(opens, closes)
    highs = band_hi * (1.0 + 0.005 * rng.random((d, t)))
    lows = band_lo * (1.0 - 0.005 * rng.random((d, t)))
    volume = rng.uniform(5e5, 1.5e6, size=(d, t))
    return AssetPanel(
        asset_ids=[f"{asset_prefix}{i}" for i in range(d)],
        open=opens,
        high=highs,
        low=lows,
        close=closes,
        volume=volume,
        period_labels=[str(i) for i in range(t)],
    )


def generate_const(assets: int, periods: int, seed: int = 0) -> AssetPanel:
    """Flat market: every price 1.0, constant volume."""
    ones = np.ones((assets, periods))
    return AssetPanel(
        asset_ids=[f"A{i}" for i in range(assets)],
        open=ones,
        high=ones,
        low=ones,
        close=ones,
        volume=np.full((assets, periods), 1e6),
        period_labels=[str(i) for i in range(periods)],
    )


def generate_iid(periods: int, dist: DiscreteDistribution, seed: int) -> AssetPanel:
    """Draw each period's fluctuation vector i.i.d. from a discrete distribution."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(dist.probs.size, size=periods, p=dist.probs)
    fluct = dist.support[idx].T
    return panel_from_fluctuations(fluct, seed=seed + 1)


def generate_trend(assets: int, periods: int, seed: int = 0) -> AssetPanel:
    """Asset 0 gains exactly 1% every period; all others stay flat."""
    fluct = np.ones((assets, periods))
    fluct[0, :] = 1.01
    return panel_from_fluctuations(fluct, seed=seed + 1)


def generate_meanrevert(
    assets: int,
    periods: int,
    seed: int,
    gain: float = 1.02,
    loss: float = 0.99,
    noise: float = 0.002,
) -> AssetPanel:
    """Two-regime cycle: assets alternate between gaining and losing phases.

    Asset a gains in periods with ``(a + t)`` even and loses otherwise, with
    small seeded multiplicative noise, so last period's winner tends to lose
    next period.
    """
    rng = np.random.default_rng(seed)
    a_idx = np.arange(assets)[:, None]
    t_idx = np.arange(periods)[None, :]
    base = np.where((a_idx + t_idx) % 2 == 0, gain, loss)
    fluct = base * np.exp(rng.normal(0.0, noise, size=(assets, periods)))
    return panel_from_fluctuations(fluct, seed=seed + 1)


def generate(
    kind: str,
    assets: int,
    periods: int,
    seed: int,
    dist: DiscreteDistribution | None = None,
) -> AssetPanel:
    """Dispatch on generator kind (``const | iid | trend | meanrevert``)."""
    if kind == "const":
        return generate_const(assets, periods, seed)
    if kind == "iid":
        if dist is None:
            raise ValueError("the iid generator needs a distribution file")
        return generate_iid(periods, dist, seed)
    if kind == "trend":
        return generate_trend(assets, periods, seed)
    if kind == "meanrevert":
        return generate_meanrevert(assets, periods, seed)
    raise ValueError(f"unknown generator {kind!r}; choose from {GENERATOR_KINDS}")
