import numpy as np
import pytest

from logopt.market_data import AssetPanel
from logopt.synthetic import generate_meanrevert, panel_from_fluctuations


def make_panel(opens, closes, highs=None, lows=None, volume=None, ids=None):
    """Panel from open/close matrices with auto-consistent high/low."""
    opens = np.asarray(opens, dtype=float)
    closes = np.asarray(closes, dtype=float)
    if highs is None:
        highs = np.maximum(opens, closes) * 1.01
    if lows is None:
        lows = np.minimum(opens, closes) * 0.99
    if volume is None:
        volume = np.full(opens.shape, 1000.0)
    d = opens.shape[0]
    return AssetPanel(
        asset_ids=ids or [f"A{i}" for i in range(d)],
        open=opens,
        high=highs,
        low=lows,
        close=closes,
        volume=volume,
        period_labels=[str(t) for t in range(opens.shape[1])],
    )


def panel_from_ratios(ratios, seed=0):
    """Panel whose close/open ratios equal the given d x T matrix."""
    return panel_from_fluctuations(np.asarray(ratios, dtype=float), seed=seed)


@pytest.fixture
def flat_panel():
    ones = np.ones((2, 6))
    return make_panel(ones, ones, highs=ones, lows=ones, volume=np.zeros((2, 6)))


@pytest.fixture
def meanrevert_panel():
    return generate_meanrevert(2, 120, seed=42)
