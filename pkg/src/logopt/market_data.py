"""OHLCV panel ingestion, fluctuation vectors, observation tensors, bootstrap universes.

The panel file format is a UTF-8 CSV with header
``asset,period,open,high,low,close,volume`` and one row per (asset, period).
Period labels are nonnegative integers or ISO dates, ascending per asset, and
every asset must cover every period (no gaps -- gaps are rejected, never
imputed).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

PANEL_HEADER = ["asset", "period", "open", "high", "low", "close", "volume"]

#: Channel order of the observation tensor built by :func:`state_tensor`.
STATE_CHANNELS = ("open", "high", "low", "volume")


class PanelError(ValueError):
    """Raised for malformed or inconsistent panel data."""


@dataclass(frozen=True)
class AssetPanel:
    """Aligned per-asset OHLCV series over trading periods.

    All five matrices are d x T (assets x periods). Prices are strictly
    positive with ``low <= open,close <= high``; volume is nonnegative.
    Instances are immutable: the arrays are marked read-only so panels can
    be shared freely across threads.
    """

    asset_ids: list[str]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    period_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        mats = {}
        for name in ("open", "high", "low", "close", "volume"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, m)
            mats[name] = m
        shape = mats["open"].shape
        if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
            raise PanelError(f"panel matrices must be d x T with d,T >= 1, got {shape}")
        if any(m.shape != shape for m in mats.values()):
            raise PanelError("open/high/low/close/volume must share one d x T shape")
        if len(self.asset_ids) != shape[0]:
            raise PanelError(f"{len(self.asset_ids)} asset ids for {shape[0]} rows")
        if self.period_labels and len(self.period_labels) != shape[1]:
            raise PanelError(f"{len(self.period_labels)} period labels for {shape[1]} columns")
        for name in ("open", "high", "low", "close"):
            if not np.all(np.isfinite(mats[name])) or np.any(mats[name] <= 0):
                raise PanelError(f"non-positive price in '{name}'")
        if not np.all(np.isfinite(mats["volume"])) or np.any(mats["volume"] < 0):
            raise PanelError("negative or non-finite volume")
        if np.any(mats["high"] < mats["low"]):
            raise PanelError("high < low")
        for name in ("open", "close"):
            if np.any(mats[name] > mats["high"]) or np.any(mats[name] < mats["low"]):
                raise PanelError(f"'{name}' outside [low, high]")
        for m in mats.values():
            m.flags.writeable = False

    @property
    def n_assets(self) -> int:
        return self.open.shape[0]

    @property
    def periods(self) -> int:
        """Number T of trading periods."""
        return self.open.shape[1]

    def up_to(self, t: int) -> "AssetPanel":
        """History strictly before period ``t`` as a zero-copy view panel."""
        if not 0 < t <= self.periods:
            raise IndexError(f"prefix bound {t} outside [1, {self.periods}]")
        return AssetPanel(
            asset_ids=self.asset_ids,
            open=self.open[:, :t],
            high=self.high[:, :t],
            low=self.low[:, :t],
            close=self.close[:, :t],
            volume=self.volume[:, :t],
            period_labels=self.period_labels[:t] if self.period_labels else [],
        )

    def fluctuations(self) -> np.ndarray:
        """d x T matrix of close/open ratios (column t is period t's vector)."""
        return self.close / self.open


def fluctuation(panel: AssetPanel, t: int) -> np.ndarray:
    """Per-asset close/open price ratio for period ``t``.

    This is the realized outcome of the period: entry a is
    ``close[a, t] / open[a, t]``, strictly positive by panel invariants.
    """
    if not 0 <= t < panel.periods:
        raise IndexError(f"period {t} outside [0, {panel.periods})")
    return panel.close[:, t] / panel.open[:, t]


def state_tensor(panel: AssetPanel, t: int, n: int) -> np.ndarray:
    """Observation tensor of the ``n`` periods strictly before ``t``.

    Returns a d x n x 4 array with channels ordered (open, high, low,
    volume). Price channels are divided by each asset's most recent open
    (``open[a, t-1]``); the volume channel is divided by the asset's mean
    volume over the slab, or left as-is when that mean is zero. The tensor
    depends only on columns t-n .. t-1.
    """
    if n < 1:
        raise ValueError("history length must be >= 1")
    if t < n or t > panel.periods:
        raise IndexError(f"need {n} periods of history before t={t}")
    sl = slice(t - n, t)
    anchor = panel.open[:, t - 1][:, None]
    vol = panel.volume[:, sl]
    vol_mean = vol.mean(axis=1, keepdims=True)
    vol_scale = np.where(vol_mean > 0, vol_mean, 1.0)
    out = np.stack(
        [
            panel.open[:, sl] / anchor,
            panel.high[:, sl] / anchor,
            panel.low[:, sl] / anchor,
            vol / vol_scale,
        ],
        axis=2,
    )
    return out


def bootstrap_select(universe: AssetPanel, k: int, seed: int) -> AssetPanel:
    """Sample a k-asset panel uniformly with replacement from ``universe``.

    Sampling uses numpy's PCG64 generator seeded with ``seed`` (indices are
    ``default_rng(seed).integers(0, d, size=k)``), so the same call always
    returns the same panel. Duplicated selections are retained as distinct
    columns and get suffixed ids.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    d = universe.n_assets
    if d < 1:
        raise PanelError("empty universe")
    idx = np.random.default_rng(seed).integers(0, d, size=k)
    seen: dict[str, int] = {}
    ids = []
    for i in idx:
        base = universe.asset_ids[i]
        count = seen.get(base, 0)
        seen[base] = count + 1
        ids.append(base if count == 0 else f"{base}#{count + 1}")
    return AssetPanel(
        asset_ids=ids,
        open=universe.open[idx],
        high=universe.high[idx],
        low=universe.low[idx],
        close=universe.close[idx],
        volume=universe.volume[idx],
        period_labels=list(universe.period_labels),
    )


def _period_sort_key(labels: list[str]):
    if all(lbl.lstrip("-").isdigit() for lbl in labels):
        keys = [int(lbl) for lbl in labels]
        if any(k < 0 for k in keys):
            raise PanelError("negative period label")
        return keys
    return labels


def load_panel(path, format: str = "csv") -> AssetPanel:
    """Read a validated :class:`AssetPanel` from an OHLCV CSV file.

    Assets are ordered by first appearance; periods ascending by label.
    Rejects gaps (an asset missing a period), duplicate (asset, period)
    rows, and any OHLC invariant violation.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _parse_panel(fh, str(path))


def _parse_panel(fh, origin: str) -> AssetPanel:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != PANEL_HEADER:
        raise PanelError(f"{origin}: expected header {','.join(PANEL_HEADER)}")
    rows: dict[str, dict[str, tuple]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 7:
            raise PanelError(f"{origin}:{lineno}: expected 7 fields, got {len(row)}")
        asset, period = row[0], row[1]
        try:
            o, h, l, c, v = (float(x) for x in row[2:])
        except ValueError as exc:
            raise PanelError(f"{origin}:{lineno}: malformed number ({exc})") from None
        if min(o, h, l, c) <= 0:
            raise PanelError(f"{origin}:{lineno}: non-positive price")
        per_asset = rows.setdefault(asset, {})
        if period in per_asset:
            raise PanelError(f"{origin}:{lineno}: duplicate row for ({asset}, {period})")
        per_asset[period] = (o, h, l, c, v)
    if not rows:
        raise PanelError(f"{origin}: no data rows")
    asset_ids = list(rows)
    period_set = set(rows[asset_ids[0]])
    for a in asset_ids[1:]:
        if set(rows[a]) != period_set:
            raise PanelError(f"{origin}: row count/period mismatch for asset {a!r}")
    labels = list(period_set)
    keys = _period_sort_key(labels)
    labels = [lbl for _, lbl in sorted(zip(keys, labels))]
    data = {name: np.empty((len(asset_ids), len(labels))) for name in ("open", "high", "low", "close", "volume")}
    for ai, a in enumerate(asset_ids):
        for ti, lbl in enumerate(labels):
            o, h, l, c, v = rows[a][lbl]
            data["open"][ai, ti] = o
            data["high"][ai, ti] = h
            data["low"][ai, ti] = l
            data["close"][ai, ti] = c
            data["volume"][ai, ti] = v
    return AssetPanel(asset_ids=asset_ids, period_labels=labels, **data)


def save_panel(panel: AssetPanel, path) -> None:
    """Write ``panel`` in the OHLCV CSV format; exact float round-trip."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PANEL_HEADER)
        labels = panel.period_labels or [str(t) for t in range(panel.periods)]
        for ai, asset in enumerate(panel.asset_ids):
            for ti, lbl in enumerate(labels):
                writer.writerow(
                    [
                        asset,
                        lbl,
                        repr(float(panel.open[ai, ti])),
                        repr(float(panel.high[ai, ti])),
                        repr(float(panel.low[ai, ti])),
                        repr(float(panel.close[ai, ti])),
                        repr(float(panel.volume[ai, ti])),
                    ]
                )


def panel_from_string(text: str) -> AssetPanel:
    """Parse a panel from CSV text (test and fixture convenience)."""
    return _parse_panel(io.StringIO(text), "<string>")
