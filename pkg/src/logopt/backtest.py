"""Drive strategies over a panel, compound wealth, and assemble comparisons.

Strategies only ever see a zero-copy panel view of the periods strictly
before the one they are deciding for, which rules out look-ahead by
construction. Wealth starts at 1 and compounds the realized portfolio
return each period with instant, fee-free rebalancing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines
from .agent import (
    AgentParameters,
    Architecture,
    Hyperparameters,
    OnlineTrader,
    init_agent,
)
from .allocation import ConstraintSet
from .market_data import AssetPanel, bootstrap_select, fluctuation, state_tensor
from .patterns import rlos_portfolio
from .solvers import SolverOptions
from .weights import WeightsError, uniform_weights, validate_weights

STRATEGY_NAMES = ("naive_average", "follow_winner", "follow_loser", "rlos", "rlosrl")


class BacktestError(RuntimeError):
    pass


class Strategy:
    """Decision interface: weights for period t given data strictly before t."""

    name = "strategy"
    min_history = 0

    def prepare(self, panel_view: AssetPanel | None, start: int) -> None:
        """Optional warm-up on the pre-span view (e.g. pre-training)."""

    def decide(self, history: AssetPanel | None, t: int) -> np.ndarray:
        raise NotImplementedError

    def observe(self, t: int, realized: np.ndarray) -> None:
        """Called once period t's fluctuation is realized."""


class NaiveAverageStrategy(Strategy):
    name = "naive_average"

    def __init__(self, d: int):
        self._w = baselines.naive_average(d)

    def decide(self, history, t):
        return self._w


class FollowWinnerStrategy(Strategy):
    name = "follow_winner"
    min_history = 0

    def decide(self, history, t):
        if history is None or history.periods == 0:
            raise BacktestError("follow_winner queried with no history")
        if t == 0:
            return uniform_weights(history.n_assets)
        return baselines.follow_winner(fluctuation(history, t - 1))


class FollowLoserStrategy(Strategy):
    name = "follow_loser"

    def decide(self, history, t):
        if history is None or history.periods == 0:
            raise BacktestError("follow_loser queried with no history")
        if t == 0:
            return uniform_weights(history.n_assets)
        return baselines.follow_loser(fluctuation(history, t - 1))


class RlosStrategy(Strategy):
    """Pattern-matched allocation-utility portfolio, recomputed per period."""

    name = "rlos"

    # light solver settings: the Newton polish supplies the precision, the
    # short ascent phase only has to land on the right face
    DEFAULT_OPTS = SolverOptions(restarts=1, max_iter=12, tolerance=1e-9)

    def __init__(
        self,
        max_span: int = 20,
        rho: float = 0.0,
        cons: ConstraintSet = ConstraintSet(),
        opts: SolverOptions = DEFAULT_OPTS,
    ):
        self.max_span = max_span
        self.rho = rho
        self.cons = cons
        self.opts = opts

    @property
    def min_history(self) -> int:
        return self.max_span + 1

    def decide(self, history, t):
        if history is None:
            raise BacktestError("rlos queried with no history")
        return rlos_portfolio(
            history, t, max_span=self.max_span, rho=self.rho, cons=self.cons, opts=self.opts
        )


class RlosRlStrategy(Strategy):
    """Advice-consuming CNN trader layered on the pattern-matched portfolio.

    Each period the agent observes the normalized OHLV tensor plus the
    pattern-matched advice, trades its own softmax portfolio, and (when
    training is on) replays Poisson-recent records through one SGD step
    after the period realizes. ``pretrain_steps`` extra replay steps run on
    the warm-up prefix before the span starts.
    """

    name = "rlosrl"

    def __init__(
        self,
        params: AgentParameters | None = None,
        arch: Architecture = Architecture(),
        hp: Hyperparameters = Hyperparameters(),
        max_span: int = 20,
        rho: float = 0.0,
        cons: ConstraintSet = ConstraintSet(),
        opts: SolverOptions = RlosStrategy.DEFAULT_OPTS,
        train: bool = True,
        pretrain_steps: int = 0,
        seed: int = 0,
    ):
        if params is None:
            params = init_agent(arch, seed=seed)
        self.trader = OnlineTrader(params, hp, seed=seed, train=train)
        self.arch = params.descriptor
        self.rlos = RlosStrategy(max_span=max_span, rho=rho, cons=cons, opts=opts)
        self.pretrain_steps = pretrain_steps
        self._pending: tuple | None = None

    @property
    def min_history(self) -> int:
        return max(self.rlos.min_history, self.arch.history)

    def prepare(self, panel_view, start):
        # optional warm start: sweep the pre-span prefix (training online as
        # records accrue), then run the requested number of extra replay steps
        if self.pretrain_steps <= 0:
            return
        if panel_view is None or panel_view.periods < self.min_history + 1:
            return
        for t in range(self.min_history, panel_view.periods):
            hist = panel_view.up_to(t)
            b, r, state, advice = self._predict(hist, t)
            self.trader.observe(t, state, advice, b, r, fluctuation(panel_view, t))
        for _ in range(self.pretrain_steps):
            self.trader.train_once()

    def _predict(self, history, t):
        advice = self.rlos.decide(history, t)
        state = state_tensor(history, t, self.arch.history)
        b, r = self.trader.decide(state, advice)
        return b, r, state, advice

    def decide(self, history, t):
        if history is None:
            raise BacktestError("rlosrl queried with no history")
        b, r, state, advice = self._predict(history, t)
        self._pending = (t, state, advice, b, r)
        return b

    def observe(self, t, realized):
        if self._pending is None or self._pending[0] != t:
            return
        _, state, advice, b, r = self._pending
        self._pending = None
        self.trader.observe(t, state, advice, b, r, realized)


@dataclass(frozen=True)
class StrategySpec:
    """Buildable description of a strategy (fresh instance per backtest cell)."""

    name: str
    max_span: int = 20
    rho: float = 0.0
    min_return: float = 0.0
    arch: Architecture = Architecture()
    hp: Hyperparameters = Hyperparameters()
    train: bool = True
    pretrain_steps: int = 0
    seed: int = 0
    checkpoint: str | None = None

    def build(self, d: int) -> Strategy:
        if self.name == "naive_average":
            return NaiveAverageStrategy(d)
        if self.name == "follow_winner":
            return FollowWinnerStrategy()
        if self.name == "follow_loser":
            return FollowLoserStrategy()
        cons = ConstraintSet(min_return=self.min_return)
        if self.name == "rlos":
            return RlosStrategy(max_span=self.max_span, rho=self.rho, cons=cons)
        if self.name == "rlosrl":
            params = None
            if self.checkpoint:
                from .agent import load_checkpoint

                params = load_checkpoint(self.checkpoint, expected=self.arch)
            return RlosRlStrategy(
                params=params,
                arch=self.arch,
                hp=self.hp,
                max_span=self.max_span,
                rho=self.rho,
                cons=cons,
                train=self.train,
                pretrain_steps=self.pretrain_steps,
                seed=self.seed,
            )
        raise ValueError(f"unknown strategy {self.name!r}; choose from {STRATEGY_NAMES}")


@dataclass(frozen=True)
class EquityCurve:
    """Wealth path S_0..S_n with the decisions and log returns behind it."""

    strategy: str
    start: int
    wealth: np.ndarray
    weights: np.ndarray
    log_returns: np.ndarray

    def validate(self) -> None:
        if self.wealth[0] != 1.0:
            raise BacktestError("wealth must start at 1")
        if np.any(self.wealth <= 0):
            raise BacktestError("wealth must stay positive")
        gross = self.wealth[1:] / self.wealth[:-1]
        factor = np.exp(self.log_returns)
        if np.max(np.abs(gross - factor)) > 1e-9:
            raise BacktestError("wealth recursion violated")

    @property
    def final_wealth(self) -> float:
        return float(self.wealth[-1])

    @property
    def mean_log_return(self) -> float:
        return float(self.log_returns.mean())

    @property
    def max_drawdown(self) -> float:
        peak = np.maximum.accumulate(self.wealth)
        return float(np.max(1.0 - self.wealth / peak))


def run_backtest(
    strategy: Strategy,
    panel: AssetPanel,
    span: tuple[int, int],
    warmup: int = 0,
) -> EquityCurve:
    """Realize one strategy over ``[start, end)`` periods of the panel."""
    start, end = span
    if not (0 <= start < end <= panel.periods):
        raise BacktestError(f"span {span} outside panel with {panel.periods} periods")
    if start < warmup:
        raise BacktestError(f"span start {start} precedes warmup {warmup}")
    if warmup < strategy.min_history:
        raise BacktestError(
            f"strategy {strategy.name} needs {strategy.min_history} warmup periods, got {warmup}"
        )
    strategy.prepare(panel.up_to(start) if start > 0 else None, start)
    n = end - start
    d = panel.n_assets
    wealth = np.empty(n + 1)
    wealth[0] = 1.0
    weights = np.empty((n, d))
    logret = np.empty(n)
    for i, t in enumerate(range(start, end)):
        history = panel.up_to(t) if t > 0 else None
        try:
            b = validate_weights(strategy.decide(history, t), strategy.name)
        except WeightsError as exc:
            raise BacktestError(f"strategy {strategy.name} invalid at period {t}: {exc}") from exc
        x = fluctuation(panel, t)
        gross = float(b @ x)
        wealth[i + 1] = wealth[i] * gross
        weights[i] = b
        logret[i] = np.log(gross)
        strategy.observe(t, x)
    curve = EquityCurve(
        strategy=strategy.name, start=start, wealth=wealth, weights=weights, log_returns=logret
    )
    curve.validate()
    return curve


@dataclass(frozen=True)
class CellResult:
    """Summary of one (strategy, span, seed) backtest cell."""

    strategy: str
    span: tuple[int, int]
    seed: int
    final_wealth: float
    mean_log_return: float
    max_drawdown: float
    win_rate_vs_naive: float
    curve: EquityCurve


@dataclass(frozen=True)
class Report:
    cells: tuple[CellResult, ...]
    spans: tuple[tuple[int, int], ...]
    seeds: tuple[int, ...]
    metadata: dict = field(default_factory=dict)

    def cell(self, strategy: str, span: tuple[int, int], seed: int) -> CellResult:
        for c in self.cells:
            if c.strategy == strategy and c.span == span and c.seed == seed:
                return c
        raise KeyError((strategy, span, seed))


def _run_cell(spec: StrategySpec, cell_panel: AssetPanel, span, seed, warmup, naive_curve):
    curve = run_backtest(spec.build(cell_panel.n_assets), cell_panel, span, warmup)
    wins = float(np.mean(curve.log_returns > naive_curve.log_returns))
    return CellResult(
        strategy=spec.name,
        span=tuple(span),
        seed=seed,
        final_wealth=curve.final_wealth,
        mean_log_return=curve.mean_log_return,
        max_drawdown=curve.max_drawdown,
        win_rate_vs_naive=wins,
        curve=curve,
    )


def compare(
    strategies: list[StrategySpec],
    panel: AssetPanel,
    spans: list[tuple[int, int]],
    seeds: list[int],
    warmup: int = 0,
    assets_per_cell: int | None = None,
    workers: int = 1,
    metadata: dict | None = None,
) -> Report:
    """Backtest every (strategy, span, bootstrap seed) cell.

    Each seed resamples the asset universe with replacement; the naive
    average curve on the same cell data supplies the per-period win rate.
    Cells are independent, so they may run on a thread pool; assembly order
    is fixed by the (strategy, span, seed) nesting either way.
    """
    if not strategies or not spans or not seeds:
        raise BacktestError("need at least one strategy, span, and seed")
    k = assets_per_cell or panel.n_assets
    jobs = []
    for seed in seeds:
        cell_panel = bootstrap_select(panel, k, seed)
        for span in spans:
            naive = run_backtest(NaiveAverageStrategy(k), cell_panel, span, warmup)
            for spec in strategies:
                jobs.append((spec, cell_panel, tuple(span), seed, warmup, naive))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(lambda j: _run_cell(*j), jobs))
    else:
        cells = [_run_cell(*j) for j in jobs]
    return Report(
        cells=tuple(cells),
        spans=tuple(tuple(s) for s in spans),
        seeds=tuple(seeds),
        metadata=dict(metadata or {}),
    )
