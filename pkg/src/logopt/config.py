"""Run configuration: flat INI files with section headers.

Grammar (all keys optional unless noted; defaults shown by ``default_config``):

    [data]
    source = generator          ; generator | csv
    kind = meanrevert           ; const | iid | trend | meanrevert
    path =                      ; CSV panel path (required when source=csv)
    distribution =              ; discrete distribution file (required for iid)
    assets = 2
    periods = 300
    seed = 42

    [strategies]
    names = naive_average, follow_winner, follow_loser, rlos

    [rlos]
    max_span = 20
    threshold = 0.0
    min_return = 0.0

    [agent]
    history = 10
    conv_channels = 16,16,16
    filter_width = 3
    fusion_units = 16
    alpha = 0.0001
    beta = 0.01
    sigma = 0.01
    weight_penalty = 0.0001
    poisson_lambda = 50.0
    momentum = 0.9
    batch_size = 32
    lr_schedule = 50000:0.01,100000:0.001,inf:0.0001
    train = true
    pretrain_steps = 0
    seed = 7
    checkpoint =

    [backtest]
    spans = 60:260              ; space-separated start:end pairs
    seeds = 1                   ; comma-separated bootstrap seeds
    assets_per_cell = 0         ; 0 = use every universe asset
    warmup = 60
    workers = 1

    [output]
    dir = out

The environment variable ``LOGOPT_OUTPUT_DIR`` overrides ``[output] dir``.
Every effective value (defaults included) is echoed to ``config_echo.ini``
in the output directory.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .agent import Architecture, Hyperparameters
from .backtest import StrategySpec
from .log_optimal import load_distribution
from .market_data import AssetPanel, load_panel
from .synthetic import GENERATOR_KINDS, generate

ENV_OUTPUT_DIR = "LOGOPT_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSource:
    source: str = "generator"
    kind: str = "meanrevert"
    path: str = ""
    distribution: str = ""
    assets: int = 2
    periods: int = 300
    seed: int = 42


@dataclass(frozen=True)
class RunConfig:
    data: DataSource = DataSource()
    strategy_names: tuple[str, ...] = ("naive_average", "follow_winner", "follow_loser", "rlos")
    max_span: int = 20
    threshold: float = 0.0
    min_return: float = 0.0
    arch: Architecture = Architecture()
    hp: Hyperparameters = Hyperparameters()
    train: bool = True
    pretrain_steps: int = 0
    agent_seed: int = 7
    checkpoint: str = ""
    spans: tuple[tuple[int, int], ...] = ((60, 260),)
    seeds: tuple[int, ...] = (1,)
    assets_per_cell: int = 0
    warmup: int = 60
    workers: int = 1
    output_dir: str = "out"

    def strategy_specs(self) -> list[StrategySpec]:
        return [
            StrategySpec(
                name=name,
                max_span=self.max_span,
                rho=self.threshold,
                min_return=self.min_return,
                arch=self.arch,
                hp=self.hp,
                train=self.train,
                pretrain_steps=self.pretrain_steps,
                seed=self.agent_seed,
                checkpoint=self.checkpoint or None,
            )
            for name in self.strategy_names
        ]


def default_config() -> RunConfig:
    return RunConfig()


def _parse_schedule(text: str) -> tuple[tuple[float, float], ...]:
    entries = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            threshold, rate = part.split(":")
            entries.append((float(threshold), float(rate)))
        except ValueError:
            raise ConfigError(f"bad lr_schedule entry {part!r}; expected 'steps:rate'") from None
    if not entries:
        raise ConfigError("empty lr_schedule")
    return tuple(entries)


def _format_schedule(schedule: tuple[tuple[float, float], ...]) -> str:
    parts = []
    for threshold, rate in schedule:
        tname = "inf" if math.isinf(threshold) else repr(int(threshold) if float(threshold).is_integer() else threshold)
        parts.append(f"{tname}:{repr(rate)}")
    return ",".join(parts)


def _parse_spans(text: str) -> tuple[tuple[int, int], ...]:
    spans = []
    for part in text.replace(";", " ").split():
        try:
            start, end = part.split(":")
            spans.append((int(start), int(end)))
        except ValueError:
            raise ConfigError(f"bad span {part!r}; expected 'start:end'") from None
    if not spans:
        raise ConfigError("no spans configured")
    return tuple(spans)


def load_config(path) -> RunConfig:
    """Parse and validate an INI run configuration."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(p, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    base = default_config()

    def get(section, key, cast, fallback):
        if not parser.has_option(section, key):
            return fallback
        raw = parser.get(section, key).strip()
        if raw == "" and cast is not str:
            return fallback
        try:
            if cast is bool:
                return raw.lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None

    data = DataSource(
        source=get("data", "source", str, base.data.source),
        kind=get("data", "kind", str, base.data.kind),
        path=get("data", "path", str, base.data.path),
        distribution=get("data", "distribution", str, base.data.distribution),
        assets=get("data", "assets", int, base.data.assets),
        periods=get("data", "periods", int, base.data.periods),
        seed=get("data", "seed", int, base.data.seed),
    )
    if data.source not in ("generator", "csv"):
        raise ConfigError(f"[data] source must be generator or csv, got {data.source!r}")
    if data.source == "csv":
        if not data.path:
            raise ConfigError("[data] path required for source=csv")
        if not Path(data.path).exists():
            raise ConfigError(f"[data] path not found: {data.path}")
    else:
        if data.kind not in GENERATOR_KINDS:
            raise ConfigError(f"[data] kind must be one of {GENERATOR_KINDS}")
        if data.kind == "iid":
            if not data.distribution:
                raise ConfigError("[data] distribution required for kind=iid")
            if not Path(data.distribution).exists():
                raise ConfigError(f"[data] distribution not found: {data.distribution}")

    names_raw = get("strategies", "names", str, ", ".join(base.strategy_names))
    names = tuple(n.strip() for n in names_raw.split(",") if n.strip())

    channels_raw = get("agent", "conv_channels", str, "")
    channels = (
        tuple(int(c) for c in channels_raw.split(",") if c.strip())
        if channels_raw
        else base.arch.conv_channels
    )
    arch = Architecture(
        history=get("agent", "history", int, base.arch.history),
        conv_channels=channels,
        filter_width=get("agent", "filter_width", int, base.arch.filter_width),
        fusion_units=get("agent", "fusion_units", int, base.arch.fusion_units),
    )
    schedule_raw = get("agent", "lr_schedule", str, "")
    hp = Hyperparameters(
        alpha=get("agent", "alpha", float, base.hp.alpha),
        beta=get("agent", "beta", float, base.hp.beta),
        sigma=get("agent", "sigma", float, base.hp.sigma),
        weight_penalty=get("agent", "weight_penalty", float, base.hp.weight_penalty),
        poisson_lambda=get("agent", "poisson_lambda", float, base.hp.poisson_lambda),
        momentum=get("agent", "momentum", float, base.hp.momentum),
        lr_schedule=_parse_schedule(schedule_raw) if schedule_raw else base.hp.lr_schedule,
        batch_size=get("agent", "batch_size", int, base.hp.batch_size),
    )
    checkpoint = get("agent", "checkpoint", str, base.checkpoint)
    if checkpoint and not Path(checkpoint).exists():
        raise ConfigError(f"[agent] checkpoint not found: {checkpoint}")

    spans_raw = get("backtest", "spans", str, "")
    config = RunConfig(
        data=data,
        strategy_names=names,
        max_span=get("rlos", "max_span", int, base.max_span),
        threshold=get("rlos", "threshold", float, base.threshold),
        min_return=get("rlos", "min_return", float, base.min_return),
        arch=arch,
        hp=hp,
        train=get("agent", "train", bool, base.train),
        pretrain_steps=get("agent", "pretrain_steps", int, base.pretrain_steps),
        agent_seed=get("agent", "seed", int, base.agent_seed),
        checkpoint=checkpoint,
        spans=_parse_spans(spans_raw) if spans_raw else base.spans,
        seeds=tuple(
            int(s) for s in get("backtest", "seeds", str, "1").replace(",", " ").split()
        ),
        assets_per_cell=get("backtest", "assets_per_cell", int, base.assets_per_cell),
        warmup=get("backtest", "warmup", int, base.warmup),
        workers=get("backtest", "workers", int, base.workers),
        output_dir=get("output", "dir", str, base.output_dir),
    )
    for name in config.strategy_names:
        if name not in ("naive_average", "follow_winner", "follow_loser", "rlos", "rlosrl"):
            raise ConfigError(f"unknown strategy {name!r}")
    return config


def resolve_output_dir(config: RunConfig) -> Path:
    return Path(os.environ.get(ENV_OUTPUT_DIR, config.output_dir))


def build_panel(config: RunConfig) -> AssetPanel:
    d = config.data
    if d.source == "csv":
        return load_panel(d.path)
    dist = load_distribution(d.distribution) if d.kind == "iid" else None
    return generate(d.kind, d.assets, d.periods, d.seed, dist=dist)


def echo_config(config: RunConfig) -> str:
    """Canonical INI text of every effective value, defaults included."""
    lines = [
        "[data]",
        f"source = {config.data.source}",
        f"kind = {config.data.kind}",
        f"path = {config.data.path}",
        f"distribution = {config.data.distribution}",
        f"assets = {config.data.assets}",
        f"periods = {config.data.periods}",
        f"seed = {config.data.seed}",
        "",
        "[strategies]",
        f"names = {', '.join(config.strategy_names)}",
        "",
        "[rlos]",
        f"max_span = {config.max_span}",
        f"threshold = {repr(config.threshold)}",
        f"min_return = {repr(config.min_return)}",
        "",
        "[agent]",
        f"history = {config.arch.history}",
        f"conv_channels = {','.join(str(c) for c in config.arch.conv_channels)}",
        f"filter_width = {config.arch.filter_width}",
        f"fusion_units = {config.arch.fusion_units}",
        f"alpha = {repr(config.hp.alpha)}",
        f"beta = {repr(config.hp.beta)}",
        f"sigma = {repr(config.hp.sigma)}",
        f"weight_penalty = {repr(config.hp.weight_penalty)}",
        f"poisson_lambda = {repr(config.hp.poisson_lambda)}",
        f"momentum = {repr(config.hp.momentum)}",
        f"batch_size = {config.hp.batch_size}",
        f"lr_schedule = {_format_schedule(config.hp.lr_schedule)}",
        f"train = {str(config.train).lower()}",
        f"pretrain_steps = {config.pretrain_steps}",
        f"seed = {config.agent_seed}",
        f"checkpoint = {config.checkpoint}",
        "",
        "[backtest]",
        f"spans = {' '.join(f'{a}:{b}' for a, b in config.spans)}",
        f"seeds = {', '.join(str(s) for s in config.seeds)}",
        f"assets_per_cell = {config.assets_per_cell}",
        f"warmup = {config.warmup}",
        f"workers = {config.workers}",
        "",
        "[output]",
        f"dir = {config.output_dir}",
        "",
    ]
    return "\n".join(lines)
