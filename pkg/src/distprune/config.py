"""Flat `key = value` configuration with dotted key groups.

One config file drives every command.  Lines are `key = value`; blank lines
and `#` comments are ignored; later command-line overrides (`key=value`)
replace file values.  Keys group by prefix:

    seed                      root seed for all derived random streams
    spec.num_nodes            intermediate nodes per cell
    spec.operations           comma-separated operation names
    spec.num_cell_types       independent cell types (default 1)
    search.epochs_per_round   training epochs per architecture per round
    search.temperature        softmax temperature (default 0.05)
    search.ema_coeff          optional score smoothing in (0, 1]
    search.metric_direction   maximize | minimize (default maximize)
    search.jobs               concurrent evaluations per round (default 1)
    oracle.type               synthetic | tabular | supernet
    oracle.landscape          landscape file (synthetic)
    oracle.base_utilities     inline ladder, comma floats (synthetic)
    oracle.jitter             per-(edge, op) utility jitter (synthetic)
    oracle.landscape_seed     jitter stream seed (synthetic)
    oracle.beta|gamma|e_star  noise schedule (synthetic, inline mode)
    oracle.clamp              clamp metrics to [0, 1] (default true)
    oracle.initial_epoch      warm-start epoch count (default 0)
    oracle.benchmark          benchmark file (tabular)
    oracle.dataset            blobs | ring (supernet)
    oracle.total_budget       cosine horizon (supernet; default: run budget)
    oracle.learning_rate|momentum|weight_decay|batch_size  (supernet)
    oracle.reset_per_round    re-init weights each round (default false)
    bound.beta|gamma|e_star|zeta|ops_count|ops_count_max|num_alive
    bound.e_t|e_t_start|e_t_stop|e_t_step      epoch range for bound tables
    validate.betas|gammas     grid axes, comma floats
    validate.e_star           noise convergence epoch for the grid
    validate.zeta             threshold scale, or `auto` (4x min gap)
    validate.trials           Monte Carlo trials per cell
    validate.e_t              bound evaluation epoch (default: first prune)
    validate.clamp            clamp trial metrics (default true)
    validate.initial_epoch    warm-start for trials (default 0)
    validate.probe_draws      deviation-probe sample size (default 2000)
    validate.bound_beta|bound_gamma  override the bound side only
"""

from __future__ import annotations

import re
from typing import Optional, Sequence

from .engine import SearchConfig, total_epoch_budget
from .oracles import (
    NoiseParams,
    SyntheticEvaluator,
    SyntheticLandscape,
    TabularEvaluator,
    read_benchmark,
    read_landscape,
    ridge_landscape,
)
from .rng import derive_seed
from .space import SearchSpaceSpec, build_space
from .supernet import MicroSupernetEvaluator, make_dataset
from .theory import BoundParams

_KEY_RE = re.compile(r"^[A-Za-z0-9_]+(\.[A-Za-z0-9_]+)*$")
_MISSING = object()

# The complete documented vocabulary; anything else is a typo worth failing on.
KNOWN_KEYS = frozenset(
    {
        "seed",
        "spec.num_nodes",
        "spec.operations",
        "spec.num_cell_types",
        "search.epochs_per_round",
        "search.temperature",
        "search.ema_coeff",
        "search.metric_direction",
        "search.jobs",
        "oracle.type",
        "oracle.landscape",
        "oracle.base_utilities",
        "oracle.jitter",
        "oracle.landscape_seed",
        "oracle.beta",
        "oracle.gamma",
        "oracle.e_star",
        "oracle.clamp",
        "oracle.initial_epoch",
        "oracle.benchmark",
        "oracle.dataset",
        "oracle.total_budget",
        "oracle.learning_rate",
        "oracle.momentum",
        "oracle.weight_decay",
        "oracle.batch_size",
        "oracle.reset_per_round",
        "bound.beta",
        "bound.gamma",
        "bound.e_star",
        "bound.zeta",
        "bound.ops_count",
        "bound.ops_count_max",
        "bound.num_alive",
        "bound.e_t",
        "bound.e_t_start",
        "bound.e_t_stop",
        "bound.e_t_step",
        "validate.betas",
        "validate.gammas",
        "validate.e_star",
        "validate.zeta",
        "validate.trials",
        "validate.e_t",
        "validate.clamp",
        "validate.initial_epoch",
        "validate.probe_draws",
        "validate.bound_beta",
        "validate.bound_gamma",
    }
)

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ConfigError(ValueError):
    """Malformed configuration file, override, or value."""


class Config:
    """Parsed key/value pairs with typed access and usage tracking."""

    def __init__(self, values: dict[str, str]):
        self._values = dict(values)
        self._used: set[str] = set()

    def has(self, key: str) -> bool:
        return key in self._values

    def get(self, key: str, default: object = _MISSING) -> str:
        if key in self._values:
            self._used.add(key)
            return self._values[key]
        if default is _MISSING:
            raise ConfigError(f"missing required config key {key!r}")
        return default  # type: ignore[return-value]

    def get_int(self, key: str, default: object = _MISSING) -> int:
        raw = self.get(key, default)
        if isinstance(raw, int) or raw is None:
            return raw  # type: ignore[return-value]
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {raw!r} is not an integer") from exc

    def get_float(self, key: str, default: object = _MISSING) -> float:
        raw = self.get(key, default)
        if isinstance(raw, (int, float)) or raw is None:
            return raw  # type: ignore[return-value]
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {raw!r} is not a number") from exc

    def get_bool(self, key: str, default: object = _MISSING) -> bool:
        raw = self.get(key, default)
        if isinstance(raw, bool) or raw is None:
            return raw  # type: ignore[return-value]
        lowered = raw.strip().lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"config key {key!r}: {raw!r} is not a boolean")

    def get_str_list(self, key: str, default: object = _MISSING) -> list[str]:
        raw = self.get(key, default)
        if not isinstance(raw, str):
            return raw  # type: ignore[return-value]
        items = [item.strip() for item in raw.split(",")]
        if any(not item for item in items):
            raise ConfigError(f"config key {key!r}: empty item in list {raw!r}")
        return items

    def get_float_list(self, key: str, default: object = _MISSING) -> list[float]:
        items = self.get_str_list(key, default)
        if not isinstance(items, list):
            return items
        try:
            return [float(item) for item in items]
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: non-numeric item in list") from exc

    def unused_keys(self) -> list[str]:
        return sorted(set(self._values) - self._used)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment, blanks are skipped."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {stripped!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: invalid key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path: str, overrides: Sequence[str] = ()) -> Config:
    """Read a config file and apply `key=value` override strings."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            values = parse_config_text(handle.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"override {override!r} is not `key=value`")
        key, value = override.split("=", 1)
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"override has invalid key {key!r}")
        values[key] = value.strip()
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return Config(values)


def build_spec(cfg: Config) -> SearchSpaceSpec:
    num_nodes = cfg.get_int("spec.num_nodes")
    operations = cfg.get_str_list("spec.operations")
    num_cell_types = cfg.get_int("spec.num_cell_types", 1)
    return build_space(num_nodes, operations, num_cell_types)


def build_search_config(cfg: Config, jobs: Optional[int] = None) -> SearchConfig:
    ema = cfg.get_float("search.ema_coeff", None) if cfg.has("search.ema_coeff") else None
    return SearchConfig(
        epochs_per_round=cfg.get_int("search.epochs_per_round"),
        temperature=cfg.get_float("search.temperature", 0.05),
        ema_coeff=ema,
        metric_direction=cfg.get("search.metric_direction", "maximize"),
        jobs=jobs if jobs is not None else cfg.get_int("search.jobs", 1),
    )


def default_ladder(count: int) -> list[float]:
    """Evenly spaced utilities in [0.1, 0.9] — a generic separable ladder."""
    if count < 2:
        raise ConfigError(f"need at least 2 operations, got {count}")
    step = 0.8 / (count - 1)
    return [0.1 + step * i for i in range(count)]


def build_landscape(
    cfg: Config, spec: SearchSpaceSpec, noise: Optional[NoiseParams] = None
) -> SyntheticLandscape:
    """Landscape from `oracle.landscape` file or inline ridge keys.

    ``noise`` overrides the file/inline noise schedule when given (the
    bound-validation grid installs its own per-cell schedule).
    """
    if cfg.has("oracle.landscape"):
        path = cfg.get("oracle.landscape")
        try:
            with open(path, "r", encoding="utf-8") as handle:
                landscape = read_landscape(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read landscape {path!r}: {exc}") from exc
        if landscape.spec != spec:
            raise ConfigError(
                f"landscape {path!r} was built for a different search space"
            )
        if noise is not None:
            landscape = SyntheticLandscape(
                spec=landscape.spec,
                utilities=landscape.utilities,
                noise=noise,
                interactions=landscape.interactions,
            )
        return landscape
    if cfg.has("oracle.base_utilities"):
        base = cfg.get_float_list("oracle.base_utilities")
    else:
        base = default_ladder(spec.num_operations)
    if noise is None:
        noise = NoiseParams(
            beta=cfg.get_float("oracle.beta", 0.0),
            gamma=cfg.get_float("oracle.gamma", 0.0),
            e_star=cfg.get_int("oracle.e_star", 1),
        )
    return ridge_landscape(
        spec,
        base,
        jitter=cfg.get_float("oracle.jitter", 0.0),
        seed=cfg.get_int("oracle.landscape_seed", 0),
        noise=noise,
    )


def build_evaluator(cfg: Config, spec: SearchSpaceSpec, seed: int, search: SearchConfig):
    """Construct the oracle named by `oracle.type`."""
    kind = cfg.get("oracle.type")
    if kind == "synthetic":
        landscape = build_landscape(cfg, spec)
        return SyntheticEvaluator(
            landscape,
            seed=derive_seed(seed, "oracle"),
            clamp=cfg.get_bool("oracle.clamp", True),
            initial_epoch=cfg.get_int("oracle.initial_epoch", 0),
        )
    if kind == "tabular":
        path = cfg.get("oracle.benchmark")
        try:
            with open(path, "r", encoding="utf-8") as handle:
                benchmark = read_benchmark(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read benchmark {path!r}: {exc}") from exc
        if benchmark.spec != spec:
            raise ConfigError(f"benchmark {path!r} was built for a different search space")
        return TabularEvaluator(benchmark)
    if kind == "supernet":
        dataset = make_dataset(
            cfg.get("oracle.dataset", "blobs"), derive_seed(seed, "dataset")
        )
        default_budget = total_epoch_budget(spec.num_operations, search.epochs_per_round)
        return MicroSupernetEvaluator(
            spec,
            dataset,
            seed=derive_seed(seed, "supernet"),
            total_budget=cfg.get_int("oracle.total_budget", default_budget),
            learning_rate=cfg.get_float("oracle.learning_rate", 0.025),
            momentum=cfg.get_float("oracle.momentum", 0.9),
            weight_decay=cfg.get_float("oracle.weight_decay", 3e-4),
            batch_size=cfg.get_int("oracle.batch_size", 16),
            reset_per_round=cfg.get_bool("oracle.reset_per_round", False),
        )
    raise ConfigError(f"unknown oracle.type {kind!r} (synthetic | tabular | supernet)")


def build_bound_params(cfg: Config) -> tuple[BoundParams, list[int], int]:
    """Bound parameters plus the e_t range and alive count for tables."""
    noise = NoiseParams(
        beta=cfg.get_float("bound.beta"),
        gamma=cfg.get_float("bound.gamma"),
        e_star=cfg.get_int("bound.e_star"),
    )
    ops_count_max = cfg.get_int("bound.ops_count_max")
    params = BoundParams(
        noise=noise,
        zeta=cfg.get_float("bound.zeta"),
        ops_count=cfg.get_int("bound.ops_count", ops_count_max),
        ops_count_max=ops_count_max,
    )
    num_alive = cfg.get_int("bound.num_alive", params.ops_count)
    if cfg.has("bound.e_t"):
        e_t_values = [cfg.get_int("bound.e_t")]
    else:
        start = cfg.get_int("bound.e_t_start", 1)
        stop = cfg.get_int("bound.e_t_stop", noise.e_star)
        step = cfg.get_int("bound.e_t_step", 1)
        if step < 1 or stop < start:
            raise ConfigError(
                f"invalid bound e_t range [{start}, {stop}] step {step}"
            )
        e_t_values = list(range(start, stop + 1, step))
    return params, e_t_values, num_alive


def build_validation_inputs(cfg: Config, spec: SearchSpaceSpec):
    """Everything `validate-bound` needs, from validate.* and oracle.* keys.

    Returns a dict of keyword arguments for
    :func:`distprune.theory.validate_bound_grid` (minus seed and jobs).
    """
    e_star = cfg.get_int("validate.e_star")

    def landscape_for(noise: NoiseParams) -> SyntheticLandscape:
        return build_landscape(cfg, spec, noise=noise)

    zeta_raw = cfg.get("validate.zeta", "auto")
    zeta = None if zeta_raw == "auto" else float(zeta_raw)
    override: Optional[tuple[float, float]] = None
    if cfg.has("validate.bound_beta") or cfg.has("validate.bound_gamma"):
        if not (cfg.has("validate.bound_beta") and cfg.has("validate.bound_gamma")):
            raise ConfigError(
                "validate.bound_beta and validate.bound_gamma must be set together"
            )
        override = (cfg.get_float("validate.bound_beta"), cfg.get_float("validate.bound_gamma"))
    return {
        "landscape_for": landscape_for,
        "betas": cfg.get_float_list("validate.betas"),
        "gammas": cfg.get_float_list("validate.gammas"),
        "e_star": e_star,
        "trials": cfg.get_int("validate.trials", 1000),
        "zeta": zeta,
        "e_t": cfg.get_int("validate.e_t") if cfg.has("validate.e_t") else None,
        "bound_noise_override": override,
        "clamp": cfg.get_bool("validate.clamp", True),
        "initial_epoch": cfg.get_int("validate.initial_epoch", 0),
        "probe_draws": cfg.get_int("validate.probe_draws", 2000),
    }
