"""Training oracles: synthetic landscapes and tabular benchmarks.

A synthetic landscape assigns every (edge, operation) pair a utility in
[0, 1]; an architecture's true quality is the mean of its per-edge utilities
plus, when interaction terms are defined, the mean of the applicable
interaction values, clamped back to [0, 1].  Training an architecture for
one epoch returns that quality perturbed by Gaussian observation noise
whose deviation shrinks linearly with the architecture's epoch count:

    deviation(e) = beta * (e_star - e) + gamma      for 1 <= e <= e_star

so estimates made late in training are more trustworthy than early ones.

A tabular benchmark replays pre-recorded per-epoch metrics from a file,
which makes runs reproducible without any model training.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Dict, Optional, TextIO, Tuple

import numpy as np

from .engine import Evaluator
from .rng import substream
from .space import (
    Architecture,
    SearchSpaceSpec,
    build_space,
    edge_label,
    encode,
    enumerate_architectures,
)

_BENCH_MAGIC = "#distprune-bench v1"
_LANDSCAPE_MAGIC = "#distprune-landscape v1"


class OracleError(ValueError):
    """Invalid oracle definition, file, or training request."""


@dataclass(frozen=True)
class NoiseParams:
    """Linear observation-noise schedule.

    Attributes:
        beta: per-epoch deviation slope (>= 0).
        gamma: residual deviation remaining at the convergence epoch (>= 0).
        e_star: epoch at which the deviation bottoms out at gamma (>= 1).
    """

    beta: float = 0.0
    gamma: float = 0.0
    e_star: int = 1

    def __post_init__(self) -> None:
        if self.beta < 0.0 or self.gamma < 0.0:
            raise OracleError(f"beta and gamma must be >= 0, got {self.beta}, {self.gamma}")
        if self.e_star < 1:
            raise OracleError(f"e_star must be >= 1, got {self.e_star}")

    def sigma(self, e_t: int) -> float:
        """Deviation of the observation noise at epoch ``e_t``.

        Raises:
            OracleError: if ``e_t`` lies outside [1, e_star].
        """
        if not 1 <= e_t <= self.e_star:
            raise OracleError(f"epoch {e_t} outside [1, {self.e_star}]")
        return self.beta * (self.e_star - e_t) + self.gamma


# ((slot_a, op_a), (slot_b, op_b)) -> value; slots index spec.flat_edges.
InteractionKey = Tuple[Tuple[int, int], Tuple[int, int]]


@dataclass(frozen=True)
class SyntheticLandscape:
    """Closed-form architecture quality with a noise schedule.

    ``utilities[slot][op]`` is the utility of operation ``op`` on flat edge
    ``slot``.  ``interactions`` optionally adds pairwise terms keyed by two
    (slot, op) pairs; a term applies when the architecture selects both.
    """

    spec: SearchSpaceSpec
    utilities: tuple[tuple[float, ...], ...]
    noise: NoiseParams = NoiseParams()
    interactions: dict[InteractionKey, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.utilities) != len(self.spec.flat_edges):
            raise OracleError(
                f"utilities cover {len(self.utilities)} edges, spec has "
                f"{len(self.spec.flat_edges)}"
            )
        for slot, row in enumerate(self.utilities):
            if len(row) != self.spec.num_operations:
                raise OracleError(
                    f"edge {edge_label(self.spec.flat_edges[slot])} has {len(row)} "
                    f"utilities, vocabulary has {self.spec.num_operations}"
                )
            for value in row:
                if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                    raise OracleError(f"utility {value!r} outside [0, 1]")

    def quality(self, arch: Architecture) -> float:
        """True quality of an architecture, clamped to [0, 1]."""
        total = 0.0
        for slot, op in enumerate(arch.ops):
            total += self.utilities[slot][op]
        q = total / len(arch.ops)
        if self.interactions:
            applicable = [
                value
                for ((slot_a, op_a), (slot_b, op_b)), value in self.interactions.items()
                if arch.ops[slot_a] == op_a and arch.ops[slot_b] == op_b
            ]
            if applicable:
                q += sum(applicable) / len(applicable)
        return min(1.0, max(0.0, q))

    def is_separable(self) -> bool:
        return not self.interactions

    def min_utility_gap(self) -> float:
        """Smallest gap between adjacent sorted utilities over all edges.

        Raises:
            OracleError: if some edge has tied utilities (gap zero).
        """
        smallest = math.inf
        for slot, row in enumerate(self.utilities):
            ordered = sorted(row)
            for a, b in zip(ordered, ordered[1:]):
                gap = b - a
                if gap == 0.0:
                    raise OracleError(
                        f"tied utilities on edge {edge_label(self.spec.flat_edges[slot])}"
                    )
                smallest = min(smallest, gap)
        return smallest

    def optimal_ops(self) -> tuple[int, ...]:
        """Per-edge argmax operation indices (the separable optimum).

        Raises:
            OracleError: if the landscape has interaction terms or some edge
                has a tied maximum.
        """
        if self.interactions:
            raise OracleError("optimal_ops requires a separable landscape")
        best = []
        for slot, row in enumerate(self.utilities):
            top = max(row)
            winners = [i for i, v in enumerate(row) if v == top]
            if len(winners) != 1:
                raise OracleError(
                    f"non-unique optimum: tied maximum on edge "
                    f"{edge_label(self.spec.flat_edges[slot])}"
                )
            best.append(winners[0])
        return tuple(best)


def ridge_landscape(
    spec: SearchSpaceSpec,
    base_utilities: tuple[float, ...] | list[float],
    jitter: float = 0.0,
    seed: int = 0,
    noise: NoiseParams = NoiseParams(),
) -> SyntheticLandscape:
    """Build a separable landscape from one shared utility ladder.

    Every edge receives ``base_utilities`` plus a small per-(edge, op) jitter
    drawn uniformly from [-jitter, +jitter].  The jitter must be below half
    the smallest base gap so each edge keeps the base ordering, which makes
    the per-edge optimum the same vocabulary position everywhere and keeps
    all utilities distinct.

    Raises:
        OracleError: on a base ladder that is not strictly increasing, or a
            jitter large enough to reorder or tie utilities.
    """
    base = tuple(float(v) for v in base_utilities)
    if len(base) != spec.num_operations:
        raise OracleError(f"base ladder has {len(base)} entries for {spec.num_operations} ops")
    gaps = [b - a for a, b in zip(base, base[1:])]
    if any(g <= 0 for g in gaps):
        raise OracleError("base utilities must be strictly increasing")
    if jitter < 0 or (jitter > 0 and jitter >= min(gaps) / 2):
        raise OracleError(f"jitter {jitter} must be < half the smallest base gap {min(gaps) / 2}")
    rng = substream(seed, "landscape-gen")
    rows = []
    for _ in spec.flat_edges:
        row = tuple(
            min(1.0, max(0.0, v + (jitter * float(rng.uniform(-1.0, 1.0)) if jitter else 0.0)))
            for v in base
        )
        rows.append(row)
    landscape = SyntheticLandscape(spec=spec, utilities=tuple(rows), noise=noise)
    landscape.min_utility_gap()  # raises on the (measure-zero) chance of a tie
    return landscape


class SyntheticEvaluator(Evaluator):
    """Trains architectures against a synthetic landscape.

    Each architecture owns an epoch counter and an independent noise stream
    derived from (seed, architecture); epoch metrics therefore do not depend
    on how training calls interleave across architectures, which keeps
    concurrent rounds byte-identical with serial ones.

    Args:
        landscape: quality model and noise schedule.
        seed: root seed of the per-architecture noise streams.
        clamp: clamp metrics into [0, 1] (disable to inspect raw noise).
        initial_epoch: pretend every architecture has already trained this
            many epochs (useful to probe late-training noise levels).
    """

    supports_parallel_train = True

    def __init__(
        self,
        landscape: SyntheticLandscape,
        seed: int = 0,
        clamp: bool = True,
        initial_epoch: int = 0,
    ) -> None:
        if initial_epoch < 0:
            raise OracleError(f"initial_epoch must be >= 0, got {initial_epoch}")
        self.landscape = landscape
        self.seed = seed
        self.clamp = clamp
        self.initial_epoch = initial_epoch
        self._counters: Dict[tuple[int, ...], int] = {}
        self._streams: Dict[tuple[int, ...], np.random.Generator] = {}
        self._lock = threading.Lock()

    def _ensure(self, arch: Architecture) -> None:
        key = arch.ops
        if key not in self._streams:
            with self._lock:
                if key not in self._streams:
                    self._counters[key] = self.initial_epoch
                    self._streams[key] = substream(self.seed, "oracle-noise", key)

    def begin_round(self, architectures: list[Architecture]) -> None:
        for arch in architectures:
            self._ensure(arch)

    def train_epoch(self, arch: Architecture) -> float:
        self._ensure(arch)
        key = arch.ops
        count = self._counters[key] + 1
        self._counters[key] = count
        e_t = min(count, self.landscape.noise.e_star)
        sigma = self.landscape.noise.sigma(e_t)
        noise = float(self._streams[key].normal(0.0, sigma)) if sigma > 0.0 else 0.0
        metric = self.landscape.quality(arch) + noise
        if self.clamp:
            metric = min(1.0, max(0.0, metric))
        return metric

    def epoch_count(self, arch: Architecture) -> int:
        return self._counters.get(arch.ops, self.initial_epoch)

    def description(self) -> str:
        n = self.landscape.noise
        return (
            f"synthetic(beta={n.beta}, gamma={n.gamma}, e_star={n.e_star}, "
            f"clamp={self.clamp}, initial_epoch={self.initial_epoch})"
        )


@dataclass(frozen=True)
class TabularBenchmark:
    """Pre-recorded per-epoch metrics keyed by encoded architecture."""

    spec: SearchSpaceSpec
    epochs: int
    entries: dict[str, tuple[float, ...]]

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise OracleError(f"epochs must be >= 1, got {self.epochs}")
        for key, metrics in self.entries.items():
            if len(metrics) != self.epochs:
                raise OracleError(
                    f"entry {key!r} has {len(metrics)} metrics, expected {self.epochs}"
                )
            for value in metrics:
                if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                    raise OracleError(f"metric {value!r} outside [0, 1] in entry {key!r}")


class TabularEvaluator(Evaluator):
    """Replays benchmark metrics; epoch counters advance per architecture."""

    supports_parallel_train = True

    def __init__(self, benchmark: TabularBenchmark) -> None:
        self.benchmark = benchmark
        self._counters: Dict[str, int] = {}
        self._lock = threading.Lock()

    def begin_round(self, architectures: list[Architecture]) -> None:
        for arch in architectures:
            key = encode(self.benchmark.spec, arch)
            with self._lock:
                self._counters.setdefault(key, 0)

    def train_epoch(self, arch: Architecture) -> float:
        key = encode(self.benchmark.spec, arch)
        entry = self.benchmark.entries.get(key)
        if entry is None:
            raise OracleError(f"benchmark has no entry for architecture {key!r}")
        count = self._counters.setdefault(key, 0)
        if count >= len(entry):
            raise OracleError(
                f"architecture {key!r} exhausted its {len(entry)} recorded epochs"
            )
        self._counters[key] = count + 1
        return entry[count]

    def description(self) -> str:
        return f"tabular(entries={len(self.benchmark.entries)}, epochs={self.benchmark.epochs})"


def generate_benchmark(
    spec: SearchSpaceSpec,
    landscape: SyntheticLandscape,
    epochs: int,
    seed: int,
    cap: int = 1_000_000,
) -> TabularBenchmark:
    """Record ``epochs`` sequential synthetic metrics for every architecture.

    Metrics follow the landscape's noise schedule exactly as live training
    would observe them (per-architecture epoch counters starting at 1).

    Raises:
        SpaceError: if the space exceeds ``cap`` architectures.
        OracleError: if the landscape belongs to a different spec.
    """
    if landscape.spec != spec:
        raise OracleError("landscape spec does not match the benchmark spec")
    evaluator = SyntheticEvaluator(landscape, seed=seed)
    entries: dict[str, tuple[float, ...]] = {}
    for arch in enumerate_architectures(spec, cap):
        metrics = tuple(evaluator.train_epoch(arch) for _ in range(epochs))
        entries[encode(spec, arch)] = metrics
    return TabularBenchmark(spec=spec, epochs=epochs, entries=entries)


def _format_spec(spec: SearchSpaceSpec) -> str:
    return f"{spec.num_nodes},{spec.num_operations},{spec.num_cell_types}"


def write_benchmark(benchmark: TabularBenchmark, stream: TextIO) -> None:
    """Write the benchmark file: one header line, then tab-separated entries.

    Floats are rendered with ``repr`` so a read-back reproduces them
    bit-exactly.
    """
    spec = benchmark.spec
    stream.write(f"{_BENCH_MAGIC} epochs={benchmark.epochs} spec={_format_spec(spec)}\n")
    stream.write(f"#ops {' '.join(op.name for op in spec.operations)}\n")
    for key in sorted(benchmark.entries):
        metrics = ",".join(repr(m) for m in benchmark.entries[key])
        stream.write(f"{key}\t{metrics}\n")


def read_benchmark(stream: TextIO) -> TabularBenchmark:
    """Parse a benchmark file written by :func:`write_benchmark`.

    Raises:
        OracleError: on a bad header, malformed line, or entry mismatch.
    """
    header = stream.readline().rstrip("\n")
    if not header.startswith(_BENCH_MAGIC):
        raise OracleError(f"not a benchmark file (header {header!r})")
    fields = dict(part.split("=", 1) for part in header[len(_BENCH_MAGIC):].split())
    try:
        epochs = int(fields["epochs"])
        num_nodes, num_ops, num_cells = (int(v) for v in fields["spec"].split(","))
    except (KeyError, ValueError) as exc:
        raise OracleError(f"malformed benchmark header {header!r}") from exc
    ops_line = stream.readline().rstrip("\n")
    if not ops_line.startswith("#ops "):
        raise OracleError("benchmark file misses the #ops line")
    names = ops_line[len("#ops "):].split()
    if len(names) != num_ops:
        raise OracleError(f"header declares {num_ops} ops, #ops line has {len(names)}")
    spec = build_space(num_nodes, names, num_cells)
    entries: dict[str, tuple[float, ...]] = {}
    for lineno, line in enumerate(stream, start=3):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            key, metrics_text = line.split("\t", 1)
            metrics = tuple(float(m) for m in metrics_text.split(","))
        except ValueError as exc:
            raise OracleError(f"malformed benchmark line {lineno}") from exc
        entries[key] = metrics
    return TabularBenchmark(spec=spec, epochs=epochs, entries=entries)


def write_landscape(landscape: SyntheticLandscape, stream: TextIO) -> None:
    """Write a landscape definition file (utilities, interactions, noise)."""
    spec = landscape.spec
    stream.write(f"{_LANDSCAPE_MAGIC} spec={_format_spec(spec)}\n")
    stream.write(f"ops {' '.join(op.name for op in spec.operations)}\n")
    n = landscape.noise
    stream.write(f"noise beta={n.beta!r} gamma={n.gamma!r} e_star={n.e_star}\n")
    for slot, flat in enumerate(spec.flat_edges):
        for op in spec.operations:
            value = landscape.utilities[slot][op.index]
            stream.write(f"utility {edge_label(flat)} {op.name} {value!r}\n")
    for ((slot_a, op_a), (slot_b, op_b)), value in landscape.interactions.items():
        stream.write(
            "interaction "
            f"{edge_label(spec.flat_edges[slot_a])}={spec.operations[op_a].name} "
            f"{edge_label(spec.flat_edges[slot_b])}={spec.operations[op_b].name} "
            f"{value!r}\n"
        )


def read_landscape(stream: TextIO) -> SyntheticLandscape:
    """Parse a landscape definition file written by :func:`write_landscape`.

    Raises:
        OracleError: on bad headers, unknown edges or operations, missing
            utilities, or malformed lines.
    """
    header = stream.readline().rstrip("\n")
    if not header.startswith(_LANDSCAPE_MAGIC):
        raise OracleError(f"not a landscape file (header {header!r})")
    fields = dict(part.split("=", 1) for part in header[len(_LANDSCAPE_MAGIC):].split())
    try:
        num_nodes, num_ops, num_cells = (int(v) for v in fields["spec"].split(","))
    except (KeyError, ValueError) as exc:
        raise OracleError(f"malformed landscape header {header!r}") from exc
    ops_line = stream.readline().rstrip("\n")
    if not ops_line.startswith("ops "):
        raise OracleError("landscape file misses the ops line")
    names = ops_line[len("ops "):].split()
    if len(names) != num_ops:
        raise OracleError(f"header declares {num_ops} ops, ops line has {len(names)}")
    spec = build_space(num_nodes, names, num_cells)
    slot_by_label = {edge_label(flat): i for i, flat in enumerate(spec.flat_edges)}
    noise = NoiseParams()
    grid: list[list[Optional[float]]] = [
        [None] * spec.num_operations for _ in spec.flat_edges
    ]
    interactions: dict[InteractionKey, float] = {}

    def parse_pair(token: str) -> tuple[int, int]:
        label, _, name = token.rpartition("=")
        if label not in slot_by_label or name not in spec.op_index_by_name:
            raise OracleError(f"unknown edge or operation in {token!r}")
        return slot_by_label[label], spec.op_index_by_name[name]

    for lineno, line in enumerate(stream, start=3):
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "noise":
                values = dict(p.split("=", 1) for p in parts[1:])
                noise = NoiseParams(
                    beta=float(values["beta"]),
                    gamma=float(values["gamma"]),
                    e_star=int(values["e_star"]),
                )
            elif parts[0] == "utility":
                _, label, name, value = parts
                if label not in slot_by_label:
                    raise OracleError(f"unknown edge {label!r} on line {lineno}")
                if name not in spec.op_index_by_name:
                    raise OracleError(f"unknown operation {name!r} on line {lineno}")
                grid[slot_by_label[label]][spec.op_index_by_name[name]] = float(value)
            elif parts[0] == "interaction":
                _, first, second, value = parts
                interactions[(parse_pair(first), parse_pair(second))] = float(value)
            else:
                raise OracleError(f"unknown directive {parts[0]!r} on line {lineno}")
        except (ValueError, KeyError) as exc:
            raise OracleError(f"malformed landscape line {lineno}: {line!r}") from exc

    for slot, row in enumerate(grid):
        for op, value in enumerate(row):
            if value is None:
                raise OracleError(
                    f"missing utility for {edge_label(spec.flat_edges[slot])} "
                    f"{spec.operations[op].name}"
                )
    utilities = tuple(tuple(v for v in row) for row in grid)  # type: ignore[misc]
    return SyntheticLandscape(
        spec=spec, utilities=utilities, noise=noise, interactions=interactions
    )
