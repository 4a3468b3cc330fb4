"""Search engine: the round loop that trains, scores, updates, and prunes.

Starting from uniform per-edge categorical distributions over K operations,
the engine runs exactly K - 1 rounds.  Round r draws one architecture per
surviving operation slot (a disjoint cover of every edge's alive set),
trains each for a fixed number of epochs, converts the observed metrics
into per-(edge, operation) scores, re-weights the distributions by softmax,
and removes the lowest-probability operation from every edge.  After the
last round a single architecture remains.

Every run can stream a JSON-lines event log.  Events are emitted in a fixed
controller order that does not depend on evaluation concurrency, so logs
are byte-identical across worker counts.
"""

from __future__ import annotations

import dataclasses
import json
import os
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, TextIO

from .distribution import (
    CategoricalState,
    PruneEvent,
    disjoint_sample,
    final_architecture,
    init_uniform,
    prune_min,
    state_from_json,
    state_to_json,
    update_softmax,
)
from .estimator import EstimationError, EvaluationRecord, estimate_scores, score_vectors
from .rng import substream
from .space import Architecture, SearchSpaceSpec, edge_label, encode

_DIRECTIONS = ("maximize", "minimize")


class EngineError(RuntimeError):
    """Search run failed or was misconfigured."""


class Evaluator(ABC):
    """Trains architectures one epoch at a time.

    Implementations own all training state (weights, epoch counters, data).
    ``train_epoch`` advances the given architecture by one epoch and returns
    the resulting metric; the engine never interprets the value beyond the
    configured optimization direction.

    Set ``supports_parallel_train = True`` only if concurrent
    ``train_epoch`` calls on *distinct* architectures are safe.
    """

    supports_parallel_train: bool = False

    def begin_round(self, architectures: list[Architecture]) -> None:
        """Hook called once per round with that round's sampled cohort."""

    @abstractmethod
    def train_epoch(self, arch: Architecture) -> float:
        """Train ``arch`` for one epoch and return its current metric."""

    @abstractmethod
    def description(self) -> str:
        """One-line description recorded in the run manifest."""


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of a search run.

    Attributes:
        epochs_per_round: epochs each sampled architecture trains per round.
        temperature: softmax temperature for the distribution update.
        ema_coeff: optional smoothing weight in (0, 1] applied to fresh
            scores against the previous round's (None = no smoothing).
        metric_direction: "maximize" or "minimize"; minimizing negates
            metrics for scoring while logs keep the raw values.
        jobs: architectures trained concurrently per round (threads).
    """

    epochs_per_round: int
    temperature: float = 0.05
    ema_coeff: Optional[float] = None
    metric_direction: str = "maximize"
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.epochs_per_round < 1:
            raise EngineError(f"epochs_per_round must be >= 1, got {self.epochs_per_round}")
        if not self.temperature > 0.0:
            raise EngineError(f"temperature must be > 0, got {self.temperature}")
        if self.ema_coeff is not None and not 0.0 < self.ema_coeff <= 1.0:
            raise EngineError(f"ema_coeff must lie in (0, 1], got {self.ema_coeff}")
        if self.metric_direction not in _DIRECTIONS:
            raise EngineError(
                f"metric_direction must be one of {_DIRECTIONS}, got {self.metric_direction!r}"
            )
        if self.jobs < 1:
            raise EngineError(f"jobs must be >= 1, got {self.jobs}")


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a finished search."""

    architecture: Architecture
    encoded: str
    state: CategoricalState
    rounds: int
    total_epochs: int
    prune_log: tuple[PruneEvent, ...]


def total_epoch_budget(num_operations: int, epochs_per_round: int) -> int:
    """Total epochs a full run consumes.

    Round r trains (K - r + 1) architectures, so across the K - 1 rounds the
    engine trains K + (K-1) + ... + 2 = K(K+1)/2 - 1 architectures, each for
    ``epochs_per_round`` epochs.
    """
    if num_operations < 2:
        raise EngineError(f"need at least 2 operations, got {num_operations}")
    if epochs_per_round < 1:
        raise EngineError(f"epochs_per_round must be >= 1, got {epochs_per_round}")
    return epochs_per_round * (num_operations * (num_operations + 1) // 2 - 1)


def _emit(sink: Optional[TextIO], payload: dict) -> None:
    if sink is not None:
        sink.write(json.dumps(payload, separators=(",", ":")) + "\n")


def _write_checkpoint(
    path: str, spec: SearchSpaceSpec, state: CategoricalState, round_index: int
) -> None:
    snapshot = {"round": round_index, "state": json.loads(state_to_json(spec, state))}
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        json.dump(snapshot, handle, indent=2)
        handle.write("\n")
    os.replace(tmp, path)


def read_checkpoint(spec: SearchSpaceSpec, path: str) -> tuple[int, CategoricalState]:
    """Load a checkpoint written during a run.

    Returns:
        (completed rounds, distribution state after that round).
    """
    with open(path, "r", encoding="utf-8") as handle:
        snapshot = json.load(handle)
    try:
        round_index = int(snapshot["round"])
        state = state_from_json(spec, json.dumps(snapshot["state"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise EngineError(f"malformed checkpoint {path!r}: {exc}") from exc
    return round_index, state


def _train_round(
    evaluator: Evaluator,
    cohort: list[Architecture],
    epochs: int,
    jobs: int,
) -> list[list[float]]:
    """Per-slot metric lists, ordered (slot, epoch) regardless of workers."""

    def train_all(arch: Architecture) -> list[float]:
        return [evaluator.train_epoch(arch) for _ in range(epochs)]

    if jobs > 1 and evaluator.supports_parallel_train and len(cohort) > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(cohort))) as pool:
            return list(pool.map(train_all, cohort))
    return [train_all(arch) for arch in cohort]


def run_search(
    spec: SearchSpaceSpec,
    evaluator: Evaluator,
    config: SearchConfig,
    seed: int,
    event_sink: Optional[TextIO] = None,
    checkpoint_path: Optional[str] = None,
) -> SearchResult:
    """Run the full prune-until-one search.

    Args:
        spec: search space to explore.
        evaluator: training oracle.
        config: run parameters.
        seed: root seed; each round samples from its own derived stream.
        event_sink: optional text stream receiving one JSON event per line.
        checkpoint_path: optional path rewritten after every round with the
            current distribution state.

    Returns:
        The surviving architecture plus the full prune history.
    """
    state = init_uniform(spec)
    num_ops = spec.num_operations
    total_epochs = 0
    prune_log: list[PruneEvent] = []
    for round_index in range(1, num_ops):
        cohort_size = num_ops - round_index + 1
        _emit(event_sink, {"event": "round_start", "round": round_index, "K": cohort_size})

        rng = substream(seed, "engine", "sample", round_index)
        cohort = disjoint_sample(state, rng)
        for slot, arch in enumerate(cohort):
            _emit(event_sink, {"event": "sample", "slot": slot, "arch": encode(spec, arch)})

        evaluator.begin_round(list(cohort))
        try:
            metrics = _train_round(evaluator, cohort, config.epochs_per_round, config.jobs)
        except Exception as exc:
            raise EngineError(f"round {round_index}: evaluator failed: {exc}") from exc

        records: list[EvaluationRecord] = []
        for slot, (arch, row) in enumerate(zip(cohort, metrics)):
            for epoch, metric in enumerate(row, start=1):
                records.append(EvaluationRecord(architecture=arch, epoch=epoch, metric=metric))
                _emit(
                    event_sink,
                    {"event": "epoch", "slot": slot, "epoch": epoch, "metric": metric},
                )
        total_epochs += cohort_size * config.epochs_per_round

        if config.metric_direction == "minimize":
            scored = [dataclasses.replace(r, metric=-r.metric) for r in records]
        else:
            scored = records
        try:
            table = estimate_scores(scored, state, config.epochs_per_round, config.ema_coeff)
        except EstimationError as exc:
            raise EngineError(f"round {round_index}: {exc}") from exc

        for position, block in enumerate(state.edges):
            label = edge_label(block.edge)
            for op in block.alive:
                _emit(
                    event_sink,
                    {
                        "event": "scores",
                        "edge": label,
                        "op": op.name,
                        "score": table[position][op.index],
                    },
                )

        state = update_softmax(state, score_vectors(state, table), config.temperature)
        for block in state.edges:
            probs = {op.name: float(p) for op, p in zip(block.alive, block.probs)}
            _emit(
                event_sink,
                {"event": "update", "edge": edge_label(block.edge), "probs": probs},
            )

        state, events = prune_min(state)
        for event in events:
            _emit(
                event_sink,
                {
                    "event": "prune",
                    "edge": edge_label(event.edge),
                    "op": event.pruned_op.name,
                    "prob": event.prob_at_prune,
                },
            )
        prune_log.extend(events)

        if checkpoint_path is not None:
            _write_checkpoint(checkpoint_path, spec, state, round_index)

    arch = final_architecture(state)
    _emit(event_sink, {"event": "final", "arch": encode(spec, arch)})
    return SearchResult(
        architecture=arch,
        encoded=encode(spec, arch),
        state=state,
        rounds=num_ops - 1,
        total_epochs=total_epochs,
        prune_log=tuple(prune_log),
    )


@dataclass(frozen=True)
class BaselineResult:
    """Best architecture found by uniform random sampling."""

    architecture: Architecture
    encoded: str
    mean_metric: float
    total_epochs: int


def run_random_baseline(
    spec: SearchSpaceSpec,
    evaluator: Evaluator,
    num_architectures: int,
    epochs_per_arch: int,
    seed: int,
    metric_direction: str = "maximize",
) -> BaselineResult:
    """Uniformly sample architectures, train each, return the best.

    The baseline consumes ``num_architectures * epochs_per_arch`` epochs,
    which makes budget-matched comparisons against :func:`run_search`
    straightforward.  The best architecture is the one with the extremal
    mean metric over its epochs; ties keep the earliest sample.
    """
    if num_architectures < 1:
        raise EngineError(f"num_architectures must be >= 1, got {num_architectures}")
    if epochs_per_arch < 1:
        raise EngineError(f"epochs_per_arch must be >= 1, got {epochs_per_arch}")
    if metric_direction not in _DIRECTIONS:
        raise EngineError(
            f"metric_direction must be one of {_DIRECTIONS}, got {metric_direction!r}"
        )
    rng = substream(seed, "baseline", "sample")
    best: Optional[tuple[Architecture, float]] = None
    sign = 1.0 if metric_direction == "maximize" else -1.0
    for _ in range(num_architectures):
        ops = tuple(int(rng.integers(spec.num_operations)) for _ in spec.flat_edges)
        arch = Architecture(ops=ops)
        evaluator.begin_round([arch])
        try:
            metrics = [evaluator.train_epoch(arch) for _ in range(epochs_per_arch)]
        except Exception as exc:
            raise EngineError(f"baseline evaluator failed: {exc}") from exc
        mean = sum(metrics) / len(metrics)
        if best is None or sign * mean > sign * best[1]:
            best = (arch, mean)
    assert best is not None
    return BaselineResult(
        architecture=best[0],
        encoded=encode(spec, best[0]),
        mean_metric=best[1],
        total_epochs=num_architectures * epochs_per_arch,
    )
