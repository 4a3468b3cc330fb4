"""Score estimation: turn raw per-epoch metrics into per-(edge, op) scores.

Within a round every alive operation of every edge appears in exactly one
of the sampled architectures, so an operation's score is simply the mean
metric of that one architecture over the round's training epochs.  An
architecture therefore contributes the same mean to one operation on every
edge.  Optional exponential smoothing blends the fresh means with the
scores accumulated on the distribution state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

from .distribution import CategoricalState
from .space import Architecture, SearchSpaceSpec, edge_label


class EstimationError(ValueError):
    """Raised when the evaluation records cannot support score estimation."""


@dataclass(frozen=True)
class EvaluationRecord:
    """One trained epoch of one architecture: (architecture, epoch, metric)."""

    architecture: Architecture
    epoch: int
    metric: float


# Flat edge position -> operation index -> score.
ScoreTable = Dict[int, Dict[int, float]]


def estimate_scores(
    records: Iterable[EvaluationRecord],
    state: CategoricalState,
    epochs_per_round: int,
    ema_coeff: Optional[float] = None,
) -> ScoreTable:
    """Compute the score of every alive operation on every edge.

    Args:
        records: the round's evaluations; each sampled architecture must be
            covered for epochs 1..epochs_per_round exactly once.
        state: current distribution state (supplies alive sets and, for
            smoothing, the previously accumulated scores).
        epochs_per_round: number of training epochs per architecture (T).
        ema_coeff: optional coefficient c in (0, 1]; when set, the returned
            score is ``(1 - c) * previous + c * fresh_mean``.  When unset the
            fresh mean is returned unchanged.

    Raises:
        EstimationError: on missing or duplicated (architecture, epoch)
            records, non-finite metrics, an alive operation covered zero or
            more than one time at an edge, or an invalid ema_coeff.
    """
    if epochs_per_round < 1:
        raise EstimationError(f"epochs_per_round must be >= 1, got {epochs_per_round}")
    if ema_coeff is not None and not 0.0 < ema_coeff <= 1.0:
        raise EstimationError(f"ema_coeff must lie in (0, 1], got {ema_coeff}")

    by_arch: dict[tuple[int, ...], dict[int, float]] = {}
    for record in records:
        if not math.isfinite(record.metric):
            raise EstimationError(f"non-finite metric for epoch {record.epoch}")
        epochs = by_arch.setdefault(record.architecture.ops, {})
        if record.epoch in epochs:
            raise EstimationError(f"duplicate record for epoch {record.epoch}")
        epochs[record.epoch] = float(record.metric)

    expected = set(range(1, epochs_per_round + 1))
    means: dict[tuple[int, ...], float] = {}
    for ops, epochs in by_arch.items():
        if set(epochs) != expected:
            missing = sorted(expected - set(epochs)) or sorted(set(epochs) - expected)
            raise EstimationError(
                f"architecture records cover epochs {sorted(epochs)}; "
                f"expected 1..{epochs_per_round} (offending epochs: {missing})"
            )
        # Sum in epoch order so the mean is independent of record order.
        means[ops] = sum(epochs[e] for e in sorted(epochs)) / epochs_per_round

    table: ScoreTable = {}
    for slot, block in enumerate(state.edges):
        per_op: dict[int, float] = {}
        for position, op in enumerate(block.alive):
            hits = [mean for ops, mean in means.items() if ops[slot] == op.index]
            if len(hits) != 1:
                raise EstimationError(
                    f"operation {op.name} at edge {edge_label(block.edge)} covered "
                    f"{len(hits)} times; expected exactly 1"
                )
            fresh = hits[0]
            if ema_coeff is None:
                per_op[op.index] = fresh
            else:
                previous = float(block.scores[position])
                per_op[op.index] = (1.0 - ema_coeff) * previous + ema_coeff * fresh
        table[slot] = per_op
    return table


def score_vectors(state: CategoricalState, table: ScoreTable) -> dict[int, list[float]]:
    """Align a score table with each edge's alive order for a softmax update.

    Raises:
        EstimationError: if the table misses an edge or an alive operation.
    """
    vectors: dict[int, list[float]] = {}
    for slot, block in enumerate(state.edges):
        if slot not in table:
            raise EstimationError(f"score table misses edge {edge_label(block.edge)}")
        per_op = table[slot]
        try:
            vectors[slot] = [per_op[op.index] for op in block.alive]
        except KeyError as exc:
            raise EstimationError(
                f"score table misses operation index {exc.args[0]} at edge "
                f"{edge_label(block.edge)}"
            ) from exc
    return vectors
