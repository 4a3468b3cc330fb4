"""Per-edge categorical distributions: sampling, softmax updates, pruning.

Each edge slot of the flattened edge list owns a categorical distribution
over its currently alive operations.  The search repeatedly samples a batch
of architectures, re-estimates per-operation scores, recomputes the
probabilities with a temperature softmax, and removes the lowest-probability
operation from every edge.  All edges keep the same alive count at all
times, so a batch of K architectures can cover every alive operation of
every edge exactly once.

State-mutating operations return fresh state objects; a state is never
modified in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .space import Architecture, FlatEdge, Operation, SearchSpaceSpec, edge_label

# Score differences further than this many temperature units below the edge
# maximum underflow exp(); they are clamped so probabilities stay positive.
_EXP_FLOOR = -708.0
_PROB_SUM_TOL = 1e-9


class DistributionError(ValueError):
    """Raised on invalid distribution state or inputs."""


@dataclass(frozen=True)
class PruneEvent:
    """Record of one operation removal from one edge."""

    edge: FlatEdge
    pruned_op: Operation
    prob_at_prune: float
    round_index: int


@dataclass(frozen=True)
class EdgeDistribution:
    """Distribution block of a single edge slot.

    ``alive`` holds operations in ascending vocabulary order; ``probs`` and
    ``scores`` are aligned to it.
    """

    edge: FlatEdge
    alive: tuple[Operation, ...]
    probs: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class CategoricalState:
    """All per-edge distributions plus the number of completed rounds."""

    edges: tuple[EdgeDistribution, ...]
    round_index: int = 0

    def alive_count(self) -> int:
        return len(self.edges[0].alive)


def init_uniform(spec: SearchSpaceSpec) -> CategoricalState:
    """Uniform distribution over the full vocabulary on every edge, scores zero."""
    k = spec.num_operations
    edges = tuple(
        EdgeDistribution(
            edge=flat,
            alive=spec.operations,
            probs=np.full(k, 1.0 / k),
            scores=np.zeros(k),
        )
        for flat in spec.flat_edges
    )
    return CategoricalState(edges=edges, round_index=0)


def validate_state(spec: SearchSpaceSpec, state: CategoricalState) -> None:
    """Raise DistributionError on any invariant breach.

    Checks: one block per flat edge in spec order; alive sets are non-empty
    ascending subsets of the vocabulary with equal counts across edges;
    probabilities are strictly positive and sum to 1 within 1e-9; scores are
    finite.
    """
    if len(state.edges) != len(spec.flat_edges):
        raise DistributionError(
            f"state has {len(state.edges)} edges, spec has {len(spec.flat_edges)}"
        )
    counts = {len(e.alive) for e in state.edges}
    if len(counts) != 1:
        raise DistributionError(f"unequal alive counts across edges: {sorted(counts)}")
    for slot, block in enumerate(state.edges):
        label = edge_label(spec.flat_edges[slot])
        if block.edge != spec.flat_edges[slot]:
            raise DistributionError(f"edge block {slot} is {edge_label(block.edge)}, expected {label}")
        if not block.alive:
            raise DistributionError(f"edge {label} has no alive operations")
        indices = [op.index for op in block.alive]
        if indices != sorted(set(indices)):
            raise DistributionError(f"edge {label} alive list is not an ascending set")
        for op in block.alive:
            if not (0 <= op.index < spec.num_operations) or spec.operations[op.index] != op:
                raise DistributionError(f"edge {label} alive op {op!r} is outside the vocabulary")
        if len(block.probs) != len(block.alive) or len(block.scores) != len(block.alive):
            raise DistributionError(f"edge {label} has misaligned probs/scores")
        if not np.all(np.isfinite(block.probs)) or np.any(block.probs <= 0.0):
            raise DistributionError(f"edge {label} has non-positive or non-finite probabilities")
        if abs(float(block.probs.sum()) - 1.0) > _PROB_SUM_TOL:
            raise DistributionError(f"edge {label} probabilities sum to {block.probs.sum()!r}")
        if not np.all(np.isfinite(block.scores)):
            raise DistributionError(f"edge {label} has non-finite scores")


def sample_onehot(state: CategoricalState, rng: np.random.Generator) -> Architecture:
    """Draw one architecture, each edge independently from its distribution."""
    ops = tuple(
        block.alive[int(rng.choice(len(block.alive), p=block.probs))].index
        for block in state.edges
    )
    return Architecture(ops)


def disjoint_sample(state: CategoricalState, rng: np.random.Generator) -> list[Architecture]:
    """Draw K architectures that jointly cover every alive op on every edge once.

    One uniformly random permutation of the K alive-list positions is shared
    by all edges: architecture s takes each edge's alive operation at
    permuted position s.  Restricted to any single edge the output is a
    bijection from alive operations to architecture slots, so a round
    evaluates every alive operation exactly once.  Sharing the permutation
    keeps identically ordered alive lists aligned across edges, which lets a
    noiseless separable oracle rank an edge's operations without
    interference from the other edges' assignments.

    Raises:
        DistributionError: if alive counts differ across edges.
    """
    counts = {len(block.alive) for block in state.edges}
    if len(counts) != 1:
        raise DistributionError(f"unequal alive counts across edges: {sorted(counts)}")
    k = counts.pop()
    perm = rng.permutation(k)
    return [
        Architecture(tuple(block.alive[int(perm[slot])].index for block in state.edges))
        for slot in range(k)
    ]


def update_softmax(
    state: CategoricalState,
    edge_scores: Mapping[int, Sequence[float]],
    temperature: float = 0.05,
) -> CategoricalState:
    """Recompute every edge's probabilities from fresh scores.

    ``edge_scores`` maps flat edge positions to score vectors aligned with
    each edge's alive list.  New probabilities are
    ``softmax(scores / temperature)``, computed with max-subtraction so the
    result is invariant to shifting all of an edge's scores by a constant.
    The scores themselves are stored on the new state for later smoothing
    and for checkpoints.

    Raises:
        DistributionError: on non-positive temperature, a missing or
            misaligned score vector, or non-finite scores (message names the
            edge).
    """
    if not temperature > 0.0:
        raise DistributionError(f"temperature must be > 0, got {temperature}")
    new_edges = []
    for slot, block in enumerate(state.edges):
        if slot not in edge_scores:
            raise DistributionError(f"no scores for edge {edge_label(block.edge)}")
        scores = np.asarray(edge_scores[slot], dtype=float)
        if scores.shape != (len(block.alive),):
            raise DistributionError(
                f"edge {edge_label(block.edge)}: expected {len(block.alive)} scores, "
                f"got shape {scores.shape}"
            )
        if not np.all(np.isfinite(scores)):
            raise DistributionError(f"edge {edge_label(block.edge)}: non-finite score")
        shifted = (scores - scores.max()) / temperature
        weights = np.exp(np.maximum(shifted, _EXP_FLOOR))
        probs = weights / weights.sum()
        new_edges.append(
            EdgeDistribution(edge=block.edge, alive=block.alive, probs=probs, scores=scores)
        )
    return CategoricalState(edges=tuple(new_edges), round_index=state.round_index)


def prune_min(state: CategoricalState) -> tuple[CategoricalState, list[PruneEvent]]:
    """Remove the lowest-probability operation from every edge.

    Ties are broken toward the lowest operation index.  Remaining
    probabilities are renormalized and the round counter advances by one;
    the emitted events carry the new round index.

    Raises:
        DistributionError: if any edge has fewer than two alive operations.
    """
    for block in state.edges:
        if len(block.alive) < 2:
            raise DistributionError(
                f"edge {edge_label(block.edge)} has {len(block.alive)} alive ops; cannot prune"
            )
    new_round = state.round_index + 1
    new_edges = []
    events = []
    for block in state.edges:
        drop = int(np.argmin(block.probs))  # first minimum == lowest op index
        keep = [i for i in range(len(block.alive)) if i != drop]
        probs = block.probs[keep]
        new_edges.append(
            EdgeDistribution(
                edge=block.edge,
                alive=tuple(block.alive[i] for i in keep),
                probs=probs / probs.sum(),
                scores=block.scores[keep],
            )
        )
        events.append(
            PruneEvent(
                edge=block.edge,
                pruned_op=block.alive[drop],
                prob_at_prune=float(block.probs[drop]),
                round_index=new_round,
            )
        )
    return CategoricalState(edges=tuple(new_edges), round_index=new_round), events


def is_converged(state: CategoricalState) -> bool:
    """True when every edge has exactly one alive operation."""
    return all(len(block.alive) == 1 for block in state.edges)


def final_architecture(state: CategoricalState) -> Architecture:
    """The unique remaining architecture of a converged state.

    Raises:
        DistributionError: if any edge still has more than one alive op.
    """
    if not is_converged(state):
        counts = [len(block.alive) for block in state.edges]
        raise DistributionError(f"state not converged; alive counts {counts}")
    return Architecture(tuple(block.alive[0].index for block in state.edges))


def state_to_json(spec: SearchSpaceSpec, state: CategoricalState) -> str:
    """Serialize a state snapshot as a JSON document."""
    doc = {
        "round_index": state.round_index,
        "edges": [
            {
                "edge": edge_label(block.edge),
                "alive": [op.name for op in block.alive],
                "probs": [float(p) for p in block.probs],
                "scores": [float(s) for s in block.scores],
            }
            for block in state.edges
        ],
    }
    return json.dumps(doc, indent=2)


def state_from_json(spec: SearchSpaceSpec, text: str) -> CategoricalState:
    """Rebuild a state snapshot written by :func:`state_to_json`.

    Raises:
        DistributionError: if the document does not match the search space.
    """
    try:
        doc = json.loads(text)
        labels = [edge_label(flat) for flat in spec.flat_edges]
        entries = doc["edges"]
        if [e["edge"] for e in entries] != labels:
            raise DistributionError("snapshot edge list does not match the search space")
        blocks = []
        for flat, entry in zip(spec.flat_edges, entries):
            try:
                alive = tuple(
                    spec.operations[spec.op_index_by_name[name]] for name in entry["alive"]
                )
            except KeyError as exc:
                raise DistributionError(
                    f"snapshot names unknown operation {exc.args[0]!r}"
                ) from exc
            blocks.append(
                EdgeDistribution(
                    edge=flat,
                    alive=alive,
                    probs=np.asarray(entry["probs"], dtype=float),
                    scores=np.asarray(entry["scores"], dtype=float),
                )
            )
        round_index = int(doc["round_index"])
    except DistributionError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DistributionError(f"malformed state snapshot: {exc}") from exc
    state = CategoricalState(edges=tuple(blocks), round_index=round_index)
    validate_state(spec, state)
    return state
