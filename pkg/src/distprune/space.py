"""Cell-based DAG search spaces: construction, sizing, encoding, enumeration.

A cell is a fully connected DAG over ``num_nodes`` intermediate nodes plus
two input nodes, indexed -1 and 0.  Intermediate nodes are indexed 1..M and
every directed edge (i, j) with i < j carries exactly one operation drawn
from a shared vocabulary.  A full architecture assigns one operation to
every edge of every cell type; cell types share the edge layout and the
vocabulary but are assigned independently.

Edges are kept in canonical order (lexicographic on (target, source)), and
all per-edge data elsewhere in the package is aligned to the flat list
``SearchSpaceSpec.flat_edges``, which concatenates each cell type's edges
in canonical order.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple


class SpaceError(ValueError):
    """Raised for invalid space definitions, encodings, or enumeration requests."""


class Operation(NamedTuple):
    """One vocabulary entry: position in the vocabulary plus its name."""

    index: int
    name: str


class EdgeId(NamedTuple):
    """Directed cell edge from ``source`` to ``target`` (source < target)."""

    source: int
    target: int


class FlatEdge(NamedTuple):
    """An edge of one concrete cell type within the flattened edge list."""

    cell: int
    edge: EdgeId


# Operation names must survive the architecture string grammar, so the
# delimiter characters ';', '=', '/' and whitespace are rejected up front.
_NAME_RE = re.compile(r"^[A-Za-z0-9_.+-]+$")
_SEGMENT_RE = re.compile(r"^cell(\d+)/e\((-?\d+),(\d+)\)=(.+)$")


@dataclass(frozen=True)
class SearchSpaceSpec:
    """Immutable description of one search space.

    Attributes:
        num_nodes: number of intermediate nodes M (>= 1).
        edges: canonical edge list of a single cell, ordered by (target, source).
        operations: shared operation vocabulary, indices 0..K-1.
        num_cell_types: number of independently assigned cell types (>= 1).
    """

    num_nodes: int
    edges: tuple[EdgeId, ...]
    operations: tuple[Operation, ...]
    num_cell_types: int = 1

    @cached_property
    def flat_edges(self) -> tuple[FlatEdge, ...]:
        """Every (cell type, edge) slot, cell-major, edges in canonical order."""
        return tuple(
            FlatEdge(cell, edge)
            for cell in range(self.num_cell_types)
            for edge in self.edges
        )

    @cached_property
    def op_index_by_name(self) -> dict[str, int]:
        return {op.name: op.index for op in self.operations}

    @property
    def num_operations(self) -> int:
        return len(self.operations)


@dataclass(frozen=True)
class Architecture:
    """One full assignment: an operation index per ``spec.flat_edges`` slot.

    This is the compact form of a set of one-hot per-edge selections; the
    tuple is aligned with the owning spec's flat edge list.
    """

    ops: tuple[int, ...]


def canonical_edges(num_nodes: int) -> tuple[EdgeId, ...]:
    """All edges of a cell with ``num_nodes`` intermediate nodes, canonical order."""
    return tuple(
        EdgeId(source, target)
        for target in range(1, num_nodes + 1)
        for source in range(-1, target)
    )


def build_space(
    num_nodes: int,
    operations: Iterable[str],
    num_cell_types: int = 1,
) -> SearchSpaceSpec:
    """Validate inputs and construct a search space spec.

    Raises:
        SpaceError: if ``num_nodes`` < 1, fewer than two operation names are
            given, names repeat, names contain grammar delimiters, or
            ``num_cell_types`` < 1.
    """
    names = list(operations)
    if num_nodes < 1:
        raise SpaceError(f"num_nodes must be >= 1, got {num_nodes}")
    if num_cell_types < 1:
        raise SpaceError(f"num_cell_types must be >= 1, got {num_cell_types}")
    if len(names) < 2:
        raise SpaceError(f"need at least 2 operations, got {len(names)}")
    if len(set(names)) != len(names):
        raise SpaceError(f"duplicate operation names in {names}")
    for name in names:
        if not _NAME_RE.match(name):
            raise SpaceError(f"operation name {name!r} contains characters outside [A-Za-z0-9_.+-]")
    ops = tuple(Operation(i, name) for i, name in enumerate(names))
    return SearchSpaceSpec(
        num_nodes=num_nodes,
        edges=canonical_edges(num_nodes),
        operations=ops,
        num_cell_types=num_cell_types,
    )


def space_size(spec: SearchSpaceSpec) -> int:
    """Number of cell structures: num_cell_types * K^|edges|, exact."""
    return spec.num_cell_types * len(spec.operations) ** len(spec.edges)


def validate_architecture(spec: SearchSpaceSpec, arch: Architecture) -> None:
    """Raise SpaceError unless ``arch`` totally assigns valid operations."""
    if len(arch.ops) != len(spec.flat_edges):
        raise SpaceError(
            f"architecture assigns {len(arch.ops)} edges, spec has {len(spec.flat_edges)}"
        )
    k = spec.num_operations
    for slot, op in enumerate(arch.ops):
        if not 0 <= op < k:
            raise SpaceError(f"edge {edge_label(spec.flat_edges[slot])} has unknown operation index {op}")


def enumerate_architectures(spec: SearchSpaceSpec, cap: int) -> Iterator[Architecture]:
    """Enumerate every architecture of a small space, deterministically.

    Order is lexicographic over (flat edge order, operation index); the first
    architecture assigns operation 0 everywhere.  Enumeration covers the full
    joint assignment space over all cell types.

    Raises:
        SpaceError: if ``space_size(spec)`` exceeds ``cap``; the message
            carries the computed size.
    """
    size = space_size(spec)
    if size > cap:
        raise SpaceError(f"space size {size} exceeds enumeration cap {cap}")

    def _generate() -> Iterator[Architecture]:
        for ops in itertools.product(range(spec.num_operations), repeat=len(spec.flat_edges)):
            yield Architecture(ops)

    return _generate()


def edge_label(flat: FlatEdge) -> str:
    """Stable text form of a flat edge, e.g. ``cell0/e(-1,1)``."""
    return f"cell{flat.cell}/e({flat.edge.source},{flat.edge.target})"


def encode(spec: SearchSpaceSpec, arch: Architecture) -> str:
    """Render an architecture as its canonical string.

    Grammar: segments ``cell<t>/e(<i>,<j>)=<opname>`` joined by ``;`` with
    edges in canonical order, cell types ascending.
    """
    validate_architecture(spec, arch)
    parts = []
    for slot, flat in enumerate(spec.flat_edges):
        parts.append(f"{edge_label(flat)}={spec.operations[arch.ops[slot]].name}")
    return ";".join(parts)


def decode(spec: SearchSpaceSpec, text: str) -> Architecture:
    """Parse an architecture string back into an Architecture.

    Raises:
        SpaceError: on malformed segments, unknown edges or operation names,
            duplicate assignments, or missing edge assignments.
    """
    slot_by_flat = {flat: i for i, flat in enumerate(spec.flat_edges)}
    ops: list[int | None] = [None] * len(spec.flat_edges)
    for segment in text.split(";"):
        m = _SEGMENT_RE.match(segment)
        if not m:
            raise SpaceError(f"malformed segment {segment!r}")
        cell, source, target, name = int(m.group(1)), int(m.group(2)), int(m.group(3)), m.group(4)
        flat = FlatEdge(cell, EdgeId(source, target))
        slot = slot_by_flat.get(flat)
        if slot is None:
            raise SpaceError(f"unknown edge {edge_label(flat)} for this space")
        op = spec.op_index_by_name.get(name)
        if op is None:
            raise SpaceError(f"unknown operation name {name!r}")
        if ops[slot] is not None:
            raise SpaceError(f"duplicate assignment for edge {edge_label(flat)}")
        ops[slot] = op
    missing = [edge_label(spec.flat_edges[i]) for i, op in enumerate(ops) if op is None]
    if missing:
        raise SpaceError(f"missing edge assignments: {', '.join(missing)}")
    return Architecture(tuple(ops))  # type: ignore[arg-type]
