"""Event-log analysis: summaries, plot-ready CSVs, and rendered figures.

The engine's JSON-lines log fully determines a run: per-round samples,
per-epoch metrics, score estimates, updated probabilities, and prune
events.  This module re-reads such logs, reconstructs the final
architecture independently of the log's own `final` line (a consistency
check), and emits probability-trajectory and prune-timeline CSVs together
with PNG figures.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import matplotlib

matplotlib.use("Agg", force=True)

from matplotlib import pyplot as plt  # noqa: E402  (backend must be set first)

from .theory import GridCellResult


class ReportError(RuntimeError):
    """Malformed or truncated event log.

    Attributes:
        last_valid_line: number of the last line that parsed cleanly.
    """

    def __init__(self, message: str, last_valid_line: int):
        super().__init__(message)
        self.last_valid_line = last_valid_line


@dataclass
class RoundTrace:
    """All events of one round, in emission order."""

    round_index: int
    cohort_size: int
    samples: list[tuple[int, str]] = field(default_factory=list)
    epochs: list[tuple[int, int, float]] = field(default_factory=list)
    scores: list[tuple[str, str, float]] = field(default_factory=list)
    updates: dict[str, dict[str, float]] = field(default_factory=dict)
    prunes: list[tuple[str, str, float]] = field(default_factory=list)


@dataclass
class EventLog:
    """A fully parsed run log."""

    rounds: list[RoundTrace]
    final_arch: str

    def edge_labels(self) -> list[str]:
        if not self.rounds:
            return []
        return list(self.rounds[0].updates.keys())

    def total_epochs(self) -> int:
        return sum(len(r.epochs) for r in self.rounds)


def parse_event_log(lines: Iterable[str]) -> EventLog:
    """Parse a JSONL event stream.

    Raises:
        ReportError: on a malformed line, an out-of-place event, or a log
            that ends without a `final` event (a truncated run); the error
            carries the last line that was still valid.
    """
    rounds: list[RoundTrace] = []
    current: Optional[RoundTrace] = None
    final_arch: Optional[str] = None
    line_number = 0
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            tag = payload["event"]
            if final_arch is not None:
                raise ValueError("event after final")
            if tag == "round_start":
                current = RoundTrace(
                    round_index=int(payload["round"]), cohort_size=int(payload["K"])
                )
                rounds.append(current)
            elif tag == "final":
                final_arch = str(payload["arch"])
            else:
                if current is None:
                    raise ValueError(f"{tag} before any round_start")
                if tag == "sample":
                    current.samples.append((int(payload["slot"]), str(payload["arch"])))
                elif tag == "epoch":
                    current.epochs.append(
                        (int(payload["slot"]), int(payload["epoch"]), float(payload["metric"]))
                    )
                elif tag == "scores":
                    current.scores.append(
                        (str(payload["edge"]), str(payload["op"]), float(payload["score"]))
                    )
                elif tag == "update":
                    current.updates[str(payload["edge"])] = {
                        str(op): float(p) for op, p in payload["probs"].items()
                    }
                elif tag == "prune":
                    current.prunes.append(
                        (str(payload["edge"]), str(payload["op"]), float(payload["prob"]))
                    )
                else:
                    raise ValueError(f"unknown event tag {tag!r}")
        except (ValueError, KeyError, TypeError) as exc:
            raise ReportError(
                f"malformed event at line {line_number} ({exc}); "
                f"last valid line {line_number - 1}",
                last_valid_line=line_number - 1,
            ) from exc
    if final_arch is None:
        raise ReportError(
            f"log is truncated: no final event; last valid line {line_number}",
            last_valid_line=line_number,
        )
    return EventLog(rounds=rounds, final_arch=final_arch)


def replay_final_architecture(log: EventLog) -> str:
    """Rebuild the final architecture from update and prune events alone.

    Round 1's update events expose every edge's full alive set; each
    round's prune events then remove one operation per edge.  Whatever
    survives must match the log's own `final` line — a completeness check
    on the event stream.
    """
    if not log.rounds:
        raise ReportError("log has no rounds to replay", last_valid_line=0)
    alive: dict[str, list[str]] = {
        edge: list(probs.keys()) for edge, probs in log.rounds[0].updates.items()
    }
    for trace in log.rounds:
        for edge, op, _ in trace.prunes:
            if edge not in alive or op not in alive[edge]:
                raise ReportError(
                    f"round {trace.round_index} prunes unknown {op!r} on {edge!r}",
                    last_valid_line=0,
                )
            alive[edge].remove(op)
    unresolved = {edge: ops for edge, ops in alive.items() if len(ops) != 1}
    if unresolved:
        raise ReportError(
            f"replay left unresolved edges: {sorted(unresolved)}", last_valid_line=0
        )
    return ";".join(f"{edge}={ops[0]}" for edge, ops in alive.items())


def write_probability_csv(log: EventLog, stream: TextIO) -> None:
    """Rows (round, edge, op, prob) for every post-update alive operation."""
    writer = csv.writer(stream)
    writer.writerow(["round", "edge", "op", "prob"])
    for trace in log.rounds:
        for edge, probs in trace.updates.items():
            for op, p in probs.items():
                writer.writerow([trace.round_index, edge, op, repr(p)])


def write_prune_csv(log: EventLog, stream: TextIO) -> None:
    """Rows (round, edge, op, prob_at_prune), in prune order."""
    writer = csv.writer(stream)
    writer.writerow(["round", "edge", "op", "prob_at_prune"])
    for trace in log.rounds:
        for edge, op, prob in trace.prunes:
            writer.writerow([trace.round_index, edge, op, repr(prob)])


def write_epoch_csv(log: EventLog, stream: TextIO) -> None:
    """Rows (round, slot, epoch, metric) for every training epoch."""
    writer = csv.writer(stream)
    writer.writerow(["round", "slot", "epoch", "metric"])
    for trace in log.rounds:
        for slot, epoch, metric in trace.epochs:
            writer.writerow([trace.round_index, slot, epoch, repr(metric)])


def summarize(log: EventLog) -> str:
    """Human-readable run summary."""
    lines = [
        f"rounds: {len(log.rounds)}",
        f"total trained epochs: {log.total_epochs()}",
        f"edges: {len(log.edge_labels())}",
    ]
    for trace in log.rounds:
        metrics = [m for _, _, m in trace.epochs]
        best = max(metrics) if metrics else float("nan")
        lines.append(
            f"  round {trace.round_index}: K={trace.cohort_size}, "
            f"epochs={len(trace.epochs)}, best metric={best:.4f}, "
            f"pruned={len(trace.prunes)} ops"
        )
    lines.append(f"final architecture: {log.final_arch}")
    return "\n".join(lines)


def render_figures(log: EventLog, out_dir: str, prefix: str = "run") -> list[str]:
    """Render probability-trajectory, metric, and prune-timeline figures.

    Returns the written file paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    edges = log.edge_labels()
    rounds = [trace.round_index for trace in log.rounds]

    # Per-edge probability trajectories, one subplot per edge.
    cols = min(3, max(1, len(edges)))
    rows_count = (len(edges) + cols - 1) // cols
    fig, axes = plt.subplots(
        rows_count, cols, figsize=(4.2 * cols, 3.0 * rows_count), squeeze=False
    )
    for index, edge in enumerate(edges):
        ax = axes[index // cols][index % cols]
        ops = list(log.rounds[0].updates[edge].keys())
        for op in ops:
            xs, ys = [], []
            for trace in log.rounds:
                probs = trace.updates.get(edge, {})
                if op in probs:
                    xs.append(trace.round_index)
                    ys.append(probs[op])
            ax.plot(xs, ys, marker="o", markersize=3, label=op)
        ax.set_title(edge, fontsize=9)
        ax.set_xlabel("round")
        ax.set_ylabel("prob")
        ax.set_ylim(0.0, 1.05)
    for index in range(len(edges), rows_count * cols):
        axes[index // cols][index % cols].axis("off")
    handles, labels = axes[0][0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="lower center", ncol=min(8, len(labels)), fontsize=8)
    fig.suptitle("Edge probability trajectories")
    fig.tight_layout(rect=(0, 0.08, 1, 0.96))
    path = os.path.join(out_dir, f"{prefix}_probabilities.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    # Metric spread per round.
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    means, lows, highs = [], [], []
    for trace in log.rounds:
        metrics = [m for _, _, m in trace.epochs]
        means.append(sum(metrics) / len(metrics) if metrics else float("nan"))
        lows.append(min(metrics) if metrics else float("nan"))
        highs.append(max(metrics) if metrics else float("nan"))
    ax.plot(rounds, means, marker="o", label="mean metric")
    ax.fill_between(rounds, lows, highs, alpha=0.25, label="min–max")
    ax.set_xlabel("round")
    ax.set_ylabel("metric")
    ax.set_title("Observed metrics per round")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, f"{prefix}_metrics.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    # Prune timeline: which op left which edge at which round.
    fig, ax = plt.subplots(figsize=(6.6, 0.5 * len(edges) + 1.8))
    edge_pos = {edge: i for i, edge in enumerate(edges)}
    for trace in log.rounds:
        for edge, op, _ in trace.prunes:
            y = edge_pos[edge]
            ax.scatter([trace.round_index], [y], color="tab:red", s=18, zorder=3)
            ax.annotate(
                op,
                (trace.round_index, y),
                textcoords="offset points",
                xytext=(4, 4),
                fontsize=7,
            )
    ax.set_yticks(range(len(edges)))
    ax.set_yticklabels(edges, fontsize=8)
    ax.set_xlabel("round")
    ax.set_title("Prune timeline")
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, f"{prefix}_prunes.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths


def plot_bound_validation(cells: Sequence[GridCellResult], path: str) -> None:
    """Bar chart of simplified bound vs empirical rate (with CI) per cell."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    labels = [f"β={cell.beta:g}\nγ={cell.gamma:g}" for cell in cells]
    bounds = [cell.row.bound_simplified for cell in cells]
    rates = [cell.row.empirical_rate or 0.0 for cell in cells]
    err_low = [
        max(0.0, (cell.row.empirical_rate or 0.0) - (cell.row.ci_low or 0.0)) for cell in cells
    ]
    err_high = [
        max(0.0, (cell.row.ci_high or 0.0) - (cell.row.empirical_rate or 0.0)) for cell in cells
    ]
    xs = range(len(cells))
    fig, ax = plt.subplots(figsize=(1.6 * len(cells) + 2.5, 4.0))
    ax.bar([x - 0.2 for x in xs], bounds, width=0.4, label="simplified bound", color="tab:blue")
    ax.bar(
        [x + 0.2 for x in xs],
        rates,
        width=0.4,
        yerr=(err_low, err_high),
        capsize=3,
        label="empirical rate (95% CI)",
        color="tab:orange",
    )
    ax.axhline(1.0, color="grey", linestyle="--", linewidth=1, label="vacuous level")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("error probability")
    ax.set_title("Pruning-error bound vs Monte Carlo rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
