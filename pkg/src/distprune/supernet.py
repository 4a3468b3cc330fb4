"""Micro weight-sharing supernet on synthetic 2-D classification data.

One over-parameterized parent network holds weights for every candidate
operation on every edge.  A sampled architecture activates one operation
per edge; node j's output is the sum of its incoming edges' operation
outputs applied to the source nodes (both input nodes carry the raw
features).  A readout layer on the last node produces class logits and is
trained on every epoch.  Only the sampled operations' weights (plus the
readout) change during an epoch — all other weights stay bit-identical,
which is the weight-sharing contract the engine relies on.

Operations keep the 2-D feature width so node sums are well-defined:

    zero       f(x) = 0
    identity   f(x) = x
    linear     f(x) = xW + b
    tanh4      f(x) = tanh(xW1 + b1)W2 + b2, 4 hidden units
    tanh16     same with 16 hidden units

Training uses momentum SGD with weight decay and a cosine-annealed step
size that reaches zero at the end of the configured epoch budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .engine import Evaluator
from .oracles import OracleError
from .rng import derive_seed, substream
from .space import Architecture, SearchSpaceSpec, edge_label

MICRO_OPS = ("zero", "identity", "linear", "tanh4", "tanh16")

_HIDDEN = {"tanh4": 4, "tanh16": 16}
_FEATURE_DIM = 2
_NUM_CLASSES = 2


@dataclass(frozen=True)
class Dataset:
    """Fixed train/validation split of a 2-D two-class sample."""

    name: str
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray

    def majority_rate(self) -> float:
        """Frequency of the most common class in the validation split."""
        counts = np.bincount(self.val_y, minlength=_NUM_CLASSES)
        return float(counts.max() / counts.sum())


def make_dataset(
    kind: str, seed: int, train_size: int = 512, val_size: int = 256
) -> Dataset:
    """Generate a deterministic dataset.

    Kinds:
        blobs: two Gaussian clusters, linearly separable.
        ring: one class inside a ring of the other — a linear model cannot
            do much better than chance, a small nonlinearity can.
    """
    if kind not in ("blobs", "ring"):
        raise OracleError(f"unknown dataset kind {kind!r}")
    if train_size < 2 or val_size < 2:
        raise OracleError("train and validation splits each need >= 2 points")
    rng = substream(seed, "data", kind)
    total = train_size + val_size
    per_class = (total + 1) // 2
    if kind == "blobs":
        x0 = rng.normal(loc=(-1.0, -1.0), scale=0.6, size=(per_class, 2))
        x1 = rng.normal(loc=(1.0, 1.0), scale=0.6, size=(per_class, 2))
    else:
        # The scale keeps tanh units away from their flat tails.
        angles0 = rng.uniform(0.0, 2.0 * math.pi, size=per_class)
        angles1 = rng.uniform(0.0, 2.0 * math.pi, size=per_class)
        r0 = rng.normal(0.5, 0.13, size=per_class)
        r1 = rng.normal(1.3, 0.20, size=per_class)
        x0 = np.stack([r0 * np.cos(angles0), r0 * np.sin(angles0)], axis=1)
        x1 = np.stack([r1 * np.cos(angles1), r1 * np.sin(angles1)], axis=1)
    xs = np.concatenate([x0, x1])[:total]
    ys = np.concatenate([np.zeros(per_class, dtype=np.int64), np.ones(per_class, dtype=np.int64)])[
        :total
    ]
    order = rng.permutation(total)
    xs, ys = xs[order], ys[order]
    return Dataset(
        name=kind,
        train_x=np.ascontiguousarray(xs[:train_size]),
        train_y=np.ascontiguousarray(ys[:train_size]),
        val_x=np.ascontiguousarray(xs[train_size:]),
        val_y=np.ascontiguousarray(ys[train_size:]),
    )


Params = Dict[str, np.ndarray]


def _init_op_params(name: str, rng: np.random.Generator) -> Params:
    if name in ("zero", "identity"):
        return {}
    if name == "linear":
        scale = 1.0 / math.sqrt(_FEATURE_DIM)
        return {
            "W": rng.normal(0.0, scale, size=(_FEATURE_DIM, _FEATURE_DIM)),
            "b": np.zeros(_FEATURE_DIM),
        }
    hidden = _HIDDEN.get(name)
    if hidden is None:
        raise OracleError(f"operation {name!r} has no micro implementation")
    # First-layer unit directions start spread over the half-circle (with a
    # random rotation and a little angular jitter) instead of fully random:
    # with 2-d features, independently drawn directions are occasionally
    # near-collinear, which strands small cells in a low-accuracy basin.
    offset = rng.uniform(0.0, 2.0 * math.pi)
    angles = offset + np.arange(hidden) * (math.pi / hidden)
    angles = angles + rng.normal(0.0, 0.05, size=hidden)
    return {
        "W1": np.stack([np.cos(angles), np.sin(angles)]),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(hidden, _FEATURE_DIM)),
        "b2": np.zeros(_FEATURE_DIM),
    }


def _op_forward(name: str, params: Params, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    if name == "zero":
        return np.zeros_like(x), ()
    if name == "identity":
        return x, ()
    if name == "linear":
        return x @ params["W"] + params["b"], (x,)
    hidden = np.tanh(x @ params["W1"] + params["b1"])
    return hidden @ params["W2"] + params["b2"], (x, hidden)


def _op_backward(
    name: str, params: Params, cache: tuple, grad_out: np.ndarray
) -> tuple[Params, np.ndarray]:
    """Returns (parameter gradients, gradient w.r.t. the op input)."""
    if name == "zero":
        return {}, np.zeros_like(grad_out)
    if name == "identity":
        return {}, grad_out
    if name == "linear":
        (x,) = cache
        return (
            {"W": x.T @ grad_out, "b": grad_out.sum(axis=0)},
            grad_out @ params["W"].T,
        )
    x, hidden = cache
    grad_hidden = grad_out @ params["W2"].T
    grad_pre = grad_hidden * (1.0 - hidden * hidden)
    grads = {
        "W2": hidden.T @ grad_out,
        "b2": grad_out.sum(axis=0),
        "W1": x.T @ grad_pre,
        "b1": grad_pre.sum(axis=0),
    }
    return grads, grad_pre @ params["W1"].T


class MicroSupernetEvaluator(Evaluator):
    """Weight-sharing trainer over a micro-operation vocabulary.

    Shared weights make concurrent training unsafe, so this evaluator
    declares itself serial; the engine honors that regardless of --jobs.

    Args:
        spec: search space (single cell type; operation names must come
            from the micro vocabulary).
        dataset: train/validation data.
        seed: controls weight init and per-epoch batch shuffling.
        total_budget: epoch count the cosine schedule anneals over — for a
            full search, the engine's total epoch budget.
        reset_per_round: re-initialize all weights and momentum at every
            round boundary instead of sharing across rounds.
    """

    supports_parallel_train = False

    def __init__(
        self,
        spec: SearchSpaceSpec,
        dataset: Dataset,
        seed: int,
        total_budget: int,
        learning_rate: float = 0.025,
        momentum: float = 0.9,
        weight_decay: float = 3e-4,
        batch_size: int = 16,
        reset_per_round: bool = False,
    ) -> None:
        if spec.num_cell_types != 1:
            raise OracleError("the micro supernet supports a single cell type")
        unknown = [op.name for op in spec.operations if op.name not in MICRO_OPS]
        if unknown:
            raise OracleError(f"operations without micro implementations: {unknown}")
        if total_budget < 1:
            raise OracleError(f"total_budget must be >= 1, got {total_budget}")
        if batch_size < 1:
            raise OracleError(f"batch_size must be >= 1, got {batch_size}")
        self.spec = spec
        self.dataset = dataset
        self.seed = seed
        self.total_budget = total_budget
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.reset_per_round = reset_per_round
        self._epoch_index = 0
        self._init_weights()

    def _init_weights(self) -> None:
        self.weights: Dict[tuple[int, str], Params] = {}
        self._velocity: Dict[tuple[int, str], Params] = {}
        for slot, _ in enumerate(self.spec.flat_edges):
            for op in self.spec.operations:
                rng = substream(self.seed, "supernet", "init", slot, op.name)
                params = _init_op_params(op.name, rng)
                self.weights[(slot, op.name)] = params
                self._velocity[(slot, op.name)] = {
                    key: np.zeros_like(value) for key, value in params.items()
                }
        rng = substream(self.seed, "supernet", "init", "readout")
        self.readout: Params = {
            "W": rng.normal(0.0, 1.0 / math.sqrt(_FEATURE_DIM), size=(_FEATURE_DIM, _NUM_CLASSES)),
            "b": np.zeros(_NUM_CLASSES),
        }
        self._readout_velocity: Params = {
            key: np.zeros_like(value) for key, value in self.readout.items()
        }

    def begin_round(self, architectures: list[Architecture]) -> None:
        if self.reset_per_round:
            self._init_weights()

    def _forward(
        self, arch: Architecture, x: np.ndarray
    ) -> tuple[dict[int, np.ndarray], dict[int, tuple]]:
        nodes: dict[int, np.ndarray] = {-1: x, 0: x}
        caches: dict[int, tuple] = {}
        for slot, flat in enumerate(self.spec.flat_edges):
            op_name = self.spec.operations[arch.ops[slot]].name
            source, target = flat.edge
            out, cache = _op_forward(op_name, self.weights[(slot, op_name)], nodes[source])
            if not np.all(np.isfinite(out)):
                raise OracleError(
                    f"non-finite output at edge {edge_label(flat)} op {op_name}"
                )
            caches[slot] = cache
            if target in nodes:
                nodes[target] = nodes[target] + out
            else:
                nodes[target] = out
        return nodes, caches

    def features(self, arch: Architecture, x: np.ndarray) -> np.ndarray:
        """Output of the last node — the representation fed to the readout."""
        nodes, _ = self._forward(arch, x)
        return nodes[self.spec.num_nodes]

    def _logits(self, arch: Architecture, x: np.ndarray) -> np.ndarray:
        return self.features(arch, x) @ self.readout["W"] + self.readout["b"]

    def _apply_update(self, params: Params, velocity: Params, grads: Params, lr: float) -> None:
        for key, grad in grads.items():
            grad = grad + self.weight_decay * params[key]
            velocity[key] = self.momentum * velocity[key] + grad
            params[key] -= lr * velocity[key]

    def _train_batch(self, arch: Architecture, x: np.ndarray, y: np.ndarray, lr: float) -> float:
        nodes, caches = self._forward(arch, x)
        last = nodes[self.spec.num_nodes]
        logits = last @ self.readout["W"] + self.readout["b"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        n = x.shape[0]
        loss = float(-np.log(probs[np.arange(n), y] + 1e-300).mean())
        if not math.isfinite(loss):
            raise OracleError("non-finite loss at the readout layer")

        grad_logits = probs.copy()
        grad_logits[np.arange(n), y] -= 1.0
        grad_logits /= n
        readout_grads = {"W": last.T @ grad_logits, "b": grad_logits.sum(axis=0)}
        grad_nodes: dict[int, np.ndarray] = {
            self.spec.num_nodes: grad_logits @ self.readout["W"].T
        }
        # Walk edges in reverse so every node's downstream gradient is
        # complete before it propagates to its sources.
        for slot in range(len(self.spec.flat_edges) - 1, -1, -1):
            flat = self.spec.flat_edges[slot]
            source, target = flat.edge
            op_name = self.spec.operations[arch.ops[slot]].name
            grad_out = grad_nodes.get(target)
            if grad_out is None:
                continue
            op_grads, grad_in = _op_backward(
                op_name, self.weights[(slot, op_name)], caches[slot], grad_out
            )
            if source >= 1:
                if source in grad_nodes:
                    grad_nodes[source] = grad_nodes[source] + grad_in
                else:
                    grad_nodes[source] = grad_in
            self._apply_update(
                self.weights[(slot, op_name)], self._velocity[(slot, op_name)], op_grads, lr
            )
        self._apply_update(self.readout, self._readout_velocity, readout_grads, lr)
        return loss

    def _cosine_lr(self, epoch: int) -> float:
        t = min(epoch, self.total_budget)
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * t / self.total_budget))

    def train_epoch(self, arch: Architecture) -> float:
        if len(arch.ops) != len(self.spec.flat_edges):
            raise OracleError(
                f"architecture has {len(arch.ops)} assignments for "
                f"{len(self.spec.flat_edges)} edges"
            )
        lr = self._cosine_lr(self._epoch_index)
        order = substream(self.seed, "supernet", "shuffle", self._epoch_index).permutation(
            len(self.dataset.train_y)
        )
        self._epoch_index += 1
        for start in range(0, len(order), self.batch_size):
            idx = order[start : start + self.batch_size]
            self._train_batch(arch, self.dataset.train_x[idx], self.dataset.train_y[idx], lr)
        return self.validation_accuracy(arch)

    def validation_accuracy(self, arch: Architecture) -> float:
        logits = self._logits(arch, self.dataset.val_x)
        predicted = logits.argmax(axis=1)
        return float((predicted == self.dataset.val_y).mean())

    def description(self) -> str:
        return (
            f"micro-supernet(dataset={self.dataset.name}, budget={self.total_budget}, "
            f"lr={self.learning_rate}, momentum={self.momentum}, "
            f"wd={self.weight_decay}, reset_per_round={self.reset_per_round})"
        )


def retrain_accuracy(
    spec: SearchSpaceSpec,
    dataset: Dataset,
    arch: Architecture,
    seed: int,
    epochs: int = 12,
    learning_rate: float = 0.025,
    batch_size: int = 32,
) -> float:
    """Train ``arch`` from fresh weights for ``epochs`` and report accuracy.

    The standard way to compare search outcomes: the shared-weight metric
    seen during search is only a proxy, so candidates are re-trained in
    isolation under an identical protocol.
    """
    evaluator = MicroSupernetEvaluator(
        spec,
        dataset,
        seed=seed,
        total_budget=epochs,
        learning_rate=learning_rate,
        batch_size=batch_size,
    )
    metric = 0.0
    for _ in range(epochs):
        metric = evaluator.train_epoch(arch)
    return metric


def median_retrain_accuracy(
    spec: SearchSpaceSpec,
    dataset: Dataset,
    arch: Architecture,
    seed: int,
    repeats: int = 3,
    epochs: int = 12,
    learning_rate: float = 0.025,
    batch_size: int = 32,
) -> float:
    """Median accuracy over ``repeats`` independent retrains of ``arch``.

    A single short SGD run occasionally lands in a poor basin; the median of
    a few independent runs is the usual robust way to score an architecture
    when comparing search outcomes against baselines.
    """
    if repeats < 1:
        raise OracleError(f"repeats must be >= 1, got {repeats}")
    accs = [
        retrain_accuracy(
            spec,
            dataset,
            arch,
            derive_seed(seed, "retrain", rep),
            epochs=epochs,
            learning_rate=learning_rate,
            batch_size=batch_size,
        )
        for rep in range(repeats)
    ]
    return float(np.median(accs))
