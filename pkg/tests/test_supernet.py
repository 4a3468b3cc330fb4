"""Weight-sharing micro supernet: data, forward pass, training contract."""

import numpy as np
import pytest

from distprune.oracles import OracleError
from distprune.rng import derive_seed
from distprune.space import Architecture, build_space
from distprune.supernet import (
    MICRO_OPS,
    Dataset,
    MicroSupernetEvaluator,
    make_dataset,
    median_retrain_accuracy,
    retrain_accuracy,
)


def micro_spec(ops=("zero", "identity", "linear", "tanh4")):
    return build_space(num_nodes=2, operations=ops)


def uniform_arch(spec, op_name):
    index = [op.name for op in spec.operations].index(op_name)
    return Architecture(ops=(index,) * len(spec.flat_edges))


class TestDatasets:
    def test_deterministic_and_disjoint_by_seed(self):
        a = make_dataset("blobs", seed=5)
        b = make_dataset("blobs", seed=5)
        c = make_dataset("blobs", seed=6)
        np.testing.assert_array_equal(a.train_x, b.train_x)
        np.testing.assert_array_equal(a.val_y, b.val_y)
        assert not np.array_equal(a.train_x, c.train_x)

    def test_split_sizes(self):
        d = make_dataset("ring", seed=0, train_size=100, val_size=40)
        assert d.train_x.shape == (100, 2) and d.train_y.shape == (100,)
        assert d.val_x.shape == (40, 2) and d.val_y.shape == (40,)

    def test_ring_classes_separated_by_radius(self):
        d = make_dataset("ring", seed=1)
        xs = np.concatenate([d.train_x, d.val_x])
        ys = np.concatenate([d.train_y, d.val_y])
        radii = np.linalg.norm(xs, axis=1)
        assert radii[ys == 0].mean() < 0.8 < radii[ys == 1].mean()

    def test_rejections(self):
        with pytest.raises(OracleError):
            make_dataset("moons", seed=0)
        with pytest.raises(OracleError):
            make_dataset("blobs", seed=0, train_size=1)

    def test_majority_rate(self):
        y = np.array([0, 0, 0, 1], dtype=np.int64)
        x = np.zeros((4, 2))
        d = Dataset("toy", x, y, x, y)
        assert d.majority_rate() == 0.75


class TestVocabulary:
    def test_micro_ops(self):
        assert MICRO_OPS == ("zero", "identity", "linear", "tanh4", "tanh16")

    def test_constructor_rejections(self):
        data = make_dataset("blobs", seed=0, train_size=32, val_size=16)
        two_cells = build_space(num_nodes=1, operations=("zero", "linear"), num_cell_types=2)
        with pytest.raises(OracleError, match="single cell type"):
            MicroSupernetEvaluator(two_cells, data, seed=0, total_budget=4)
        exotic = build_space(num_nodes=1, operations=("zero", "conv3x3"))
        with pytest.raises(OracleError, match="conv3x3"):
            MicroSupernetEvaluator(exotic, data, seed=0, total_budget=4)
        spec = micro_spec()
        with pytest.raises(OracleError):
            MicroSupernetEvaluator(spec, data, seed=0, total_budget=0)
        with pytest.raises(OracleError):
            MicroSupernetEvaluator(spec, data, seed=0, total_budget=4, batch_size=0)


class TestForwardPass:
    def test_identity_cell_output_is_hand_computable(self):
        # Both input nodes carry the raw features x.  With identity on every
        # edge: node1 = x + x, node2 = x + x + node1 = 4x.
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=32, val_size=16)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=4)
        x = np.array([[0.5, -1.0], [2.0, 0.25]])
        out = ev.features(uniform_arch(spec, "identity"), x)
        np.testing.assert_allclose(out, 4.0 * x, atol=1e-6)

    def test_zero_cell_output_is_zero(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=32, val_size=16)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=4)
        x = np.array([[1.0, 2.0]])
        np.testing.assert_array_equal(ev.features(uniform_arch(spec, "zero"), x), np.zeros((1, 2)))

    def test_mixed_cell_matches_manual_sum(self):
        # linear on edge (-1,1), identity elsewhere:
        #   node1 = (x W + b) + x,  node2 = x + x + node1.
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=32, val_size=16)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=4)
        names = [op.name for op in spec.operations]
        ops = [names.index("identity")] * len(spec.flat_edges)
        ops[0] = names.index("linear")
        arch = Architecture(ops=tuple(ops))
        x = np.array([[0.3, -0.7], [1.1, 0.4], [-2.0, 0.9]])
        params = ev.weights[(0, "linear")]
        node1 = x @ params["W"] + params["b"] + x
        want = x + x + node1
        np.testing.assert_allclose(ev.features(arch, x), want, atol=1e-6)


class TestTrainingContract:
    def test_unsampled_weights_bit_identical_after_epoch(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=64, val_size=32)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=8)
        before = {
            key: {name: arr.copy() for name, arr in params.items()}
            for key, params in ev.weights.items()
        }
        ev.train_epoch(uniform_arch(spec, "linear"))
        for (slot, op_name), params in ev.weights.items():
            for name, arr in params.items():
                if op_name == "linear":
                    assert not np.array_equal(arr, before[(slot, op_name)][name])
                else:
                    np.testing.assert_array_equal(arr, before[(slot, op_name)][name])

    def test_declares_serial_training(self):
        assert MicroSupernetEvaluator.supports_parallel_train is False

    def test_epochs_deterministic(self):
        spec = micro_spec()
        data = make_dataset("ring", seed=2, train_size=64, val_size=32)
        arch = uniform_arch(spec, "tanh4")
        runs = []
        for _ in range(2):
            ev = MicroSupernetEvaluator(spec, data, seed=5, total_budget=6)
            runs.append([ev.train_epoch(arch) for _ in range(6)])
        assert runs[0] == runs[1]

    def test_reset_per_round_restores_initial_weights(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=64, val_size=32)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=8, reset_per_round=True)
        fresh = MicroSupernetEvaluator(spec, data, seed=3, total_budget=8)
        ev.train_epoch(uniform_arch(spec, "linear"))
        ev.begin_round([])
        for key, params in fresh.weights.items():
            for name, arr in params.items():
                np.testing.assert_array_equal(ev.weights[key][name], arr)

    def test_sticky_weights_without_reset(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=64, val_size=32)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=8)
        ev.train_epoch(uniform_arch(spec, "linear"))
        snapshot = ev.weights[(0, "linear")]["W"].copy()
        ev.begin_round([])
        np.testing.assert_array_equal(ev.weights[(0, "linear")]["W"], snapshot)

    def test_non_finite_weights_reported_with_edge_and_op(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=32, val_size=16)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=4)
        ev.weights[(0, "linear")]["W"][:] = np.nan
        names = [op.name for op in spec.operations]
        ops = [names.index("identity")] * len(spec.flat_edges)
        ops[0] = names.index("linear")
        with pytest.raises(OracleError, match=r"e\(-1,1\).*linear"):
            ev.train_epoch(Architecture(ops=tuple(ops)))

    def test_arity_mismatch_rejected(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=0, train_size=32, val_size=16)
        ev = MicroSupernetEvaluator(spec, data, seed=3, total_budget=4)
        with pytest.raises(OracleError):
            ev.train_epoch(Architecture(ops=(0, 1)))


class TestLearnability:
    def test_all_zero_matches_majority_rate(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=4)
        acc = retrain_accuracy(spec, data, uniform_arch(spec, "zero"), seed=1, epochs=4)
        assert abs(acc - data.majority_rate()) <= 0.05

    def test_all_linear_separates_blobs(self):
        spec = micro_spec()
        data = make_dataset("blobs", seed=4)
        arch = uniform_arch(spec, "linear")
        accs = [retrain_accuracy(spec, data, arch, seed=s, epochs=12) for s in range(3)]
        assert min(accs) >= 0.95

    def test_tanh_beats_linear_on_ring(self):
        spec = micro_spec()
        data = make_dataset("ring", seed=4)
        linear = median_retrain_accuracy(spec, data, uniform_arch(spec, "linear"), seed=1)
        tanh = median_retrain_accuracy(spec, data, uniform_arch(spec, "tanh4"), seed=1)
        assert linear < 0.75 < tanh


class TestRetraining:
    def test_retrain_deterministic(self):
        spec = micro_spec()
        data = make_dataset("ring", seed=7, train_size=128, val_size=64)
        arch = uniform_arch(spec, "tanh4")
        assert retrain_accuracy(spec, data, arch, seed=9) == retrain_accuracy(
            spec, data, arch, seed=9
        )

    def test_median_of_one_matches_single_retrain(self):
        spec = micro_spec()
        data = make_dataset("ring", seed=7, train_size=128, val_size=64)
        arch = uniform_arch(spec, "tanh4")
        single = retrain_accuracy(spec, data, arch, seed=derive_seed(9, "retrain", 0))
        assert median_retrain_accuracy(spec, data, arch, seed=9, repeats=1) == single

    def test_median_rejects_zero_repeats(self):
        spec = micro_spec()
        data = make_dataset("ring", seed=7, train_size=32, val_size=16)
        with pytest.raises(OracleError):
            median_retrain_accuracy(spec, data, uniform_arch(spec, "zero"), seed=9, repeats=0)
