"""Score estimation: attribution of epoch metrics to per-edge operations."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distprune.distribution import disjoint_sample, init_uniform, update_softmax
from distprune.estimator import EstimationError, EvaluationRecord, estimate_scores, score_vectors
from distprune.rng import substream
from distprune.space import Architecture, build_space


def two_edge_k2():
    spec = build_space(num_nodes=1, operations=("a", "b"))
    return spec, init_uniform(spec)


def records_for(archs, metric_fn, epochs):
    return [
        EvaluationRecord(architecture=arch, epoch=epoch, metric=metric_fn(arch, epoch))
        for arch in archs
        for epoch in range(1, epochs + 1)
    ]


class TestMeanAttribution:
    def test_three_epoch_mean(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        metrics = {archs[0]: [0.5, 0.6, 0.7], archs[1]: [0.2, 0.2, 0.2]}
        records = records_for(archs, lambda a, e: metrics[a][e - 1], epochs=3)
        table = estimate_scores(records, state, epochs_per_round=3)
        assert table[0][0] == pytest.approx(0.6)
        assert table[1][0] == pytest.approx(0.6)
        assert table[0][1] == pytest.approx(0.2)

    def test_single_epoch_identity(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        records = records_for(archs, lambda a, e: 0.42 if a.ops[0] == 0 else 0.9, epochs=1)
        table = estimate_scores(records, state, epochs_per_round=1)
        assert table[0][0] == pytest.approx(0.42)

    def test_architecture_credited_at_every_edge_it_covers(self):
        # Hand trace on the 2-edge K=2 instance: the (a, b) architecture's
        # mean must appear as op a's score on edge 0 and op b's on edge 1.
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 1)), Architecture(ops=(1, 0))]
        metrics = {archs[0]: 0.8, archs[1]: 0.3}
        records = records_for(archs, lambda a, e: metrics[a], epochs=2)
        table = estimate_scores(records, state, epochs_per_round=2)
        assert table[0][0] == pytest.approx(0.8)
        assert table[1][1] == pytest.approx(0.8)
        assert table[0][1] == pytest.approx(0.3)
        assert table[1][0] == pytest.approx(0.3)

    def test_record_order_irrelevant(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 1)), Architecture(ops=(1, 0))]
        records = records_for(archs, lambda a, e: 0.1 * e + 0.2 * a.ops[0], epochs=3)
        forward = estimate_scores(records, state, epochs_per_round=3)
        backward = estimate_scores(list(reversed(records)), state, epochs_per_round=3)
        assert forward == backward


class TestErrors:
    def test_missing_epoch(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        records = records_for(archs, lambda a, e: 0.5, epochs=3)[:-1]
        with pytest.raises(EstimationError):
            estimate_scores(records, state, epochs_per_round=3)

    def test_duplicate_epoch(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        records = records_for(archs, lambda a, e: 0.5, epochs=2)
        records.append(EvaluationRecord(architecture=archs[0], epoch=1, metric=0.5))
        with pytest.raises(EstimationError):
            estimate_scores(records, state, epochs_per_round=2)

    def test_uncovered_operation(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0))]  # op 1 never covered
        records = records_for(archs, lambda a, e: 0.5, epochs=1)
        with pytest.raises(EstimationError):
            estimate_scores(records, state, epochs_per_round=1)

    def test_doubly_covered_operation(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(0, 1))]
        records = records_for(archs, lambda a, e: 0.5, epochs=1)
        with pytest.raises(EstimationError):
            estimate_scores(records, state, epochs_per_round=1)

    def test_non_finite_metric(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        records = records_for(archs, lambda a, e: float("inf") if a.ops[0] else 0.5, epochs=1)
        with pytest.raises(EstimationError):
            estimate_scores(records, state, epochs_per_round=1)

    def test_bad_ema_coeff(self):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        records = records_for(archs, lambda a, e: 0.5, epochs=1)
        with pytest.raises(EstimationError):
            estimate_scores(records, state, epochs_per_round=1, ema_coeff=0.0)
        with pytest.raises(EstimationError):
            estimate_scores(records, state, epochs_per_round=1, ema_coeff=1.5)


class TestSmoothing:
    def test_ema_combines_previous_scores(self):
        spec = build_space(num_nodes=1, operations=("a", "b"))
        state = init_uniform(spec)
        state = update_softmax(state, {0: [0.4, 0.4], 1: [0.4, 0.4]}, temperature=1.0)
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        records = records_for(archs, lambda a, e: 0.8 if a.ops[0] == 0 else 0.1, epochs=2)
        table = estimate_scores(records, state, epochs_per_round=2, ema_coeff=0.25)
        assert table[0][0] == pytest.approx(0.75 * 0.4 + 0.25 * 0.8)
        assert table[0][1] == pytest.approx(0.75 * 0.4 + 0.25 * 0.1)


class TestProperties:
    @settings(max_examples=60)
    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=6, max_size=6))
    def test_scores_are_convex_combinations(self, ms):
        spec, state = two_edge_k2()
        archs = [Architecture(ops=(0, 0)), Architecture(ops=(1, 1))]
        values = {(archs[0], e): ms[e - 1] for e in (1, 2, 3)}
        values |= {(archs[1], e): ms[e + 2] for e in (1, 2, 3)}
        records = records_for(archs, lambda a, e: values[(a, e)], epochs=3)
        table = estimate_scores(records, state, epochs_per_round=3)
        for slot in (0, 1):
            for op, score in table[slot].items():
                assert min(ms) - 1e-12 <= score <= max(ms) + 1e-12

    def test_constant_metrics_lead_to_uniform_probs(self):
        spec = build_space(num_nodes=2, operations=("a", "b", "c"))
        state = init_uniform(spec)
        archs = disjoint_sample(state, substream(4, "t"))
        records = records_for(archs, lambda a, e: 0.37, epochs=2)
        table = estimate_scores(records, state, epochs_per_round=2)
        vectors = score_vectors(state, table)
        new = update_softmax(state, vectors, temperature=0.05)
        for block in new.edges:
            assert list(block.probs) == pytest.approx([1 / 3] * 3, abs=1e-9)
