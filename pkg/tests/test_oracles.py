"""Synthetic landscape/evaluator, noise schedule, and the tabular benchmark."""

import io
import math

import numpy as np
import pytest

from distprune.oracles import (
    NoiseParams,
    OracleError,
    SyntheticEvaluator,
    SyntheticLandscape,
    TabularBenchmark,
    TabularEvaluator,
    generate_benchmark,
    read_benchmark,
    read_landscape,
    ridge_landscape,
    write_benchmark,
    write_landscape,
)
from distprune.space import (
    Architecture,
    SpaceError,
    build_space,
    encode,
    enumerate_architectures,
)


def spec_m1k2():
    return build_space(num_nodes=1, operations=("a", "b"))


def separable(spec, base=(0.2, 0.5, 0.8), noise=NoiseParams()):
    return ridge_landscape(spec, base[: spec.num_operations], noise=noise)


class TestNoiseParams:
    def test_sigma_worked_example(self):
        noise = NoiseParams(beta=0.1, gamma=0.05, e_star=100)
        assert noise.sigma(90) == pytest.approx(0.1 * 10 + 0.05, rel=1e-12)

    def test_sigma_at_convergence_is_gamma(self):
        noise = NoiseParams(beta=0.1, gamma=0.05, e_star=100)
        assert noise.sigma(100) == pytest.approx(0.05, rel=1e-12)

    def test_sigma_rejects_out_of_range_epochs(self):
        noise = NoiseParams(beta=0.1, gamma=0.05, e_star=10)
        with pytest.raises(OracleError):
            noise.sigma(0)
        with pytest.raises(OracleError):
            noise.sigma(11)

    def test_invalid_parameters(self):
        with pytest.raises(OracleError):
            NoiseParams(beta=-0.1, gamma=0.0, e_star=5)
        with pytest.raises(OracleError):
            NoiseParams(beta=0.0, gamma=0.0, e_star=0)


class TestSyntheticLandscape:
    def test_quality_is_mean_utility(self):
        spec = spec_m1k2()
        scape = SyntheticLandscape(spec=spec, utilities=((0.2, 0.8), (0.4, 0.6)))
        assert scape.quality(Architecture(ops=(1, 0))) == pytest.approx((0.8 + 0.4) / 2)

    def test_interactions_add_when_both_selected(self):
        spec = spec_m1k2()
        scape = SyntheticLandscape(
            spec=spec,
            utilities=((0.2, 0.8), (0.4, 0.6)),
            interactions={((0, 1), (1, 1)): 0.1},
        )
        assert scape.quality(Architecture(ops=(1, 1))) == pytest.approx((0.8 + 0.6) / 2 + 0.1)
        assert scape.quality(Architecture(ops=(1, 0))) == pytest.approx((0.8 + 0.4) / 2)

    def test_quality_clamped(self):
        spec = spec_m1k2()
        scape = SyntheticLandscape(
            spec=spec,
            utilities=((0.9, 1.0), (0.95, 1.0)),
            interactions={((0, 1), (1, 1)): 0.9},
        )
        assert scape.quality(Architecture(ops=(1, 1))) == 1.0

    def test_shape_validation(self):
        spec = spec_m1k2()
        with pytest.raises(OracleError):
            SyntheticLandscape(spec=spec, utilities=((0.2, 0.8),))
        with pytest.raises(OracleError):
            SyntheticLandscape(spec=spec, utilities=((0.2,), (0.4,)))
        with pytest.raises(OracleError):
            SyntheticLandscape(spec=spec, utilities=((0.2, 1.8), (0.4, 0.6)))

    def test_optimal_ops_and_gap(self):
        spec = build_space(num_nodes=2, operations=("x", "y", "z"))
        scape = separable(spec)
        assert scape.optimal_ops() == (2,) * 5
        assert scape.min_utility_gap() == pytest.approx(0.3, abs=1e-9)

    def test_tied_utilities_rejected_by_gap(self):
        spec = spec_m1k2()
        scape = SyntheticLandscape(spec=spec, utilities=((0.5, 0.5), (0.4, 0.6)))
        with pytest.raises(OracleError):
            scape.min_utility_gap()


class TestRidgeLandscape:
    def test_requires_increasing_base(self):
        spec = spec_m1k2()
        with pytest.raises(OracleError):
            ridge_landscape(spec, (0.5, 0.5))

    def test_jitter_bounded_by_half_gap(self):
        spec = spec_m1k2()
        with pytest.raises(OracleError):
            ridge_landscape(spec, (0.2, 0.4), jitter=0.1)

    def test_jitter_preserves_per_edge_ordering(self):
        spec = build_space(num_nodes=2, operations=[f"o{i}" for i in range(8)])
        scape = ridge_landscape(spec, [0.1 * (i + 1) for i in range(8)], jitter=0.002, seed=77)
        for row in scape.utilities:
            assert list(row) == sorted(row)

    def test_deterministic_in_seed(self):
        spec = spec_m1k2()
        a = ridge_landscape(spec, (0.2, 0.6), jitter=0.01, seed=13)
        b = ridge_landscape(spec, (0.2, 0.6), jitter=0.01, seed=13)
        assert a.utilities == b.utilities


class TestSyntheticEvaluator:
    def test_noiseless_metric_equals_quality(self):
        spec = spec_m1k2()
        scape = separable(spec, base=(0.3, 0.7))
        ev = SyntheticEvaluator(scape, seed=5)
        arch = Architecture(ops=(1, 1))
        for _ in range(4):
            assert ev.train_epoch(arch) == pytest.approx(scape.quality(arch), abs=1e-12)

    def test_deterministic_per_architecture_streams(self):
        spec = spec_m1k2()
        noise = NoiseParams(beta=0.01, gamma=0.02, e_star=50)
        scape = separable(spec, base=(0.3, 0.7), noise=noise)
        a, b = Architecture(ops=(0, 1)), Architecture(ops=(1, 0))
        ev1 = SyntheticEvaluator(scape, seed=5)
        seq1 = [ev1.train_epoch(a), ev1.train_epoch(a), ev1.train_epoch(b)]
        ev2 = SyntheticEvaluator(scape, seed=5)
        # Interleaving differently must not change per-architecture metrics.
        m_b = ev2.train_epoch(b)
        seq2 = [ev2.train_epoch(a), ev2.train_epoch(a), m_b]
        assert seq1 == seq2

    def test_epoch_counter_advances(self):
        spec = spec_m1k2()
        noise = NoiseParams(beta=0.01, gamma=0.02, e_star=50)
        ev = SyntheticEvaluator(separable(spec, base=(0.3, 0.7), noise=noise), seed=5)
        arch = Architecture(ops=(0, 0))
        assert ev.epoch_count(arch) == 0
        ev.train_epoch(arch)
        ev.train_epoch(arch)
        assert ev.epoch_count(arch) == 2

    def test_clamping_and_raw_mode(self):
        spec = spec_m1k2()
        noise = NoiseParams(beta=0.2, gamma=0.3, e_star=10)
        scape = separable(spec, base=(0.05, 0.95), noise=noise)
        arch = Architecture(ops=(1, 1))
        clamped = SyntheticEvaluator(scape, seed=3)
        raw = SyntheticEvaluator(scape, seed=3, clamp=False)
        clamped_metrics = [clamped.train_epoch(arch) for _ in range(200)]
        raw_metrics = [raw.train_epoch(arch) for _ in range(200)]
        assert all(0.0 <= m <= 1.0 for m in clamped_metrics)
        assert any(m > 1.0 for m in raw_metrics)

    def test_initial_epoch_offsets_noise_level(self):
        spec = spec_m1k2()
        noise = NoiseParams(beta=0.05, gamma=0.01, e_star=100)
        scape = separable(spec, base=(0.3, 0.7), noise=noise)
        arch = Architecture(ops=(0, 1))
        quality = scape.quality(arch)
        early = SyntheticEvaluator(scape, seed=11, clamp=False)
        late = SyntheticEvaluator(scape, seed=11, clamp=False, initial_epoch=99)
        early_sd = np.std([early.train_epoch(arch) - quality for _ in range(1)])
        # One epoch each: early sees sigma(1), late sees sigma(100)=gamma.
        late_residual = late.train_epoch(arch) - quality
        assert abs(late_residual) < 0.1
        assert noise.sigma(100) < noise.sigma(1)

    def test_sample_deviation_decreases_with_epoch(self):
        # Invariant: sigma falls as training progresses (beta > 0); checked
        # with 10,000 draws per bin and a Bonferroni-style slack on each
        # pairwise comparison.
        spec = spec_m1k2()
        noise = NoiseParams(beta=0.004, gamma=0.01, e_star=105)
        scape = separable(spec, base=(0.45, 0.55), noise=noise)
        arch = Architecture(ops=(1, 1))
        sds = []
        for e_t in (1, 50, 100):
            ev = SyntheticEvaluator(scape, seed=21, clamp=False, initial_epoch=e_t - 1)
            qualities = scape.quality(arch)
            draws = []
            for i in range(10_000):
                fresh = SyntheticEvaluator(
                    scape, seed=100_000 + i, clamp=False, initial_epoch=e_t - 1
                )
                draws.append(fresh.train_epoch(arch) - qualities)
            sds.append(float(np.std(draws)))
        expected = [noise.sigma(e) for e in (1, 50, 100)]
        assert sds[0] > sds[1] > sds[2]
        for got, want in zip(sds, expected):
            assert got == pytest.approx(want, rel=0.05)


class TestTabular:
    def test_generate_counts(self):
        spec = spec_m1k2()
        bench = generate_benchmark(spec, separable(spec, base=(0.3, 0.7)), epochs=3, seed=2)
        assert len(bench.entries) == 4
        assert all(len(m) == 3 for m in bench.entries.values())

    def test_noiseless_entries_constant_quality(self):
        spec = spec_m1k2()
        scape = separable(spec, base=(0.3, 0.7))
        bench = generate_benchmark(spec, scape, epochs=3, seed=2)
        for arch in enumerate_architectures(spec, cap=10):
            metrics = bench.entries[encode(spec, arch)]
            assert metrics == tuple([pytest.approx(scape.quality(arch))] * 3)

    def test_argmax_matches_utilities(self):
        spec = build_space(num_nodes=2, operations=("x", "y", "z"))
        scape = separable(spec)
        bench = generate_benchmark(spec, scape, epochs=2, seed=4)
        best_key = max(bench.entries, key=lambda k: sum(bench.entries[k]))
        assert best_key == encode(spec, Architecture(ops=scape.optimal_ops()))

    def test_cap_enforced(self):
        spec = build_space(num_nodes=4, operations=[f"o{i}" for i in range(8)], num_cell_types=2)
        scape = ridge_landscape(spec, [0.1 * (i + 1) for i in range(8)])
        with pytest.raises(SpaceError, match="8796093022208"):
            generate_benchmark(spec, scape, epochs=1, seed=0, cap=1000)

    def test_missing_architecture_error_names_key(self):
        spec = spec_m1k2()
        bench = TabularBenchmark(spec=spec, epochs=1, entries={
            encode(spec, Architecture(ops=(0, 0))): (0.5,),
        })
        ev = TabularEvaluator(bench)
        missing = Architecture(ops=(1, 1))
        with pytest.raises(OracleError, match="cell0"):
            ev.train_epoch(missing)

    def test_epoch_overflow(self):
        spec = spec_m1k2()
        key = encode(spec, Architecture(ops=(0, 0)))
        bench = TabularBenchmark(spec=spec, epochs=3, entries={key: (0.1, 0.2, 0.3)})
        ev = TabularEvaluator(bench)
        arch = Architecture(ops=(0, 0))
        assert [ev.train_epoch(arch) for _ in range(3)] == [0.1, 0.2, 0.3]
        with pytest.raises(OracleError):
            ev.train_epoch(arch)

    def test_entry_shape_validation(self):
        spec = spec_m1k2()
        with pytest.raises(OracleError):
            TabularBenchmark(spec=spec, epochs=2, entries={"k": (0.1,)})
        with pytest.raises(OracleError):
            TabularBenchmark(spec=spec, epochs=1, entries={"k": (1.5,)})


class TestBenchmarkFile:
    def test_round_trip_bit_exact(self):
        spec = build_space(num_nodes=1, operations=("a", "b", "c"))
        noise = NoiseParams(beta=0.01, gamma=0.02, e_star=50)
        scape = separable(spec, base=(0.21, 0.5, 0.83), noise=noise)
        bench = generate_benchmark(spec, scape, epochs=4, seed=9)
        buffer = io.StringIO()
        write_benchmark(bench, buffer)
        restored = read_benchmark(io.StringIO(buffer.getvalue()))
        assert restored.entries == bench.entries
        assert restored.epochs == bench.epochs
        assert restored.spec == bench.spec

    def test_header_grammar(self):
        spec = spec_m1k2()
        bench = generate_benchmark(spec, separable(spec, base=(0.3, 0.7)), epochs=2, seed=1)
        buffer = io.StringIO()
        write_benchmark(bench, buffer)
        first = buffer.getvalue().splitlines()[0]
        assert first == "#distprune-bench v1 epochs=2 spec=1,2,1"

    def test_malformed_header_rejected(self):
        with pytest.raises(OracleError):
            read_benchmark(io.StringIO("not a benchmark\n"))


class TestLandscapeFile:
    def test_round_trip(self):
        spec = build_space(num_nodes=2, operations=("skip", "pool", "conv3", "conv5"))
        noise = NoiseParams(beta=0.01, gamma=0.02, e_star=50)
        scape = ridge_landscape(spec, (0.15, 0.35, 0.6, 0.85), jitter=0.01, seed=13, noise=noise)
        buffer = io.StringIO()
        write_landscape(scape, buffer)
        restored = read_landscape(io.StringIO(buffer.getvalue()))
        assert restored == scape

    def test_unknown_directive_rejected(self):
        with pytest.raises(OracleError):
            read_landscape(io.StringIO("#distprune-landscape v1 spec=1,2,1\nbogus line\n"))
