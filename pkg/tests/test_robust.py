import math

import numpy as np
import pytest

from smc_kit.filters import FilterKind, bpf_step, run_filter
from smc_kit.models import BearingsOnlyModel, GrowthModel
from smc_kit.robust import (
    RegimeFamily,
    _reallocate_counts,
    dma_bpf_step,
    init_labels,
    rs_step,
    run_dma_filter,
    run_rs_filter,
)
from smc_kit.ssm import DegeneracyError, ParticleCloud, RegimeSet
from smc_kit.stochastics import RngStream, gaussian_logpdf

PAPER_SET = RegimeSet([0.0005, 0.001, 0.003, 0.005])


class TestRsStep:
    def test_singleton_regime_identical_to_base_step(self, rng_factory):
        model = GrowthModel(process_std=3.0)
        family = RegimeFamily(model, RegimeSet([3.0]))
        cloud = ParticleCloud.uniform(0, RngStream(1).normal((64, 1)))
        y = np.array([1.0])
        for base in list(FilterKind):
            y_next = np.array([0.5]) if base is FilterKind.PBPS else None
            out_rs, info_rs = rs_step(
                family, cloud, y, rng_factory(5), y_next=y_next, base=base
            )
            if base is FilterKind.BPF:
                out_b, info_b = bpf_step(model, cloud, y, rng_factory(5))
                np.testing.assert_array_equal(out_rs.particles, out_b.particles)
                np.testing.assert_array_equal(info_rs.estimate, info_b.estimate)

    def test_singleton_regime_identical_full_run_compiled(self, rng_factory):
        model = GrowthModel(process_std=3.0)
        family = RegimeFamily(model, RegimeSet([3.0]))
        ys = np.linspace(-2, 2, 15).reshape(-1, 1)
        for base in list(FilterKind):
            plain = run_filter(model, ys, 128, base, rng_factory(7))
            rs = run_rs_filter(family, ys, 128, base, rng_factory(7))
            np.testing.assert_array_equal(plain.estimates, rs.estimates)
            np.testing.assert_array_equal(plain.ess, rs.ess)

    def test_regime_frequencies_uniform(self, rng):
        model = BearingsOnlyModel()
        family = RegimeFamily(model, PAPER_SET)
        ys = np.full((3, 1), 0.1)
        out = run_rs_filter(family, ys, 10_000, FilterKind.BPF, rng)
        assert out.regime_fractions.shape == (3, 4)
        assert np.all(np.abs(out.regime_fractions - 0.25) < 0.02)

    def test_labels_lie_in_set(self, rng):
        model = BearingsOnlyModel()
        family = RegimeFamily(model, PAPER_SET)
        cloud = ParticleCloud.uniform(0, model.sample_initial(rng.child(0), 200))
        out, info = rs_step(family, cloud, np.array([0.1]), rng.child(1))
        assert set(np.unique(info.weighted.regimes)) <= set(PAPER_SET.values)

    def test_paper_regime_set(self):
        np.testing.assert_array_equal(PAPER_SET.values, [0.0005, 0.001, 0.003, 0.005])


class TestDmaStep:
    def test_two_model_hand_case(self, rng):
        # 4 particles, 2 candidate models; the aggregate model weights follow
        # from the individual Gaussian candidate likelihoods
        model = GrowthModel(process_std=0.0, obs_std=1.0)  # zero noise: candidates = f(x)
        regimes = RegimeSet([0.0, 1.0])  # regime scales noise; zero keeps determinism
        family = RegimeFamily(model, regimes)
        pts = np.array([[0.0], [1.0], [2.0], [3.0]])
        labels = np.array([0.0, 0.0, 1.0, 1.0])
        cloud = ParticleCloud.uniform(0, pts, labels)
        y = np.array([1.0])

        candidates = model.transition_mean(1, pts)[:, 0]  # zero-noise propagation
        lls = np.array(
            [gaussian_logpdf([y[0]], [c * c / 20.0], [[1.0]]) for c in candidates]
        )
        # model weights: sum of member likelihoods per label group
        w0 = math.exp(lls[0]) + math.exp(lls[1])
        w1 = math.exp(lls[2]) + math.exp(lls[3])
        expected = np.array([w0, w1]) / (w0 + w1)

        counts = np.zeros(2)
        reps = 2000
        for i in range(reps):
            out, info = dma_bpf_step(family, cloud, y, rng.child(i))
            assert out.n_particles == 4
            counts[0] += np.sum(out.regimes == 0.0)
            counts[1] += np.sum(out.regimes == 1.0)
        frac = counts / counts.sum()
        se = np.sqrt(expected * (1 - expected) / (4 * reps))
        assert np.all(np.abs(frac - expected) < 4 * se + 1e-3)

    def test_model_weight_arithmetic_exact(self, rng):
        model = GrowthModel(process_std=0.0)
        family = RegimeFamily(model, RegimeSet([0.0]))
        pts = np.array([[0.0], [2.0]])
        cloud = ParticleCloud.uniform(0, pts, np.zeros(2))
        out, info = dma_bpf_step(family, cloud, np.array([0.3]), rng)
        assert out.n_particles == 2
        np.testing.assert_array_equal(out.regimes, [0.0, 0.0])

    def test_l1_reduces_to_select_and_propagate(self, rng):
        model = GrowthModel()
        family = RegimeFamily(model, RegimeSet([3.0]))
        n = 64
        cloud = ParticleCloud.uniform(0, RngStream(2).normal((n, 1)), np.full(n, 3.0))
        out, info = dma_bpf_step(family, cloud, np.array([1.0]), rng)
        assert out.n_particles == n
        np.testing.assert_allclose(out.weights, 1.0 / n)
        np.testing.assert_array_equal(out.regimes, np.full(n, 3.0))

    def test_counts_preserved_over_steps(self, rng):
        model = BearingsOnlyModel()
        family = RegimeFamily(model, PAPER_SET)
        out = run_dma_filter(family, np.full((5, 1), 0.2), 333, rng)
        assert not out.failed
        assert out.estimates.shape == (5, 4)
        np.testing.assert_allclose(out.regime_fractions.sum(axis=1), 1.0, atol=1e-12)

    def test_requires_labels(self, rng):
        model = GrowthModel()
        family = RegimeFamily(model, RegimeSet([3.0]))
        cloud = ParticleCloud.uniform(0, np.zeros((4, 1)))
        with pytest.raises(ValueError):
            dma_bpf_step(family, cloud, np.array([0.0]), rng)

    def test_label_outside_set_rejected(self, rng):
        model = GrowthModel()
        family = RegimeFamily(model, RegimeSet([3.0]))
        cloud = ParticleCloud.uniform(0, np.zeros((2, 1)), np.array([3.0, 4.0]))
        with pytest.raises(ValueError):
            dma_bpf_step(family, cloud, np.array([0.0]), rng)

    def test_all_zero_model_weights_degenerate(self, rng):
        model = GrowthModel()
        family = RegimeFamily(model, RegimeSet([1e308, 2e308]))
        cloud = ParticleCloud.uniform(
            0, np.full((8, 1), 1.0), init_labels(family.regimes, 8, rng.child(0))
        )
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DegeneracyError) as exc:
                dma_bpf_step(family, cloud, np.array([0.0]), rng.child(1))
        assert exc.value.where == "model weights"

    def test_python_and_compiled_backends_run(self, rng_factory):
        model = BearingsOnlyModel()
        family = RegimeFamily(model, PAPER_SET)
        ys = np.full((4, 1), -0.2)
        a = run_dma_filter(family, ys, 200, rng_factory(11), backend="compiled")
        b = run_dma_filter(family, ys, 200, rng_factory(11), backend="python")
        assert a.estimates.shape == b.estimates.shape == (4, 4)
        # same-seed reruns are bit-identical per backend
        a2 = run_dma_filter(family, ys, 200, rng_factory(11), backend="compiled")
        np.testing.assert_array_equal(a.estimates, a2.estimates)


class TestReallocation:
    def test_empty_group_slots_move_to_best_populated(self):
        counts = np.array([3, 5, 2])
        weights = np.array([0.2, 0.5, 0.3])
        sizes = np.array([0, 4, 4])
        out = _reallocate_counts(counts, weights, sizes)
        np.testing.assert_array_equal(out, [0, 8, 2])
        assert out.sum() == counts.sum()

    def test_no_populated_group_raises(self):
        with pytest.raises(DegeneracyError):
            _reallocate_counts(np.array([2]), np.array([1.0]), np.array([0]))

    def test_noop_when_all_populated(self):
        counts = np.array([3, 5])
        out = _reallocate_counts(counts, np.array([0.4, 0.6]), np.array([2, 2]))
        np.testing.assert_array_equal(out, counts)


class TestLabelInit:
    def test_uniform_over_set(self, rng):
        labels = init_labels(PAPER_SET, 40_000, rng)
        for v in PAPER_SET.values:
            assert abs(np.mean(labels == v) - 0.25) < 0.02
