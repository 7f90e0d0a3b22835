"""
Tests for hocpdmp.core.density: empirical measures, grid densities,
the regularity region, the threshold calculator and the smoothness probe.
"""

import logging

import numpy as np
import pytest
from scipy import stats

from hocpdmp.core.density import (
    estimate_invariant,
    histogram_density,
    histogram_density_2d,
    kde_density,
    marginal_density_representation,
    measure_from_paths,
    region_spec,
    regularity_threshold,
    sample_path,
    smoothness_probe,
)
from hocpdmp.core.errors import InsufficientSamplesError, ModelValidationError, RegionError
from hocpdmp.core.models import EmpiricalMeasure, GridDensity, RngSpec, SimulationConfig
from hocpdmp.core.simulate import simulate_path


# ---------------------------------------------------------------------------
# Threshold
# ---------------------------------------------------------------------------

class TestRegularityThreshold:
    @pytest.mark.parametrize("N,f0,B,k_star", [
        (3, 2.0, 1.0, 3),
        (1, 2.0, 1.0, 1),
        (2, 1.0, 1.0, 0),
        (2, 2.5, 0.5, 8),
        (4, 0.5, 0.1, 16),
    ])
    def test_values(self, N, f0, B, k_star):
        result = regularity_threshold(N, f0, B)
        assert result.guaranteed
        assert result.k_star == k_star
        assert B * result.k_star < N * f0 - (N - 1) * B
        assert not B * (result.k_star + 1) < N * f0 - (N - 1) * B - 1e-12

    def test_no_admissible_order(self):
        result = regularity_threshold(2, 0.4, 1.0)
        assert result.k_star is None and not result.guaranteed

    def test_zero_floor(self, caplog):
        with caplog.at_level(logging.WARNING):
            result = regularity_threshold(3, 0.0, 1.0)
        assert not result.guaranteed
        assert "no guarantee" in result.note

    @pytest.mark.parametrize("N,f0,B", [(2, 1.0, 0.0), (2, 1.0, -1.0), (0, 1.0, 1.0), (2, -1.0, 1.0)])
    def test_invalid(self, N, f0, B):
        with pytest.raises(ModelValidationError):
            regularity_threshold(N, f0, B)


# ---------------------------------------------------------------------------
# Empirical measures
# ---------------------------------------------------------------------------

class TestEmpiricalMeasure:
    def test_uniform_weights(self, uniform_samples):
        m = EmpiricalMeasure.uniform(uniform_samples)
        assert m.size == 2000
        assert m.weights.sum() == pytest.approx(1.0)

    def test_expect(self, uniform_samples):
        est = EmpiricalMeasure.uniform(uniform_samples).expect(uniform_samples[:, 0])
        assert abs(est.mean - 0.5) <= 4 * est.se
        assert est.se == pytest.approx(np.sqrt(1.0 / 12.0 / 2000), rel=0.1)

    def test_rejects_empty(self):
        with pytest.raises(InsufficientSamplesError):
            EmpiricalMeasure(samples=np.zeros((0, 1)), weights=np.zeros(0))

    def test_rejects_bad_weights(self):
        with pytest.raises(ModelValidationError):
            EmpiricalMeasure(samples=np.zeros((2, 1)), weights=np.array([0.7, 0.7]))

    def test_rejects_non_finite(self):
        with pytest.raises(ModelValidationError):
            EmpiricalMeasure.uniform(np.array([[0.0], [np.nan]]))


class TestEstimation:
    def test_invariant_law_is_uniform(self, neuron1):
        sim = SimulationConfig(horizon=4000.0, stride=4.0)
        m = estimate_invariant(neuron1, np.zeros(1), sim, seed=3)
        assert m.provenance == "time"
        assert stats.kstest(m.samples[:, 0], "uniform").pvalue > 1e-3

    def test_jump_chain_provenance(self, neuron1):
        sim = SimulationConfig(horizon=2000.0)
        m = estimate_invariant(neuron1, np.zeros(1), sim, seed=3, provenance="jump_chain")
        assert m.provenance == "jump_chain"
        assert stats.kstest(m.samples[:, 0], "uniform").pvalue > 1e-3

    def test_sample_path_stride(self, neuron2):
        path = simulate_path(neuron2, np.zeros(2), RngSpec(seed=1), horizon=100.0)
        samples = sample_path(neuron2, path, stride=2.0, burn_in=0.0)
        assert samples.shape == (51, 2)

    def test_needs_horizon(self, neuron1):
        with pytest.raises(InsufficientSamplesError):
            estimate_invariant(neuron1, np.zeros(1), SimulationConfig(max_jumps=10), seed=0)

    def test_too_few_samples(self, neuron1):
        path = simulate_path(neuron1, np.zeros(1), RngSpec(seed=1), horizon=1.0)
        with pytest.raises(InsufficientSamplesError):
            measure_from_paths(neuron1, [path], SimulationConfig(horizon=1.0, stride=5.0))

    def test_unknown_provenance(self, neuron1):
        path = simulate_path(neuron1, np.zeros(1), RngSpec(seed=1), horizon=10.0)
        with pytest.raises(ValueError):
            measure_from_paths(neuron1, [path], SimulationConfig(horizon=10.0), provenance="both")


# ---------------------------------------------------------------------------
# Grid densities
# ---------------------------------------------------------------------------

class TestGridDensities:
    def test_histogram(self, uniform_samples):
        gd = histogram_density(EmpiricalMeasure.uniform(uniform_samples))
        assert gd.total_mass == pytest.approx(1.0)
        assert np.all(np.abs(gd.values - 1.0) < 0.5)

    def test_histogram_2d(self, rng):
        m = EmpiricalMeasure.uniform(rng.uniform(size=(1000, 2)))
        gd = histogram_density_2d(m, bins=10)
        assert gd.values.shape == (10, 10)
        assert gd.total_mass == pytest.approx(1.0)

    def test_kde(self, uniform_samples):
        gd = kde_density(EmpiricalMeasure.uniform(uniform_samples), cells=128)
        assert gd.method == "kde" and gd.bandwidth > 0
        assert gd.total_mass == pytest.approx(1.0)
        centre = (gd.centers[0] > 0.2) & (gd.centers[0] < 0.8)
        assert np.all(np.abs(gd.values[centre] - 1.0) < 0.2)

    def test_kde_degenerate(self):
        with pytest.raises(InsufficientSamplesError):
            kde_density(EmpiricalMeasure.uniform(np.ones((10, 1))))

    def test_flow_time_representation(self, neuron1, uniform_samples):
        s = np.linspace(0.05, 0.9, 18)
        mean, se = marginal_density_representation(neuron1, EmpiricalMeasure.uniform(uniform_samples[:200]), s)
        # every start jumps to 0, so the representation is deterministic
        assert np.allclose(mean, 1.0, atol=1e-3)
        assert np.all(se < 1e-8)

    def test_representation_outside_reach(self, neuron1, uniform_samples):
        mean, _ = marginal_density_representation(neuron1, EmpiricalMeasure.uniform(uniform_samples[:50]), [-0.5, 1.5])
        assert np.allclose(mean, 0.0)

    def test_representation_needs_non_interacting(self, custom_model):
        m = EmpiricalMeasure.uniform(np.zeros((5, 2)))
        with pytest.raises(ModelValidationError):
            marginal_density_representation(custom_model(), m, [0.5])


# ---------------------------------------------------------------------------
# Region and smoothness probe
# ---------------------------------------------------------------------------

class TestRegion:
    def test_contains(self, neuron2):
        region = region_spec(neuron2.scalar_spec, d=0.3, k=0)
        v = np.array([0.1, 0.5, 0.69, 0.75, 1.5])
        # (k+2) A = 0.4 < |v| and |1 - v| > 0.3
        assert list(region.contains(v)) == [False, True, True, False, True]

    def test_not_admissible_warns(self, neuron2, caplog):
        with caplog.at_level(logging.WARNING):
            region = region_spec(neuron2.scalar_spec, d=0.3, k=1)
        assert not region.admissible_for(neuron2.scalar_spec.B)
        assert "regularity claims do not apply" in caplog.text

    def test_A_override(self, neuron2):
        assert region_spec(neuron2.scalar_spec, d=0.3, k=0, A=0.0).A == 0.0

    @pytest.mark.parametrize("d,k", [(0.0, 0), (-1.0, 1), (0.3, -1)])
    def test_invalid(self, neuron2, d, k):
        with pytest.raises(RegionError):
            region_spec(neuron2.scalar_spec, d=d, k=k)

    def test_probe_on_smooth_density(self, neuron1):
        edges = np.linspace(0.0, 0.6, 301)
        centers = 0.5 * (edges[1:] + edges[:-1])
        gd = GridDensity(edges=[edges], values=np.sin(centers))
        region = region_spec(neuron1.scalar_spec, d=0.5, k=0)
        probe = smoothness_probe(gd, region, order=2)
        assert set(probe) == {1, 2}
        assert probe[1] == pytest.approx(1.0, abs=1e-2)
        assert probe[2] <= 0.5

    def test_probe_empty_region(self, neuron1):
        edges = np.linspace(0.8, 0.99, 101)
        gd = GridDensity(edges=[edges], values=np.ones(100))
        with pytest.raises(RegionError, match="empty"):
            smoothness_probe(gd, region_spec(neuron1.scalar_spec, d=0.5, k=0), order=1)

    def test_probe_needs_1d(self, neuron1):
        gd = GridDensity(edges=[np.linspace(0, 1, 5)] * 2, values=np.ones((4, 4)))
        with pytest.raises(RegionError):
            smoothness_probe(gd, region_spec(neuron1.scalar_spec, d=0.5, k=0), order=1)
