"""
Tests for hocpdmp.utils.stats and hocpdmp.utils.testfns.
"""

import math

import numpy as np
import pytest

from hocpdmp.utils.stats import (
    MergeableEstimate,
    batch_means,
    combined_se,
    ks_critical_value,
    ks_exponential,
    ratio_se,
    weighted_batch_se,
)
from hocpdmp.utils.testfns import Bump, clipped_product, coordinate, default_suite, gaussian, sine


class TestStandardErrors:
    def test_batch_means_iid(self, rng):
        x = rng.normal(2.0, 1.0, size=30_000)
        mean, se = batch_means(x, batches=30)
        assert mean == pytest.approx(x.mean())
        assert se == pytest.approx(1.0 / math.sqrt(30_000), rel=0.5)

    def test_batch_means_unequal_blocks(self):
        mean, se = batch_means(np.arange(10.0), batches=3)
        assert mean == pytest.approx(4.5)
        assert se > 0

    def test_batch_means_degenerate(self):
        mean, se = batch_means(np.array([3.0]), batches=30)
        assert mean == 3.0 and se == math.inf
        with pytest.raises(ValueError):
            batch_means(np.array([]))

    def test_weighted_batch_se(self):
        assert weighted_batch_se(np.array([1.0, 3.0])) == pytest.approx(1.0)
        assert weighted_batch_se(np.array([1.0])) == math.inf

    def test_ratio_and_combined(self):
        assert combined_se(3.0, 4.0) == pytest.approx(5.0)
        assert ratio_se(2.0, 0.1, 1.0, 0.0) == pytest.approx(0.1)
        assert ratio_se(2.0, 0.0, 2.0, 0.2) == pytest.approx(0.1)
        assert ratio_se(1.0, 0.1, 0.0, 0.1) == math.inf

    def test_ks(self, rng):
        stat, p = ks_exponential(rng.exponential(0.5, size=4000), rate=2.0)
        assert stat < ks_critical_value(4000, 0.01)
        assert p > 1e-3
        _, p_wrong = ks_exponential(rng.exponential(1.0, size=4000), rate=2.0)
        assert p_wrong < 1e-6

    def test_ks_critical_value(self):
        assert ks_critical_value(100, 0.05) == pytest.approx(1.358 / 10, rel=1e-3)


class TestMergeableEstimate:
    def test_merge_order_free(self, rng):
        parts = [rng.normal(size=7) for _ in range(4)]
        a = MergeableEstimate().add(0, parts[0]).add(1, parts[1])
        b = MergeableEstimate().add(2, parts[2]).add(3, parts[3])
        left, right = a.merge(b), b.merge(a)
        assert left.mean == right.mean
        assert left.se == right.se
        assert left.mean == pytest.approx(np.concatenate(parts).mean())

    def test_merge_associative(self):
        e = [MergeableEstimate().add(k, np.array([k * 1.1, k + 0.3])) for k in range(3)]
        assert e[0].merge(e[1]).merge(e[2]).values().tolist() == e[0].merge(e[1].merge(e[2])).values().tolist()

    def test_duplicate_key(self):
        est = MergeableEstimate().add(0, np.ones(2))
        with pytest.raises(ValueError, match="duplicate"):
            est.merge(MergeableEstimate().add(0, np.ones(2)))

    def test_empty(self):
        est = MergeableEstimate()
        assert math.isnan(est.mean) and est.se == math.inf

    def test_to_dict(self):
        d = MergeableEstimate().add(0, np.array([1.0, 3.0])).to_dict("x1")
        assert d == {"mean": 2.0, "se": pytest.approx(1.0), "batches": 2, "label": "x1"}


class TestTestFunctions:
    @pytest.mark.parametrize("g", [coordinate(2), sine(1), gaussian(), clipped_product()])
    def test_gradients(self, g, rng):
        x = rng.uniform(-2, 2, size=(25, 3))
        fd = np.empty_like(x)
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1e-6
            fd[:, k] = (g(x + e) - g(x - e)) / 2e-6
        assert np.allclose(g.gradient(x), fd, atol=1e-5)

    def test_suite(self):
        names = [g.name for g in default_suite()]
        assert names == ["const(1)", "x1", "sin(x1)", "exp(-|x|^2)", "clip(x1)*clip(x2)"]

    def test_clipped_product_dim1(self):
        g = clipped_product()
        assert g(np.array([[7.0]]))[0] == pytest.approx(25.0)

    def test_bump_support_and_norm(self):
        b = Bump(0.2, 0.6, scale=2.0)
        assert b(0.4) == pytest.approx(b.sup_norm)
        assert b(0.2) == 0.0 and b(0.7) == 0.0
        v = np.linspace(0.0, 1.0, 20001)
        assert np.max(np.abs(b(v))) <= b.sup_norm + 1e-15

    @pytest.mark.parametrize("order", [1, 2])
    def test_bump_derivatives(self, order):
        b = Bump(-0.5, 1.0)
        v = np.linspace(-0.45, 0.95, 57)
        h = 1e-5
        fd = (b.derivative(v + h, order - 1) - b.derivative(v - h, order - 1)) / (2 * h)
        assert np.allclose(b.derivative(v, order), fd, rtol=1e-5, atol=1e-6)

    def test_bump_order_three(self):
        with pytest.raises(ValueError):
            Bump(0.0, 1.0).derivative(0.5, 3)
