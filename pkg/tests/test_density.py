import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxprop.density import (
    SILVERMAN,
    Fixed,
    KdeModel,
    circular_std,
    dumps_kde,
    fit_kde,
    kde_density,
    kde_sample,
    loads_kde,
)
from ctxprop.errors import EmptyTrainingSet, ModelFormatError, ZeroBandwidth
from ctxprop.relations import PairwiseRelation, PoseMode


class TestFit:
    def test_silverman_formula(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=100)
        x = (x - x.mean()) / x.std(ddof=1) * 2.0
        rel = np.column_stack([x, rng.normal(size=100), np.zeros(100)])
        m = fit_kde(rel)
        # 1.06 * 2.0 * 100 ** (-1/5), worked by hand
        assert m.bandwidth[0] == pytest.approx(0.843987, abs=1e-6)

    def test_identical_relations_give_zero_bandwidth(self):
        m = fit_kde([PairwiseRelation(1.0, 2.0, 0.5)] * 7)
        assert m.bandwidth == (0.0, 0.0, 0.0)

    def test_single_relation_fixed_zero(self):
        m = fit_kde([PairwiseRelation(1.0, 2.0, 0.5)], Fixed(0, 0, 0))
        assert m.sample_count == 1
        assert all(r.as_tuple() == (1.0, 2.0, 0.5) for r in kde_sample(m, 0, 5))

    def test_empty(self):
        with pytest.raises(EmptyTrainingSet):
            fit_kde([])

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            fit_kde([PairwiseRelation(0, 0, 0)], "scott")

    def test_circular_std_ignores_wrap(self):
        # angles straddling +-pi are as tight as angles around 0
        a = circular_std(np.array([math.pi - 0.1, -math.pi + 0.1]))
        b = circular_std(np.array([-0.1, 0.1]))
        assert a == pytest.approx(b)

    def test_elongation_range_enforced(self):
        with pytest.raises(ValueError):
            KdeModel(np.array([[0.0, 0.0, -0.5]]), (1, 1, 1), PoseMode.ELONGATION)


class TestDensity:
    def test_two_component_mixture(self):
        m = fit_kde([PairwiseRelation(0, 0, 0), PairwiseRelation(4, 0, 0)], Fixed(1, 1, 1))
        # each component: phi(2) * phi(0) * (phi(0) + 2 phi(2 pi)); the mixture mean equals one of them
        phi = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)  # noqa: E731
        expected = phi(2) * phi(0) * (phi(0) + 2 * phi(2 * math.pi))
        assert kde_density(m, PairwiseRelation(2, 0, 0)) == pytest.approx(expected, rel=1e-12)

    def test_mode_at_single_sample(self):
        m = fit_kde([PairwiseRelation(1, 2, 0.3)], Fixed(0.5, 0.7, 0.2))
        peak = kde_density(m, (1, 2, 0.3))
        for q in [(1.1, 2, 0.3), (1, 1.9, 0.3), (1, 2, 0.35)]:
            assert kde_density(m, q) < peak

    def test_far_tail(self):
        m = fit_kde([PairwiseRelation(0, 0, 0)], Fixed(0.5, 0.5, 0.2))
        assert kde_density(m, (10, 10, 0)) < 1e-6 * kde_density(m, (0, 0, 0))

    def test_wraps_across_pi(self):
        m = fit_kde([PairwiseRelation(0, 0, math.pi - 0.05)], Fixed(1, 1, 0.1))
        assert kde_density(m, (0, 0, -math.pi + 0.05)) == pytest.approx(kde_density(m, (0, 0, math.pi - 0.15)))

    def test_zero_bandwidth(self):
        m = fit_kde([PairwiseRelation(0, 0, 0)], Fixed(0, 1, 1))
        with pytest.raises(ZeroBandwidth):
            kde_density(m, (0, 0, 0))

    def test_integrates_to_one(self):
        m = fit_kde([PairwiseRelation(0, 0, 0), PairwiseRelation(1, -1, 2.0)], Fixed(0.6, 0.8, 0.4))
        xs = np.linspace(-5, 6, 89)
        zs = np.linspace(-6, 5, 89)
        ts = np.linspace(-math.pi, math.pi, 120, endpoint=False)
        X, Z, T = np.meshgrid(xs, zs, ts, indexing="ij")
        d = m.density(np.column_stack([X.ravel(), Z.ravel(), T.ravel()]))
        total = d.sum() * (xs[1] - xs[0]) * (zs[1] - zs[0]) * (ts[1] - ts[0])
        assert total == pytest.approx(1.0, abs=2e-3)


class TestSample:
    def test_deterministic(self):
        m = fit_kde([PairwiseRelation(0, 0, 0), PairwiseRelation(3, 1, 1)], Fixed(0.3, 0.3, 0.3))
        assert kde_sample(m, 5, 20) == kde_sample(m, 5, 20)
        assert kde_sample(m, 5, 20) != kde_sample(m, 6, 20)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-3.1, 3.1)), min_size=1, max_size=5, unique=True))
    def test_zero_bandwidth_reproduces_samples(self, rows):
        m = fit_kde(rows, Fixed(0, 0, 0))
        drawn = {r.as_tuple() for r in kde_sample(m, 1, 400)}
        assert drawn <= {tuple(map(float, r)) for r in rows}

    def test_component_frequencies(self):
        # with negligible bandwidth every draw names its component; counts are Binomial(n, 1/3)
        rows = [(0.0, 0.0, 0.0), (10.0, 0.0, 0.0), (20.0, 0.0, 0.0)]
        m = fit_kde(rows, Fixed(1e-3, 1e-3, 1e-3))
        n = 30_000
        counts = Counter(round(r.r_x / 10) for r in kde_sample(m, 9, n))
        sd = math.sqrt(n * (1 / 3) * (2 / 3))
        for k in (0, 1, 2):
            assert abs(counts[k] - n / 3) < 5 * sd

    def test_angles_stay_in_range(self):
        m = fit_kde([PairwiseRelation(0, 0, math.pi)], Fixed(1, 1, 2.0))
        t = np.array([r.r_theta for r in kde_sample(m, 0, 2000)])
        assert ((t > -math.pi) & (t <= math.pi)).all()
        e = fit_kde(np.array([[0.0, 0.0, 3.0]]), Fixed(1, 1, 2.0), PoseMode.ELONGATION)
        t = np.array([r.r_theta for r in kde_sample(e, 0, 2000)])
        assert ((t >= 0) & (t < math.pi)).all()

    def test_rejects_n_zero(self):
        m = fit_kde([PairwiseRelation(0, 0, 0)], Fixed(1, 1, 1))
        with pytest.raises(ValueError):
            kde_sample(m, 0, 0)


class TestFormat:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        rel = np.column_stack([rng.normal(size=30), rng.normal(size=30), rng.uniform(-3, 3, 30)])
        m = fit_kde(rel, SILVERMAN, PoseMode.FULL)
        text = dumps_kde(m)
        m2 = loads_kde(text)
        assert np.array_equal(m.samples, m2.samples)
        assert m.bandwidth == m2.bandwidth
        assert dumps_kde(m2) == text

    @pytest.mark.parametrize("text", ["", "nope 1\n", "ctxprop-kde 1\npose_mode full\nbandwidth 1 1 1\nsamples 2\n0 0 0\n"])
    def test_malformed(self, text):
        with pytest.raises(ModelFormatError):
            loads_kde(text)
