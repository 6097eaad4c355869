import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activebnsl.core import Dag, Family, family_count
from activebnsl.estimation import (
    NoDataError,
    SampleBoundParams,
    SampleStore,
    add_samples,
    designated_subset,
    empirical_score,
    plugin_conditional_entropy,
    plugin_conditional_entropy_from_counts,
    sample_bound,
)

from conftest import copy_chain, positive_net


class NetSampler:
    def __init__(self, net, seed):
        self.net, self.rng = net, np.random.default_rng(seed)

    def draw(self, n):
        return self.net.sample_many(n, self.rng)


def counts(cells):
    t = np.zeros((2, 2), dtype=np.int64)
    for (c, p), n in cells.items():
        t[c, p] = n
    return t


class TestPlugin:
    def test_functional(self):
        assert plugin_conditional_entropy_from_counts(counts({(0, 0): 50, (1, 1): 50})) == pytest.approx(0.0, abs=1e-12)

    def test_uniform(self):
        assert plugin_conditional_entropy_from_counts(np.full((2, 2), 25)) == pytest.approx(math.log(2), abs=1e-12)

    def test_hand_value(self):
        h = plugin_conditional_entropy_from_counts(counts({(0, 0): 25, (1, 0): 25, (0, 1): 50}))
        assert h == pytest.approx(0.346574, abs=1e-6)

    def test_child_axis(self):
        t = counts({(0, 0): 25, (1, 0): 25, (0, 1): 50})
        assert plugin_conditional_entropy_from_counts(t.T, child_axis=1) == pytest.approx(0.346574, abs=1e-6)

    def test_no_data(self):
        store = SampleStore(3, 1)
        with pytest.raises(NoDataError):
            plugin_conditional_entropy(store, Family(0, (1,)))

    def test_empty_table(self):
        with pytest.raises(NoDataError):
            plugin_conditional_entropy_from_counts(np.zeros((2, 2)))


class TestSampleBound:
    def test_reference_value(self):
        n = sample_bound(SampleBoundParams(3.90625e-3, 5.2083e-4, 2, 4))
        assert n == pytest.approx(1.01e9, rel=0.005)

    def test_naive_cell(self):
        d, eps, delta = 6, 0.046875, 0.05
        n = 20 * sample_bound(SampleBoundParams(eps / (2 * d), delta / family_count(d, 2)))
        assert 2.25e10 / 1.25 <= n <= 2.25e10 * 1.25

    def test_floor_terms(self):
        assert sample_bound(SampleBoundParams(10.0, 0.5, 2, 4)) == math.ceil(math.e**2) == 8

    @pytest.mark.parametrize("eps,delta", [(0.0, 0.5), (-1.0, 0.5), (0.1, 0.0), (0.1, 1.0)])
    def test_rejects_bad_params(self, eps, delta):
        with pytest.raises(ValueError):
            SampleBoundParams(eps, delta)

    @settings(max_examples=100)
    @given(st.floats(1e-4, 5.0), st.floats(1e-4, 5.0), st.floats(1e-6, 0.9), st.floats(1e-6, 0.9))
    def test_monotone(self, e1, e2, d1, d2):
        e_lo, e_hi = sorted((e1, e2))
        d_lo, d_hi = sorted((d1, d2))
        assert sample_bound(SampleBoundParams(e_lo, d_lo)) >= sample_bound(SampleBoundParams(e_hi, d_lo))
        assert sample_bound(SampleBoundParams(e_lo, d_lo)) >= sample_bound(SampleBoundParams(e_lo, d_hi))


class TestStore:
    def test_designated_subset(self):
        assert designated_subset(Family(3, (1,)), 5, 2) == (0, 1, 3)
        assert designated_subset(Family(0, ()), 5, 2) == (0, 1, 2)
        assert designated_subset(Family(4, (2, 3)), 5, 2) == (2, 3, 4)

    def test_zero_samples(self):
        store = SampleStore(3, 1)
        add_samples(store, (0, 1), 0, NetSampler(copy_chain(3), 0))
        assert store.count((0, 1)) == 0 and store.total_draws == 0

    def test_deterministic_net(self):
        net = copy_chain(3, p_root=0.0)
        store = add_samples(SampleStore(3, 2), (0, 1, 2), 1000, NetSampler(net, 0))
        t = store.tables[(0, 1, 2)]
        assert np.count_nonzero(t) == 1 and t.sum() == 1000

    def test_split_equals_single(self):
        net = positive_net(4, 2, 3)
        a, b = SampleStore(4, 2), SampleStore(4, 2)
        src = NetSampler(net, 7)
        add_samples(a, (0, 2, 3), 500, src)
        add_samples(a, (0, 2, 3), 500, src)
        add_samples(b, (0, 2, 3), 1000, NetSampler(net, 7))
        assert np.array_equal(a.tables[(0, 2, 3)], b.tables[(0, 2, 3)])
        assert a.total_draws == 1000

    def test_wrong_subset_size(self):
        with pytest.raises(ValueError):
            add_samples(SampleStore(4, 2), (0, 1), 10, NetSampler(positive_net(4, 2, 0), 0))

    def test_snapshot_round_trip(self, tmp_path):
        store = SampleStore(4, 2)
        add_samples(store, (0, 1, 2), 300, NetSampler(positive_net(4, 2, 1), 0))
        store.save(tmp_path / "s.json")
        back = SampleStore.load(tmp_path / "s.json")
        assert back.total_draws == store.total_draws
        assert np.array_equal(back.tables[(0, 1, 2)], store.tables[(0, 1, 2)])


class TestEmpiricalScore:
    def test_functional_chain(self):
        net = copy_chain(3, p_root=0.3)
        store = add_samples(SampleStore(3, 2), (0, 1, 2), 2000, NetSampler(net, 0))
        root = plugin_conditional_entropy(store, Family(0, ()))
        assert empirical_score(store, net.structure) == pytest.approx(-root, abs=1e-12)

    def test_uniform_empty_graph(self):
        store = SampleStore(2, 1)
        store.tables[(0, 1)] = np.full((2, 2), 25, dtype=np.int64)
        assert empirical_score(store, Dag.empty(2)) == pytest.approx(-2 * math.log(2), abs=1e-12)

    def test_decomposes(self):
        net = positive_net(3, 1, 5)
        store = SampleStore(3, 1)
        for s in [(0, 1), (0, 2), (1, 2)]:
            add_samples(store, s, 400, NetSampler(net, s[0] * 10 + s[1]))
        g = Dag.from_edges(3, [(0, 1), (1, 2)])
        before = empirical_score(store, g)
        f = Family(2, (1,))
        old = plugin_conditional_entropy(store, f)
        store.tables[(1, 2)] = store.tables[(1, 2)] + np.array([[30, 0], [0, 5]])
        delta = plugin_conditional_entropy(store, f) - old
        assert empirical_score(store, g) == pytest.approx(before - delta, abs=1e-12)


def plugin_many(table_counts: np.ndarray) -> np.ndarray:
    """Vectorized plug-in H(A|B) for count rows over cells (a, b) flattened a-major."""
    n = table_counts.sum(axis=1, keepdims=True)
    p = table_counts / n
    pb = p.reshape(len(p), 2, 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        hj = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
        hb = -np.where(pb > 0, pb * np.log(pb), 0.0).sum(axis=1)
    return hj - hb


JOINT = np.array([0.3, 0.1, 0.2, 0.4])  # P(a, b), a-major


def exact_h() -> float:
    pb = JOINT.reshape(2, 2).sum(axis=0)
    return float(-(JOINT * np.log(JOINT)).sum() + (pb * np.log(pb)).sum())


def test_bias_within_bound():
    n, reps = 100, 100_000
    draws = np.random.default_rng(0).multinomial(n, JOINT, size=reps)
    err = plugin_many(draws) - exact_h()
    se = err.std(ddof=1) / math.sqrt(reps)
    assert -(2 - 1) * 2 / n - 3 * se <= err.mean() <= 3 * se


def test_concentration():
    eps, delta = 0.05, 0.01
    n = sample_bound(SampleBoundParams(eps, delta, 2, 2))
    reps = 1000
    draws = np.random.default_rng(1).multinomial(n, JOINT, size=reps)
    frac = float((np.abs(plugin_many(draws) - exact_h()) > eps).mean())
    assert frac <= delta + 3 * math.sqrt(delta * (1 - delta) / reps)
