import numpy as np
import pytest
from scipy import stats

from socialrank.data import ObservedSets, SignedSocialGraph
from socialrank.sampler import (
    SOCIAL,
    UNCONDITIONAL,
    NegativePools,
    SamplerConfig,
    draw_negatives,
    eligible_negatives,
)


def example():
    # items 1..6 map to 0..5; user 0 observes {1,2}, friend 1 {2,3}, foe 2 {4}
    obs = ObservedSets(6, [np.array([0, 1]), np.array([1, 2]), np.array([3])])
    graph = SignedSocialGraph(3, ((1,), (), ()), ((2,), (), ()))
    return obs, graph


def test_eligible_example():
    obs, graph = example()
    assert (eligible_negatives(0, obs, graph) + 1).tolist() == [5, 6]


def test_eligible_without_graph_is_unobserved():
    obs, _ = example()
    empty = SignedSocialGraph.empty(3)
    assert eligible_negatives(0, obs, empty).tolist() == obs.unobserved(0).tolist()


def test_eligible_can_be_empty():
    obs = ObservedSets(3, [np.array([0]), np.array([1]), np.array([2])])
    graph = SignedSocialGraph(3, ((1,), (), ()), ((2,), (), ()))
    assert len(eligible_negatives(0, obs, graph)) == 0
    pools = NegativePools(obs, graph, SOCIAL)
    assert pools.fallback[0] and pools.pools[0].tolist() == [1, 2]


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(negatives_per_positive=0)
    with pytest.raises(ValueError):
        SamplerConfig(mode="weird")


def test_exhaustion_returns_pool_once():
    out = draw_negatives(0, 2, SamplerConfig(), np.array([4, 5]), np.random.default_rng(0))
    assert sorted(out.tolist()) == [4, 5]


def test_empty_pool_is_empty_draw():
    out = draw_negatives(0, 1, SamplerConfig(), np.array([], dtype=int), np.random.default_rng(0))
    assert len(out) == 0


def test_size_and_distinct():
    rng = np.random.default_rng(1)
    pool = np.arange(100)
    for count in (1, 3, 7):
        out = draw_negatives(0, count, SamplerConfig(negatives_per_positive=5), pool, rng)
        assert len(out) == min(count * 5, 100) == len(set(out.tolist()))


def test_two_item_frequency():
    rng = np.random.default_rng(2)
    cfg = SamplerConfig(negatives_per_positive=1)
    pool = np.array([4, 5])
    draws = np.array([draw_negatives(0, 1, cfg, pool, rng)[0] for _ in range(100000)])
    assert abs((draws == 4).mean() - 0.5) < 0.01


def test_unconditional_vs_social():
    obs, graph = example()
    social = NegativePools(obs, graph, SOCIAL).pools[0]
    uncond = NegativePools(obs, graph, UNCONDITIONAL).pools[0]
    assert 2 in uncond.tolist() and 2 not in social.tolist()


def test_chi_square_uniform_20():
    rng = np.random.default_rng(3)
    cfg = SamplerConfig(negatives_per_positive=1)
    pool = np.arange(20)
    draws = np.array([draw_negatives(0, 1, cfg, pool, rng)[0] for _ in range(50000)])
    assert stats.chisquare(np.bincount(draws, minlength=20)).pvalue > 0.01


def test_seeded_determinism():
    pool = np.arange(50)
    a = draw_negatives(0, 3, SamplerConfig(), pool, np.random.default_rng(7))
    b = draw_negatives(0, 3, SamplerConfig(), pool, np.random.default_rng(7))
    assert np.array_equal(a, b)
