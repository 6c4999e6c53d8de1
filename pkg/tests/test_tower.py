import math

import numpy as np
import pytest

from _oracles import max_relative_error, random_batch, random_scorer
from socialrank.tower import (
    LinearScorer,
    ShapeError,
    TowerNetwork,
    load_checkpoint,
    relation_probability,
    sigmoid,
    softplus,
    tower_widths,
)


def test_widths_default():
    assert tower_widths(256, 4) == [256, 128, 64, 32, 16]


@pytest.mark.parametrize("d,h", [(4, 3), (8, 4), (6, 2)])
def test_widths_rejected(d, h):
    with pytest.raises(ShapeError):
        tower_widths(d, h)


def test_tower_needs_hidden_layer():
    with pytest.raises(ShapeError):
        TowerNetwork(np.ones((2, 4)), np.ones((3, 4)), h=0)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        TowerNetwork(np.ones((2, 4)), np.ones((3, 8)), h=1)


def test_stable_functions():
    z = np.array([-800.0, -1.0, 0.0, 1.0, 800.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[-1] == 1.0
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert np.allclose(softplus(z[1:4]), np.log1p(np.exp(z[1:4])), rtol=1e-12)
    assert softplus(np.array([-800.0]))[0] == 0.0
    assert softplus(np.array([800.0]))[0] == 800.0


def test_relation_probability():
    assert relation_probability(0.9, 0.1) == pytest.approx(0.9)
    assert relation_probability(0.5, 0.5) == 0.5


def test_equal_logits_loss_is_ln2():
    net = TowerNetwork(np.ones((3, 4)), np.ones((5, 4)), h=2, seed=0)
    u, i, j = [0, 1, 2, 0], [0, 1, 2, 3], [4, 3, 2, 1]
    loss, _ = net.loss_and_gradients(u, i, j, lam=0.0)
    assert abs(loss - 4 * math.log(2)) < 1e-10


@pytest.mark.parametrize("kind,train_emb", [("tower", False), ("tower", True), ("linear", True)])
def test_gradients_match_finite_differences(kind, train_emb):
    rng = np.random.default_rng(0)
    for _ in range(3):
        net = random_scorer(rng, kind, train_embeddings=train_emb)
        u, i, j = random_batch(rng, net)
        assert max_relative_error(net, u, i, j, lam=0.01) < 1e-4


def test_untied_gradients():
    rng = np.random.default_rng(1)
    net = random_scorer(rng, "tower", tie_item_branches=False)
    assert "W1_pos" in net.params and "W1_neg" in net.params
    u, i, j = random_batch(rng, net)
    assert max_relative_error(net, u, i, j, lam=0.01) < 1e-4


def test_penalty_only_batch_entities():
    net = TowerNetwork(np.ones((3, 4)), np.ones((5, 4)), h=1, seed=0,
                       user_bias=np.arange(3.0), item_bias=np.arange(5.0))
    layers = sum(float((net.params[n] ** 2).sum()) for n in net.layer_names())
    assert net.l2_penalty([1], [2], [4]) == pytest.approx(layers + 1 + 4 + 16)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_gradient_names_parameter():
    net = TowerNetwork(np.ones((2, 4)), np.ones((3, 4)), h=1, seed=0)
    net.params["b_item"][0] = np.inf
    with pytest.raises(FloatingPointError):
        net.loss_and_gradients([0], [0], [1], 0.0)


def test_score_all_items_ties_by_id():
    net = LinearScorer(np.zeros((1, 2)), np.zeros((4, 2)))
    items, probs = net.score_all_items(0)
    assert items.tolist() == [0, 1, 2, 3]
    assert np.all(probs == 0.5)
    net.params["b_item"][:] = [0.0, 1.0, 1.0, -1.0]
    assert net.score_all_items(0)[0].tolist() == [1, 2, 0, 3]
    assert net.score_all_items(0, candidates=[3, 0])[0].tolist() == [0, 3]


def test_user_item_logits_consistent_with_forward():
    rng = np.random.default_rng(5)
    net = random_scorer(rng, "tower")
    S = net.user_item_logits([1, 3])
    tr = net.forward([1, 3], [2, 6], [0, 0])
    assert np.allclose([S[0, 2], S[1, 6]], tr.s_ui)
    assert np.allclose([S[0, 0], S[1, 0]], tr.s_uj)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    for kind in ("tower", "linear"):
        net = random_scorer(rng, kind)
        net.save(tmp_path / f"{kind}.npz")
        back = load_checkpoint(tmp_path / f"{kind}.npz")
        assert type(back) is type(net) and back.equals(net)
        assert np.array_equal(back.user_item_logits([0, 1]), net.user_item_logits([0, 1]))


def test_copy_is_independent():
    rng = np.random.default_rng(7)
    net = random_scorer(rng, "tower")
    twin = net.copy()
    twin.params["b_item"][0] += 1
    assert not twin.same_parameters(net)
