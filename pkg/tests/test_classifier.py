import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from contdomain import autodiff as ad
from contdomain.autodiff import Tensor, finite_difference_check
from contdomain.classifier import COSINE, LINEAR, HiddenLayer, PredictionLayer, argmax_predict, \
    expand_prediction_row, forward_hidden, predict_scores


def layer_with(rows, mode=COSINE):
    layer = PredictionLayer(len(rows), len(rows[0]), np.random.default_rng(0), mode)
    layer.table.set_rows(np.array(rows, dtype=float), 0)
    return layer


def test_cosine_scores_example():
    layer = layer_with([[1.0, 0.0], [1.0, 1.0], [-3.0, 0.0]])
    s = predict_scores(Tensor(np.array([[2.0, 0.0]])), layer).value[0]
    np.testing.assert_allclose(s, [1.0, 1 / np.sqrt(2), -1.0])


def test_linear_scores_are_dot_products():
    layer = layer_with([[1.0, 2.0], [0.5, 0.0]], LINEAR)
    s = predict_scores(Tensor(np.array([[2.0, 1.0]])), layer).value[0]
    np.testing.assert_allclose(s, [4.0, 1.0])


def test_argmax_ties_go_to_lowest_index():
    assert list(argmax_predict(np.array([[0.2, 0.7, 0.7], [0.1, 0.1, 0.0]]))) == [1, 0]


def test_hidden_layer_is_selu_of_affine():
    layer = HiddenLayer(3, 2, np.random.default_rng(0))
    layer.weight.value[...] = [[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]]
    layer.bias.value[...] = [0.0, -1.0]
    out = forward_hidden(Tensor(np.array([[1.0, 2.0]])), Tensor(np.array([[0.5]])), layer).value[0]
    pre = np.array([1.5, 0.5])
    assert out[0] == pytest.approx(ad.SELU_SCALE * pre[0])
    assert out[1] == pytest.approx(ad.SELU_SCALE * pre[1])
    with pytest.raises(ValueError):
        forward_hidden(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 2))), layer)


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        PredictionLayer(2, 2, np.random.default_rng(0), "softmax")


def test_expand_prediction_row():
    layer = PredictionLayer(3, 4, np.random.default_rng(0))
    old = layer.table.value.copy()
    expand_prediction_row(layer, np.random.default_rng(1))
    assert layer.n_domains == 4
    assert np.array_equal(layer.table.value[:3], old)
    assert [p.name for p in layer.table.trainable_parameters()] == ["prediction.row3"]


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, (4, 5), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, (3, 1), elements=st.floats(1e-3, 1e3)))
def test_cosine_bounded_and_invariant_to_positive_row_scale(h, w, c):
    layer = layer_with(w)
    s = predict_scores(Tensor(h), layer).value
    assert np.all(np.abs(s) <= 1.0 + 1e-12)
    # below the zero-norm guard the score is deliberately not scale free
    norms = np.linalg.norm(h, axis=1, keepdims=True) * np.linalg.norm(w, axis=1)
    assume(np.all(norms * c.min() > 1e-9))
    scaled = predict_scores(Tensor(h * c), layer).value
    np.testing.assert_allclose(s, scaled, atol=1e-9)


def test_head_gradient_check():
    rng = np.random.default_rng(5)
    hidden = HiddenLayer(4, 3, rng)
    layer = PredictionLayer(5, 3, rng)
    h_u, summ = Tensor(rng.normal(size=(2, 2))), Tensor(rng.normal(size=(2, 2)))
    w = Tensor(rng.normal(size=(2, 5)))
    params = hidden.parameters() + layer.parameters()
    err = finite_difference_check(
        lambda: ad.sum(ad.mul(predict_scores(forward_hidden(h_u, summ, hidden), layer), w)), params)
    assert err < 1e-6
