import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from depressionnet import tensor as T
from depressionnet.layers import (BiGRU, CNNBlock, EmbeddingTable, GruParams, StackedBiGRU,
                                  attention, cnn_output_length, embed_summary, final_states,
                                  gru_cell, read_word2vec, run_gru, write_word2vec)
from depressionnet.model import DepressionNet, ModelConfig
from depressionnet.summarize import Summary

from .gradcases import LAYER_CASES, worst_error

rng0 = lambda s=0: np.random.default_rng(s)  # noqa: E731


# ---------------------------------------------------------------- embeddings

def test_lookup_and_oov():
    table = EmbeddingTable(["sad", "day"], np.arange(6.0).reshape(3, 2))
    X = embed_summary(Summary(("sad", "day", "sad")), table)
    np.testing.assert_array_equal(X.data, [[2, 3], [4, 5], [2, 3]])
    X = embed_summary(Summary(("sad", "zebra", "day")), table)
    np.testing.assert_array_equal(X.data[1], table.matrix.data[0])


def test_short_summary_padded_with_oov_row():
    table = EmbeddingTable(["a"], np.array([[0.0, 0.0], [1.0, 1.0]]))
    X = embed_summary(Summary(("a",)), table)
    assert X.shape == (3, 2)
    np.testing.assert_array_equal(X.data, [[1, 1], [0, 0], [0, 0]])
    with pytest.raises(ValueError):
        embed_summary(Summary(()), table)


def test_word2vec_round_trip(tmp_path):
    (tmp_path / "v.txt").write_text("2 3\nsad 0.25 -1.5 3\nday 1e-3 0 2.5\n")
    words, matrix = read_word2vec(tmp_path / "v.txt")
    table = EmbeddingTable.from_word2vec(tmp_path / "v.txt", rng=rng0())
    X = embed_summary(Summary(("sad", "day", "sad")), table)
    np.testing.assert_array_equal(X.data, [[0.25, -1.5, 3], [1e-3, 0, 2.5], [0.25, -1.5, 3]])
    write_word2vec(tmp_path / "w.txt", words, matrix)
    assert read_word2vec(tmp_path / "w.txt")[1].tobytes() == matrix.tobytes()


def test_word2vec_header_checked(tmp_path):
    (tmp_path / "v.txt").write_text("3 2\nsad 1 2\n")
    with pytest.raises(ValueError, match="declares 3"):
        read_word2vec(tmp_path / "v.txt")


# ---------------------------------------------------------------- CNN block

def test_cnn_shape_law_with_default_window_and_pool():
    block = CNNBlock(5, 4, rng0(), window=3, pool=4)
    assert block(T.Tensor(np.ones((2, 10, 5)))).shape == (2, 2, 4)
    assert cnn_output_length(10, 3, 4) == 2
    for n in range(6, 40):
        assert block(T.Tensor(np.ones((1, n, 5)))).shape[1] == (n - 2) // 4


def test_cnn_zero_weights_give_zero_output():
    block = CNNBlock(5, 4, rng0())
    for p in block.params():
        p.data[...] = 0.0
    out = block(T.Tensor(rng0().normal(size=(2, 12, 5))))
    assert np.all(out.data == 0.0)


def test_cnn_rejects_short_input():
    with pytest.raises(T.ShapeError):
        CNNBlock(5, 4, rng0())(T.Tensor(np.ones((1, 2, 5))))


# ---------------------------------------------------------------- GRU

def test_gru_zero_params_closed_form():
    p = GruParams(3, 4, rng0())
    p.zero_()
    h = np.array([[1.0, -2.0, 0.5, 4.0]])
    np.testing.assert_array_equal(gru_cell(np.ones((1, 3)), h, p).data, 0.5 * h)
    np.testing.assert_array_equal(gru_cell(np.ones((1, 3)), np.zeros((1, 4)), p).data, 0.0)


def test_gru_matches_gate_equations():
    rng = rng0(2)
    p = GruParams(3, 2, rng)
    x, h = rng.normal(size=(1, 3)), rng.normal(size=(1, 2))
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    z = sig(x @ p.W_z.data + h @ p.U_z.data + p.b_z.data)
    r = sig(x @ p.W_r.data + h @ p.U_r.data + p.b_r.data)
    cand = np.tanh(x @ p.W_h.data + (r * h) @ p.U_h.data + p.b_h.data)
    np.testing.assert_allclose(gru_cell(x, h, p).data, (1 - z) * h + z * cand, rtol=1e-12)


def test_gru_shape_mismatch():
    with pytest.raises(T.ShapeError):
        gru_cell(np.ones((1, 2)), np.zeros((1, 4)), GruParams(3, 4, rng0()))


def test_bigru_length_one():
    layer = BiGRU(3, 2, rng0())
    x = rng0(1).normal(size=(1, 1, 3))
    H = layer(T.Tensor(x)).data
    np.testing.assert_allclose(H[0, 0, :2], gru_cell(x[:, 0], np.zeros((1, 2)), layer.fwd).data[0])
    np.testing.assert_allclose(H[0, 0, 2:], gru_cell(x[:, 0], np.zeros((1, 2)), layer.bwd).data[0])


def test_bigru_direction_symmetry():
    layer = BiGRU(3, 2, rng0())
    X = T.Tensor(rng0(1).normal(size=(2, 6, 3)))
    fwd_on_reversed = run_gru(T.flip(X, 1), layer.bwd).data
    bwd_on_original = run_gru(X, layer.bwd, reverse=True).data
    np.testing.assert_allclose(fwd_on_reversed, bwd_on_original[:, ::-1], rtol=1e-12)


def test_bigru_zero_params_and_empty_input():
    layer = BiGRU(3, 2, rng0())
    for p in layer.params():
        p.data[...] = 0.0
    assert np.all(layer(T.Tensor(np.ones((1, 5, 3)))).data == 0.0)
    with pytest.raises(T.ShapeError):
        layer(T.Tensor(np.ones((1, 0, 3))))


def test_final_states_pick_last_forward_and_first_backward():
    H = T.Tensor(np.arange(24.0).reshape(1, 3, 8))
    np.testing.assert_array_equal(final_states(H, 4).data, [[16, 17, 18, 19, 4, 5, 6, 7]])


def test_single_layer_stack_is_bigru_bitwise():
    X = T.Tensor(rng0(3).normal(size=(2, 4, 5)))
    a = StackedBiGRU(5, 3, rng0(7), layers=1)(X).data
    b = BiGRU(5, 3, rng0(7))(X).data
    assert a.tobytes() == b.tobytes()


def test_residual_passthrough_with_zero_second_layer():
    stack = StackedBiGRU(5, 3, rng0(), layers=2)
    for p in stack.layers[1].params():
        p.data[...] = 0.0
    X = T.Tensor(rng0(4).normal(size=(2, 4, 5)))
    np.testing.assert_array_equal(stack(X).data, stack.layers[0](X).data)
    assert stack.proj == [None, None]


def test_deeper_stack_keeps_identity_residuals():
    stack = StackedBiGRU(5, 3, rng0(), layers=3)
    assert stack.proj[0] is None and stack.proj[1] is None
    assert stack(T.Tensor(np.ones((1, 4, 5)))).shape == (1, 4, 6)
    with pytest.raises(ValueError):
        StackedBiGRU(5, 3, rng0(), layers=0)


# ---------------------------------------------------------------- attention

def test_attention_single_step():
    H = rng0().normal(size=(2, 1, 4))
    s, a = attention(H)
    np.testing.assert_array_equal(a.data, 1.0)
    np.testing.assert_array_equal(s.data, H[:, 0])


def test_attention_identical_rows():
    h = rng0().normal(size=4)
    s, a = attention(np.tile(h, (1, 5, 1)))
    np.testing.assert_allclose(a.data, 0.2, rtol=1e-12)
    np.testing.assert_allclose(s.data[0], h, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 3), st.integers(1, 9), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_attention_weights_normalised_and_convex(H):
    s, a = attention(H)
    np.testing.assert_allclose(a.data.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert np.all(s.data >= H.min(axis=1) - 1e-9) and np.all(s.data <= H.max(axis=1) + 1e-9)


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("case", LAYER_CASES, ids=lambda c: c.__name__)
def test_layer_gradients_match_finite_differences(case):
    for seed in range(2):
        assert worst_error(case, seed) <= 1e-4


# ---------------------------------------------------------------- configured sizes

def test_summary_bigru_hidden_32():
    cfg = ModelConfig()
    net = DepressionNet(cfg, [29, 8, 10, 25], EmbeddingTable.random(["a"], 300, rng0()), rng0())
    assert net.bigru.hidden == 32 and net.bigru.fwd.U_z.shape == (32, 32)
    assert net.bigru.out_dim == 64


def test_behavior_stack_two_layers_of_64():
    cfg = ModelConfig()
    net = DepressionNet(cfg, [29, 8, 10, 25], EmbeddingTable.random(["a"], 300, rng0()), rng0())
    assert len(net.stacked.layers) == 2
    assert all(layer.hidden == 64 for layer in net.stacked.layers)
    assert net.stacked.layers[1].fwd.W_z.shape == (128, 64)


def test_cnn_window_3_pool_4():
    cfg = ModelConfig()
    assert (cfg.window, cfg.pool) == (3, 4)
    net = DepressionNet(cfg, [29, 8, 10, 25], EmbeddingTable.random(["a"], 300, rng0()), rng0())
    assert net.cnn.conv_w.shape == (3, 300, 64) and net.cnn.pool == 4
