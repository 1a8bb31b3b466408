import math

import numpy as np
import numpy.testing as npt
import pytest

from sentseg.autodiff import Tensor, finite_diff_check, mean_, sum_
from sentseg.corpus import TaggedSequence, make_token
from sentseg.errors import InvalidInputError
from sentseg.layers import (
    AttentionParams,
    BiLstmParams,
    LstmDirParams,
    attention_weights,
    bilstm,
    embed,
    init_attention,
    init_bilstm,
    lstm_direction,
    self_attention_block,
    stacked_bilstm,
)
from sentseg.vocab import FIELDS, GRAMS, VocabConfig, build_vocab, extract_ngrams


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def dir_params(w_ih, w_hh, b):
    return LstmDirParams(Tensor(w_ih), Tensor(w_hh), Tensor(b))


class TestLstm:
    def test_zero_weights_give_zero_outputs(self):
        p = dir_params(np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))
        out = lstm_direction(Tensor(np.random.default_rng(0).normal(size=(5, 3))), p)
        npt.assert_array_equal(out.data, np.zeros((5, 2)))

    def test_scalar_two_step_hand_oracle(self):
        # 1-dim input and hidden; recompute both steps with plain arithmetic
        w_ih = np.array([[0.5, -0.3, 0.8, 0.2]])
        w_hh = np.array([[0.1, 0.4, -0.2, 0.3]])
        b = np.array([0.05, 1.0, -0.1, 0.0])
        xs = [0.7, -1.2]

        h_prev = c_prev = 0.0
        expected = []
        for x in xs:
            pre = [x * w_ih[0, k] + b[k] + h_prev * w_hh[0, k] for k in range(4)]
            i, f = sigmoid(pre[0]), sigmoid(pre[1])
            g, o = math.tanh(pre[2]), sigmoid(pre[3])
            c_prev = f * c_prev + i * g
            h_prev = o * math.tanh(c_prev)
            expected.append(h_prev)

        p = dir_params(w_ih, w_hh, b)
        out = lstm_direction(Tensor(np.array(xs).reshape(2, 1)), p)
        npt.assert_allclose(out.data[:, 0], expected, atol=1e-12)

    def test_direction_symmetry(self):
        rng = np.random.default_rng(1)
        p = dir_params(
            rng.uniform(-0.5, 0.5, (3, 12)),
            rng.uniform(-0.5, 0.5, (3, 12)),
            rng.uniform(-0.5, 0.5, 12),
        )
        x = rng.normal(size=(6, 3))
        forward_on_reversed = lstm_direction(Tensor(x[::-1].copy()), p).data[::-1]
        backward_pass = lstm_direction(Tensor(x), p, reverse=True).data
        npt.assert_allclose(forward_on_reversed, backward_pass, atol=1e-14)

    def test_single_step_directions_agree(self):
        rng = np.random.default_rng(2)
        d = dir_params(
            rng.uniform(-1, 1, (2, 8)), rng.uniform(-1, 1, (2, 8)), rng.uniform(-1, 1, 8)
        )
        out = bilstm(Tensor(rng.normal(size=(1, 2))), BiLstmParams(d, d))
        npt.assert_allclose(out.data[0, :2], out.data[0, 2:], atol=1e-14)

    def test_bilstm_gradients(self):
        rng = np.random.default_rng(3)
        p = init_bilstm(rng, 3, 2)
        x = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        params = [x, p.fwd.w_ih, p.fwd.w_hh, p.fwd.b, p.bwd.w_ih, p.bwd.w_hh, p.bwd.b]

        def fn():
            return sum_(bilstm(x, p))

        assert finite_diff_check(fn, params, eps=1e-5) < 1e-4


class TestStackedBilstm:
    def test_k1_equals_bilstm(self):
        rng = np.random.default_rng(4)
        p = init_bilstm(rng, 3, 2)
        x = Tensor(rng.normal(size=(5, 3)))
        npt.assert_array_equal(stacked_bilstm(x, [p]).data, bilstm(x, p).data)

    def test_k2_equals_manual_composition(self):
        rng = np.random.default_rng(5)
        p1 = init_bilstm(rng, 3, 2)
        p2 = init_bilstm(rng, 4, 2)
        x = Tensor(rng.normal(size=(5, 3)))
        stacked = stacked_bilstm(x, [p1, p2])
        manual = bilstm(bilstm(x, p1), p2)
        npt.assert_array_equal(stacked.data, manual.data)

    def test_gradients(self):
        rng = np.random.default_rng(6)
        p1 = init_bilstm(rng, 2, 2)
        p2 = init_bilstm(rng, 4, 2)
        x = Tensor(rng.uniform(-1, 1, (3, 2)), requires_grad=True)
        params = [x, p1.fwd.w_ih, p1.bwd.w_hh, p2.fwd.w_ih, p2.bwd.b]

        def fn():
            return mean_(stacked_bilstm(x, [p1, p2]))

        assert finite_diff_check(fn, params, eps=1e-5) < 1e-4

    def test_empty_stack_rejected(self):
        with pytest.raises(InvalidInputError):
            stacked_bilstm(Tensor(np.zeros((2, 2))), [])


class TestAttention:
    def test_single_position_attends_to_itself(self):
        rng = np.random.default_rng(7)
        p = init_attention(rng, 3, 2, 4)
        w = attention_weights(rng.normal(size=(1, 3)), p)
        npt.assert_allclose(w, [[1.0]], atol=0)

    def test_identical_inputs_give_uniform_weights(self):
        rng = np.random.default_rng(8)
        p = init_attention(rng, 3, 2, 4)
        x = np.tile(rng.normal(size=(1, 3)), (5, 1))
        npt.assert_allclose(attention_weights(x, p), np.full((5, 5), 0.2), atol=1e-12)

    def test_weights_rows_sum_to_one(self):
        rng = np.random.default_rng(9)
        p = init_attention(rng, 4, 3, 4)
        w = attention_weights(rng.normal(size=(7, 4)), p)
        assert np.all(w >= 0)
        npt.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_two_position_hand_computation(self):
        # 1-dim projections; evaluate the formula directly
        wq, wk, wv = 0.7, -0.4, 1.3
        w_out = np.array([[0.5, -1.0], [2.0, 0.25], [-0.75, 0.5]])[:2]  # (P+D, out) = (2, 2)
        b_out = np.array([0.1, -0.2])
        x = np.array([[0.9], [-0.6]])

        q, k, v = x * wq, x * wk, x * wv
        scores = q @ k.T / math.sqrt(1.0)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights = e / e.sum(axis=1, keepdims=True)
        attended = weights @ v
        expected = np.concatenate([attended, x], axis=1) @ w_out + b_out

        p = AttentionParams(
            Tensor([[wq]]), Tensor([[wk]]), Tensor([[wv]]), Tensor(w_out), Tensor(b_out)
        )
        out = self_attention_block(Tensor(x), p)
        npt.assert_allclose(out.data, expected, atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(10)
        p = init_attention(rng, 3, 2, 3)
        x = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        params = [x, p.w_query, p.w_key, p.w_value, p.w_out, p.b_out]

        def fn():
            return mean_(self_attention_block(x, p))

        assert finite_diff_check(fn, params, eps=1e-5) < 1e-4


class TestEmbed:
    def make(self):
        seqs = [
            TaggedSequence(tuple(make_token(w, "N") for w in "abca"), None),
            TaggedSequence(tuple(make_token(w, "V") for w in "cb"), None),
        ]
        vocab = build_vocab(seqs, VocabConfig(1, 1))
        rng = np.random.default_rng(11)
        dims = {"uni": (4, 2, 2), "bi": (3, 1, 1), "tri": (3, 1, 1)}
        tables = {
            (gram, fld): Tensor(
                rng.uniform(-0.1, 0.1, (vocab.size(gram, fld), dims[gram][i])),
                requires_grad=True,
            )
            for gram in GRAMS
            for i, fld in enumerate(FIELDS)
        }
        return seqs, vocab, tables

    def test_concat_widths(self):
        seqs, vocab, tables = self.make()
        out = embed(extract_ngrams(seqs[0], vocab), tables)
        assert out["uni"].data.shape == (4, 8)
        assert out["bi"].data.shape == (4, 5)
        assert out["tri"].data.shape == (4, 5)

    def test_unknown_token_uses_unk_row(self):
        seqs, vocab, tables = self.make()
        unseen = TaggedSequence((make_token("zzz", "N"),), None)
        out = embed(extract_ngrams(unseen, vocab), tables)
        unk_word = tables[("uni", "word")].data[1]
        npt.assert_array_equal(out["uni"].data[0, :4], unk_word)

    def test_identical_tokens_identical_vectors(self):
        seqs, vocab, tables = self.make()
        out = embed(extract_ngrams(seqs[0], vocab), tables)
        # "a" appears at positions 0 and 3 with the same POS
        npt.assert_array_equal(out["uni"].data[0], out["uni"].data[3])
