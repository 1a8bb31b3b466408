"""Neural building blocks: n-gram embeddings, (stacked) BiLSTM, self-attention.

The LSTM time sweep runs through the fused kernels (numba or numpy backend);
everything else composes autodiff primitives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import (
    Tensor,
    accumulate,
    add,
    concat,
    dropout,
    gather_rows,
    matmul,
    scale,
    softmax,
    transpose,
)
from .errors import InvalidInputError
from .vocab import FIELDS, GRAMS, NgramView

# ---------------------------------------------------------------------------
# parameter containers and initialization


@dataclass
class LstmDirParams:
    w_ih: Tensor  # (input_dim, 4H)
    w_hh: Tensor  # (H, 4H)
    b: Tensor  # (4H,)


@dataclass
class BiLstmParams:
    fwd: LstmDirParams
    bwd: LstmDirParams


@dataclass
class AttentionParams:
    w_query: Tensor  # (input_dim, P)
    w_key: Tensor  # (input_dim, P)
    w_value: Tensor  # (input_dim, P)
    w_out: Tensor  # (P + input_dim, out_dim)
    b_out: Tensor  # (out_dim,)


def uniform_embedding(rng: np.random.Generator, rows: int, dim: int) -> Tensor:
    return Tensor(rng.uniform(-0.1, 0.1, (rows, dim)), requires_grad=True)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, (fan_in, fan_out)), requires_grad=True)


def init_lstm_direction(rng: np.random.Generator, input_dim: int, hidden: int) -> LstmDirParams:
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return LstmDirParams(
        w_ih=xavier_uniform(rng, input_dim, 4 * hidden),
        w_hh=xavier_uniform(rng, hidden, 4 * hidden),
        b=Tensor(b, requires_grad=True),
    )


def init_bilstm(rng: np.random.Generator, input_dim: int, hidden: int) -> BiLstmParams:
    return BiLstmParams(
        init_lstm_direction(rng, input_dim, hidden),
        init_lstm_direction(rng, input_dim, hidden),
    )


def init_attention(
    rng: np.random.Generator, input_dim: int, proj_dim: int, out_dim: int
) -> AttentionParams:
    return AttentionParams(
        w_query=xavier_uniform(rng, input_dim, proj_dim),
        w_key=xavier_uniform(rng, input_dim, proj_dim),
        w_value=xavier_uniform(rng, input_dim, proj_dim),
        w_out=xavier_uniform(rng, proj_dim + input_dim, out_dim),
        b_out=Tensor(np.zeros(out_dim), requires_grad=True),
    )


# ---------------------------------------------------------------------------
# embedding lookup


def embed(view: NgramView, tables: dict[tuple[str, str], Tensor]) -> dict[str, Tensor]:
    """Per-gram embeddings: concat of word, POS and type lookups (N, D_gram)."""
    out = {}
    for gram in GRAMS:
        parts = [gather_rows(tables[(gram, field)], view.ids[(gram, field)]) for field in FIELDS]
        out[gram] = concat(parts, axis=1)
    return out


# ---------------------------------------------------------------------------
# recurrent layers


def lstm_direction(x: Tensor, params: LstmDirParams, reverse: bool = False) -> Tensor:
    """One LSTM direction over a (N, D) sequence as a fused tape node."""
    pre = add(matmul(x, params.w_ih), params.b)
    pre_data = pre.data[::-1] if reverse else pre.data
    h, c, gates = kernels.lstm_sequence_forward(
        np.ascontiguousarray(pre_data), params.w_hh.data
    )
    out_data = h[::-1].copy() if reverse else h

    def _bw(grad):
        dh = grad[::-1] if reverse else grad
        dpre, dw_hh = kernels.lstm_sequence_backward(
            np.ascontiguousarray(dh), gates, c, h, params.w_hh.data
        )
        if reverse:
            dpre = dpre[::-1]
        accumulate(pre, dpre)
        accumulate(params.w_hh, dw_hh)

    return Tensor(out_data, parents=(pre, params.w_hh), backward=_bw)


def bilstm(x: Tensor, params: BiLstmParams) -> Tensor:
    """Bidirectional LSTM; output at t concatenates both directions (N, 2H)."""
    if x.data.shape[0] < 1:
        raise InvalidInputError("bilstm needs a nonempty sequence")
    return concat(
        [lstm_direction(x, params.fwd, reverse=False),
         lstm_direction(x, params.bwd, reverse=True)],
        axis=1,
    )


def dropout_train(
    x: Tensor, rate: float, train: bool, rng: np.random.Generator | None
) -> Tensor:
    """Fresh inverted-dropout mask in train mode; identity otherwise."""
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise InvalidInputError("training-mode dropout needs an rng")
    mask = (rng.random(x.data.shape) >= rate).astype(np.float64)
    return dropout(x, mask, rate)


def stacked_bilstm(
    x: Tensor,
    layers: list[BiLstmParams],
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """K stacked BiLSTM layers, dropout between consecutive layers."""
    if not layers:
        raise InvalidInputError("stacked_bilstm needs at least one layer")
    out = x
    for i, layer in enumerate(layers):
        if i > 0:
            out = dropout_train(out, dropout_rate, train, rng)
        out = bilstm(out, layer)
    return out


# ---------------------------------------------------------------------------
# attention


def self_attention_block(x: Tensor, params: AttentionParams) -> Tensor:
    """Scaled dot-product self-attention with an output projection over
    concat(attended, input)."""
    if x.data.shape[0] < 1:
        raise InvalidInputError("attention needs a nonempty sequence")
    q = matmul(x, params.w_query)
    k = matmul(x, params.w_key)
    v = matmul(x, params.w_value)
    d_k = params.w_query.data.shape[1]
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    attended = matmul(weights, v)
    return linear(concat([attended, x], axis=1), params.w_out, params.b_out)


def attention_weights(x: np.ndarray, params: AttentionParams) -> np.ndarray:
    """Attention weight matrix only (for tests and inspection)."""
    q = x @ params.w_query.data
    k = x @ params.w_key.data
    scores = q @ k.T / math.sqrt(params.w_query.data.shape[1])
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return add(out, b) if b is not None else out
