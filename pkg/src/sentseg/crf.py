"""Linear-chain CRF over virtual logits.

Paths are scored as start[y_1] + sum_t g_t[y_t] + sum_t trans[y_{t-1}, y_t]
+ end[y_N].  Explicit start/end score vectors make the distribution exactly
enumerable for the brute-force tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor, accumulate
from .errors import InvalidInputError


@dataclass
class CrfParams:
    trans: Tensor  # (S, S), from-tag -> to-tag
    start: Tensor  # (S,)
    end: Tensor  # (S,)

    @property
    def num_tags(self) -> int:
        return self.start.data.shape[0]

    @classmethod
    def zeros(cls, num_tags: int, requires_grad: bool = True) -> "CrfParams":
        return cls(
            Tensor(np.zeros((num_tags, num_tags)), requires_grad=requires_grad),
            Tensor(np.zeros(num_tags), requires_grad=requires_grad),
            Tensor(np.zeros(num_tags), requires_grad=requires_grad),
        )


def _logits_array(logits) -> np.ndarray:
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise InvalidInputError(f"logits must be (N, S) with N >= 1, got {data.shape}")
    return np.ascontiguousarray(data)


def log_partition(logits, params: CrfParams) -> float:
    g = _logits_array(logits)
    log_z, _ = kernels.crf_forward(g, params.trans.data, params.start.data, params.end.data)
    return float(log_z)


def path_score(logits, tags, params: CrfParams) -> float:
    g = _logits_array(logits)
    tags = _check_tags(tags, g.shape)
    score = params.start.data[tags[0]] + params.end.data[tags[-1]]
    score += g[np.arange(len(tags)), tags].sum()
    score += params.trans.data[tags[:-1], tags[1:]].sum()
    return float(score)


def _check_tags(tags, shape) -> np.ndarray:
    tags = np.asarray(tags, dtype=np.int64)
    n, s = shape
    if tags.shape != (n,):
        raise InvalidInputError(f"expected {n} tags, got shape {tags.shape}")
    if tags.size and (tags.min() < 0 or tags.max() >= s):
        raise InvalidInputError(f"tag index out of range for {s} tags")
    return tags


def nll_loss(logits, tags, params: CrfParams) -> Tensor:
    """Negative log-likelihood of the gold path, differentiable w.r.t. the
    logits and all CRF parameters."""
    g_tensor = logits if isinstance(logits, Tensor) else Tensor(logits)
    g = _logits_array(g_tensor)
    tags = _check_tags(tags, g.shape)
    trans, start, end = params.trans, params.start, params.end
    log_z, alpha = kernels.crf_forward(g, trans.data, start.data, end.data)
    gold = path_score(g, tags, params)
    n = g.shape[0]

    def _bw(grad):
        scalar = float(grad)
        unary, pairwise = kernels.crf_posteriors(
            g, trans.data, start.data, end.data, alpha, log_z
        )
        d_logits = unary.copy()
        d_logits[np.arange(n), tags] -= 1.0
        accumulate(g_tensor, d_logits * scalar)
        d_trans = pairwise.sum(axis=0)
        np.add.at(d_trans, (tags[:-1], tags[1:]), -1.0)
        accumulate(trans, d_trans * scalar)
        d_start = unary[0].copy()
        d_start[tags[0]] -= 1.0
        accumulate(start, d_start * scalar)
        d_end = unary[-1].copy()
        d_end[tags[-1]] -= 1.0
        accumulate(end, d_end * scalar)

    return Tensor(log_z - gold, parents=(g_tensor, trans, start, end), backward=_bw)


def viterbi(logits, params: CrfParams) -> np.ndarray:
    """Best-scoring tag path; ties break toward the lowest tag index."""
    g = _logits_array(logits)
    path, _ = kernels.crf_viterbi(g, params.trans.data, params.start.data, params.end.data)
    return path


def viterbi_with_score(logits, params: CrfParams) -> tuple[np.ndarray, float]:
    g = _logits_array(logits)
    path, score = kernels.crf_viterbi(
        g, params.trans.data, params.start.data, params.end.data
    )
    return path, float(score)


def marginals(logits, params: CrfParams) -> np.ndarray:
    """Per-position tag posteriors via forward-backward; rows sum to 1."""
    g = _logits_array(logits)
    log_z, alpha = kernels.crf_forward(g, params.trans.data, params.start.data, params.end.data)
    unary, _ = kernels.crf_posteriors(
        g, params.trans.data, params.start.data, params.end.data, alpha, log_z
    )
    return unary
