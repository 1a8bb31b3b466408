"""Cross-view training: primary softmax target, restricted-view auxiliary
predictions over masked inputs, and the KL consistency loss.

The primary distribution is a plain array (never a graph node), so no
gradient can flow into the full model through the target side.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    add_scalar,
    gather_rows,
    log,
    neg,
    no_grad,
    scale,
    softmax,
    sum_,
)
from .errors import InvalidInputError
from .model import SegmenterModel
from .vocab import NgramView, drop_tokens


@dataclass(frozen=True)
class CvtConfig:
    drop_rate: float = 0.30
    unlabeled_batches: int = 1  # B: unlabeled mini-batches per labeled one
    unlabeled_input_dropout: float = 0.50

    def __post_init__(self):
        if not 0.0 <= self.drop_rate < 1.0:
            raise InvalidInputError("drop_rate must lie in [0, 1)")
        if not 0.0 <= self.unlabeled_input_dropout < 1.0:
            raise InvalidInputError("unlabeled_input_dropout must lie in [0, 1)")
        if self.unlabeled_batches < 1:
            raise InvalidInputError("unlabeled_batches must be >= 1")


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def primary_distribution(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of the virtual logits; a constant target for CVT."""
    return softmax_rows(np.asarray(logits, dtype=np.float64))


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-row KL(p || q) with the 0 ln 0 = 0 convention (plain arrays)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=-1)


def _kl_term(p_rows: np.ndarray, q_rows: Tensor) -> Tensor:
    """Sum over rows of KL(p || q) with constant p and differentiable q."""
    entropy_part = float(np.sum(np.where(p_rows > 0.0, p_rows * np.log(p_rows), 0.0)))
    cross = sum_(scale(log(q_rows), p_rows))
    return add_scalar(neg(cross), entropy_part)


def aux_local_distribution(
    model: SegmenterModel,
    masked_view: NgramView,
    dropped: np.ndarray,
    rng: np.random.Generator | None = None,
    input_dropout: float = 0.0,
) -> Tensor:
    """Local-view distributions at the dropped timesteps (|D|, S)."""
    local_logits, _ = model.aux_logits(masked_view, rng, input_dropout)
    return softmax(gather_rows(local_logits, dropped), axis=-1)


def aux_distant_distribution(
    model: SegmenterModel,
    masked_view: NgramView,
    dropped: np.ndarray,
    rng: np.random.Generator | None = None,
    input_dropout: float = 0.0,
) -> Tensor:
    """Distant-view distributions at the dropped timesteps (|D|, S)."""
    _, distant_logits = model.aux_logits(masked_view, rng, input_dropout)
    return softmax(gather_rows(distant_logits, dropped), axis=-1)


def cvt_loss(p_primary: np.ndarray, p_local: Tensor, p_distant: Tensor) -> Tensor:
    """Mean over dropped timesteps of KL(primary||local) + KL(primary||distant).

    All three arguments carry one row per dropped timestep.  An empty drop
    set contributes a constant zero.
    """
    n_dropped = p_primary.shape[0]
    if n_dropped == 0:
        return Tensor(0.0)
    if p_local.data.shape != p_primary.shape or p_distant.data.shape != p_primary.shape:
        raise InvalidInputError("distribution shapes disagree over the drop set")
    total = add(_kl_term(p_primary, p_local), _kl_term(p_primary, p_distant))
    return scale(total, 1.0 / n_dropped)


def sequence_cvt_loss(
    model: SegmenterModel,
    view: NgramView,
    config: CvtConfig,
    rng: np.random.Generator,
) -> tuple[Tensor | None, int]:
    """CVT loss for one unlabeled sequence: mask tokens, compare auxiliary
    views against the detached primary prediction.

    Returns (loss, |D|); the loss is None when no timestep was dropped.
    """
    masked, dropped = drop_tokens(view, config.drop_rate, rng)
    if dropped.size == 0:
        return None, 0
    with no_grad():
        full = model.forward(view, train=False)
    p_primary = primary_distribution(full.logits.data)[dropped]
    local_logits, distant_logits = model.aux_logits(
        masked, rng, config.unlabeled_input_dropout
    )
    p_local = softmax(gather_rows(local_logits, dropped), axis=-1)
    p_distant = softmax(gather_rows(distant_logits, dropped), axis=-1)
    return cvt_loss(p_primary, p_local, p_distant), int(dropped.size)
