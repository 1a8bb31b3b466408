"""Optimization loops: supervised NLL training, the alternating labeled /
unlabeled CVT schedule, AdaGrad and Adam, L2 regularization, early stopping,
and grid search over vocabulary cutoffs.

All randomness (init, shuffling, dropout, token dropping, unlabeled
sampling) derives from one seed, so runs are bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, add, backward, mul, scale, sum_, zero_grads
from .corpus import TaggedSequence
from .cvt import CvtConfig, sequence_cvt_loss
from .errors import InvalidInputError, SentsegError, TrainingError
from .metrics import MetricsReport, f1_overall_punct, f1_sentence_boundary, f1_two_class
from .model import ModelConfig, SegmenterModel
from .vocab import VocabConfig, build_vocab

# ---------------------------------------------------------------------------
# optimizers


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adagrad"
    learning_rate: float = 0.02
    l2_alpha: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("adagrad", "adam"):
            raise InvalidInputError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0.0:
            raise InvalidInputError("learning rate must be positive")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidInputError("patience, batch size and max epochs must be >= 1")


def adagrad_update(value: np.ndarray, grad: np.ndarray, accum: np.ndarray, lr: float) -> None:
    """In-place AdaGrad: accum += g^2; value -= lr * g / (sqrt(accum) + 1e-8)."""
    if value.shape != grad.shape or value.shape != accum.shape:
        raise InvalidInputError("adagrad shapes disagree")
    accum += grad * grad
    value -= lr * grad / (np.sqrt(accum) + 1e-8)


def adam_update(
    value: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """In-place bias-corrected Adam."""
    if value.shape != grad.shape:
        raise InvalidInputError("adam shapes disagree")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class AdaGrad:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr
        self.accum = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            adagrad_update(p.data, p.grad, self.accum[name], self.lr)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            adam_update(
                p.data, p.grad, self.m[name], self.v[name], self.t,
                self.lr, self.beta1, self.beta2, self.eps,
            )


def make_optimizer(cfg: OptimizerConfig, params: dict[str, Tensor]):
    if cfg.kind == "adagrad":
        return AdaGrad(params, cfg.learning_rate)
    return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


# ---------------------------------------------------------------------------
# history


@dataclass
class EpochStats:
    epoch: int
    train_nll: float | None
    l2_penalty: float | None
    cvt_loss: float | None
    val_metric: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_nll": self.train_nll,
            "l2_penalty": self.l2_penalty,
            "cvt_loss": self.cvt_loss,
            "val_metric": self.val_metric,
        }


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_metric(self) -> float:
        return self.epochs[self.best_epoch - 1].val_metric

    def to_jsonl(self) -> str:
        import json

        lines = [json.dumps(e.to_dict(), sort_keys=True) for e in self.epochs]
        lines.append(json.dumps({"best_epoch": self.best_epoch}, sort_keys=True))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# evaluation helpers


def predicted_and_gold(model: SegmenterModel, encoded) -> tuple[list[str], list[str]]:
    pred_flat: list[str] = []
    gold_flat: list[str] = []
    for view, tag_ids in encoded:
        path = model.predict_ids(view)
        pred_flat.extend(model.config.tags[i] for i in path)
        gold_flat.extend(model.config.tags[i] for i in tag_ids)
    return pred_flat, gold_flat


def validation_metric(model: SegmenterModel, encoded, task: str) -> float:
    """Sentence-boundary F1 for segmentation, overall F1 for punctuation."""
    pred, gold = predicted_and_gold(model, encoded)
    if task == "segmentation":
        return f1_sentence_boundary(pred, gold).f1
    return f1_overall_punct(pred, gold).f1


def evaluate_model(
    model: SegmenterModel, seqs: Sequence[TaggedSequence], task: str
) -> dict[str, MetricsReport]:
    encoded = [model.encode(s) for s in seqs]
    pred, gold = predicted_and_gold(model, encoded)
    if task == "segmentation":
        return {"sentence_boundary": f1_sentence_boundary(pred, gold)}
    return {
        "overall": f1_overall_punct(pred, gold),
        "two_class": f1_two_class(pred, gold),
    }


# ---------------------------------------------------------------------------
# training engine


def _rng_streams(seed: int, n: int) -> list[np.random.Generator]:
    seqs = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in seqs]


def _l2_term(params: dict[str, Tensor]) -> Tensor:
    total = None
    for p in params.values():
        sq = sum_(mul(p, p))
        total = sq if total is None else add(total, sq)
    return total


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.items()}


def _restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        p.data = snap[name].copy()


class _UnlabeledSampler:
    """Without-replacement draws from the unlabeled pool, reshuffled whenever
    it runs dry."""

    def __init__(self, views: list, rng: np.random.Generator):
        if not views:
            raise InvalidInputError("CVT training needs a nonempty unlabeled pool")
        self.views = views
        self.rng = rng
        self.order: list[int] = []
        self.pos = 0

    def reshuffle(self) -> None:
        self.order = list(self.rng.permutation(len(self.views)))
        self.pos = 0

    def draw(self, k: int) -> list:
        out = []
        while len(out) < k:
            if self.pos >= len(self.order):
                self.reshuffle()
            out.append(self.views[self.order[self.pos]])
            self.pos += 1
        return out


def _train(
    model: SegmenterModel,
    train_seqs: Sequence[TaggedSequence],
    dev_seqs: Sequence[TaggedSequence],
    opt_cfg: OptimizerConfig,
    task: str,
    cvt_cfg: CvtConfig | None = None,
    unlabeled_seqs: Sequence[TaggedSequence] | None = None,
    log_fn: Callable[[EpochStats], None] | None = None,
) -> TrainHistory:
    if not train_seqs or not dev_seqs:
        raise InvalidInputError("training needs nonempty train and dev splits")
    named = model.params.named_parameters()
    optimizer = make_optimizer(opt_cfg, named)
    _, shuffle_rng, dropout_rng, cvt_rng, unlabeled_rng = _rng_streams(opt_cfg.seed, 5)

    encoded_train = [model.encode(s) for s in train_seqs]
    encoded_dev = [model.encode(s) for s in dev_seqs]
    sampler = None
    if cvt_cfg is not None:
        if not unlabeled_seqs:
            raise InvalidInputError("CVT training needs unlabeled sequences")
        unlabeled_views = [model.encode(s)[0] for s in unlabeled_seqs]
        sampler = _UnlabeledSampler(unlabeled_views, unlabeled_rng)

    history = TrainHistory()
    best_metric = -np.inf
    best_snap = _snapshot(named)
    stale = 0

    for epoch in range(1, opt_cfg.max_epochs + 1):
        if sampler is not None:
            sampler.reshuffle()
        order = shuffle_rng.permutation(len(encoded_train))
        nll_total, l2_total, batches = 0.0, 0.0, 0
        cvt_total, cvt_batches = 0.0, 0

        for lo in range(0, len(order), opt_cfg.batch_size):
            batch = [encoded_train[i] for i in order[lo : lo + opt_cfg.batch_size]]
            nll_val, l2_val = _supervised_step(
                model, batch, optimizer, named, opt_cfg.l2_alpha, dropout_rng,
                epoch, batches,
            )
            nll_total += nll_val
            l2_total += l2_val
            batches += 1
            if cvt_cfg is not None:
                for _ in range(cvt_cfg.unlabeled_batches):
                    views = sampler.draw(opt_cfg.batch_size)
                    cvt_total += _cvt_step(
                        model, views, optimizer, named, cvt_cfg, cvt_rng,
                        epoch, cvt_batches,
                    )
                    cvt_batches += 1

        val = validation_metric(model, encoded_dev, task)
        stats = EpochStats(
            epoch=epoch,
            train_nll=nll_total / batches,
            l2_penalty=l2_total / batches,
            cvt_loss=(cvt_total / cvt_batches) if cvt_batches else None,
            val_metric=val,
        )
        history.epochs.append(stats)
        if log_fn is not None:
            log_fn(stats)
        if val > best_metric:
            best_metric = val
            best_snap = _snapshot(named)
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        if stale >= opt_cfg.patience:
            break

    _restore(named, best_snap)
    return history


def _supervised_step(model, batch, optimizer, named, alpha, dropout_rng, epoch, batch_idx):
    zero_grads(named.values())
    total = None
    for view, tag_ids in batch:
        loss = model.sequence_nll(view, tag_ids, train=True, rng=dropout_rng)
        total = loss if total is None else add(total, loss)
    data_loss = scale(total, 1.0 / len(batch))
    penalty = scale(_l2_term(named), alpha)
    objective = add(data_loss, penalty)
    if not np.isfinite(objective.data):
        raise TrainingError(
            f"non-finite supervised loss at epoch {epoch}, batch {batch_idx}"
        )
    backward(objective, params=named.values())
    optimizer.step()
    return float(data_loss.data), float(penalty.data)


def _cvt_step(model, views, optimizer, named, cvt_cfg, cvt_rng, epoch, batch_idx):
    zero_grads(named.values())
    losses = []
    for view in views:
        loss, _ = sequence_cvt_loss(model, view, cvt_cfg, cvt_rng)
        if loss is not None:
            losses.append(loss)
    if not losses:
        return 0.0
    total = losses[0]
    for loss in losses[1:]:
        total = add(total, loss)
    mean_loss = scale(total, 1.0 / len(views))
    if not np.isfinite(mean_loss.data):
        raise TrainingError(f"non-finite CVT loss at epoch {epoch}, batch {batch_idx}")
    backward(mean_loss, params=named.values())
    optimizer.step()
    return float(mean_loss.data)


# ---------------------------------------------------------------------------
# public entry points


def train_supervised(
    model: SegmenterModel,
    train_seqs: Sequence[TaggedSequence],
    dev_seqs: Sequence[TaggedSequence],
    opt_cfg: OptimizerConfig,
    task: str,
    log_fn: Callable[[EpochStats], None] | None = None,
) -> TrainHistory:
    """Minimize mean sequence NLL + alpha * sum of squared parameters, with
    early stopping on the validation metric; the model keeps its best-epoch
    parameters."""
    return _train(model, train_seqs, dev_seqs, opt_cfg, task, log_fn=log_fn)


def train_cvt(
    model: SegmenterModel,
    train_seqs: Sequence[TaggedSequence],
    dev_seqs: Sequence[TaggedSequence],
    unlabeled_seqs: Sequence[TaggedSequence],
    cvt_cfg: CvtConfig,
    opt_cfg: OptimizerConfig,
    task: str,
    log_fn: Callable[[EpochStats], None] | None = None,
) -> TrainHistory:
    """Alternate one labeled mini-batch (supervised objective) with B
    unlabeled mini-batches (CVT consistency loss)."""
    return _train(
        model, train_seqs, dev_seqs, opt_cfg, task,
        cvt_cfg=cvt_cfg, unlabeled_seqs=unlabeled_seqs, log_fn=log_fn,
    )


def fit_supervised(
    train_seqs: Sequence[TaggedSequence],
    dev_seqs: Sequence[TaggedSequence],
    model_cfg: ModelConfig,
    opt_cfg: OptimizerConfig,
    vocab_cfg: VocabConfig,
    task: str,
    log_fn: Callable[[EpochStats], None] | None = None,
) -> tuple[SegmenterModel, TrainHistory]:
    """Build the vocab from the train split, initialize seeded, train."""
    vocab = build_vocab(train_seqs, vocab_cfg)
    init_rng = _rng_streams(opt_cfg.seed, 5)[0]
    model = SegmenterModel.initialize(model_cfg, vocab, init_rng)
    history = train_supervised(model, train_seqs, dev_seqs, opt_cfg, task, log_fn)
    return model, history


def fit_cvt(
    train_seqs: Sequence[TaggedSequence],
    dev_seqs: Sequence[TaggedSequence],
    unlabeled_seqs: Sequence[TaggedSequence],
    model_cfg: ModelConfig,
    opt_cfg: OptimizerConfig,
    vocab_cfg: VocabConfig,
    cvt_cfg: CvtConfig,
    task: str,
    log_fn: Callable[[EpochStats], None] | None = None,
) -> tuple[SegmenterModel, TrainHistory]:
    vocab = build_vocab(train_seqs, vocab_cfg)
    init_rng = _rng_streams(opt_cfg.seed, 5)[0]
    model = SegmenterModel.initialize(model_cfg, vocab, init_rng)
    history = train_cvt(
        model, train_seqs, dev_seqs, unlabeled_seqs, cvt_cfg, opt_cfg, task, log_fn
    )
    return model, history


def grid_search(
    train_seqs: Sequence[TaggedSequence],
    dev_seqs: Sequence[TaggedSequence],
    c_word_candidates: Sequence[int],
    c_ngram_candidates: Sequence[int],
    model_cfg: ModelConfig,
    opt_cfg: OptimizerConfig,
    task: str,
    log_fn: Callable[[EpochStats], None] | None = None,
) -> tuple[tuple[int, int], list[dict]]:
    """Train one model per (C_word, C_ngram) pair and pick the best by the
    validation metric; ties break toward the smaller pair.  Failed cells are
    recorded and skipped."""
    if not c_word_candidates or not c_ngram_candidates:
        raise InvalidInputError("grid search needs nonempty candidate lists")
    rows: list[dict] = []
    for c_word in c_word_candidates:
        for c_ngram in c_ngram_candidates:
            row = {"c_word": c_word, "c_ngram": c_ngram, "val_metric": None, "error": None}
            try:
                _, history = fit_supervised(
                    train_seqs, dev_seqs, model_cfg, opt_cfg,
                    VocabConfig(c_word, c_ngram), task, log_fn,
                )
                row["val_metric"] = history.best_metric
                row["best_epoch"] = history.best_epoch
            except SentsegError as err:
                row["error"] = f"{type(err).__name__}: {err}"
            rows.append(row)
    scored = [r for r in rows if r["val_metric"] is not None]
    if not scored:
        raise TrainingError("every grid-search cell failed")
    best = min(scored, key=lambda r: (-r["val_metric"], r["c_word"], r["c_ngram"]))
    return (best["c_word"], best["c_ngram"]), rows
