"""Full sequence-tagging architecture and checkpoint I/O.

Pipeline per sequence: n-gram local representation -> BiLSTM recurrent
vectors, unigram embeddings -> low-level self-attention distant vectors,
concatenated and fed through a stacked BiLSTM plus a high-level
self-attention, projected to per-tag virtual logits, decoded by the CRF.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import crf as crf_mod
from .autodiff import Tensor, concat, gather_rows, no_grad, scale
from .corpus import TaggedSequence
from .errors import ConfigError, InvalidInputError
from .layers import (
    AttentionParams,
    BiLstmParams,
    bilstm,
    dropout_train,
    embed,
    init_attention,
    init_bilstm,
    linear,
    self_attention_block,
    stacked_bilstm,
    uniform_embedding,
    xavier_uniform,
)
from .vocab import FIELDS, GRAMS, PAD_ID, NgramView, Vocab, extract_ngrams

CHECKPOINT_FORMAT = "sentseg-checkpoint\t1"


@dataclass(frozen=True)
class ModelConfig:
    tags: tuple[str, ...]
    uni_word_dim: int = 64
    uni_pos_dim: int = 32
    uni_type_dim: int = 32
    ngram_word_dim: int = 16
    ngram_pos_dim: int = 8
    ngram_type_dim: int = 8
    hidden_size: int = 25
    lstm_layers: int = 2
    attn_out_dim: int = 50
    low_attn_proj: int = 64
    high_attn_proj: int = 25
    dropout_local: float = 0.30
    dropout_between: float = 0.15

    def __post_init__(self):
        sizes = (
            self.uni_word_dim, self.uni_pos_dim, self.uni_type_dim,
            self.ngram_word_dim, self.ngram_pos_dim, self.ngram_type_dim,
            self.hidden_size, self.lstm_layers, self.attn_out_dim,
            self.low_attn_proj, self.high_attn_proj,
        )
        if any(s < 1 for s in sizes):
            raise ConfigError("all model sizes must be positive")
        if len(self.tags) < 2:
            raise ConfigError("a tag set needs at least two tags")
        for rate in (self.dropout_local, self.dropout_between):
            if not 0.0 <= rate < 1.0:
                raise ConfigError("dropout rates must lie in [0, 1)")

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    @property
    def uni_dim(self) -> int:
        return self.uni_word_dim + self.uni_pos_dim + self.uni_type_dim

    @property
    def ngram_dim(self) -> int:
        return self.ngram_word_dim + self.ngram_pos_dim + self.ngram_type_dim

    @property
    def local_dim(self) -> int:
        # nine segments: uni/bi/tri, each at t-1, t, t+1
        return 3 * self.uni_dim + 6 * self.ngram_dim

    @property
    def recurrent_dim(self) -> int:
        return 2 * self.hidden_size

    def field_dim(self, gram: str, fld: str) -> int:
        if gram == "uni":
            return {
                "word": self.uni_word_dim,
                "pos": self.uni_pos_dim,
                "type": self.uni_type_dim,
            }[fld]
        return {
            "word": self.ngram_word_dim,
            "pos": self.ngram_pos_dim,
            "type": self.ngram_type_dim,
        }[fld]

    def to_dict(self) -> dict:
        return {
            "tags": list(self.tags),
            "uni_word_dim": self.uni_word_dim,
            "uni_pos_dim": self.uni_pos_dim,
            "uni_type_dim": self.uni_type_dim,
            "ngram_word_dim": self.ngram_word_dim,
            "ngram_pos_dim": self.ngram_pos_dim,
            "ngram_type_dim": self.ngram_type_dim,
            "hidden_size": self.hidden_size,
            "lstm_layers": self.lstm_layers,
            "attn_out_dim": self.attn_out_dim,
            "low_attn_proj": self.low_attn_proj,
            "high_attn_proj": self.high_attn_proj,
            "dropout_local": self.dropout_local,
            "dropout_between": self.dropout_between,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["tags"] = tuple(d["tags"])
        return cls(**d)


@dataclass
class ModelParams:
    tables: dict[tuple[str, str], Tensor]
    low: BiLstmParams
    low_attn: AttentionParams
    stack: list[BiLstmParams]
    high_attn: AttentionParams
    out_w: Tensor
    out_b: Tensor
    aux_local_w: Tensor
    aux_local_b: Tensor
    aux_distant_w: Tensor
    aux_distant_b: Tensor
    crf: crf_mod.CrfParams

    def named_parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for gram in GRAMS:
            for fld in FIELDS:
                named[f"emb.{gram}.{fld}"] = self.tables[(gram, fld)]

        def add_bilstm(prefix: str, p: BiLstmParams):
            for direction, dp in (("fwd", p.fwd), ("bwd", p.bwd)):
                named[f"{prefix}.{direction}.w_ih"] = dp.w_ih
                named[f"{prefix}.{direction}.w_hh"] = dp.w_hh
                named[f"{prefix}.{direction}.b"] = dp.b

        def add_attn(prefix: str, p: AttentionParams):
            named[f"{prefix}.w_query"] = p.w_query
            named[f"{prefix}.w_key"] = p.w_key
            named[f"{prefix}.w_value"] = p.w_value
            named[f"{prefix}.w_out"] = p.w_out
            named[f"{prefix}.b_out"] = p.b_out

        add_bilstm("low", self.low)
        add_attn("low_attn", self.low_attn)
        for i, layer in enumerate(self.stack):
            add_bilstm(f"stack{i}", layer)
        add_attn("high_attn", self.high_attn)
        named["out.w"] = self.out_w
        named["out.b"] = self.out_b
        named["aux_local.w"] = self.aux_local_w
        named["aux_local.b"] = self.aux_local_b
        named["aux_distant.w"] = self.aux_distant_w
        named["aux_distant.b"] = self.aux_distant_b
        named["crf.trans"] = self.crf.trans
        named["crf.start"] = self.crf.start
        named["crf.end"] = self.crf.end
        return named


def init_model_params(
    config: ModelConfig, vocab: Vocab, rng: np.random.Generator
) -> ModelParams:
    """Draw fresh parameters: embeddings uniform in [-0.1, 0.1], weight
    matrices Xavier-uniform, biases zero except the LSTM forget gate (+1)."""
    tables = {
        (gram, fld): uniform_embedding(rng, vocab.size(gram, fld), config.field_dim(gram, fld))
        for gram in GRAMS
        for fld in FIELDS
    }
    low = init_bilstm(rng, config.local_dim, config.hidden_size)
    low_attn = init_attention(rng, config.uni_dim, config.low_attn_proj, config.attn_out_dim)
    stack = []
    stack_in = config.recurrent_dim + config.attn_out_dim
    for i in range(config.lstm_layers):
        stack.append(init_bilstm(rng, stack_in if i == 0 else config.recurrent_dim, config.hidden_size))
    high_attn = init_attention(rng, config.recurrent_dim, config.high_attn_proj, config.attn_out_dim)
    s = config.num_tags
    return ModelParams(
        tables=tables,
        low=low,
        low_attn=low_attn,
        stack=stack,
        high_attn=high_attn,
        out_w=xavier_uniform(rng, config.attn_out_dim, s),
        out_b=Tensor(np.zeros(s), requires_grad=True),
        aux_local_w=xavier_uniform(rng, config.recurrent_dim, s),
        aux_local_b=Tensor(np.zeros(s), requires_grad=True),
        aux_distant_w=xavier_uniform(rng, config.attn_out_dim, s),
        aux_distant_b=Tensor(np.zeros(s), requires_grad=True),
        crf=crf_mod.CrfParams.zeros(s),
    )


@dataclass
class ForwardPass:
    recurrent: Tensor  # (N, 2H)
    distant: Tensor  # (N, attn_out)
    high: Tensor  # (N, attn_out)
    logits: Tensor  # (N, S) virtual logits


def _shift_ids(ids: np.ndarray, offset: int) -> np.ndarray:
    """Ids of the neighboring timestep; out-of-range positions get PAD."""
    if offset == 0:
        return ids
    pad = np.full(1, PAD_ID, dtype=np.int64)
    if offset < 0:
        return np.concatenate([pad, ids[:-1]])
    return np.concatenate([ids[1:], pad])


def local_representation(
    view: NgramView, tables: dict[tuple[str, str], Tensor]
) -> Tensor:
    """Concatenate the nine n-gram embeddings around each timestep."""
    parts = []
    for gram in GRAMS:
        for offset in (-1, 0, 1):
            fields = [
                gather_rows(tables[(gram, fld)], _shift_ids(view.ids[(gram, fld)], offset))
                for fld in FIELDS
            ]
            parts.append(concat(fields, axis=1))
    return concat(parts, axis=1)


class SegmenterModel:
    """Bundles a configuration, its vocabulary, and the learnable tensors."""

    def __init__(self, config: ModelConfig, vocab: Vocab, params: ModelParams):
        self.config = config
        self.vocab = vocab
        self.params = params
        self._tag_index = {tag: i for i, tag in enumerate(config.tags)}
        self._validate_shapes()

    @classmethod
    def initialize(
        cls, config: ModelConfig, vocab: Vocab, rng: np.random.Generator
    ) -> "SegmenterModel":
        return cls(config, vocab, init_model_params(config, vocab, rng))

    def _validate_shapes(self) -> None:
        reference = init_model_params(
            self.config, self.vocab, np.random.default_rng(0)
        ).named_parameters()
        actual = self.params.named_parameters()
        if set(reference) != set(actual):
            raise ConfigError("parameter names do not match the configuration")
        for name, tensor in actual.items():
            if tensor.data.shape != reference[name].data.shape:
                raise ConfigError(
                    f"dimension chain broken at {name}: expected "
                    f"{reference[name].data.shape}, got {tensor.data.shape}"
                )

    # -- encoding -----------------------------------------------------------

    def encode(self, seq: TaggedSequence) -> tuple[NgramView, np.ndarray | None]:
        view = extract_ngrams(seq, self.vocab)
        if seq.tags is None:
            return view, None
        try:
            tag_ids = np.array([self._tag_index[t] for t in seq.tags], dtype=np.int64)
        except KeyError as e:
            raise InvalidInputError(f"tag {e.args[0]!r} not in model tag set")
        return view, tag_ids

    # -- forward passes -----------------------------------------------------

    def forward(
        self,
        view: NgramView,
        train: bool = False,
        rng: np.random.Generator | None = None,
        zero_distant: bool = False,
        local_dropout: float | None = None,
    ) -> ForwardPass:
        cfg, p = self.config, self.params
        r_local = local_representation(view, p.tables)
        e_uni = concat(
            [gather_rows(p.tables[("uni", fld)], view.ids[("uni", fld)]) for fld in FIELDS],
            axis=1,
        )
        rate_local = cfg.dropout_local if local_dropout is None else local_dropout
        r_local = dropout_train(r_local, rate_local, train, rng)
        recurrent = bilstm(r_local, p.low)
        distant = self_attention_block(e_uni, p.low_attn)
        if zero_distant:
            distant = scale(distant, 0.0)
        rec_dropped = dropout_train(recurrent, cfg.dropout_between, train, rng)
        rep = concat([rec_dropped, distant], axis=1)
        stack_out = stacked_bilstm(rep, p.stack, cfg.dropout_between, train, rng)
        enclosed = dropout_train(stack_out, cfg.dropout_between, train, rng)
        high = self_attention_block(enclosed, p.high_attn)
        high = dropout_train(high, cfg.dropout_between, train, rng)
        logits = linear(high, p.out_w, p.out_b)
        return ForwardPass(recurrent=recurrent, distant=distant, high=high, logits=logits)

    def aux_logits(
        self,
        view: NgramView,
        rng: np.random.Generator | None = None,
        input_dropout: float = 0.0,
    ) -> tuple[Tensor, Tensor]:
        """Restricted-view logits for the two auxiliary prediction heads.

        The local head sees the recurrent vectors of the (masked) n-gram
        stream; the distant head the low-level attention over the (masked)
        unigram stream.
        """
        p = self.params
        r_local = local_representation(view, p.tables)
        r_local = dropout_train(r_local, input_dropout, input_dropout > 0.0, rng)
        recurrent = bilstm(r_local, p.low)
        e_uni = concat(
            [gather_rows(p.tables[("uni", fld)], view.ids[("uni", fld)]) for fld in FIELDS],
            axis=1,
        )
        distant = self_attention_block(e_uni, p.low_attn)
        local_logits = linear(recurrent, p.aux_local_w, p.aux_local_b)
        distant_logits = linear(distant, p.aux_distant_w, p.aux_distant_b)
        return local_logits, distant_logits

    def sequence_nll(
        self,
        view: NgramView,
        tag_ids: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        out = self.forward(view, train=train, rng=rng)
        return crf_mod.nll_loss(out.logits, tag_ids, self.params.crf)

    # -- prediction ---------------------------------------------------------

    def predict_ids(self, view: NgramView) -> np.ndarray:
        with no_grad():
            out = self.forward(view, train=False)
        return crf_mod.viterbi(out.logits.data, self.params.crf)

    def predict_tags(self, seq: TaggedSequence) -> list[str]:
        view, _ = self.encode(seq)
        return [self.config.tags[i] for i in self.predict_ids(view)]


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: SegmenterModel) -> None:
    """Write a versioned zip container: config, vocab, and one .npy entry
    (little-endian float64 with shape header) per named parameter.

    Entry timestamps are fixed so identical models serialize to identical
    bytes.
    """
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:

        def write(name: str, payload: bytes):
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, payload)

        write("format", CHECKPOINT_FORMAT.encode())
        write(
            "config.json",
            json.dumps(model.config.to_dict(), sort_keys=True, indent=1).encode(),
        )
        write("vocab.tsv", model.vocab.dumps().encode())
        for name, tensor in model.params.named_parameters().items():
            buf = io.BytesIO()
            np.lib.format.write_array(
                buf, np.ascontiguousarray(tensor.data), version=(1, 0)
            )
            write(f"params/{name}.npy", buf.getvalue())


def load_checkpoint(path) -> SegmenterModel:
    """Read a checkpoint and validate its dimension chain."""
    with zipfile.ZipFile(path) as zf:
        names = set(zf.namelist())
        if "format" not in names or zf.read("format").decode() != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: not a recognized checkpoint")
        config = ModelConfig.from_dict(json.loads(zf.read("config.json").decode()))
        vocab = Vocab.loads(zf.read("vocab.tsv").decode())
        params = init_model_params(config, vocab, np.random.default_rng(0))
        named = params.named_parameters()
        stored = {
            n[len("params/") : -len(".npy")]
            for n in names
            if n.startswith("params/") and n.endswith(".npy")
        }
        if stored != set(named):
            raise ConfigError(f"{path}: parameter set does not match its config")
        for name, tensor in named.items():
            arr = np.lib.format.read_array(io.BytesIO(zf.read(f"params/{name}.npy")))
            if arr.shape != tensor.data.shape:
                raise ConfigError(
                    f"{path}: dimension chain broken at {name}: "
                    f"stored {arr.shape}, expected {tensor.data.shape}"
                )
            tensor.data = np.asarray(arr, dtype=np.float64)
    return SegmenterModel(config, vocab, params)
