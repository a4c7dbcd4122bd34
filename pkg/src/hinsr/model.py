"""Hierarchical interaction network: Bi-GRU over summary/candidate pairs,
summary-guided document attention, decoder and feedback heads.

All functions work on a leading batch axis ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .encoder import EncoderConfig, PairEncoder
from .encoder import init_params as init_encoder_params
from .errors import ConfigError, DimensionError
from .optim import glorot, zeros
from .tensor import Tensor

MODES = ("full", "no_doc", "no_doc_seg", "no_interact", "no_summary")


@dataclass
class ModelConfig:
    encoder: EncoderConfig
    num_classes: int = 5
    gru_hidden: int = 64
    T: int = 3
    dropout: float = 0.1
    dtype: str = "float64"

    def validate(self):
        self.encoder.validate()
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.gru_hidden < 1 or self.T < 1:
            raise ConfigError("gru_hidden and T must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        np.dtype(self.dtype)
        return self


# -- segment level ------------------------------------------------------------

GRU_NAMES = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")


def init_gru(rng, n_in, n_hidden, prefix, dtype=np.float64) -> dict:
    p = {}
    for gate in "zrh":
        p[f"{prefix}w_{gate}"] = glorot(rng, n_in, n_hidden, dtype)
        p[f"{prefix}u_{gate}"] = glorot(rng, n_hidden, n_hidden, dtype)
        p[f"{prefix}b_{gate}"] = zeros(n_hidden, dtype)
    return p


def gru_cell(x, h_prev, params, prefix="") -> Tensor:
    """One step of the update/reset-gate recurrence."""
    w = lambda n: params[prefix + n]
    if x.shape[-1] != w("w_z").shape[0] or h_prev.shape[-1] != w("u_z").shape[0]:
        raise DimensionError(
            f"gru_cell: input {x.shape} / state {h_prev.shape} vs weights "
            f"{w('w_z').shape} / {w('u_z').shape}")
    z = tn.sigmoid(x @ w("w_z") + h_prev @ w("u_z") + w("b_z"))
    r = tn.sigmoid(x @ w("w_r") + h_prev @ w("u_r") + w("b_r"))
    cand = tn.tanh(x @ w("w_h") + (r * h_prev) @ w("u_h") + w("b_h"))
    return (1.0 - z) * h_prev + z * cand


def segment_interaction(y_c, xs, params, dropout=0.0, rng=None, training=False) -> Tensor:
    """Bi-GRU over ``[y_c ; x_j]`` for j = 1..T; returns states (B, T, 2*hidden).

    ``y_c`` is (B, d_s) and ``xs`` is (B, T, d_x).
    """
    b, t_len = xs.shape[0], xs.shape[1]
    if t_len < 1:
        raise DimensionError("segment_interaction needs at least one candidate")
    hidden = params["gru_f.u_z"].shape[0]
    inputs = [tn.dropout(tn.concat([y_c, xs[:, j, :]], axis=-1), dropout, rng, training)
              for j in range(t_len)]
    h0 = Tensor(np.zeros((b, hidden), dtype=xs.dtype))
    fwd, h = [], h0
    for j in range(t_len):
        h = gru_cell(inputs[j], h, params, "gru_f.")
        fwd.append(h)
    bwd, h = [None] * t_len, h0
    for j in reversed(range(t_len)):
        h = gru_cell(inputs[j], h, params, "gru_b.")
        bwd[j] = h
    return tn.stack([tn.concat([fwd[j], bwd[j]], axis=-1) for j in range(t_len)], axis=1)


def segment_summary(states, w_s, b_s) -> Tensor:
    """Mean over candidates of tanh(W_s h_j + b_s)."""
    return tn.tanh(states @ w_s + b_s).mean(axis=1)


def document_attention(states, y_s, w_d, b_d):
    """Summary-guided attention over candidate states; returns (d, alpha)."""
    u = tn.tanh(states @ w_d + b_d)
    if u.shape[-1] != y_s.shape[-1]:
        raise DimensionError(f"attention: u {u.shape} vs summary {y_s.shape}")
    scores = (u * y_s.reshape(y_s.shape[0], 1, y_s.shape[-1])).sum(axis=-1)
    alpha = tn.softmax(scores, axis=1)
    d = (alpha.reshape(alpha.shape + (1,)) * states).sum(axis=1)
    return d, alpha


def classify(d, w_c, b_c) -> Tensor:
    """Class distribution softmax(W_c d + b_c)."""
    return tn.softmax(d @ w_c + b_c, axis=-1)


def predict_labels(probs) -> np.ndarray:
    """1-based argmax; ties go to the lowest class index."""
    p = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    return np.argmax(p, axis=-1) + 1


# -- batching -----------------------------------------------------------------


@dataclass
class Batch:
    pair_ids: np.ndarray        # (B, T, N)
    pair_mask: np.ndarray       # (B, T, N)
    cand_spans: np.ndarray      # (B, T, 2)
    summary_ids: np.ndarray | None
    summary_mask: np.ndarray | None
    doc_ids: np.ndarray
    doc_mask: np.ndarray
    labels: np.ndarray          # (B,) 0-based
    items: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.labels)


def _trim(ids, mask, trim):
    # drop padding columns that are padding for every row of the batch
    if not trim:
        return ids, mask
    n = max(int(mask.sum(axis=-1).max()), 1)
    return ids[..., :n], mask[..., :n]


def collate(prepared, trim=True) -> Batch:
    """Stack prepared samples; ``trim`` pads only to the longest sequence in the batch."""
    prepared = list(prepared)
    if not prepared:
        raise ConfigError("cannot collate an empty batch")
    has_summary = all(p.summary_single is not None for p in prepared)
    pair_ids, pair_mask = _trim(np.stack([[q.ids for q in p.pairs] for p in prepared]),
                                np.stack([[q.mask for q in p.pairs] for p in prepared]), trim)
    summary_ids = summary_mask = None
    if has_summary:
        summary_ids, summary_mask = _trim(np.stack([p.summary_single.ids for p in prepared]),
                                          np.stack([p.summary_single.mask for p in prepared]), trim)
    doc_ids, doc_mask = _trim(np.stack([p.document_single.ids for p in prepared]),
                              np.stack([p.document_single.mask for p in prepared]), trim)
    return Batch(
        pair_ids=pair_ids,
        pair_mask=pair_mask,
        cand_spans=np.array([[q.candidate_span for q in p.pairs] for p in prepared]),
        summary_ids=summary_ids,
        summary_mask=summary_mask,
        doc_ids=doc_ids,
        doc_mask=doc_mask,
        labels=np.array([p.label_index for p in prepared], dtype=np.int64),
        items=prepared,
    )


# -- the model ----------------------------------------------------------------


@dataclass
class ForwardOutput:
    logits: Tensor
    feedback_logits: Tensor
    doc: Tensor
    alpha: Tensor | None = None
    states: Tensor | None = None
    attention: list | None = None

    @property
    def probs(self) -> np.ndarray:
        return tn.softmax(Tensor(self.logits.data), axis=-1).data

    @property
    def feedback_probs(self) -> np.ndarray:
        return tn.softmax(Tensor(self.feedback_logits.data), axis=-1).data


class HINModel:
    """Encoder plus the interaction stack selected by ``mode``."""

    def __init__(self, config: ModelConfig, mode: str = "full", seed: int = 0):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.config = config.validate()
        self.mode = mode
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(seed)
        d = config.encoder.hidden
        g = config.gru_hidden
        k = config.num_classes
        p = init_encoder_params(config.encoder, rng, dtype)
        if mode in ("full", "no_doc"):
            p.update(init_gru(rng, 2 * d, g, "gru_f.", dtype))
            p.update(init_gru(rng, 2 * d, g, "gru_b.", dtype))
        if mode == "full":
            p["seg.w_s"] = glorot(rng, 2 * g, 2 * g, dtype)
            p["seg.b_s"] = zeros(2 * g, dtype)
            p["doc.w_d"] = glorot(rng, 2 * g, 2 * g, dtype)
            p["doc.b_d"] = zeros(2 * g, dtype)
        if mode in ("no_doc_seg", "no_interact"):
            p["proj.w"] = glorot(rng, 2 * d, 2 * g, dtype)
            p["proj.b"] = zeros(2 * g, dtype)
        if mode == "no_summary":
            p["proj.w"] = glorot(rng, d, 2 * g, dtype)
            p["proj.b"] = zeros(2 * g, dtype)
        p["cls.w_c"] = glorot(rng, 2 * g, k, dtype)
        p["cls.b_c"] = zeros(k, dtype)
        p["fb.w_r"] = glorot(rng, 2 * g, k, dtype)
        p["fb.b_r"] = zeros(k, dtype)
        for name, t in p.items():
            t.name = name
        self.params = p
        self.encoder = PairEncoder(config.encoder, p)

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def load_state(self, arrays: dict):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ConfigError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, t in self.params.items():
            arr = np.asarray(arrays[name])
            if arr.shape != t.shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} vs model {t.shape}")
            t.data = arr.astype(t.dtype, copy=True)

    def state(self) -> dict:
        return {n: t.data.copy() for n, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def _pairs(self, batch: Batch, attention=None):
        b, t_len, n = batch.pair_ids.shape
        cls, pooled = self.encoder.encode_pairs(
            batch.pair_ids.reshape(b * t_len, n),
            batch.pair_mask.reshape(b * t_len, n),
            batch.cand_spans.reshape(b * t_len, 2),
            attention,
        )
        d = cls.shape[-1]
        # one summary vector per document: the [CLS] states averaged over its T pairs
        y_c = cls.reshape(b, t_len, d).mean(axis=1)
        return y_c, pooled.reshape(b, t_len, d)

    def forward(self, batch: Batch, training=False, rng=None, keep_attention=False) -> ForwardOutput:
        p = self.params
        mode = self.mode
        alpha = states = None
        attention = [] if keep_attention else None
        if mode in ("full", "no_doc", "no_doc_seg"):
            y_c, xs = self._pairs(batch, attention)
            if mode == "no_doc_seg":
                t_len = xs.shape[1]
                joined = tn.concat([tn.stack([y_c] * t_len, axis=1), xs], axis=-1)
                d = (joined @ p["proj.w"] + p["proj.b"]).mean(axis=1)
            else:
                states = segment_interaction(y_c, xs, p, self.config.dropout, rng, training)
                if mode == "full":
                    y_s = segment_summary(states, p["seg.w_s"], p["seg.b_s"])
                    d, alpha = document_attention(states, y_s, p["doc.w_d"], p["doc.b_d"])
                else:
                    d = states.mean(axis=1)
        elif mode == "no_interact":
            if batch.summary_ids is None:
                raise ConfigError("no_interact mode needs a nonempty summary for every sample")
            v_s = self.encoder.encode_singles(batch.summary_ids, batch.summary_mask)
            v_d = self.encoder.encode_singles(batch.doc_ids, batch.doc_mask)
            d = tn.concat([v_s, v_d], axis=-1) @ p["proj.w"] + p["proj.b"]
        else:
            v_d = self.encoder.encode_singles(batch.doc_ids, batch.doc_mask)
            d = v_d @ p["proj.w"] + p["proj.b"]
        logits = d @ p["cls.w_c"] + p["cls.b_c"]
        feedback = d @ p["fb.w_r"] + p["fb.b_r"]
        return ForwardOutput(logits, feedback, d, alpha, states, attention)


def feedback_distribution(s, w_r, b_r) -> Tensor:
    """Feedback head softmax(W_r s + b_r) on the document state."""
    return tn.softmax(s @ w_r + b_r, axis=-1)


def forward(prepared, model: HINModel, mode: str | None = None) -> np.ndarray:
    """Class distribution for one prepared sample (evaluation mode)."""
    if mode is not None and mode != model.mode:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        raise ConfigError(f"model was built for mode {model.mode!r}, not {mode!r}")
    with tn.no_grad():
        return model.forward(collate([prepared])).probs[0]
