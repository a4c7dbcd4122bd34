"""Small trainable self-attention encoder for summary/candidate pairs.

Takes the place of a pretrained BERT: token and learned position embeddings
followed by post-norm transformer blocks. The summary vector is the hidden
state at ``[CLS]``; the candidate vector is the mean over the candidate span.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ConfigError, DimensionError, EncodeError
from .optim import glorot, ones, zeros
from .tensor import Tensor


@dataclass
class EncoderConfig:
    vocab_size: int
    max_len: int = 256
    hidden: int = 64
    layers: int = 2
    heads: int = 2
    ffn: int = 128

    def validate(self):
        if min(self.vocab_size, self.max_len, self.hidden, self.heads, self.ffn) <= 0 or self.layers < 0:
            raise ConfigError(f"encoder sizes must be positive: {self}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden size {self.hidden} not divisible by {self.heads} heads")
        return self


@dataclass
class PairEncoding:
    summary_vec: Tensor
    candidate_vec: Tensor


def init_params(cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64) -> dict:
    cfg.validate()
    d, f = cfg.hidden, cfg.ffn
    p = {
        "enc.tok": Tensor(rng.normal(0.0, 0.1, (cfg.vocab_size, d)).astype(dtype), requires_grad=True),
        "enc.pos": Tensor(rng.normal(0.0, 0.1, (cfg.max_len, d)).astype(dtype), requires_grad=True),
        "enc.seg": Tensor(rng.normal(0.0, 0.1, d).astype(dtype), requires_grad=True),
    }
    for i in range(cfg.layers):
        pre = f"enc.l{i}."
        for name in ("wq", "wk", "wv", "wo"):
            p[pre + name] = glorot(rng, d, d, dtype)
            p[pre + "b" + name[1]] = zeros(d, dtype)
        p[pre + "ln1.g"] = ones(d, dtype)
        p[pre + "ln1.b"] = zeros(d, dtype)
        p[pre + "w1"] = glorot(rng, d, f, dtype)
        p[pre + "b1"] = zeros(f, dtype)
        p[pre + "w2"] = glorot(rng, f, d, dtype)
        p[pre + "b2"] = zeros(d, dtype)
        p[pre + "ln2.g"] = ones(d, dtype)
        p[pre + "ln2.b"] = zeros(d, dtype)
    for name, t in p.items():
        t.name = name
    return p


class PairEncoder:
    def __init__(self, cfg: EncoderConfig, params: dict):
        self.cfg = cfg.validate()
        self.params = params

    def embed(self, ids: np.ndarray, segments=None) -> Tensor:
        """Token + position embeddings, plus the candidate-segment vector where
        ``segments`` is 1. Segment 0 adds nothing."""
        n = ids.shape[-1]
        if n > self.cfg.max_len:
            raise DimensionError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")
        h = tn.embedding(self.params["enc.tok"], ids) + self.params["enc.pos"][:n]
        if segments is not None:
            seg = np.asarray(segments, dtype=h.dtype)[..., None]
            h = h + seg * self.params["enc.seg"]
        return h

    def hidden(self, ids, mask, attention=None, segments=None) -> Tensor:
        """Hidden states (B, N, d). Appends per-layer attention maps to ``attention``."""
        ids = np.asarray(ids)
        key_mask = np.asarray(mask, dtype=bool)[:, None, None, :]
        h = self.embed(ids, segments)
        b, n = ids.shape
        heads = self.cfg.heads
        dh = self.cfg.hidden // heads
        scale = 1.0 / np.sqrt(dh)
        p = self.params
        for i in range(self.cfg.layers):
            pre = f"enc.l{i}."

            def split(t):
                return tn.transpose(t.reshape(b, n, heads, dh), (0, 2, 1, 3))

            q = split(h @ p[pre + "wq"] + p[pre + "bq"])
            k = split(h @ p[pre + "wk"] + p[pre + "bk"])
            v = split(h @ p[pre + "wv"] + p[pre + "bv"])
            att = tn.softmax((q @ tn.swapaxes(k, -1, -2)) * scale, axis=-1, mask=key_mask)
            if attention is not None:
                attention.append(att.data)
            o = tn.transpose(att @ v, (0, 2, 1, 3)).reshape(b, n, self.cfg.hidden)
            h = tn.layer_norm(h + (o @ p[pre + "wo"] + p[pre + "bo"]), p[pre + "ln1.g"], p[pre + "ln1.b"])
            f = tn.gelu(h @ p[pre + "w1"] + p[pre + "b1"]) @ p[pre + "w2"] + p[pre + "b2"]
            h = tn.layer_norm(h + f, p[pre + "ln2.g"], p[pre + "ln2.b"])
        return h

    def encode_pairs(self, ids, mask, spans, attention=None):
        """Encode B pair sequences; returns ([CLS] states (B, d), span means (B, d))."""
        ids = np.asarray(ids)
        spans = np.asarray(spans)
        lengths = spans[:, 1] - spans[:, 0]
        if np.any(lengths <= 0):
            raise EncodeError("candidate span is empty")
        pos = np.arange(ids.shape[1])
        # candidate tokens and the closing [SEP] form segment 1
        segments = (pos >= spans[:, :1]) & (pos <= spans[:, 1:])
        h = self.hidden(ids, mask, attention, segments)
        w = ((pos >= spans[:, :1]) & (pos < spans[:, 1:])).astype(h.dtype)
        pooled = (h * w[:, :, None]).sum(axis=1) / lengths[:, None].astype(h.dtype)
        return h[:, 0, :], pooled

    def encode_singles(self, ids, mask) -> Tensor:
        ids = np.asarray(ids)
        if np.any(np.asarray(mask).sum(axis=1) <= 2):
            raise EncodeError("cannot encode an empty token list")
        return self.hidden(ids, mask)[:, 0, :]


def encode(pair, encoder: PairEncoder) -> PairEncoding:
    if len(pair.ids) != encoder.cfg.max_len:
        raise DimensionError(f"pair length {len(pair.ids)} does not match N={encoder.cfg.max_len}")
    y, x = encoder.encode_pairs(pair.ids[None], pair.mask[None], np.array([pair.candidate_span]))
    return PairEncoding(y[0], x[0])


def encode_single(tokens, encoder: PairEncoder, vocab) -> Tensor:
    from .text import make_single

    if not tokens:
        raise EncodeError("cannot encode an empty token list")
    seq = make_single(tokens, encoder.cfg.max_len, vocab)
    return encoder.encode_singles(seq.ids[None], seq.mask[None])[0]
