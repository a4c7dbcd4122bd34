"""Tokenization, vocabulary, summary-guided candidate extraction and pair assembly."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EncodeError, IngestError, LabelError

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = range(4)

_CJK = (
    "぀-ヿ"  # kana
    "㐀-䶿一-鿿豈-﫿"  # han
    "가-힯"  # hangul
    "　-〿＀-￯"  # CJK punctuation, full-width forms
)
_TOKEN_RE = re.compile(rf"[{_CJK}]|[^\W{_CJK}]+|[^\w\s]", re.UNICODE)
_SENTENCE_RE = re.compile(r"[^.!?;\n。！？；]*(?:[.!?;\n。！？；]+|$)")


@dataclass(frozen=True)
class Sample:
    document: str
    summary: str
    label: int
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self, num_classes: int):
        if not self.document.strip():
            raise IngestError("empty document")
        if not 1 <= self.label <= num_classes:
            raise LabelError(f"label {self.label} outside [1, {num_classes}]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens):
        self.itos = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def to_json(self) -> str:
        return json.dumps(self.itos, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        itos = json.loads(text)
        if list(itos[:4]) != list(SPECIALS):
            raise ConfigError("vocabulary file does not start with the reserved tokens")
        return cls(itos[4:])


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Vocabulary over documents and summaries, ordered by (count desc, token)."""
    if not corpus:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for s in corpus:
        counts.update(tokenize(s.document))
        counts.update(tokenize(s.summary))
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in SPECIALS),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


class TfIdf:
    """Smoothed IDF weights fitted on training documents."""

    def __init__(self, idf: dict[str, float] | None = None, n_docs: int = 0):
        self.idf = idf or {}
        self.n_docs = n_docs

    @classmethod
    def fit(cls, documents) -> "TfIdf":
        df = Counter()
        n = 0
        for doc in documents:
            toks = doc if isinstance(doc, list) else tokenize(doc)
            df.update(set(toks))
            n += 1
        idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
        return cls(idf, n)

    def weight(self, token: str) -> float:
        if not self.n_docs:
            return 1.0
        return self.idf.get(token, math.log(1 + self.n_docs) + 1.0)

    def vector(self, tokens) -> dict[str, float]:
        tf = Counter(tokens)
        return {t: c * self.weight(t) for t, c in tf.items()}

    def cosine(self, a_tokens, b_tokens) -> float:
        a, b = self.vector(a_tokens), self.vector(b_tokens)
        dot = sum(w * b[t] for t, w in a.items() if t in b)
        na = math.sqrt(sum(w * w for w in a.values()))
        nb = math.sqrt(sum(w * w for w in b.values()))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return max(dot / (na * nb), 0.0)


@dataclass(frozen=True)
class SegmentCandidate:
    index: int
    tokens: tuple
    start: int
    end: int
    score: float


def split_segments(document: str, max_tokens: int = 80):
    """Sentence split, then greedy merge of neighbours up to ``max_tokens``.

    Returns (start, end, tokens) triples partitioning the non-blank text.
    """
    sentences = []
    for m in _SENTENCE_RE.finditer(document):
        if m.start() == m.end():
            continue
        toks = tokenize(m.group())
        if not toks:
            continue
        raw = m.group()
        start = m.start() + (len(raw) - len(raw.lstrip()))
        end = m.end() - (len(raw) - len(raw.rstrip()))
        sentences.append((start, end, toks))
    segments = []
    for start, end, toks in sentences:
        if segments and len(segments[-1][2]) + len(toks) <= max_tokens:
            s0, _, t0 = segments[-1]
            segments[-1] = (s0, end, t0 + toks)
        else:
            segments.append((start, end, toks))
    return segments


def extract_candidates(sample: Sample, T: int, max_candidate_tokens: int = 80,
                       tfidf: TfIdf | None = None) -> list[SegmentCandidate]:
    """Top-``T`` segments by TF-IDF cosine to the summary, in document order."""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    if max_candidate_tokens < 1:
        raise ConfigError("max_candidate_tokens must be >= 1")
    segments = split_segments(sample.document, max_candidate_tokens)
    if not segments:
        raise IngestError("document is empty after tokenization")
    tfidf = tfidf or TfIdf()
    query = tokenize(sample.summary)
    scored = [(tfidf.cosine(query, toks), pos) for pos, (_, _, toks) in enumerate(segments)]
    chosen = sorted(sorted(scored, key=lambda x: (-x[0], x[1]))[:T], key=lambda x: x[1])
    picked = [(pos, score) for score, pos in chosen]
    while len(picked) < T:
        picked.append(picked[-1])
    out = []
    for j, (pos, score) in enumerate(picked):
        start, end, toks = segments[pos]
        out.append(SegmentCandidate(j, tuple(toks[:max_candidate_tokens]), start, end, score))
    return out


@dataclass(frozen=True)
class PairSequence:
    ids: np.ndarray
    mask: np.ndarray
    summary_span: tuple
    candidate_span: tuple

    def __len__(self):
        return len(self.ids)


def make_pair(summary_tokens, candidate_tokens, N: int, vocab: Vocabulary) -> PairSequence:
    """Lay out ``[CLS] summary [SEP] candidate [SEP]`` padded to ``N``.

    The candidate is cut from its tail first; the summary is cut only when it
    would leave no room for a single candidate token.
    """
    if N < 8:
        raise ConfigError(f"pair length N must be >= 8, got {N}")
    s = vocab.encode(summary_tokens)
    c = vocab.encode(candidate_tokens)
    if c:
        s = s[:N - 4]
    else:
        s = s[:N - 3]
    c = c[:N - 3 - len(s)]
    ids = [CLS_ID] + s + [SEP_ID] + c + [SEP_ID]
    n_real = len(ids)
    ids += [PAD_ID] * (N - n_real)
    mask = [1] * n_real + [0] * (N - n_real)
    return PairSequence(
        ids=np.array(ids, dtype=np.int64),
        mask=np.array(mask, dtype=np.int8),
        summary_span=(1, 1 + len(s)),
        candidate_span=(2 + len(s), 2 + len(s) + len(c)),
    )


def make_single(tokens, N: int, vocab: Vocabulary) -> PairSequence:
    """``[CLS] text [SEP]`` padded to ``N``; the text span is the summary span."""
    if N < 8:
        raise ConfigError(f"sequence length N must be >= 8, got {N}")
    t = vocab.encode(tokens)[:N - 2]
    if not t:
        raise EncodeError("cannot encode an empty token list")
    ids = [CLS_ID] + t + [SEP_ID]
    n_real = len(ids)
    ids += [PAD_ID] * (N - n_real)
    return PairSequence(
        ids=np.array(ids, dtype=np.int64),
        mask=np.array([1] * n_real + [0] * (N - n_real), dtype=np.int8),
        summary_span=(1, 1 + len(t)),
        candidate_span=(1 + len(t), 1 + len(t)),
    )


@dataclass
class Prepared:
    """A sample turned into fixed-size arrays for the model."""

    sample: Sample
    candidates: list
    pairs: list
    summary_single: PairSequence | None
    document_single: PairSequence
    doc_length: int

    @property
    def label_index(self) -> int:
        return self.sample.label - 1


def prepare(sample: Sample, vocab: Vocabulary, tfidf: TfIdf, T: int = 3, N: int = 256,
            max_candidate_tokens: int = 80) -> Prepared:
    cands = extract_candidates(sample, T, max_candidate_tokens, tfidf)
    summary_tokens = tokenize(sample.summary)
    doc_tokens = tokenize(sample.document)
    pairs = [make_pair(summary_tokens, c.tokens, N, vocab) for c in cands]
    return Prepared(
        sample=sample,
        candidates=cands,
        pairs=pairs,
        summary_single=make_single(summary_tokens, N, vocab) if summary_tokens else None,
        document_single=make_single(doc_tokens, N, vocab),
        doc_length=len(doc_tokens),
    )


def tfidf_to_json(tfidf: TfIdf) -> str:
    return json.dumps({"n_docs": tfidf.n_docs, "idf": tfidf.idf}, ensure_ascii=False, sort_keys=True)


def tfidf_from_json(text: str) -> TfIdf:
    obj = json.loads(text)
    return TfIdf({k: float(v) for k, v in obj["idf"].items()}, int(obj["n_docs"]))
