"""Corpus ingestion, deterministic splitting and the synthetic subject-keyed corpus."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestError
from .text import Sample

REVIEW_HOLDOUT = 1000


def read_corpus(path, num_classes: int | None = None) -> list[Sample]:
    """Read line-delimited JSON records with ``text``, ``summary`` and ``label``."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise IngestError(f"malformed record: {exc}", lineno) from None
            if not isinstance(rec, dict):
                raise IngestError("record is not an object", lineno)
            missing = [k for k in ("text", "summary", "label") if k not in rec]
            if missing:
                raise IngestError(f"missing fields {missing}", lineno)
            text, summary, label = rec["text"], rec["summary"], rec["label"]
            if not isinstance(text, str) or not isinstance(summary, str):
                raise IngestError("text and summary must be strings", lineno)
            if isinstance(label, bool) or not isinstance(label, int):
                raise IngestError(f"label must be an integer, got {label!r}", lineno)
            if label < 1 or (num_classes is not None and label > num_classes):
                raise IngestError(f"label {label} out of range [1, {num_classes or 'K'}]", lineno)
            if not text.strip():
                raise IngestError("empty document", lineno)
            extra = {k: v for k, v in rec.items() if k not in ("text", "summary", "label")}
            samples.append(Sample(text, summary, label, extra))
    if not samples:
        raise IngestError(f"no records in {path}")
    return samples


def write_corpus(path, samples):
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {"text": s.document, "summary": s.summary, "label": s.label, **s.extra}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


@dataclass(frozen=True)
class SplitSpec:
    """``review[:VAL,TEST]`` takes leading records as validation then test;
    ``random[:TRAIN,VAL,TEST]`` shuffles with a seed. Values below 1 are
    fractions of the corpus, otherwise counts."""

    kind: str = "random"
    values: tuple = (0.8, 0.1, 0.1)

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        kind, _, rest = text.strip().partition(":")
        kind = {"news": "random"}.get(kind, kind)
        if kind not in ("review", "random"):
            raise ConfigError(f"unknown split kind {kind!r}")
        if not rest:
            values = (REVIEW_HOLDOUT, REVIEW_HOLDOUT) if kind == "review" else (0.8, 0.1, 0.1)
        else:
            try:
                values = tuple(float(v) for v in rest.split(","))
            except ValueError:
                raise ConfigError(f"bad split values {rest!r}") from None
        expected = 2 if kind == "review" else 3
        if len(values) != expected or any(v < 0 for v in values):
            raise ConfigError(f"{kind} split needs {expected} nonnegative values, got {rest!r}")
        return cls(kind, values)

    def __str__(self):
        return f"{self.kind}:" + ",".join(f"{v:g}" for v in self.values)


def _count(v, n):
    return int(round(v * n)) if v < 1 else int(v)


def split_indices(n: int, spec: SplitSpec, seed: int = 0) -> dict:
    if spec.kind == "review":
        n_val, n_test = (_count(v, n) for v in spec.values)
        if n_val + n_test >= n:
            raise ConfigError(f"review split {spec} leaves no training data out of {n}")
        return {
            "train": list(range(n_val + n_test, n)),
            "val": list(range(n_val)),
            "test": list(range(n_val, n_val + n_test)),
        }
    total = sum(spec.values)
    if total <= 0:
        raise ConfigError("split ratios sum to zero")
    _, fv, ft = (v / total for v in spec.values)
    n_val, n_test = int(round(n * fv)), int(round(n * ft))
    if n_val + n_test >= n:
        raise ConfigError(f"random split {spec} leaves no training data out of {n}")
    perm = np.random.default_rng(seed).permutation(n).tolist()
    return {
        "train": sorted(perm[n_val + n_test:]),
        "val": sorted(perm[:n_val]),
        "test": sorted(perm[n_val:n_val + n_test]),
    }


def split_hash(samples) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(json.dumps([s.document, s.summary, s.label], ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class Splits:
    train: list
    val: list
    test: list
    manifest: dict = field(default_factory=dict)


def make_splits(samples, spec: SplitSpec, seed: int = 0) -> Splits:
    idx = split_indices(len(samples), spec, seed)
    parts = {k: [samples[i] for i in v] for k, v in idx.items()}
    manifest = {
        "split": str(spec),
        "seed": seed,
        "total": len(samples),
        "indices": idx,
        "hashes": {k: split_hash(v) for k, v in parts.items()},
    }
    return Splits(parts["train"], parts["val"], parts["test"], manifest)


def ingest(path, spec: SplitSpec | str = "random", seed: int = 0, num_classes: int | None = None,
           manifest_path=None) -> Splits:
    """Read a corpus file and split it; optionally write the split manifest."""
    if isinstance(spec, str):
        spec = SplitSpec.parse(spec)
    samples = read_corpus(path, num_classes)
    splits = make_splits(samples, spec, seed)
    splits.manifest["source_sha256"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    if manifest_path is not None:
        Path(manifest_path).write_text(json.dumps(splits.manifest, indent=1, sort_keys=True))
    return splits


def splits_from_manifest(path, manifest) -> Splits:
    """Rebuild splits exactly from a manifest written by :func:`ingest`."""
    samples = read_corpus(path)
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    if manifest.get("source_sha256") not in (None, digest):
        raise IngestError("corpus file does not match the manifest")
    parts = {k: [samples[i] for i in v] for k, v in manifest["indices"].items()}
    return Splits(parts["train"], parts["val"], parts["test"], manifest)


# -- synthetic corpus ---------------------------------------------------------

SUBJECTS = ("battery", "screen", "strap", "lid", "wheel", "button", "cable", "handle", "lens", "zipper")

CUES = {
    2: (("terrible", "awful", "broken", "useless"),
        ("great", "excellent", "awesome", "wonderful")),
    3: (("terrible", "awful", "broken", "useless"),
        ("okay", "average", "decent", "passable"),
        ("great", "excellent", "awesome", "wonderful")),
    5: (("terrible", "awful", "useless"),
        ("poor", "flimsy", "disappointing"),
        ("okay", "average", "passable"),
        ("good", "solid", "nice"),
        ("excellent", "awesome", "wonderful")),
}

_CUE_TEMPLATES = ("the {s} is {c} .", "honestly the {s} seems {c} .", "i found the {s} {c} .",
                  "the {s} was really {c} !")
_FILLERS = ("it arrived on {day} .", "i ordered it last {period} .", "the box was {color} .",
            "shipping took {n} days .", "my friend recommended this store .")
_SUMMARY_TEMPLATES = ("{s}", "the {s}", "about the {s}", "my {s}")
_DAYS = ("monday", "tuesday", "friday", "sunday")
_PERIODS = ("week", "month", "year")
_COLORS = ("brown", "white", "blue")


def cue_words(num_classes: int):
    if num_classes in CUES:
        return CUES[num_classes]
    return tuple(tuple(f"cue{k}x{m}" for m in range(3)) for k in range(1, num_classes + 1))


@dataclass
class SyntheticSpec:
    n_samples: int = 200
    num_classes: int = 3
    subjects: tuple = SUBJECTS
    cues: tuple | None = None
    distractor_rate: float = 1.0
    noise_rate: float = 0.0
    max_fillers: int = 2

    def validate(self):
        if self.n_samples < 1 or self.num_classes < 2:
            raise ConfigError("need at least one sample and two classes")
        for name in ("distractor_rate", "noise_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if len(self.subjects) < self.num_classes:
            raise ConfigError("need at least as many subjects as classes")
        if self.max_fillers < 0:
            raise ConfigError("max_fillers must be >= 0")
        return self


def _filler(rng):
    t = _FILLERS[rng.integers(len(_FILLERS))]
    return t.format(day=_DAYS[rng.integers(len(_DAYS))], period=_PERIODS[rng.integers(len(_PERIODS))],
                    color=_COLORS[rng.integers(len(_COLORS))], n=int(rng.integers(2, 9)))


def _cue_sentence(rng, subject, cues):
    t = _CUE_TEMPLATES[rng.integers(len(_CUE_TEMPLATES))]
    return t.format(s=subject, c=cues[rng.integers(len(cues))])


def gen_synthetic(spec: SyntheticSpec, seed: int = 0) -> list[Sample]:
    """Documents where only the sentence about the summary's subject sets the label.

    Every other cue sentence talks about a different subject and, at
    ``distractor_rate``, carries a conflicting sentiment. Labels are flipped
    to a different class at ``noise_rate``.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    k = spec.num_classes
    cues = spec.cues or cue_words(k)
    out = []
    for _ in range(spec.n_samples):
        label = int(rng.integers(1, k + 1))
        subj_idx = rng.permutation(len(spec.subjects))[:k]
        subject = spec.subjects[subj_idx[0]]
        sentences = [_cue_sentence(rng, subject, cues[label - 1])]
        others = [c for c in range(1, k + 1) if c != label]
        others = [others[i] for i in rng.permutation(len(others))]
        for i, s_idx in enumerate(subj_idx[1:]):
            other = spec.subjects[s_idx]
            if rng.random() < spec.distractor_rate:
                sentences.append(_cue_sentence(rng, other, cues[others[i % len(others)] - 1]))
            else:
                sentences.append(f"the {other} came in the package .")
        sentences += [_filler(rng) for _ in range(int(rng.integers(0, spec.max_fillers + 1)))]
        order = rng.permutation(len(sentences))
        document = " ".join(sentences[i] for i in order)
        summary = _SUMMARY_TEMPLATES[rng.integers(len(_SUMMARY_TEMPLATES))].format(s=subject)
        noisy = bool(rng.random() < spec.noise_rate)
        gold = label
        if noisy:
            gold = others[int(rng.integers(len(others)))] if k > 2 else others[0]
        out.append(Sample(document, summary, gold,
                          {"subject": subject, "clean_label": label, "noisy": noisy}))
    return out
