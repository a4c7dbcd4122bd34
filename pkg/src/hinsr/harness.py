"""Evaluation, ablation runs, episode sweeps, length buckets and attention export."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import tensor as tn
from .data import Splits, split_hash
from .errors import ConfigError, EvalError
from .metrics import EvalReport, evaluate_predictions
from .model import MODES, HINModel, ModelConfig, collate
from .text import TfIdf, Vocabulary, build_vocab, prepare
from .trainer import TrainConfig, predict, train


@dataclass
class PreparedSplits:
    vocab: Vocabulary
    tfidf: TfIdf
    train: list
    val: list
    test: list
    manifest: dict

    def hashes(self) -> dict:
        return {k: split_hash([p.sample for p in getattr(self, k)]) for k in ("train", "val", "test")}


def prepare_splits(splits: Splits, T=3, N=256, max_candidate_tokens=80, min_count=1,
                   vocab=None, tfidf=None) -> PreparedSplits:
    """Vocabulary and IDF come from the training split unless given."""
    vocab = vocab or build_vocab(splits.train, min_count)
    tfidf = tfidf or TfIdf.fit([s.document for s in splits.train])
    prep = lambda xs: [prepare(s, vocab, tfidf, T, N, max_candidate_tokens) for s in xs]
    return PreparedSplits(vocab, tfidf, prep(splits.train), prep(splits.val), prep(splits.test),
                          dict(splits.manifest))


def evaluate(model: HINModel, prepared, threads: int = 1) -> EvalReport:
    prepared = list(prepared)
    if not prepared:
        raise EvalError("nothing to evaluate")
    preds = predict(model, prepared, threads=threads)
    return evaluate_predictions(preds.labels, [p.sample.label for p in prepared],
                                model.config.num_classes)


def report_csv(report: EvalReport, split: str = "test") -> str:
    """Per-split summary then per-class precision/recall/F1."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["split", "class", "accuracy", "macro_f1", "precision", "recall", "f1", "support"])
    w.writerow([split, "all", repr(float(report.accuracy)), repr(float(report.macro_f1)), "", "", "", report.total])
    support = report.confusion.sum(axis=1)
    for c in range(len(report.f1)):
        w.writerow([split, c + 1, "", "", repr(float(report.precision[c])), repr(float(report.recall[c])),
                    repr(float(report.f1[c])), int(support[c])])
    return buf.getvalue()


def confusion_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    k = report.confusion.shape[0]
    w.writerow(["gold\\pred"] + [str(c + 1) for c in range(k)])
    for g in range(k):
        w.writerow([g + 1] + [int(v) for v in report.confusion[g]])
    return buf.getvalue()


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# -- ablation -----------------------------------------------------------------


@dataclass
class AblationRow:
    mode: str
    accuracy: float
    macro_f1: float
    split_hashes: dict


def run_ablation(data: PreparedSplits, model_config: ModelConfig, train_config: TrainConfig,
                 modes=MODES, threads: int = 1) -> list[AblationRow]:
    """Train and test every mode with the same seed, budget and splits."""
    rows = []
    reference = data.hashes()
    for mode in modes:
        hashes = data.hashes()
        if hashes != reference:
            raise EvalError(f"splits changed between ablation runs (mode {mode})")
        result = train(data.train, data.val, model_config, train_config, mode)
        rep = evaluate(result.model, data.test, threads)
        rows.append(AblationRow(mode, rep.accuracy, rep.macro_f1, hashes))
    return rows


def ablation_csv(rows) -> str:
    return _rows_csv(["mode", "accuracy", "macro_f1"], [(r.mode, r.accuracy, r.macro_f1) for r in rows])


# -- episode sweep ------------------------------------------------------------


def sweep_episodes(data: PreparedSplits, model_config: ModelConfig, train_config: TrainConfig,
                   e_max: int, mode: str = "full", threads: int = 1) -> list[tuple]:
    """Test (episodes, accuracy, macro_f1) for E = 0..e_max.

    A run with E episodes is the first E+1 episodes of a run with more, so one
    run to ``e_max`` yields every row: after episode E the best-validation
    weights so far are exactly what a standalone E-episode run would return.
    """
    if e_max < 1:
        raise ConfigError(f"e_max must be >= 1, got {e_max}")
    rows = []
    probe = HINModel(model_config, mode)

    def hook(episode, best_at, best_state):
        probe.load_state(best_state)
        rep = evaluate(probe, data.test, threads)
        rows.append((episode, rep.accuracy, rep.macro_f1))

    train(data.train, data.val, model_config, replace(train_config, episodes=e_max), mode,
          episode_hook=hook)
    return rows


def sweep_csv(rows) -> str:
    return _rows_csv(["episodes", "accuracy", "macro_f1"], rows)


# -- length buckets -----------------------------------------------------------


@dataclass
class LengthBucketReport:
    boundaries: list        # five cut points
    counts: list
    correct: list

    @property
    def accuracies(self) -> list:
        """Exact per-bucket accuracy; None for an empty bucket."""
        return [Fraction(c, n) if n else None for c, n in zip(self.correct, self.counts)]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def overall(self) -> Fraction:
        return Fraction(sum(self.correct), self.total)

    def weighted_mean(self) -> Fraction:
        return sum((n * a for n, a in zip(self.counts, self.accuracies) if a is not None),
                   Fraction(0)) / self.total

    def to_csv(self) -> str:
        edges = [-math.inf] + list(self.boundaries) + [math.inf]
        rows = []
        for b, (n, acc) in enumerate(zip(self.counts, self.accuracies)):
            rows.append((b + 1, _edge(edges[b]), _edge(edges[b + 1]), n,
                         "NA" if acc is None else repr(float(acc))))
        return _rows_csv(["bucket", "lower_exclusive", "upper_inclusive", "count", "accuracy"], rows)


def _edge(v):
    return "" if math.isinf(v) else repr(float(v))


def length_bucket_stats(lengths, correct, parts: int = 6) -> LengthBucketReport:
    """Bucket b holds lengths with exactly b cut points strictly below them."""
    lengths = np.asarray(lengths, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    if lengths.size == 0:
        raise EvalError("length buckets need a nonempty test set")
    if lengths.shape != correct.shape:
        raise EvalError("lengths and correctness flags differ in size")
    cuts = np.quantile(lengths, [i / parts for i in range(1, parts)])
    idx = (cuts[None, :] < lengths[:, None]).sum(axis=1)
    counts = np.bincount(idx, minlength=parts)
    hits = np.bincount(idx, weights=correct.astype(np.int64), minlength=parts)
    return LengthBucketReport([float(c) for c in cuts], [int(c) for c in counts], [int(h) for h in hits])


def length_buckets(test_set, model: HINModel, threads: int = 1) -> LengthBucketReport:
    test_set = list(test_set)
    if not test_set:
        raise EvalError("length buckets need a nonempty test set")
    labels = predict(model, test_set, threads=threads).labels
    gold = np.array([p.sample.label for p in test_set])
    return length_bucket_stats([p.doc_length for p in test_set], labels == gold)


# -- attention export ---------------------------------------------------------


def export_attention(prepared, model: HINModel, vocab: Vocabulary | None = None) -> dict:
    """Candidate weights and, per candidate token, last-layer attention mass on
    the summary tokens (mean over heads)."""
    with tn.no_grad():
        out = model.forward(collate([prepared]), keep_attention=True)
    probs = out.probs[0]
    alpha = out.alpha.data[0] if out.alpha is not None else None
    last = out.attention[-1] if out.attention else None
    candidates = []
    for j, (cand, pair) in enumerate(zip(prepared.candidates, prepared.pairs)):
        s0, s1 = pair.summary_span
        c0, c1 = pair.candidate_span
        tokens = list(cand.tokens[:c1 - c0])
        mass = None
        if last is not None and j < last.shape[0]:
            att = last[j].mean(axis=0)
            mass = [float(v) for v in att[c0:c1, s0:s1].sum(axis=1)]
        candidates.append({
            "index": j,
            "start": cand.start,
            "end": cand.end,
            "score": cand.score,
            "alpha": None if alpha is None else float(alpha[j]),
            "tokens": tokens,
            "summary_attention": mass,
        })
    return {
        "summary": prepared.sample.summary,
        "label": prepared.sample.label,
        "predicted": int(np.argmax(probs)) + 1,
        "probs": [float(p) for p in probs],
        "candidates": candidates,
    }


def subject_hit_rate(records, subjects) -> tuple[float, int]:
    """Share of correctly classified records whose top-weight candidate
    mentions the given subject token, and how many records were counted."""
    hits = total = 0
    for rec, subject in zip(records, subjects):
        if rec["predicted"] != rec["label"] or rec["candidates"][0]["alpha"] is None:
            continue
        total += 1
        top = max(rec["candidates"], key=lambda c: c["alpha"])
        hits += subject in top["tokens"]
    return (hits / total if total else float("nan")), total


# -- run manifest -------------------------------------------------------------


def run_manifest(config: dict, seed: int, split_manifest: dict, checkpoint_hash: str | None = None,
                 extra: dict | None = None) -> dict:
    out = {
        "config": config,
        "seed": seed,
        "split": split_manifest,
        "checkpoint_sha256": checkpoint_hash,
    }
    out.update(extra or {})
    return out


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


PLOT_STUB = '''"""Render the CSV reports in this directory. Requires matplotlib."""

import sys
from pathlib import Path

from hinsr.plotting import render_dir

if __name__ == "__main__":
    here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
    for path in render_dir(here):
        print(path)
'''


def write_plot_stub(out_dir):
    path = Path(out_dir) / "plot.py"
    path.write_text(PLOT_STUB, encoding="utf-8")
    return path
