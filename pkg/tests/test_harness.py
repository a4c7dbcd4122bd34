import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hinsr.data import SplitSpec, SyntheticSpec, gen_synthetic, make_splits
from hinsr.encoder import EncoderConfig
from hinsr.errors import ConfigError, EvalError
from hinsr.harness import (PLOT_STUB, ablation_csv, confusion_csv, evaluate, export_attention,
                           length_bucket_stats, length_buckets, prepare_splits, report_csv, run_ablation,
                           run_manifest, subject_hit_rate, sweep_csv, sweep_episodes, write_plot_stub)
from hinsr.metrics import evaluate_predictions
from hinsr.model import MODES, HINModel, ModelConfig
from hinsr.plotting import render_dir
from hinsr.trainer import TrainConfig, train


@pytest.fixture(scope="module")
def data():
    samples = gen_synthetic(SyntheticSpec(n_samples=60, num_classes=3), seed=2)
    return prepare_splits(make_splits(samples, SplitSpec.parse("random"), 0), T=3, N=32, max_candidate_tokens=8)


def model_config(data):
    enc = EncoderConfig(len(data.vocab), max_len=32, hidden=8, layers=1, heads=2, ffn=16)
    return ModelConfig(enc, num_classes=3, gru_hidden=4)


def parse(text):
    return list(csv.reader(io.StringIO(text)))


class TestReports:
    def test_report_and_confusion_csv(self):
        rep = evaluate_predictions([1, 2, 2, 3], [1, 1, 2, 3], 3)
        rows = parse(report_csv(rep))
        assert rows[0][:4] == ["split", "class", "accuracy", "macro_f1"]
        assert rows[1][:4] == ["test", "all", "0.75", repr(rep.macro_f1)]
        assert [r[1] for r in rows[2:]] == ["1", "2", "3"]
        assert [r[-1] for r in rows[2:]] == ["2", "1", "1"]
        assert parse(confusion_csv(rep)) == [["gold\\pred", "1", "2", "3"], ["1", "1", "1", "0"],
                                             ["2", "0", "1", "0"], ["3", "0", "0", "1"]]

    def test_evaluate_counts_every_sample(self, data):
        rep = evaluate(HINModel(model_config(data)), data.test)
        assert rep.total == len(data.test)
        with pytest.raises(EvalError):
            evaluate(HINModel(model_config(data)), [])


class TestAblation:
    def test_five_modes_two_metrics_same_splits(self, data):
        rows = run_ablation(data, model_config(data), TrainConfig(episodes=0, epochs=1))
        assert [r.mode for r in rows] == list(MODES) and len(rows) == 5
        assert all(r.split_hashes == rows[0].split_hashes for r in rows)
        table = parse(ablation_csv(rows))
        assert table[0] == ["mode", "accuracy", "macro_f1"]
        assert len(table) == 6 and all(len(r) == 3 for r in table)
        for r in table[1:]:
            assert 0.0 <= float(r[1]) <= 1.0 and 0.0 <= float(r[2]) <= 1.0

    def test_changed_splits_are_detected(self, data):
        class Drifting(type(data)):
            calls = 0

            def hashes(self):
                Drifting.calls += 1
                return {"train": str(Drifting.calls)}

        drifting = Drifting(**vars(data))
        with pytest.raises(EvalError, match="splits changed"):
            run_ablation(drifting, model_config(data), TrainConfig(episodes=0, epochs=1))


class TestSweep:
    def test_rows_zero_to_four_and_prefix_property(self, data):
        tc = TrainConfig(episodes=1, epochs=1, seed=5)
        rows = sweep_episodes(data, model_config(data), tc, e_max=4)
        assert [r[0] for r in rows] == [0, 1, 2, 3, 4]
        table = parse(sweep_csv(rows))
        assert table[0] == ["episodes", "accuracy", "macro_f1"] and len(table) == 6
        for e in (0, 2):
            alone = train(data.train, data.val, model_config(data), TrainConfig(episodes=e, epochs=1, seed=5))
            rep = evaluate(alone.model, data.test)
            assert rows[e][1:] == (rep.accuracy, rep.macro_f1)

    def test_needs_at_least_one_episode(self, data):
        with pytest.raises(ConfigError):
            sweep_episodes(data, model_config(data), TrainConfig(), e_max=0)


class TestLengthBuckets:
    def test_identical_lengths_fill_one_bucket(self):
        rep = length_bucket_stats([7] * 30, [True] * 10 + [False] * 20)
        assert rep.counts == [30, 0, 0, 0, 0, 0]
        assert rep.accuracies == [Fraction(1, 3)] + [None] * 5
        rows = parse(rep.to_csv())
        assert [r[-1] for r in rows[2:]] == ["NA"] * 5

    def test_distinct_lengths_split_evenly(self):
        rep = length_bucket_stats(np.arange(1, 601), np.ones(600, bool))
        assert rep.counts == [100] * 6
        assert len(rep.boundaries) == 5

    def test_bucket_csv_edges(self):
        rep = length_bucket_stats(np.arange(1, 13), np.zeros(12, bool))
        rows = parse(rep.to_csv())
        assert rows[0] == ["bucket", "lower_exclusive", "upper_inclusive", "count", "accuracy"]
        assert rows[1][1] == "" and rows[-1][2] == ""
        assert [float(r[2]) for r in rows[1:-1]] == rep.boundaries

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 400), st.booleans()), min_size=1, max_size=300))
    def test_partition_and_exact_weighted_mean(self, items):
        lengths, correct = zip(*items)
        rep = length_bucket_stats(lengths, correct)
        assert sum(rep.counts) == len(items)
        assert sum(rep.correct) == sum(correct)
        assert rep.weighted_mean() == rep.overall == Fraction(sum(correct), len(items))
        # every length lands in the bucket its cut points dictate
        edges = [-math.inf] + rep.boundaries + [math.inf]
        for b, n in enumerate(rep.counts):
            assert n == sum(edges[b] < x <= edges[b + 1] for x in lengths)

    def test_errors(self):
        with pytest.raises(EvalError):
            length_bucket_stats([], [])
        with pytest.raises(EvalError):
            length_bucket_stats([1, 2], [True])

    def test_with_model(self, data):
        model = HINModel(model_config(data))
        rep = length_buckets(data.test, model)
        assert rep.total == len(data.test)
        assert rep.overall == Fraction(round(evaluate(model, data.test).accuracy * rep.total), rep.total)


class TestAttentionExport:
    def test_structure(self, data):
        model = HINModel(model_config(data))
        prepared = data.test[0]
        rec = export_attention(prepared, model)
        assert rec["summary"] == prepared.sample.summary
        assert len(rec["candidates"]) == 3
        assert sum(c["alpha"] for c in rec["candidates"]) == pytest.approx(1.0, abs=1e-12)
        assert sum(rec["probs"]) == pytest.approx(1.0, abs=1e-12)
        for c, pair in zip(rec["candidates"], prepared.pairs):
            c0, c1 = pair.candidate_span
            assert len(c["tokens"]) == c1 - c0 == len(c["summary_attention"])
            assert all(0.0 <= m <= 1.0 + 1e-12 for m in c["summary_attention"])

    def test_no_doc_mode_has_no_alpha(self, data):
        rec = export_attention(data.test[0], HINModel(model_config(data), "no_doc"))
        assert all(c["alpha"] is None for c in rec["candidates"])

    def test_subject_hit_rate(self):
        recs = [
            {"label": 1, "predicted": 1, "candidates": [{"alpha": 0.9, "tokens": ["the", "lid"]},
                                                        {"alpha": 0.1, "tokens": ["x"]}]},
            {"label": 2, "predicted": 2, "candidates": [{"alpha": 0.2, "tokens": ["lid"]},
                                                        {"alpha": 0.8, "tokens": ["y"]}]},
            {"label": 1, "predicted": 2, "candidates": [{"alpha": 1.0, "tokens": ["lid"]}]},
        ]
        assert subject_hit_rate(recs, ["lid"] * 3) == (0.5, 2)


def test_manifest_and_plot_stub(tmp_path):
    m = run_manifest({"seed": 1}, 1, {"split": "random"}, "abc", {"extra": 2})
    assert m == {"config": {"seed": 1}, "seed": 1, "split": {"split": "random"}, "checkpoint_sha256": "abc",
                 "extra": 2}
    path = write_plot_stub(tmp_path)
    assert path.read_text() == PLOT_STUB
    compile(PLOT_STUB, "plot.py", "exec")


def test_render_dir_writes_pngs(tmp_path):
    (tmp_path / "ablation.csv").write_text("mode,accuracy,macro_f1\nfull,0.9,0.8\nno_doc,0.5,0.4\n")
    (tmp_path / "sweep.csv").write_text("episodes,accuracy,macro_f1\n0,0.5,0.4\n1,0.6,0.5\n")
    (tmp_path / "length_buckets.csv").write_text(
        "bucket,lower_exclusive,upper_inclusive,count,accuracy\n1,,3.0,2,0.5\n2,3.0,,0,NA\n")
    (tmp_path / "metrics.csv").write_text(
        "episode,epoch,split,accuracy,macro_f1,mean_reward,loss\n0,0,train,0.5,0.4,1.0,1.0\n"
        "0,0,val,0.6,0.5,,0.9\n")
    out = render_dir(tmp_path)
    assert sorted(p.name for p in out) == ["ablation.png", "length_buckets.png", "metrics.png", "sweep.png"]
    for p in out:
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
