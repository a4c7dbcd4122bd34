"""Command-line entry point.

Subcommands: gen-synthetic, train, eval, ablate, sweep-episodes,
length-report, export-attention. Reports are CSV files written to an output
directory together with a JSON run manifest.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoint, config as cfgmod
from .data import SyntheticSpec, gen_synthetic, ingest, splits_from_manifest, write_corpus
from .errors import ConfigError, HinError
from .harness import (ablation_csv, confusion_csv, evaluate, export_attention, length_buckets,
                      prepare_splits, report_csv, run_ablation, run_manifest, sha256_file, sweep_csv,
                      sweep_episodes, write_json, write_plot_stub)
from .model import MODES, HINModel
from .text import Vocabulary, tfidf_from_json, tfidf_to_json
from .trainer import config_dict, train

log = logging.getLogger("hinsr")

# run-config fields exposed as flags; everything else comes from --config
_FLAGS = {
    "split": str, "mode": str, "num_classes": int, "T": int, "N": int, "max_candidate_tokens": int,
    "min_count": int, "hidden": int, "layers": int, "heads": int, "ffn": int, "gru_hidden": int,
    "dropout": float, "dtype": str, "lam": float, "episodes": int, "epochs": int, "lr": float,
    "batch_size": int,
}


def _common(p, corpus_required=True):
    p.add_argument("--corpus", required=corpus_required, help="line-delimited JSON corpus")
    p.add_argument("--out-dir", required=True, help="directory for reports, checkpoints and manifest")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="evaluation threads (default 1)")
    p.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSVs")


def _training_flags(p):
    for name, kind in _FLAGS.items():
        flag = "--" + name.replace("_", "-")
        extra = {"choices": MODES} if name == "mode" else {}
        p.add_argument(flag, dest=name, type=kind, default=None, **extra)


def _run_dir_flags(p):
    p.add_argument("--run-dir", required=True, help="output directory of a previous train run")
    p.add_argument("--out-dir", help="where to write reports (default: the run directory)")
    p.add_argument("--corpus", help="override the corpus path recorded in the run")
    p.add_argument("--split", dest="which", choices=("train", "val", "test"), default="test")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="accepted for symmetry; evaluation is deterministic")
    p.add_argument("--figures", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hinsr", description="Summary-guided document sentiment classifier.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="write a subject-keyed synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--num-classes", type=int, default=3)
    g.add_argument("--distractor-rate", type=float, default=1.0)
    g.add_argument("--noise-rate", type=float, default=0.0)
    g.add_argument("--max-fillers", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train one model")
    _common(t, corpus_required=False)
    _training_flags(t)

    a = sub.add_parser("ablate", help="train and test all five modes")
    _common(a, corpus_required=False)
    _training_flags(a)

    s = sub.add_parser("sweep-episodes", help="test accuracy for 0..E training episodes")
    _common(s, corpus_required=False)
    _training_flags(s)
    s.add_argument("--max-episodes", type=int, default=4)

    e = sub.add_parser("eval", help="evaluate a trained run")
    _run_dir_flags(e)

    lr = sub.add_parser("length-report", help="accuracy in six document-length buckets")
    _run_dir_flags(lr)

    x = sub.add_parser("export-attention", help="candidate and token weights as JSON lines")
    _run_dir_flags(x)
    x.add_argument("--limit", type=int, default=None, help="export at most this many samples")
    return parser


# -- helpers ------------------------------------------------------------------


def _resolve(args) -> cfgmod.RunConfig:
    file_values = cfgmod.read_config_file(args.config) if args.config else {}
    cli = {name: getattr(args, name, None) for name in _FLAGS}
    cli.update(corpus=args.corpus, out_dir=args.out_dir, seed=args.seed, threads=args.threads)
    cfg = cfgmod.resolve(file_values, cli)
    if cfg.corpus is None:
        raise ConfigError("no corpus given (--corpus or 'corpus' in the config file)")
    cfg.corpus = str(Path(cfg.corpus).resolve())
    return cfg


def _load_data(cfg: cfgmod.RunConfig, out: Path):
    splits = ingest(cfg.corpus, cfg.split, cfg.seed, cfg.num_classes, manifest_path=out / "splits.json")
    data = prepare_splits(splits, cfg.T, cfg.N, cfg.max_candidate_tokens, cfg.min_count)
    (out / "vocab.json").write_text(data.vocab.to_json(), encoding="utf-8")
    (out / "tfidf.json").write_text(tfidf_to_json(data.tfidf), encoding="utf-8")
    return data


def _finish(out: Path, figures: bool):
    write_plot_stub(out)
    if figures:
        from .plotting import render_dir

        for path in render_dir(out):
            log.info("wrote %s", path)


def _load_run(args):
    run = Path(args.run_dir)
    try:
        saved = json.loads((run / "config.json").read_text(encoding="utf-8"))
        split_manifest = json.loads((run / "splits.json").read_text(encoding="utf-8"))
        vocab = Vocabulary.from_json((run / "vocab.json").read_text(encoding="utf-8"))
        tfidf = tfidf_from_json((run / "tfidf.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"{run} is not a train output directory: {exc.filename} missing") from None
    cfg = cfgmod.from_dict(saved)
    if args.corpus:
        cfg.corpus = args.corpus
    splits = splits_from_manifest(cfg.corpus, split_manifest)
    data = prepare_splits(splits, cfg.T, cfg.N, cfg.max_candidate_tokens, vocab=vocab, tfidf=tfidf)
    model = HINModel(cfg.model_config(len(vocab)), cfg.mode)
    model.load_state(checkpoint.load(run / "best.ckpt"))
    out = Path(args.out_dir) if args.out_dir else run
    out.mkdir(parents=True, exist_ok=True)
    return cfg, data, model, out, getattr(data, args.which)


# -- commands -----------------------------------------------------------------


def cmd_gen_synthetic(args):
    spec = SyntheticSpec(n_samples=args.n, num_classes=args.num_classes, distractor_rate=args.distractor_rate,
                         noise_rate=args.noise_rate, max_fillers=args.max_fillers)
    samples = gen_synthetic(spec, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_corpus(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")


def cmd_train(args):
    cfg = _resolve(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_data(cfg, out)
    model_config = cfg.model_config(len(data.vocab))
    write_json(out / "config.json", cfg.to_dict())
    result = train(data.train, data.val, model_config, cfg.train_config(), cfg.mode, out_dir=out)
    test = evaluate(result.model, data.test, cfg.threads)
    (out / "eval.csv").write_text(report_csv(test, "test"), encoding="utf-8")
    manifest = run_manifest(config_dict(model_config, cfg.train_config()), cfg.seed, data.manifest,
                            result.checkpoints.get("best"),
                            {"best_episode_epoch": list(result.best), "episode_checkpoints":
                             {str(k): v for k, v in result.checkpoints.items() if k != "best"},
                             "split_hashes_prepared": data.hashes()})
    write_json(out / "manifest.json", manifest)
    _finish(out, args.figures)
    print(f"test accuracy {test.accuracy:.4f} macro-F1 {test.macro_f1:.4f}; outputs in {out}")


def cmd_ablate(args):
    cfg = _resolve(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_data(cfg, out)
    model_config = cfg.model_config(len(data.vocab))
    rows = run_ablation(data, model_config, cfg.train_config(), threads=cfg.threads)
    (out / "ablation.csv").write_text(ablation_csv(rows), encoding="utf-8")
    write_json(out / "manifest.json", run_manifest(cfg.to_dict(), cfg.seed, data.manifest, None,
                                                   {"split_hashes_per_mode": {r.mode: r.split_hashes for r in rows}}))
    _finish(out, args.figures)
    print((out / "ablation.csv").read_text(encoding="utf-8"), end="")


def cmd_sweep(args):
    cfg = _resolve(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_data(cfg, out)
    model_config = cfg.model_config(len(data.vocab))
    rows = sweep_episodes(data, model_config, cfg.train_config(), args.max_episodes, cfg.mode, cfg.threads)
    (out / "sweep.csv").write_text(sweep_csv(rows), encoding="utf-8")
    write_json(out / "manifest.json", run_manifest(cfg.to_dict(), cfg.seed, data.manifest, None,
                                                   {"max_episodes": args.max_episodes}))
    _finish(out, args.figures)
    print((out / "sweep.csv").read_text(encoding="utf-8"), end="")


def cmd_eval(args):
    cfg, data, model, out, subset = _load_run(args)
    rep = evaluate(model, subset, args.threads)
    (out / f"eval_{args.which}.csv").write_text(report_csv(rep, args.which), encoding="utf-8")
    (out / f"confusion_{args.which}.csv").write_text(confusion_csv(rep), encoding="utf-8")
    write_json(out / f"eval_{args.which}_manifest.json",
               run_manifest(cfg.to_dict(), cfg.seed, data.manifest, sha256_file(Path(args.run_dir) / "best.ckpt")))
    _finish(out, args.figures)
    print(f"{args.which} accuracy {rep.accuracy:.4f} macro-F1 {rep.macro_f1:.4f}")


def cmd_length_report(args):
    cfg, data, model, out, subset = _load_run(args)
    rep = length_buckets(subset, model, args.threads)
    (out / "length_buckets.csv").write_text(rep.to_csv(), encoding="utf-8")
    _finish(out, args.figures)
    print(rep.to_csv(), end="")


def cmd_export_attention(args):
    cfg, data, model, out, subset = _load_run(args)
    subset = subset[:args.limit] if args.limit is not None else subset
    path = out / f"attention_{args.which}.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for p in subset:
            fh.write(json.dumps(export_attention(p, model), ensure_ascii=False) + "\n")
    print(f"wrote {len(subset)} records to {path}")


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "sweep-episodes": cmd_sweep,
    "eval": cmd_eval,
    "length-report": cmd_length_report,
    "export-attention": cmd_export_attention,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "corpus", "") is None and args.command in ("train", "ablate", "sweep-episodes"):
        # the corpus may come from the config file; otherwise it is a usage error
        try:
            from_file = cfgmod.read_config_file(args.config).get("corpus") if args.config else None
        except HinError as exc:
            parser.error(str(exc))
        if from_file is None:
            parser.error("the following arguments are required: --corpus")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except HinError as exc:
        print(f"hinsr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"hinsr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
