import pytest

from hinsr.config import RunConfig, from_dict, read_config_file, resolve
from hinsr.errors import ConfigError


def test_defaults():
    cfg = resolve()
    assert (cfg.T, cfg.N, cfg.dropout, cfg.epochs, cfg.lam) == (3, 256, 0.1, 2, 0.8)
    assert cfg.threads == 1
    assert cfg.split == "random"


def test_cli_beats_file_beats_default(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nepochs = 5\nlam = 0.6\nmode = no_doc\n; other comment\n")
    file_values = read_config_file(p)
    assert file_values == {"epochs": 5, "lam": 0.6, "mode": "no_doc"}
    cfg = resolve(file_values, {"epochs": 7, "lam": None, "seed": 3})
    assert (cfg.epochs, cfg.lam, cfg.mode, cfg.seed, cfg.batch_size) == (7, 0.6, "no_doc", 3, 32)


def test_dashed_keys_and_none_corpus(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("batch-size: 8\ncorpus = none\n")
    assert read_config_file(p) == {"batch_size": 8, "corpus": None}


@pytest.mark.parametrize("text", ["bogus = 1\n", "epochs = two\n", "epochs = 1.5\n", "no equals sign\n"])
def test_bad_files(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError):
        read_config_file(p)


@pytest.mark.parametrize("bad", [
    dict(mode="nope"), dict(split="sideways"), dict(N=4), dict(lam=2.0), dict(epochs=0),
    dict(dtype="int8"), dict(dtype="nonsense"), dict(hidden=6, heads=4), dict(dropout=1.0),
    dict(max_candidate_tokens=0),
])
def test_validation_before_training(bad):
    with pytest.raises(ConfigError):
        resolve(bad)


def test_unknown_cli_key():
    with pytest.raises(ConfigError):
        resolve(None, {"colour": "red"})


def test_round_trip_through_dict():
    cfg = resolve(None, {"epochs": 3, "corpus": "x.jsonl"})
    assert from_dict(cfg.to_dict()) == cfg


def test_derived_configs():
    cfg = RunConfig(hidden=16, heads=4, ffn=32, N=64, lam=0.6, seed=9)
    mc = cfg.model_config(vocab_size=50)
    assert (mc.encoder.vocab_size, mc.encoder.max_len, mc.encoder.hidden, mc.T) == (50, 64, 16, 3)
    tc = cfg.train_config()
    assert (tc.lam, tc.seed, tc.epochs) == (0.6, 9, 2)
