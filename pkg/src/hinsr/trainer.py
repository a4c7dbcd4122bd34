"""Cross-entropy training with reward feedback across episodes.

Episode 0 trains with every reward at 1, which is plain cross-entropy. At each
later episode boundary the feedback head scores every training sample, each
reward moves toward the gold-class probability, and training resumes from the
current parameters with the reweighted loss.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from . import tensor as tn
from .errors import ConfigError, DivergenceError
from .metrics import evaluate_predictions
from .model import HINModel, ModelConfig, collate, predict_labels
from .optim import Adam

log = logging.getLogger(__name__)

LOG_COLUMNS = ("episode", "epoch", "split", "accuracy", "macro_f1", "mean_reward", "loss")

# learning rate used with a pretrained encoder; too small for one trained from scratch
PRETRAINED_LR = 5e-6


@dataclass
class TrainConfig:
    lam: float = 0.8
    episodes: int = 1
    epochs: int = 2
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    threads: int = 1

    def validate(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if self.episodes < 0:
            raise ConfigError(f"episodes must be >= 0, got {self.episodes}")
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1:
            raise ConfigError("epochs, batch_size and threads must be positive")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        return self


@dataclass
class RewardState:
    rewards: np.ndarray
    episode: int = 0

    @classmethod
    def initial(cls, n: int) -> "RewardState":
        return cls(np.ones(n, dtype=np.float64), 0)

    def update(self, gold_index, probs, lam: float) -> "RewardState":
        self.rewards = update_rewards(self.rewards, gold_index, probs, lam)
        self.episode += 1
        return self


def update_reward(r_prev: float, gold: int, pred, lam: float) -> float:
    """lam * r_prev + (1 - lam) * P(gold); ``gold`` is 1-based."""
    if r_prev < 0:
        raise ConfigError(f"reward must be nonnegative, got {r_prev}")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    return lam * r_prev + (1.0 - lam) * float(np.asarray(pred)[gold - 1])


def update_rewards(r_prev, gold_index, probs, lam: float) -> np.ndarray:
    """Vectorized reward update; ``gold_index`` is 0-based."""
    p_gold = np.take_along_axis(np.asarray(probs, dtype=np.float64),
                                np.asarray(gold_index)[:, None], axis=1)[:, 0]
    return lam * np.asarray(r_prev, dtype=np.float64) + (1.0 - lam) * p_gold


def loss_rethink(logits, gold_index, r) -> tn.Tensor:
    """Reward-weighted cross-entropy, averaged over the batch for 2-D logits."""
    ce = tn.cross_entropy(logits, gold_index)
    r = np.asarray(r, dtype=ce.dtype)
    if np.any(r < 0):
        raise ConfigError("rewards must be nonnegative")
    weighted = ce * r
    return weighted.mean() if weighted.ndim else weighted


@dataclass
class Predictions:
    probs: np.ndarray
    feedback_probs: np.ndarray
    alpha: np.ndarray | None

    @property
    def labels(self) -> np.ndarray:
        return predict_labels(self.probs)


def predict(model: HINModel, prepared, batch_size: int = 64, threads: int = 1) -> Predictions:
    """Evaluation-mode forward over ``prepared``; batches may run on threads."""
    prepared = list(prepared)
    chunks = [prepared[i:i + batch_size] for i in range(0, len(prepared), batch_size)]

    def run(chunk):
        with tn.no_grad():
            out = model.forward(collate(chunk))
        alpha = out.alpha.data if out.alpha is not None else None
        return out.probs, out.feedback_probs, alpha

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    alphas = [p[2] for p in parts]
    return Predictions(
        probs=np.concatenate([p[0] for p in parts]),
        feedback_probs=np.concatenate([p[1] for p in parts]),
        alpha=np.concatenate(alphas) if all(a is not None for a in alphas) else None,
    )


@dataclass
class TrainResult:
    model: HINModel
    rows: list
    rewards: RewardState
    reward_history: list
    best: tuple = (0, 0)
    checkpoints: dict = field(default_factory=dict)
    last_state: dict | None = None

    def metrics_csv(self) -> str:
        return format_log(self.rows)


def format_log(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in LOG_COLUMNS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def seeds(seed: int):
    """Independent generator seeds for (init, shuffling, dropout)."""
    children = np.random.SeedSequence(seed).spawn(3)
    return [int(c.generate_state(1)[0]) for c in children]


def train(train_set, val_set, model_config: ModelConfig, config: TrainConfig,
          mode: str = "full", out_dir=None, episode_hook=None) -> TrainResult:
    """Train a fresh model; the returned model holds the best-validation weights.

    ``episode_hook(episode, best_at, best_state)`` runs after every episode with
    the best-validation weights seen so far.
    """
    config.validate()
    train_set, val_set = list(train_set), list(val_set)
    if not train_set:
        raise ConfigError("training split is empty")
    if not val_set:
        raise ConfigError("validation split is empty")
    init_seed, shuffle_seed, drop_seed = seeds(config.seed)
    model = HINModel(model_config, mode, seed=init_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    drop_rng = np.random.default_rng(drop_seed)
    opt = Adam(model.params, lr=config.lr)
    k = model_config.num_classes
    n = len(train_set)
    gold = np.array([p.label_index for p in train_set])
    val_gold = np.array([p.sample.label for p in val_set])
    rewards = RewardState.initial(n)
    history = [rewards.rewards.copy()]
    rows = []
    best_acc, best_at, best_state = -1.0, (0, 0), None
    saved = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    for episode in range(config.episodes + 1):
        if episode > 0:
            fb = predict(model, train_set, config.batch_size, config.threads).feedback_probs
            rewards.update(gold, fb, config.lam)
            history.append(rewards.rewards.copy())
        mean_reward = float(rewards.rewards.mean())
        for epoch in range(config.epochs):
            order = shuffle_rng.permutation(n)
            total_loss, train_preds = 0.0, np.empty(n, dtype=np.int64)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                batch = collate([train_set[i] for i in idx])
                r = rewards.rewards[idx]
                model.zero_grad()
                out = model.forward(batch, training=True, rng=drop_rng)
                loss = loss_rethink(out.logits, batch.labels, r) + loss_rethink(out.feedback_logits, batch.labels, r)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise DivergenceError(
                        f"loss became {value} at episode {episode}, epoch {epoch}, batch starting {start}")
                tn.backward(loss)
                opt.step()
                total_loss += value * len(idx)
                train_preds[idx] = predict_labels(out.logits.data)
            train_rep = evaluate_predictions(train_preds, gold + 1, k)
            rows.append(dict(episode=episode, epoch=epoch, split="train", accuracy=train_rep.accuracy,
                             macro_f1=train_rep.macro_f1, mean_reward=mean_reward, loss=total_loss / n))
            vp = predict(model, val_set, config.batch_size, config.threads)
            val_rep = evaluate_predictions(vp.labels, val_gold, k)
            val_loss = float(np.mean(-np.log(np.maximum(vp.probs[np.arange(len(val_set)), val_gold - 1], 1e-300))))
            rows.append(dict(episode=episode, epoch=epoch, split="val", accuracy=val_rep.accuracy,
                             macro_f1=val_rep.macro_f1, mean_reward=float("nan"), loss=val_loss))
            log.info("episode %d epoch %d: train acc %.4f loss %.4f | val acc %.4f f1 %.4f",
                     episode, epoch, train_rep.accuracy, total_loss / n, val_rep.accuracy, val_rep.macro_f1)
            if val_rep.accuracy > best_acc:
                best_acc, best_at, best_state = val_rep.accuracy, (episode, epoch), model.state()
        if out_dir is not None:
            saved[episode] = checkpoint.save(out_dir / f"episode{episode}.ckpt", model.params)
        if episode_hook is not None:
            episode_hook(episode, best_at, best_state)

    last_state = model.state()
    model.load_state(best_state)
    result = TrainResult(model, rows, rewards, history, best_at, saved, last_state)
    if out_dir is not None:
        saved["best"] = checkpoint.save(out_dir / "best.ckpt", model.params)
        (out_dir / "metrics.csv").write_text(result.metrics_csv())
    return result


def config_dict(model_config: ModelConfig, config: TrainConfig) -> dict:
    return {"model": asdict(model_config), "train": asdict(config)}
