"""Batching, scheduled-Adam training, evaluation and the ablation harness."""
import copy
import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .checkpoint import save_model
from .datagen import build_vocab, read_phonemes
from .dsp import mfcc_extract, read_wav
from .errors import EmptyEvalSet, NonFiniteLoss, NonFiniteValue, UtteranceTooShort
from .model import CswModel, ModelConfig, UtteranceBatch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    peak_lr: float = 1e-3
    warmup_steps: int = 200
    seed: int = 0
    precision: int = 32
    patience: int = None
    # stop as soon as eval accuracy reaches this value
    target_eval_accuracy: float = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be positive")
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")


@dataclass
class Item:
    """One loaded utterance: features, phoneme ids and label id."""

    utt_id: str
    mfcc: np.ndarray
    ids: np.ndarray
    label: int


@dataclass
class RunReport:
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    eval_accuracy: list = field(default_factory=list)
    best_epoch: int = 0
    final_eval_accuracy: float = 0.0
    precision_cs: float = 0.0
    recall_cs: float = 0.0
    config: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    seed: int = 0
    steps: int = 0

    def lines(self):
        out = [
            f"seed = {self.seed}",
            f"epochs_run = {len(self.train_loss)}",
            f"steps = {self.steps}",
            f"best_epoch = {self.best_epoch}",
            f"final_eval_accuracy = {self.final_eval_accuracy:.6f}",
            f"eval_precision_cs = {self.precision_cs:.6f}",
            f"eval_recall_cs = {self.recall_cs:.6f}",
            f"wall_clock_s = {self.wall_clock_s:.3f}",
        ]
        for k, v in self.config.items():
            out.append(f"config.{k} = {v}")
        for i, (lo, ta, ea) in enumerate(zip(self.train_loss, self.train_accuracy, self.eval_accuracy), 1):
            out.append(f"epoch.{i}.train_loss = {lo:.8f}")
            out.append(f"epoch.{i}.train_accuracy = {ta:.6f}")
            out.append(f"epoch.{i}.eval_accuracy = {ea:.6f}")
        return out

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text("\n".join(self.lines()) + "\n", encoding="utf-8")
        with open(out / "curves.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_accuracy", "eval_accuracy"])
            for i, row in enumerate(zip(self.train_loss, self.train_accuracy, self.eval_accuracy), 1):
                w.writerow([i, *(f"{v:.8f}" for v in row)])


def read_report(path):
    """Parse ``key = value`` lines back into a dict of strings."""
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


# ---------------------------------------------------------------- data

def load_items(entries, vocab, min_frames=19, min_phonemes=7):
    """Extract MFCCs and encode phonemes; reject utterances the model cannot consume."""
    items = []
    for e in entries:
        feats = mfcc_extract(read_wav(e.audio_path))
        ids = vocab.encode(read_phonemes(e.phoneme_path))
        if feats.shape[0] < min_frames:
            raise UtteranceTooShort(e.utt_id, f"{feats.shape[0]} frames < {min_frames}")
        if len(ids) < min_phonemes:
            raise UtteranceTooShort(e.utt_id, f"{len(ids)} phonemes < {min_phonemes}")
        items.append(Item(e.utt_id, feats, ids, e.label_id))
    return items


def check_lengths(items, min_frames=19, min_phonemes=7):
    for it in items:
        if it.mfcc.shape[0] < min_frames:
            raise UtteranceTooShort(it.utt_id, f"{it.mfcc.shape[0]} frames < {min_frames}")
        if len(it.ids) < min_phonemes:
            raise UtteranceTooShort(it.utt_id, f"{len(it.ids)} phonemes < {min_phonemes}")


def collate(items, with_labels=True):
    return UtteranceBatch.from_items(
        [it.mfcc for it in items],
        [it.ids for it in items],
        labels=[it.label for it in items] if with_labels else None,
        utt_ids=[it.utt_id for it in items],
    )


def make_batches(items, batch_size, seed=0, epoch=0, shuffle=True):
    """Shuffle by (seed, epoch), chunk, pad each chunk to its own max lengths."""
    check_lengths(items)
    order = np.arange(len(items))
    if shuffle:
        order = np.random.default_rng([int(seed), int(epoch)]).permutation(len(items))
    return [collate([items[i] for i in order[s : s + batch_size]]) for s in range(0, len(items), batch_size)]


def lr_at_step(step, config):
    """Linear warmup to ``peak_lr`` then inverse-square-root decay."""
    if step < 1:
        raise ValueError("steps are 1-based")
    w = config.warmup_steps
    if step <= w:
        return config.peak_lr * step / w
    return config.peak_lr * np.sqrt(w / step)


# ---------------------------------------------------------------- eval

def predict(model, items, batch_size=64):
    """(probabilities (N, 2), predicted class ids) in input order, eval mode."""
    probs = []
    for s in range(0, len(items), batch_size):
        batch = collate(items[s : s + batch_size], with_labels=False)
        probs.append(model.forward(batch, train=False).data)
    p = np.concatenate(probs, axis=0)
    return p, np.argmax(p, axis=1)


def evaluate(model, items, batch_size=64):
    """Accuracy and per-utterance predictions (argmax, ties toward class 0)."""
    if not items:
        raise EmptyEvalSet("no utterances to evaluate")
    _, pred = predict(model, items, batch_size)
    labels = np.array([it.label for it in items])
    return float(np.mean(pred == labels)), pred


def precision_recall(pred, labels, positive=1):
    tp = np.sum((pred == positive) & (labels == positive))
    fp = np.sum((pred == positive) & (labels != positive))
    fn = np.sum((pred != positive) & (labels == positive))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    return float(prec), float(rec)


# ---------------------------------------------------------------- training

def train_step(model, batch, state, lr):
    """One Adam step on ``batch``; returns (loss, number correct)."""
    params = model.parameters()
    for p in params:
        p.grad = None
    logits = model.logits(batch, train=True)
    loss = ag.cross_entropy(logits, batch.labels)
    loss.backward()
    ag.adam_step(params, [p.grad for p in params], state, lr)
    model.after_step()
    correct = int(np.sum(np.argmax(logits.data, axis=1) == batch.labels))
    return float(loss.data), correct


def train(model, train_items, eval_items, config, out_dir=None, vocab=None, progress=None):
    """Minimise mean cross-entropy; keep the best-eval-accuracy parameters.

    The model is left holding the best parameters. When ``out_dir`` is given,
    the checkpoint, ``report.txt`` and ``curves.csv`` are written there.
    """
    t0 = time.perf_counter()
    check_lengths(train_items)
    check_lengths(eval_items)
    state = ag.AdamState(model.parameters())
    report = RunReport(config={**asdict(config), **{f"model.{k}": v for k, v in model.config.to_dict().items()}},
                       seed=config.seed)
    best_acc, best_state, since_best, step = -1.0, None, 0, 0
    for epoch in range(1, config.epochs + 1):
        losses, correct, seen = [], 0, 0
        for bi, batch in enumerate(make_batches(train_items, config.batch_size, config.seed, epoch)):
            step += 1
            try:
                loss, c = train_step(model, batch, state, lr_at_step(step, config))
            except NonFiniteValue as exc:
                raise NonFiniteLoss(step, bi, str(exc)) from exc
            if not np.isfinite(loss):
                raise NonFiniteLoss(step, bi, loss)
            losses.append(loss * len(batch))
            correct += c
            seen += len(batch)
        eval_acc, _ = evaluate(model, eval_items)
        report.train_loss.append(sum(losses) / seen)
        report.train_accuracy.append(correct / seen)
        report.eval_accuracy.append(eval_acc)
        if progress:
            progress(epoch, report.train_loss[-1], report.train_accuracy[-1], eval_acc)
        log.info("epoch %d loss %.4f train_acc %.4f eval_acc %.4f", epoch,
                 report.train_loss[-1], report.train_accuracy[-1], eval_acc)
        if eval_acc > best_acc:
            best_acc, report.best_epoch, since_best = eval_acc, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
            if config.target_eval_accuracy is not None and eval_acc >= config.target_eval_accuracy:
                break
        else:
            since_best += 1
            if config.patience is not None and since_best >= config.patience:
                break
    model.load_state_dict(best_state)
    report.steps = step
    report.final_eval_accuracy = best_acc
    _, pred = predict(model, eval_items)
    report.precision_cs, report.recall_cs = precision_recall(pred, np.array([it.label for it in eval_items]))
    report.wall_clock_s = time.perf_counter() - t0
    if out_dir is not None:
        save_model(out_dir, model, vocab, extra={"train_config": asdict(config)})
        report.write(out_dir)
    return report


# ---------------------------------------------------------------- ablation

@dataclass
class AblationCell:
    variant: str
    arch: str
    accuracies: list
    median: float


@dataclass
class AblationReport:
    cells: list
    best: tuple
    runs: int

    def lines(self):
        out = [f"runs = {self.runs}", f"best = {self.best[0]}/{self.best[1]}"]
        for c in self.cells:
            key = f"{c.variant}.{c.arch}"
            out.append(f"{key}.median_accuracy = {c.median:.6f}")
            out.append(f"{key}.accuracies = {','.join(f'{a:.6f}' for a in c.accuracies)}")
            out.append(f"{key}.best = {int((c.variant, c.arch) == self.best)}")
        return out

    def write(self, path):
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    def median(self, variant, arch="cnn_bilstm_transformer"):
        for c in self.cells:
            if c.variant == variant and c.arch == arch:
                return c.median
        raise KeyError((variant, arch))


def run_ablation(train_items, eval_items, vocab_size, variants, archs, seeds, train_config,
                 model_overrides=None, progress=None):
    """Train every (variant, arch) cell once per seed on identical data."""
    cells, runs = [], 0
    for variant in variants:
        for arch in archs:
            accs = []
            for seed in seeds:
                cfg = ModelConfig(vocab_size=vocab_size, variant=variant, arch=arch,
                                  precision=train_config.precision, **(model_overrides or {}))
                tc = TrainConfig(**{**asdict(train_config), "seed": seed})
                model = CswModel(cfg, seed=seed)
                rep = train(model, train_items, eval_items, tc)
                accs.append(rep.final_eval_accuracy)
                runs += 1
                if progress:
                    progress(variant, arch, seed, rep)
            cells.append(AblationCell(variant, arch, accs, float(np.median(accs))))
    best = max(cells, key=lambda c: c.median)
    return AblationReport(cells, (best.variant, best.arch), runs)


def prepare(train_entries, eval_entries):
    """Vocabulary from the training entries only, then load both splits."""
    vocab = build_vocab(train_entries)
    return vocab, load_items(train_entries, vocab), load_items(eval_entries, vocab)
