"""Command-line entry point: ``cswd <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 runtime failure (including a failed
gradient check).
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import gradcheck
from .checkpoint import load_model
from .datagen import CORRUPTION_MODES, CorpusSpec, generate_corpus, load_manifest
from .dsp import mfcc_extract, read_wav, write_feature_csv
from .errors import CswdError
from .model import ARCHS, VARIANTS, CswModel, ModelConfig
from .trainer import TrainConfig, evaluate, load_items, predict, prepare, run_ablation, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed():
    raw = os.environ.get("CSWD_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"CSWD_SEED must be an integer, got {raw!r}") from None


def _csv_list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser():
    p = _Parser(prog="cswd", description="Two-stream code-switch detection toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gencorpus", help="write a synthetic corpus")
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--p-cs", type=float, default=0.5)
    g.add_argument("--snr-db", type=float, default=30.0)
    g.add_argument("--corruption-rate", type=float, default=0.0)
    g.add_argument("--corruption-mode", choices=CORRUPTION_MODES, default="same",
                   help="substitution pool for corrupted tokens: same language, other language, or both")
    g.add_argument("--min-len", type=int, default=8)
    g.add_argument("--max-len", type=int, default=16)
    g.add_argument("--eval-fraction", type=float, default=0.2)
    g.add_argument("--formant-jitter-hz", type=float, default=90.0,
                   help="std-dev of per-occurrence formant jitter (audio difficulty)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", "--out-dir", dest="out", required=True)
    g.add_argument("--config")

    f = sub.add_parser("featdump", help="write the MFCC matrix of a WAV file as CSV")
    f.add_argument("--wav", required=True)
    f.add_argument("--out", help="CSV path (default: stdout)")
    f.add_argument("--config")

    t = sub.add_parser("train", help="train one model")
    _model_flags(t)
    t.add_argument("--manifest", required=True)
    t.add_argument("--eval", required=True)
    t.add_argument("--variant", choices=VARIANTS, default="multi_modal")
    t.add_argument("--arch", choices=ARCHS, default="cnn_bilstm_transformer")
    t.add_argument("--out", "--out-dir", dest="out", required=True)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True, help="directory written by train")
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", help="write per-utterance predictions (TSV)")
    e.add_argument("--batch-size", type=int, default=64)
    e.add_argument("--config")

    a = sub.add_parser("ablate", help="train a variant x architecture grid")
    _model_flags(a)
    a.add_argument("--manifest", required=True)
    a.add_argument("--eval", required=True)
    a.add_argument("--variants", type=_csv_list, default=list(VARIANTS))
    a.add_argument("--archs", type=_csv_list, default=["cnn_bilstm_transformer"])
    a.add_argument("--seeds", type=_csv_list, default=None)
    a.add_argument("--out", "--out-dir", dest="out", required=True)

    c = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    c.add_argument("--scope", choices=["all", *gradcheck.SCOPES], default="all")
    c.add_argument("--precision", type=int, choices=[32, 64], default=64)
    c.add_argument("--seed", type=int)
    c.add_argument("--config")
    return p


def _model_flags(p):
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3, help="peak learning rate")
    p.add_argument("--warmup", type=int, default=200)
    p.add_argument("--precision", type=int, choices=[32, 64], default=32)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--phoneme-lstm-layers", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")


def parse_args(argv):
    parser = build_parser()
    subparsers = parser._subparsers._group_actions[0].choices
    # first pass only locates the subcommand and --config, so nothing is required yet
    required = {a: a.required for sp in subparsers.values() for a in sp._actions}
    for a in required:
        a.required = False
    try:
        args = parser.parse_args(argv)
    finally:
        for a, flag in required.items():
            a.required = flag
    if args.command is None:
        raise UsageError("cswd: a subcommand is required (gencorpus, featdump, train, eval, ablate, gradcheck)")
    subparser = subparsers[args.command]
    if getattr(args, "config", None):
        # config values become defaults, so explicit flags still win
        values = read_config_file(args.config)
        known = {a.dest: a for a in subparser._actions}
        for key, raw in values.items():
            if key not in known or key in ("help", "config"):
                raise UsageError(f"{args.config}: unknown key {key!r}")
            action = known[key]
            try:
                value = action.type(raw) if action.type else raw
            except (TypeError, ValueError):
                raise UsageError(f"{args.config}: bad value for {key!r}: {raw!r}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"{args.config}: {key!r} must be one of {list(action.choices)}")
            subparser.set_defaults(**{key: value})
        for action in subparser._actions:
            action.required = action.required and action.dest not in values
    args = parser.parse_args(argv)
    if hasattr(args, "seed") and args.seed is None:
        args.seed = _default_seed()
    return args


def cmd_gencorpus(args):
    spec = CorpusSpec(
        n_utterances=args.n, p_code_switched=args.p_cs, min_phonemes=args.min_len,
        max_phonemes=args.max_len, snr_db=args.snr_db, corruption_rate=args.corruption_rate,
        corruption_mode=args.corruption_mode, eval_fraction=args.eval_fraction, seed=args.seed,
        formant_jitter_hz=args.formant_jitter_hz,
    )
    utts = generate_corpus(spec, args.out)
    print(f"wrote {len(utts)} utterances to {args.out}")
    return 0


def cmd_featdump(args):
    feats = mfcc_extract(read_wav(args.wav))
    write_feature_csv(args.out if args.out else sys.stdout, feats)
    return 0


def _train_config(args):
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, peak_lr=args.lr,
                       warmup_steps=args.warmup, seed=args.seed, precision=args.precision,
                       patience=args.patience)


def _progress(epoch, loss, acc, eval_acc):
    print(f"epoch {epoch:3d}  loss {loss:.4f}  train_acc {acc:.4f}  eval_acc {eval_acc:.4f}", flush=True)


def cmd_train(args):
    vocab, tr, ev = prepare(load_manifest(args.manifest), load_manifest(args.eval))
    cfg = ModelConfig(vocab_size=len(vocab), variant=args.variant, arch=args.arch,
                      precision=args.precision, dropout=args.dropout,
                      phoneme_lstm_layers=args.phoneme_lstm_layers)
    model = CswModel(cfg, seed=args.seed)
    report = train(model, tr, ev, _train_config(args), out_dir=args.out, vocab=vocab, progress=_progress)
    print(f"best eval accuracy {report.final_eval_accuracy:.4f} (epoch {report.best_epoch}); wrote {args.out}")
    return 0


def cmd_eval(args):
    model, vocab, _ = load_model(args.checkpoint)
    items = load_items(load_manifest(args.manifest), vocab)
    acc, pred = evaluate(model, items, args.batch_size)
    if args.out:
        probs, _ = predict(model, items, args.batch_size)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("utt_id\tlabel\tprediction\tp_cs\n")
            for it, p, pr in zip(items, pred, probs):
                fh.write(f"{it.utt_id}\t{it.label}\t{p}\t{pr[1]:.6f}\n")
    print(f"accuracy = {acc:.6f}")
    print(f"utterances = {len(items)}")
    return 0


def cmd_ablate(args):
    for v in args.variants:
        if v not in VARIANTS:
            raise UsageError(f"--variants: unknown variant {v!r}")
    for a in args.archs:
        if a not in ARCHS:
            raise UsageError(f"--archs: unknown arch {a!r}")
    try:
        seeds = [int(s) for s in args.seeds] if args.seeds else [args.seed]
    except ValueError:
        raise UsageError("--seeds must be comma-separated integers") from None
    vocab, tr, ev = prepare(load_manifest(args.manifest), load_manifest(args.eval))

    def progress(variant, arch, seed, rep):
        print(f"{variant:13s} {arch:23s} seed {seed}: {rep.final_eval_accuracy:.4f}", flush=True)

    report = run_ablation(tr, ev, len(vocab), args.variants, args.archs, seeds, _train_config(args),
                          model_overrides={"dropout": args.dropout,
                                           "phoneme_lstm_layers": args.phoneme_lstm_layers},
                          progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "ablation.txt")
    print("\n".join(report.lines()))
    return 0


def cmd_gradcheck(args):
    results = gradcheck.run(args.scope, seed=args.seed, precision=args.precision)
    ok = True
    for name, err in results.items():
        status = "ok" if err < gradcheck.THRESHOLD else "FAIL"
        ok &= err < gradcheck.THRESHOLD
        print(f"{name:12s} max_rel_err = {err:.3e}  {status}")
    return 0 if ok else 2


COMMANDS = {
    "gencorpus": cmd_gencorpus,
    "featdump": cmd_featdump,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (CswdError, OSError, ValueError, KeyError) as exc:
        print(f"cswd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
