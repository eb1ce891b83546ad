"""Command-line entry point.

Subcommands: ingest, synth, train, eval, explain.  Configuration precedence
is flag (--set key=value) > --config file > defaults; eval and explain start
from the config stored in the checkpoint.  Errors print a single JSON line
on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import data as data_mod
from . import metrics as metrics_mod
from . import synth as synth_mod
from .config import TrainingConfig, config_from_keys, config_to_keys, load_config_file
from .errors import SentmaskError
from .explain import explain, random_explanations, render_report
from .training import Checkpoint, fit, load_model

CACHE_ENV = "SENTMASK_CACHE_DIR"


def _parse_overrides(pairs: list[str] | None) -> dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SentmaskError(f"--set expects KEY=VALUE, got {pair!r}", code="usage")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _resolve_config(args, base: TrainingConfig | None = None) -> TrainingConfig:
    cfg = base if base is not None else TrainingConfig()
    if getattr(args, "config", None):
        cfg = load_config_file(args.config, base=cfg)
    overrides = _parse_overrides(getattr(args, "set", None))
    if overrides:
        cfg = config_from_keys(overrides, base=cfg)
    return cfg


def _default_cache(args) -> Path:
    if getattr(args, "cache", None):
        return Path(args.cache)
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    raise SentmaskError("no cache directory: pass --cache or set "
                        f"{CACHE_ENV}", code="usage")


def _load_cache(cache_dir: Path):
    vocab = data_mod.Vocabulary.load(cache_dir / "vocab.txt")
    split = data_mod.load_split(cache_dir)
    return vocab, split


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _resolve_config(args)
    data_path = Path(args.data)
    manifest_path = Path(args.manifest) if args.manifest else \
        data_mod.default_manifest_path(data_path)
    out_dir = Path(args.out_dir) if args.out_dir else _default_cache(args)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.vocab:
        vocab = data_mod.Vocabulary.load(args.vocab)
    else:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        train_ids = set(manifest.get("labeled", [])) | set(manifest.get("unlabeled", []))
        docs = data_mod.read_jsonl(data_path)
        vocab = data_mod.Vocabulary.build(
            (d.text for d in docs if d.id in train_ids),
            max_size=args.vocab_size)
    split = data_mod.load_jsonl(data_path, vocab, cfg.S, cfg.K,
                                manifest_path=manifest_path)
    vocab.save(out_dir / "vocab.txt")
    data_mod.save_split(split, out_dir)
    summary = {
        "cache": str(out_dir),
        "S": cfg.S,
        "K": cfg.K,
        "vocab_size": len(vocab),
        "labeled": len(split.labeled),
        "unlabeled": len(split.unlabeled),
        "test": len(split.test),
    }
    (out_dir / "ingest.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2), encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    spec = synth_mod.SynthSpec(
        n_docs=args.n_docs,
        n_sentences=args.sentences,
        k_signal=args.signal,
        n_labeled=args.labeled,
        n_unlabeled=args.unlabeled,
        n_test=args.test,
        seed=args.seed,
    )
    summary = synth_mod.generate(args.out_dir, spec)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    cache_dir = _default_cache(args)
    vocab, split = _load_cache(cache_dir)
    cfg = _resolve_config(args)
    cfg.vocab_size = len(vocab)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    steps_path = out_dir / "steps.jsonl"
    epochs_path = out_dir / "epochs.jsonl"
    mode = "a" if args.resume else "w"
    with open(steps_path, mode, encoding="utf-8") as steps_fh, \
            open(epochs_path, mode, encoding="utf-8") as epochs_fh:

        def log_step(step, epoch, phase, breakdown):
            rec = {"step": step, "epoch": epoch, "phase": phase}
            rec.update(breakdown.as_dict())
            steps_fh.write(json.dumps(rec, sort_keys=True) + "\n")

        def log_epoch(summary):
            epochs_fh.write(json.dumps(summary, sort_keys=True) + "\n")

        resume_from = out_dir / "last.ckpt" if args.resume else None
        best = fit(split, cfg, out_dir=out_dir, resume_from=resume_from,
                   log_step=log_step, log_epoch=log_epoch, vocab=vocab)

    summary = {
        "best_epoch": best.best["epoch"],
        "best_holdout_accuracy": best.best["metric"],
        "epochs_run": best.epoch,
        "checkpoint": str(out_dir / "best.ckpt"),
        "checkpoint_id": best.checkpoint_id,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _parse_n_list(raw: str) -> list[int]:
    try:
        values = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise SentmaskError(f"--n expects integers, got {raw!r}", code="usage")
    if not values or any(v < 0 for v in values):
        raise SentmaskError(f"--n values must be >= 0, got {raw!r}", code="usage")
    return values


def cmd_eval(args) -> int:
    cache_dir = _default_cache(args)
    vocab, split = _load_cache(cache_dir)
    ckpt = Checkpoint.load(args.checkpoint)
    cfg = _resolve_config(args, base=ckpt.training_config())
    model = load_model(args.checkpoint, vocab=vocab)
    model.config = cfg
    docs = getattr(split, args.split)
    if not docs:
        raise SentmaskError(f"split {args.split!r} is empty", code="empty-split")

    if args.ranking == "random":
        explanations = random_explanations(docs, seed=cfg.seed)
    else:
        explanations = [explain(doc, model) for doc in docs]

    results = []
    for n in _parse_n_list(args.n):
        result = metrics_mod.evaluate(model, docs, explanations, n,
                                      mask_mode=args.mask_mode, compact=args.compact)
        payload = result.as_dict()
        payload["checkpoint"] = model.checkpoint_id
        payload["ranking"] = args.ranking
        results.append(payload)
        print(json.dumps(payload, sort_keys=True))

    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.json").write_text(
            json.dumps(results, sort_keys=True, indent=2), encoding="utf-8")
    return 0


def cmd_explain(args) -> int:
    cache_dir = _default_cache(args)
    vocab, split = _load_cache(cache_dir)
    model = load_model(args.checkpoint, vocab=vocab)
    docs = getattr(split, args.split)
    if args.ids:
        wanted = set(args.ids.split(","))
        docs = [d for d in docs if d.id in wanted]
        missing = wanted - {d.id for d in docs}
        if missing:
            raise SentmaskError(f"ids not in split {args.split!r}: {sorted(missing)}",
                                code="unknown-id")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    written = []
    for doc in docs:
        record = explain(doc, model, n_default=args.n)
        for fmt in formats:
            payload = render_report(doc, record, args.n, format=fmt)
            path = out_dir / f"{doc.id}.{fmt}"
            path.write_bytes(payload)
            written.append(str(path))
    print(json.dumps({"reports": len(written), "out_dir": str(out_dir)},
                     sort_keys=True))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentmask",
        description="Sentence-mask document classification: train, evaluate, explain.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="JSON config file with dotted keys")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("ingest", help="shape a JSONL corpus into the binary cache")
    p.add_argument("--data", required=True, help="JSONL corpus path")
    p.add_argument("--manifest", help="split manifest (default: sidecar)")
    p.add_argument("--out-dir", help=f"cache dir (default: ${CACHE_ENV})")
    p.add_argument("--cache", help=argparse.SUPPRESS)
    p.add_argument("--vocab", help="use an existing vocabulary file")
    p.add_argument("--vocab-size", type=int, default=50000,
                   help="frequency cap when building the vocabulary")
    add_config_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a planted-rationale synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-docs", type=int, default=2000)
    p.add_argument("--sentences", type=int, default=40)
    p.add_argument("--signal", type=int, default=3)
    p.add_argument("--labeled", type=int, default=200)
    p.add_argument("--unlabeled", type=int, default=1600)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a shaped cache")
    p.add_argument("--cache", help=f"cache dir (default: ${CACHE_ENV})")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", action="store_true",
                   help="continue from out-dir/last.ckpt")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy, AOPC, and post-hoc accuracy")
    p.add_argument("--cache", help=f"cache dir (default: ${CACHE_ENV})")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--split", default="test", choices=["labeled", "unlabeled", "test"])
    p.add_argument("--n", default="20", help="top-n values, comma separated")
    p.add_argument("--ranking", default="mask", choices=["mask", "random"])
    p.add_argument("--mask-mode", default=None, choices=["hard", "none"])
    p.add_argument("--compact", action="store_true",
                   help="compact surviving sentences upward after deletion")
    add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="write ranked-sentence reports")
    p.add_argument("--cache", help=f"cache dir (default: ${CACHE_ENV})")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="test", choices=["labeled", "unlabeled", "test"])
    p.add_argument("--ids", help="comma-separated doc ids (default: whole split)")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--formats", default="json,html")
    add_config_flags(p)
    p.set_defaults(func=cmd_explain)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SentmaskError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "not-found", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
