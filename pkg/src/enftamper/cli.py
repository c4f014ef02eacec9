"""Command-line entry point: corpus generation, cached feature extraction,
training, evaluation, single-file verdicts, and report rendering.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .audio_io import read_wav
from .config import config_hash, load_config, save_config
from .model import stack_batch, train as train_model, evaluate
from .pipeline import (
    extract_corpus_features,
    load_feature_set,
    sequences_for_clip,
    split_indices,
)
from .report import write_report
from .storage import load_checkpoint, save_checkpoint

SCHEMA_VERSION = 1


def _fail(msg, code=1):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _config_from_args(args):
    return load_config(path=getattr(args, "config", None),
                       profile=getattr(args, "profile", "desk"),
                       seed=getattr(args, "seed", None))


def cmd_gen_corpus(args):
    cfg = corpus_mod.CorpusConfig(
        n_genuine=args.genuine, n_tampered=args.tampered,
        duration_s=args.duration, parameterization=args.param)
    manifest = corpus_mod.generate_corpus(args.out, cfg, seed=args.seed)
    print(f"wrote {len(manifest['entries'])} clips to {args.out} "
          f"(manifest hash {manifest['manifest_hash']})")
    return 0


def cmd_extract(args):
    cfg = _config_from_args(args)
    if args.input:
        clip = read_wav(args.input)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(args.input).stem
        from .pipeline import clip_to_enf
        enf = clip_to_enf(clip, cfg)
        raw = out / f"{stem}.enf.f64"
        enf.samples.astype("<f8").tofile(raw)
        with open(out / f"{stem}.enf.json", "w") as fh:
            json.dump({"schema_version": SCHEMA_VERSION,
                       "sample_rate": enf.sample_rate,
                       "nominal_hz": enf.nominal_hz,
                       "length": len(enf.samples),
                       "config_hash": config_hash(cfg)}, fh, indent=1)
        phase, freq = sequences_for_clip(clip, cfg)
        with open(out / f"{stem}.phase.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame_index", "phi0", "phi1", "f_dft1"])
            for i in range(phase.n_frames):
                w.writerow([i, phase.phi0[i], phase.phi1[i], phase.f_dft1[i]])
        with open(out / f"{stem}.freq.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "f_hil"])
            for i, v in enumerate(freq.f_hil):
                w.writerow([i, v])
        print(f"wrote ENF dump for {args.input} to {out}")
        return 0
    def progress(i, n):
        if i % 25 == 0 or i == n:
            print(f"  extracted {i}/{n}")
    index = extract_corpus_features(args.manifest_dir, cfg, args.out,
                                    m_phase=args.m_phase, m_freq=args.m_freq,
                                    force=args.force, progress=progress)
    print(f"feature cache at {args.out}: {len(index['entries'])} bundles, "
          f"m=({index['m_phase']},{index['m_freq']}), config {index['config_hash']}")
    return 0


def cmd_train(args):
    cfg = _config_from_args(args)
    index, bundles = load_feature_set(args.features)
    if index["config_hash"] != config_hash(cfg):
        return _fail("feature cache was extracted under a different pipeline config")
    labels = [b.label for b in bundles]
    tr, va, te = split_indices(labels, cfg.train_frac, cfg.val_frac, cfg.seed)
    net_cfg = cfg.net_config(index["m_phase"], index["m_freq"])
    net, stdz, history = train_model([bundles[i] for i in tr],
                                     [bundles[i] for i in va],
                                     cfg.train_config(), net_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split = {"train": tr, "val": va, "test": te,
             "features_config_hash": index["config_hash"]}
    save_checkpoint(out / "model.ckpt", net, stdz, config_hash(cfg),
                    extra={"seed": cfg.seed,
                           "best_epoch": history["best_epoch"],
                           "aborted": history["aborted"],
                           "split": split})
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "lr", "train_loss", "val_loss", "val_accuracy"])
        for row in history["rows"]:
            w.writerow([row["epoch"], repr(row["lr"]), repr(row["train_loss"]),
                        repr(row["val_loss"]), repr(row["val_accuracy"])])
    with open(out / "split.json", "w") as fh:
        json.dump(split, fh, indent=1)
    save_config(cfg, out / "config.json")
    best = history["rows"][history["best_epoch"]] if history["rows"] else {}
    print(f"checkpoint at {out / 'model.ckpt'} "
          f"(best epoch {history['best_epoch']}, "
          f"val acc {best.get('val_accuracy', float('nan')):.3f})")
    return 0


def cmd_eval(args):
    net, stdz, meta = load_checkpoint(args.checkpoint)
    index, bundles = load_feature_set(args.features)
    if index["config_hash"] != meta["config_hash"]:
        return _fail("checkpoint and feature cache come from different configs")
    if args.subset == "all":
        chosen = bundles
    else:
        split = meta.get("split", {})
        if split.get("features_config_hash") != index["config_hash"] or \
                args.subset not in split:
            return _fail(f"checkpoint has no stored {args.subset!r} split for "
                         "this feature cache; use --subset all")
        chosen = [bundles[i] for i in split[args.subset]]
    metrics = evaluate(net, stdz, chosen)
    payload = {"schema_version": SCHEMA_VERSION,
               "config_hash": meta["config_hash"],
               "subset": args.subset,
               "n": len(chosen),
               **metrics.to_dict()}
    text = json.dumps(payload, indent=1)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_predict(args):
    net, stdz, meta = load_checkpoint(args.checkpoint)
    cfg = _config_from_args(args)
    if config_hash(cfg) != meta["config_hash"]:
        return _fail("checkpoint was trained under a different pipeline config")
    clip = read_wav(args.input)
    from .pipeline import extract_bundle
    bundle = extract_bundle(clip, cfg, net.cfg.m_phase, net.cfg.m_freq)
    batch, _ = stack_batch([bundle], stdz)
    probs = net.forward(batch, training=False)[0]
    label = "tampered" if probs[1] >= 0.5 else "genuine"
    payload = {"schema_version": SCHEMA_VERSION,
               "label": label,
               "probability": float(probs.max()),
               "p_tampered": float(probs[1]),
               "config_hash": meta["config_hash"]}
    text = json.dumps(payload, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_report(args):
    cfg = _config_from_args(args)
    net = stdz = None
    if args.checkpoint:
        net, stdz, meta = load_checkpoint(args.checkpoint)
        if config_hash(cfg) != meta["config_hash"]:
            return _fail("checkpoint was trained under a different pipeline config")
    clip = read_wav(args.input)
    written = write_report(clip, cfg, args.out, Path(args.input).stem,
                           net=net, stdz=stdz)
    for p in written:
        print(p)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="enftamper",
        description="ENF-based audio tampering detection pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--profile", choices=("desk", "paper"), default="desk")
        sp.add_argument("--seed", type=int, default=None)

    g = sub.add_parser("gen-corpus", help="synthesize a labeled corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--genuine", type=int, default=100)
    g.add_argument("--tampered", type=int, default=100)
    g.add_argument("--duration", type=float, default=10.5)
    g.add_argument("--param", choices=("a", "b"), default="a")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_corpus)

    e = sub.add_parser("extract", help="extract features (cached) or dump one file")
    e.add_argument("--manifest-dir", help="corpus directory with manifest.json")
    e.add_argument("--input", help="single WAV file to dump")
    e.add_argument("--out", required=True)
    e.add_argument("--m-phase", type=int, default=None)
    e.add_argument("--m-freq", type=int, default=None)
    e.add_argument("--force", action="store_true")
    common(e)
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("train", help="train the classifier on cached features")
    t.add_argument("--features", required=True)
    t.add_argument("--out", required=True)
    common(t)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="evaluate a checkpoint on cached features")
    v.add_argument("--features", required=True)
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--subset", choices=("train", "val", "test", "all"),
                   default="test")
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)

    d = sub.add_parser("predict", help="single-file verdict")
    d.add_argument("--input", required=True)
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--out")
    common(d)
    d.set_defaults(func=cmd_predict)

    r = sub.add_parser("report", help="CSV series + figures for one clip")
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--checkpoint")
    common(r)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "extract" and not (args.manifest_dir or args.input):
        parser.error("extract needs --manifest-dir or --input")
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
