"""Command-line pipeline: synth, kg, train, eval, infer, convert.

Every command writes a run manifest next to its outputs so any result can
be reproduced from the recorded flags. Exit codes: 0 success, 1 usage
error, 2 validation failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import csv_dir_to_dataset, read_dataset, split, write_dataset
from .errors import KgamcError
from .evaluation import evaluate, export_report
from .mkg import build_graph, default_triples_text, graph_stats, parse_triples, validate_ontology
from .sigsyn import CLASSES, ModulationClass, SynthConfig, synth_dataset
from .trainer import TrainConfig, infer, load_checkpoint, save_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _parse_snr_spec(spec: str) -> list[int]:
    """Inclusive ``start:stop:step`` range, a single value, or a comma list."""
    try:
        if ":" in spec:
            start_s, stop_s, step_s = spec.split(":")
            start, stop, step = int(start_s), int(stop_s), int(step_s)
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        if "," in spec:
            return [int(v) for v in spec.split(",")]
        return [int(spec)]
    except ValueError:
        raise UsageError(f"invalid SNR spec {spec!r}; expected start:stop:step") from None


def _parse_classes(spec: str) -> tuple[ModulationClass, ...]:
    if spec == "all":
        return CLASSES
    out = []
    for name in spec.split(","):
        try:
            out.append(ModulationClass[name.strip()])
        except KeyError:
            raise UsageError(f"unknown class {name.strip()!r}") from None
    return tuple(out)


def _merge_negative_values(argv: list[str], flags=("--snr",)) -> list[str]:
    """Glue ``--snr -20:18:2`` into ``--snr=-20:18:2`` so argparse accepts it."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in flags and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _write_manifest(
    target: Path, command: str, args: dict, inputs: list, outputs: list, elapsed: float
) -> None:
    args = {k: v for k, v in args.items() if k != "func" and not callable(v)}
    manifest = {
        "command": command,
        "args": args,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": args.get("seed"),
        "version": __version__,
        "elapsed_seconds": round(elapsed, 3),
    }
    if target.is_dir():
        path = target / "manifest.json"
    else:
        path = target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_triples(path: str | None):
    text = default_triples_text() if path is None else Path(path).read_text("utf-8")
    return parse_triples(text)


def cmd_synth(args) -> int:
    t0 = time.monotonic()
    classes = _parse_classes(args.classes)
    cfg = SynthConfig(
        frame_len=args.frame_len,
        seed=args.seed,
        snr_grid=_parse_snr_spec(args.snr),
    )
    ds = synth_dataset(cfg, args.frames_per_cell, classes=classes)
    out = Path(args.out)
    write_dataset(ds, out)
    print(f"wrote {len(ds)} frames ({len(classes)} classes x "
          f"{len(cfg.snr_grid)} SNRs x {args.frames_per_cell}) to {out}")
    _write_manifest(out, "synth", vars(args), [], [out], time.monotonic() - t0)
    return EXIT_OK


def cmd_kg(args) -> int:
    triples, type_map = _load_triples(args.triples)
    violations = validate_ontology(triples, type_map)
    if args.kg_command == "validate":
        if violations:
            for v in violations:
                print(f"violation: {v}")
            raise ValidationFailure(f"{len(violations)} ontology violation(s)")
        print(f"OK: {len(triples)} triples, {len(type_map)} nodes, 0 violations")
        return EXIT_OK
    # inspect
    if violations:
        raise ValidationFailure(f"{len(violations)} ontology violation(s); run validate")
    g = build_graph(triples, type_map)
    stats = graph_stats(g)
    print(json.dumps(stats, indent=2, sort_keys=True))
    present = [c for c in CLASSES if c.name in g.index]
    if present:
        from .mkg import anchors

        amap = anchors(g, tuple(present))
        print("anchors: " + ", ".join(f"{c.name}->{idx}" for c, idx in amap.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.monotonic()
    ds = read_dataset(args.data)
    triples, type_map = _load_triples(args.kg)
    violations = validate_ontology(triples, type_map)
    if violations:
        raise ValidationFailure(f"knowledge graph has {len(violations)} violation(s)")
    g = build_graph(triples, type_map)
    train_ds, test_ds = split(ds, args.train_frac, args.split_seed)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr_msnet=args.lr_msnet,
        lr_rgcn=args.lr_rgcn,
        weight_decay=args.weight_decay,
        lam=getattr(args, "lambda"),
        d=args.d,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    state, history = train(train_ds, test_ds, g, cfg)
    ckpt = out_dir / "model.kgmc"
    save_checkpoint(state, ckpt)
    history.write_jsonl(out_dir / "history.jsonl")
    write_dataset(test_ds, out_dir / "test.amcd")
    last = history.entries[-1]
    print(f"epochs={cfg.epochs} lambda={cfg.lam} final_loss={last['l_total']:.6f} "
          f"test_acc={last['test_acc']:.4f}")
    _write_manifest(
        out_dir, "train", {**vars(args), "lambda": cfg.lam},
        [args.data, args.kg or "<builtin mkg>"],
        [ckpt, out_dir / "history.jsonl", out_dir / "test.amcd"],
        time.monotonic() - t0,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    t0 = time.monotonic()
    ds = read_dataset(args.data)
    state = load_checkpoint(args.ckpt)
    if ds.class_names != state.class_names:
        raise ValidationFailure(
            f"dataset classes {ds.class_names} != checkpoint classes {state.class_names}"
        )
    x, y, snr = ds.to_arrays()
    preds, feats = infer(x, state, mode=args.mode)
    report = evaluate(preds, y, snr, feats, ds.class_names, confusion_snr=args.confusion_snr)
    out_dir = Path(args.out)
    written = export_report(report, feats, y, snr, out_dir)
    print(f"overall_accuracy={report.overall_accuracy:.6f} "
          f"intra_cos={report.intra_class_cos:.4f} inter_cos={report.inter_class_cos:.4f}")
    _write_manifest(out_dir, "eval", vars(args), [args.data, args.ckpt],
                    written, time.monotonic() - t0)
    return EXIT_OK


def cmd_infer(args) -> int:
    t0 = time.monotonic()
    ds = read_dataset(args.data)
    state = load_checkpoint(args.ckpt)
    x, _, _ = ds.to_arrays()
    preds, _, scores = infer(x, state, mode=args.mode, return_scores=True)
    out = Path(args.out)
    with open(out, "w") as fh:
        header = ["index", "pred_label"] + [f"score_{n}" for n in state.class_names]
        fh.write(",".join(header) + "\n")
        for i, (p, row) in enumerate(zip(preds, scores)):
            cells = [str(i), state.class_names[int(p)]] + [f"{v:.6f}" for v in row]
            fh.write(",".join(cells) + "\n")
    print(f"wrote {len(preds)} predictions to {out}")
    _write_manifest(out, "infer", vars(args), [args.data, args.ckpt], [out],
                    time.monotonic() - t0)
    return EXIT_OK


def cmd_convert(args) -> int:
    t0 = time.monotonic()
    ds = csv_dir_to_dataset(args.in_dir, default_snr=args.default_snr)
    out = Path(args.out)
    write_dataset(ds, out)
    print(f"converted {len(ds)} frames from {args.in_dir} to {out}")
    _write_manifest(out, "convert", vars(args), [args.in_dir], [out],
                    time.monotonic() - t0)
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="kgamc", description=__doc__)
    p.add_argument("--version", action="version", version=f"kgamc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="synthesize a labeled I/Q dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--classes", default="all", help="'all' or comma-separated names")
    sp.add_argument("--snr", default="-20:18:2", help="start:stop:step inclusive")
    sp.add_argument("--frames-per-cell", type=int, default=100)
    sp.add_argument("--frame-len", type=int, default=128)
    sp.add_argument("--seed", type=int, default=7)
    sp.set_defaults(func=cmd_synth)

    kp = sub.add_parser("kg", help="inspect or validate a knowledge graph")
    kp.add_argument("kg_command", choices=["validate", "inspect"])
    kp.add_argument("--triples", default=None, help="TSV file (default: built-in MKG)")
    kp.set_defaults(func=cmd_kg)

    tp = sub.add_parser("train", help="train the joint model")
    tp.add_argument("--data", required=True)
    tp.add_argument("--kg", default=None, help="triples TSV (default: built-in MKG)")
    tp.add_argument("--out", required=True)
    tp.add_argument("--epochs", type=int, default=20)
    tp.add_argument("--batch", type=int, default=256)
    tp.add_argument("--lambda", type=float, default=0.2, dest="lambda")
    tp.add_argument("--lr-msnet", type=float, default=1e-3)
    tp.add_argument("--lr-rgcn", type=float, default=1e-6)
    tp.add_argument("--weight-decay", type=float, default=5e-4)
    tp.add_argument("--d", type=int, default=128)
    tp.add_argument("--train-frac", type=float, default=0.8)
    tp.add_argument("--split-seed", type=int, default=7)
    tp.add_argument("--seed", type=int, default=7)
    tp.set_defaults(func=cmd_train)

    ep = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ep.add_argument("--data", required=True)
    ep.add_argument("--ckpt", required=True)
    ep.add_argument("--mode", choices=["classifier", "anchor"], default="classifier")
    ep.add_argument("--confusion-snr", type=int, default=0)
    ep.add_argument("--out", required=True)
    ep.set_defaults(func=cmd_eval)

    ip = sub.add_parser("infer", help="predict labels with per-class scores")
    ip.add_argument("--data", required=True)
    ip.add_argument("--ckpt", required=True)
    ip.add_argument("--mode", choices=["classifier", "anchor"], default="classifier")
    ip.add_argument("--out", required=True)
    ip.set_defaults(func=cmd_infer)

    cp = sub.add_parser("convert", help="convert a directory of CSV frames to AMCD")
    cp.add_argument("--in-dir", required=True)
    cp.add_argument("--out", required=True)
    cp.add_argument("--default-snr", type=int, default=32767)
    cp.set_defaults(func=cmd_convert)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    threads = os.environ.get("KGAMC_THREADS")
    if threads:
        try:
            import torch

            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"error: KGAMC_THREADS={threads!r} is not an integer", file=sys.stderr)
            return EXIT_USAGE
    parser = build_parser()
    try:
        args = parser.parse_args(_merge_negative_values(argv))
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as e:
        print(f"validation failure: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (KgamcError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
