"""Command line entry point: ``tcgl <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .ablation import format_table, run_ablation
from .checkpoint import Checkpoint
from .config import TrainConfig, parse_assignments
from .evaluate import DatasetSpec, export_embeddings, probe_order_accuracy, retrieve
from .train import pretrain
from .verify import verify


def _config(args) -> TrainConfig:
    values = {}
    if args.config:
        values.update(parse_assignments(Path(args.config).read_text(encoding="utf-8")))
    values.update(parse_assignments("\n".join(args.set or [])))
    if args.seed is not None:
        values["seed"] = args.seed
    return TrainConfig(**values)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def _progress(row) -> None:
    print(f"epoch {row.epoch:4d}  J_g={row.j_g:.4f}  J_o={row.j_o:.4f}  J={row.j:.4f}  "
          f"train={row.train_acc:.3f}  val={row.val_acc:.3f}  {row.wall_time:.1f}s", flush=True)


def _load(args) -> Checkpoint:
    if not args.checkpoint:
        raise SystemExit("--checkpoint is required")
    return Checkpoint.load(args.checkpoint)


def cmd_pretrain(args) -> int:
    config = _config(args)
    out = args.out or "run"
    resume = args.checkpoint
    final, log = pretrain(config, out_dir=out, resume=resume, progress=None if args.quiet else _progress)
    print(f"final checkpoint {Path(out) / 'final.ckpt'}; best val {final.best_val:.4f} at epoch {final.best_epoch}")
    return 0


def cmd_probe(args) -> int:
    ckpt = _load(args)
    spec = DatasetSpec(size=args.size, split=args.split, dataset=args.dataset)
    acc = probe_order_accuracy(ckpt, spec, seed=args.seed or 0, best=args.best)
    print(f"order accuracy {acc:.4f} over {args.size} tuples (chance {1 / ckpt.config.sampler.num_classes:.4f})")
    return 0


def cmd_retrieve(args) -> int:
    ckpt = _load(args)
    ks = [int(k) for k in args.k.split(",")]
    gallery = DatasetSpec(size=args.gallery_size, split=args.gallery_split)
    query = DatasetSpec(size=args.query_size, split=args.query_split)
    hits = retrieve(ckpt, gallery, query, ks, exclude_self=not args.keep_self, best=args.best)
    for k in ks:
        print(f"top-{k} {hits[k]:.4f}")
    return 0


def cmd_verify(args) -> int:
    config = _config(args)
    report = verify(config)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0 if report.passed else 1


def cmd_export(args) -> int:
    ckpt = _load(args)
    path = export_embeddings(ckpt, DatasetSpec(size=args.size, split=args.split), args.out or "embeddings.csv",
                             best=args.best)
    print(f"wrote {path}")
    return 0


def cmd_ablate(args) -> int:
    config = _config(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = run_ablation(config, args.axis, args.values, seeds)
    table = format_table(rows, seeds)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcgl", description="Temporal contrastive graph pretraining on synthetic video")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train a model")
    _common(p)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("probe", help="order accuracy of a checkpoint")
    _common(p)
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--split", default="probe")
    p.add_argument("--dataset", default="motion", choices=("motion", "static"))
    p.add_argument("--best", action="store_true", help="use the best-validation snapshot")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("retrieve", help="cosine nearest-neighbour retrieval")
    _common(p)
    p.add_argument("--k", default="1,5,10")
    p.add_argument("--gallery-size", type=int, default=128)
    p.add_argument("--gallery-split", default="train")
    p.add_argument("--query-size", type=int, default=800)
    p.add_argument("--query-split", default="query")
    p.add_argument("--keep-self", action="store_true", help="let an identical item match itself")
    p.add_argument("--best", action="store_true")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("verify", help="run every invariant suite")
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export", help="write video embeddings as text")
    _common(p)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--split", default="train")
    p.add_argument("--best", action="store_true")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("ablate", help="sweep one config axis over seeds")
    _common(p)
    p.add_argument("--axis", required=True, help='config key, or composite "a,b"')
    p.add_argument("--values", required=True, help='comma list; composite values as "x:y"')
    p.add_argument("--seeds", default="0,1,2")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
