"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import torch

from . import __version__, seeding
from .adapt import (
    APPROACHES,
    TrainConfig,
    apply_budget,
    combined_pipeline,
    config_echo,
    evaluate,
    fine_tune,
    fresh_model,
    pseudo_label_model,
    run_experiment_matrix,
    table6_plans,
    train_source_model,
    train_supervised,
)
from .data import AugmentConfig, DomainDescriptor, load_dataset, save_dataset, split_dataset
from .data.split import PAPER_BUDGETS, PAPER_TEST_FRACTION
from .data.synthetic import PRESETS, make_synthetic_domain
from .data.io import to_uint8, write_image_file
from .errors import DataError, NumericError
from .metrics import aggregate_report
from .models import PatchCNNConfig, UNetConfig, load_params, predict_full_image, save_params
from .report import emit_overlay, emit_report_table, write_metric_csv

log = logging.getLogger("skinadapt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DESK_PATCH_SIZE = 15


class UsageError(Exception):
    pass


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None


def _domain(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    name, path = text.split("=", 1)
    return name, path


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--model", choices=("unet", "patch"), default="unet")
    g.add_argument("--frame", type=_size, default=None, help="U-Net input frame HxW (default 64x64)")
    g.add_argument("--levels", type=int, default=None)
    g.add_argument("--base-channels", type=int, default=8)
    g.add_argument("--patch-size", type=int, default=None)
    g.add_argument("--paper-scale", action="store_true",
                   help="768x768 frame, 7 levels, 35-pixel patches")
    g.add_argument("--budget", type=float, default=None,
                   help="fraction of target train labels (default 1 for train/fine-tune, 0 otherwise)")
    g.add_argument("--tau", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--steps", type=int, default=300)
    g.add_argument("--head-steps", type=int, default=50)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--batch-size", type=int, default=4)
    g.add_argument("--no-augment", action="store_true")
    g.add_argument("--test-fraction", type=float, default=PAPER_TEST_FRACTION)
    g.add_argument("--domain", type=_domain, action="append", default=[], metavar="NAME=PATH")
    g.add_argument("--out", type=Path, default=Path("out"))
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="skinadapt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", parents=[common], help="generate a synthetic domain")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--descriptor", type=Path, default=None, help="JSON domain descriptor")
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--format", choices=("pnm", "png"), default="pnm")

    p = sub.add_parser("train", parents=[common], help="supervised training on one domain")
    p.add_argument("--target", default=None, help="domain to train on (default: the only --domain)")

    for name, helptext in (("predict", "write probability maps and overlays"),
                           ("eval", "score a saved model on a domain's test split")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--params", type=Path, required=True)
        p.add_argument("--target", default=None)
        p.add_argument("--split", choices=("test", "train", "all"), default="test" if name == "eval" else "all")

    for name, helptext in (("pseudo-label", "cross-domain pseudo-label training (model B)"),
                           ("fine-tune", "fine-tune a source model on target labels"),
                           ("combined", "pseudo-label + fine-tune + in-domain round (model C)")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--source", required=True)
        p.add_argument("--target", required=True)
        p.add_argument("--params", type=Path, default=None, help="pre-trained source model")
        p.add_argument("--init-from-source", action="store_true",
                       help="start model B from the source model instead of from scratch")

    p = sub.add_parser("experiment", parents=[common], help="run a source/target x budget matrix")
    p.add_argument("--pair", action="append", default=[], metavar="SRC:TGT", required=True)
    p.add_argument("--approaches", default=",".join(APPROACHES))
    p.add_argument("--budgets", default=",".join(f"{b:g}" for b in PAPER_BUDGETS))
    p.add_argument("--workers", type=int, default=1)
    return parser


def model_config(args):
    if args.model == "unet":
        frame = args.frame or ((768, 768) if args.paper_scale else (64, 64))
        levels = args.levels or (7 if args.paper_scale else 3)
        return UNetConfig(levels=levels, base_channels=args.base_channels, frame=frame)
    size = args.patch_size or (35 if args.paper_scale else DESK_PATCH_SIZE)
    return PatchCNNConfig(patch_size=size)


def train_config(args, **extra) -> TrainConfig:
    return TrainConfig(
        lr=args.lr, batch_size=args.batch_size, steps=args.steps, seed=args.seed,
        augment=None if args.no_augment else AugmentConfig(), tau=args.tau,
        finetune_head_steps=args.head_steps, **extra,
    )


def load_domains(args) -> dict:
    out = {}
    for name, path in args.domain:
        if not Path(path).is_dir():
            raise DataError(f"dataset path for {name!r} does not exist: {path}")
        ds = load_dataset(path, domain=name)
        if not ds.indices("test") and len(ds) >= 2:
            ds = split_dataset(ds, args.test_fraction, seed=seeding.substream(args.seed, "split"))
        out[name] = ds
    return out


def _pick(domains: dict, name, role: str):
    if name is None:
        if len(domains) != 1:
            raise UsageError(f"give --{role} NAME when passing several --domain flags")
        return next(iter(domains.values()))
    if name not in domains:
        raise UsageError(f"--{role} {name!r} has no matching --domain {name}=PATH")
    return domains[name]


def write_echo(out: Path, args, extra: dict) -> None:
    echo = {
        "argv": sys.argv[1:],
        "command": args.command,
        "seed": args.seed,
        "version": __version__,
        "torch": torch.__version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        **extra,
    }
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True, default=str) + "\n")


def _with_summary(reports: list) -> list:
    """Per-image rows followed by the "mean" and "pooled" summary rows."""
    return reports + [replace(aggregate_report(reports, "per_image_mean"), id="mean"),
                      replace(aggregate_report(reports, "pixel_pooled"), id="pooled")]


def _eval_and_write(m, ds, out: Path, stem: str) -> dict:
    test = ds.subset("test")
    if not test:
        return {}
    agg, reports = evaluate(m, test)
    write_metric_csv(_with_summary(reports), out / f"{stem}_metrics.csv")
    log.info("%s on %s test: mean F1 %.2f%%", stem, ds.domain, 100 * agg.f1)
    return {"mean_f1": agg.f1, "acc": agg.acc, "iou": agg.iou, "prec": agg.prec, "rec": agg.rec}


def cmd_gen_synth(args) -> dict:
    if args.descriptor is not None:
        desc = DomainDescriptor.from_dict(json.loads(args.descriptor.read_text()))
    elif args.preset is not None:
        desc = PRESETS[args.preset]
    else:
        raise UsageError("gen-synth needs --preset or --descriptor")
    ds = make_synthetic_domain(desc, args.n, args.size, seed=args.seed)
    ds = split_dataset(ds, args.test_fraction, seed=seeding.substream(args.seed, "split"))
    save_dataset(ds, args.out, args.format)
    return {"descriptor": asdict(desc), "n": args.n, "size": args.size}


def cmd_train(args) -> dict:
    ds = _pick(load_domains(args), args.target, "target")
    cfg = train_config(args)
    ds = apply_budget(ds, args.budget, cfg)
    m, history = train_supervised(fresh_model(args.model, model_config(args), cfg), ds, cfg)
    save_params(m, args.out / "model.bin")
    with open(args.out / "history.csv", "w") as fh:
        fh.write("epoch,step,alpha,loss,f1\n")
        for h in history:
            fh.write(f"{h['epoch']},{h['step']},{h['alpha']!r},{h['loss']!r},{h['f1']!r}\n")
    return {"train": asdict(cfg), "model": asdict(m.config), "test": _eval_and_write(m, ds, args.out, "model")}


def _selected(ds, split: str):
    return list(ds.samples) if split == "all" else ds.subset(split)


def cmd_predict(args) -> dict:
    m = load_params(args.params)
    ds = _pick(load_domains(args), args.target, "target")
    (args.out / "predictions").mkdir(exist_ok=True)
    (args.out / "overlays").mkdir(exist_ok=True)
    samples = _selected(ds, args.split)
    for s in samples:
        prob = predict_full_image(m, s)
        write_image_file(args.out / "predictions" / f"{s.id}.pgm", to_uint8(prob))
        emit_overlay(s, [prob], args.out / "overlays" / f"{s.id}.ppm")
    return {"params": str(args.params), "images": len(samples)}


def cmd_eval(args) -> dict:
    m = load_params(args.params)
    ds = _pick(load_domains(args), args.target, "target")
    samples = [s for s in _selected(ds, args.split) if s.mask is not None]
    if not samples:
        raise DataError(f"no labeled {args.split} samples to evaluate")
    agg, reports = evaluate(m, samples)
    pooled = aggregate_report(reports, "pixel_pooled")
    write_metric_csv(_with_summary(reports), args.out / "metrics.csv")
    print(f"mean F1 {100 * agg.f1:.2f}  IoU {100 * agg.iou:.2f}  "
          f"Prec {100 * agg.prec:.2f}  Rec {100 * agg.rec:.2f}  Acc {100 * agg.acc:.2f}")
    return {"params": str(args.params), "per_image_mean": asdict(agg), "pixel_pooled": asdict(pooled)}


def _adapt_inputs(args):
    domains = load_domains(args)
    source = _pick(domains, args.source, "source")
    target = _pick(domains, args.target, "target")
    cfg = train_config(args, init_from_source=args.init_from_source)
    mcfg = model_config(args)
    if args.params is not None:
        a = load_params(args.params)
    else:
        a = train_source_model(source, cfg, args.model, mcfg)
        save_params(a, args.out / "model_a.bin")
    return source, target, cfg, a


def cmd_pseudo_label(args) -> dict:
    source, target, cfg, a = _adapt_inputs(args)
    tgt = apply_budget(target, args.budget, cfg)
    b, pset = pseudo_label_model(tgt, cfg, a)
    save_params(b, args.out / "model_b.bin")
    pdir = args.out / "pseudo_masks"
    pdir.mkdir(exist_ok=True)
    for s, src in zip(pset.samples, pset.sources):
        if src == "pseudo":
            write_image_file(pdir / f"{s.id}.pgm", s.mask * np.uint8(255))
    return {"train": asdict(cfg), "pseudo_generator": pset.generator, "n_pseudo": pset.n_pseudo,
            "source_only": _eval_and_write(a, tgt, args.out, "model_a"),
            "test": _eval_and_write(b, tgt, args.out, "model_b")}


def cmd_fine_tune(args) -> dict:
    source, target, cfg, a = _adapt_inputs(args)
    tgt = apply_budget(target, args.budget, cfg)
    m = fine_tune(a, tgt, cfg)
    save_params(m, args.out / "model_ft.bin")
    return {"train": asdict(cfg), "test": _eval_and_write(m, tgt, args.out, "model_ft")}


def cmd_combined(args) -> dict:
    source, target, cfg, a = _adapt_inputs(args)
    res = combined_pipeline(source, target, args.budget, cfg, args.model, model_config(args),
                            source_model=a, details=True)
    save_params(res.model_b, args.out / "model_b.bin")
    save_params(res.model_c, args.out / "model_c.bin")
    tgt = apply_budget(target, args.budget, cfg)
    return {"train": asdict(cfg), "notes": res.notes,
            "test": _eval_and_write(res.model_c, tgt, args.out, "model_c")}


def cmd_experiment(args) -> dict:
    domains = load_domains(args)
    pairs = []
    for text in args.pair:
        if ":" not in text:
            raise UsageError(f"--pair expects SRC:TGT, got {text!r}")
        pairs.append(tuple(text.split(":", 1)))
    approaches = [a.strip() for a in args.approaches.split(",") if a.strip()]
    bad = set(approaches) - set(APPROACHES)
    if bad:
        raise UsageError(f"unknown approach(es): {sorted(bad)}")
    budgets = tuple(float(b) for b in args.budgets.split(","))
    plans = table6_plans(pairs, budgets, approaches, train_config(args), args.model, model_config(args))
    if not plans:
        raise UsageError("no valid (approach, budget) cells selected")
    table = run_experiment_matrix(plans, domains, workers=args.workers)
    table.budgets = budgets
    emit_report_table(table, "csv", args.out / "results.csv")
    emit_report_table(table, "markdown", args.out / "results.md")
    print((args.out / "results.md").read_text())
    return config_echo(plans)


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "pseudo-label": cmd_pseudo_label,
    "fine-tune": cmd_fine_tune,
    "combined": cmd_combined,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.budget is None:
        args.budget = 1.0 if args.command in ("train", "fine-tune") else 0.0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.use_deterministic_algorithms(True)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args)
        write_echo(args.out, args, extra or {})
    except UsageError as exc:
        print(f"skinadapt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"skinadapt: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"skinadapt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"skinadapt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
