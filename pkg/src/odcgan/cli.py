"""Command-line entry point: ``odcgan {train,predict,evaluate,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .checkpoint import CheckpointError, load_archive
from .config import RunConfig, load_config_file, write_config
from .data import (DATASET_KINDS, ChannelError, DatasetError, SplitTensors, load_manifest,
                   preprocess_image, read_image)
from .inference import Predictor, evaluate_split
from .metrics import METRIC_NAMES, format_table
from .model import ConfigError
from .postprocess import postprocess
from .train import NonFiniteLossError, latest_checkpoint, train

log = logging.getLogger("odcgan")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
DATA_ENV = "OD_CGAN_DATA"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file with [section] headers")
    p.add_argument("--seed", type=int, help="random seed (train.seed)")
    p.add_argument("--out-dir", type=Path, help="output / run directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _post_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float)
    p.add_argument("--morph-size", type=int)
    p.add_argument("--morph-iters", type=int)
    p.add_argument("--morph-shape", choices=("square", "disc"))
    p.add_argument("--keep-largest", action=argparse.BooleanOptionalAction, default=None)


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, help=f"dataset root (default: ${DATA_ENV})")
    p.add_argument("--dataset-kind", choices=DATASET_KINDS)
    p.add_argument("--split-file", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="odcgan", description="Optic-disc segmentation with a conditional GAN.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train generator and discriminator")
    _common(p)
    _data_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda-l1", type=float)
    p.add_argument("--log-eps", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--no-timing", action="store_true", help="leave the ms column of the log empty")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p.add_argument("--force", action="store_true", help="reuse a non-empty run directory")

    p = sub.add_parser("predict", help="segment individual images")
    _common(p)
    _post_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("images", nargs="+", type=Path)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test split")
    _common(p)
    _data_flags(p)
    _post_flags(p)
    p.add_argument("--checkpoint", type=Path, help="checkpoint file (default: latest in --run-dir)")
    p.add_argument("--run-dir", type=Path)

    p = sub.add_parser("report", help="render qualitative panel and loss curves")
    _common(p)
    _data_flags(p)
    _post_flags(p)
    p.add_argument("--run-dir", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--n-examples", type=int, default=3)
    return parser


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    """Defaults (or ``base``) < config file < command-line flags."""
    cfg = base or RunConfig()
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"config file {args.config} not found")
        load_config_file(args.config, cfg)
    flags = {
        "seed": "train.seed", "epochs": "train.epochs", "batch_size": "train.batch_size",
        "lr": "train.learning_rate", "checkpoint_every": "train.checkpoint_every",
        "lambda_l1": "loss.lambda_l1", "log_eps": "loss.log_epsilon",
        "threshold": "postprocess.threshold", "morph_size": "postprocess.morph_size",
        "morph_iters": "postprocess.morph_iters", "morph_shape": "postprocess.morph_shape",
        "keep_largest": "postprocess.keep_largest",
        "dataset_kind": "data.kind",
    }
    for attr, dotted in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg.set(dotted, value)
    if getattr(args, "no_timing", False):
        cfg.train.log_timing = False
    if getattr(args, "data", None) is not None:
        cfg.data.root = str(args.data)
    elif not cfg.data.root and os.environ.get(DATA_ENV):
        cfg.data.root = os.environ[DATA_ENV]
    if getattr(args, "split_file", None) is not None:
        cfg.data.split_file = str(args.split_file)
    cfg.validate()
    return cfg


def _manifest(cfg: RunConfig):
    if not cfg.data.root:
        raise UsageError(f"no dataset root: pass --data or set ${DATA_ENV}")
    return load_manifest(cfg.data.root, cfg.data.kind, cfg.data.split_file or None)


def _run_dir_of(checkpoint: Path) -> Path:
    parent = checkpoint.resolve().parent
    return parent.parent if parent.name == "checkpoints" else parent


def _checkpoint_config(path: Path) -> RunConfig:
    _, meta = load_archive(path)
    return RunConfig.from_dict(meta["config"])


def cmd_train(args) -> int:
    out = args.out_dir or Path("run")
    base = _checkpoint_config(args.resume) if args.resume else None
    cfg = resolve_config(args, base)
    if out.exists() and any(out.iterdir()) and not (args.force or args.resume):
        raise UsageError(f"run directory {out} exists and is not empty (use --force)")
    if args.force and not args.resume:
        shutil.rmtree(out / "checkpoints", ignore_errors=True)
        (out / "train_log.csv").unlink(missing_ok=True)
    manifest = _manifest(cfg)
    split = SplitTensors.load(manifest.train)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.ini")
    trainer, history = train(split, cfg, out, resume=args.resume)
    print(f"trained {trainer.epoch} epochs, {trainer.step} steps; run directory {out}")
    return EXIT_OK


def _ids_for(paths):
    seen: dict[str, int] = {}
    ids = []
    for p in paths:
        stem = p.stem
        seen[stem] = seen.get(stem, 0) + 1
        ids.append(stem if seen[stem] == 1 else f"{stem}_{seen[stem]}")
    return ids


def cmd_predict(args) -> int:
    cfg = resolve_config(args, _checkpoint_config(args.checkpoint))
    post = cfg.postprocess.to_postprocess()
    predictor = Predictor.from_checkpoint(args.checkpoint)
    out = args.out_dir or Path("predictions")
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.ini")
    written = 0
    for id_, path in zip(_ids_for(args.images), args.images):
        try:
            x = preprocess_image(read_image(path))
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        soft = predictor(x[None])[0, 0].numpy()
        prob = np.rint(255.0 * soft).astype(np.uint8)
        hard = postprocess(soft, post)
        Image.fromarray(prob, mode="L").save(out / f"{id_}_prob.png")
        Image.fromarray((hard * 255).astype(np.uint8), mode="L").save(out / f"{id_}_mask.png")
        written += 1
    if written == 0:
        log.error("no input image could be read")
        return EXIT_RUNTIME
    print(f"wrote {written} prediction pair(s) to {out}")
    return EXIT_OK


def _pick_checkpoint(args) -> Path:
    if args.checkpoint is not None:
        return args.checkpoint
    if getattr(args, "run_dir", None) is not None:
        return latest_checkpoint(args.run_dir)
    raise UsageError("pass --checkpoint or --run-dir")


def cmd_evaluate(args) -> int:
    ck = _pick_checkpoint(args)
    cfg = resolve_config(args, _checkpoint_config(ck))
    manifest = _manifest(cfg)
    if not manifest.test:
        raise DatasetError(f"test split of {manifest.root} is empty")
    split = SplitTensors.load(manifest.test, require_masks=True)
    out = args.out_dir or args.run_dir or _run_dir_of(ck)
    out.mkdir(parents=True, exist_ok=True)
    summary, per_image = evaluate_split(Predictor.from_checkpoint(ck), split,
                                        cfg.postprocess.to_postprocess(), out / "metrics.csv")
    print(format_table(per_image, summary))
    print(f"metrics written to {out / 'metrics.csv'} (mean of per-image values)")
    return EXIT_OK


def select_examples(ids, n: int, seed: int) -> list[str]:
    if n > len(ids):
        log.warning("n_examples=%d exceeds split size %d; clamping", n, len(ids))
        n = len(ids)
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(ids), size=n, replace=False)
    return [ids[i] for i in sorted(picked)]


def cmd_report(args) -> int:
    from . import plotting
    if args.n_examples < 1:
        raise UsageError("--n-examples must be >= 1")
    ck = _pick_checkpoint(args)
    cfg = resolve_config(args, _checkpoint_config(ck))
    manifest = _manifest(cfg)
    samples = manifest.test or manifest.train
    if not manifest.test:
        log.warning("test split is empty; reporting on training samples")
    chosen = set(select_examples([s.id for s in samples], args.n_examples, cfg.train.seed))
    split = SplitTensors.load([s for s in samples if s.id in chosen], require_masks=True)
    post = cfg.postprocess.to_postprocess()
    predictor = Predictor.from_checkpoint(ck)
    summary, per_image = evaluate_split(predictor, split, post)
    soft = predictor(split.images)

    out = args.out_dir or args.run_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, id_ in enumerate(split.ids):
        rows.append((id_, split.images[i].permute(1, 2, 0).numpy(), split.masks[i, 0].numpy(),
                     postprocess(soft[i, 0].numpy(), post)))
    w, h = plotting.render_panel(rows, out / "panel.png")
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("row", "id") + METRIC_NAMES)
        for r, id_ in enumerate(split.ids):
            wr.writerow([r, id_] + [f"{getattr(per_image[id_], k):.6f}" for k in METRIC_NAMES])
    log_path = args.run_dir / "train_log.csv"
    if log_path.is_file():
        plotting.render_loss_curves(log_path, out / "loss_curves.png")
    print(f"panel {w}x{h} px with {len(rows)} rows written to {out / 'panel.png'}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"odcgan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ChannelError, CheckpointError, NonFiniteLossError, OSError) as exc:
        print(f"odcgan {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
