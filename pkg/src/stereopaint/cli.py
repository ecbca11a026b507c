"""Command-line entry point: gen-data, train, infer, eval, gradcheck."""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .data import BUCKETS

DEFAULT_LR = 0.25


@dataclass
class RunConfig:
    seed: int = 0
    height: int = 32
    width: int = 32
    max_disp: int = 8
    d_levels: int = 8
    iterations: int = 6
    lambda_adv: float = 0.01
    learning_rate: float = DEFAULT_LR
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 4
    ablation: str = "gaa"
    bucket: str = "b20_40"
    train_count: int = 200
    test_count: int = 40

    def validate(self) -> None:
        if self.iterations < 2 or self.iterations % 2:
            raise ValueError(f"iterations must be even and >= 2, got {self.iterations}")
        if self.d_levels < 1:
            raise ValueError("d_levels must be >= 1")
        if self.lambda_adv < 0:
            raise ValueError("lambda_adv must be >= 0")
        if self.bucket not in BUCKETS:
            raise ValueError(f"unknown bucket {self.bucket!r}")
        if self.ablation not in ("gaa", "max", "concat"):
            raise ValueError(f"unknown ablation {self.ablation!r}")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def load_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        kind = _FIELD_TYPES[key]
        values[key] = float(value) if kind == "float" else (
            int(value) if kind == "int" else value)
    return values


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    cfg.validate()
    return cfg


def _add_config_flags(p: argparse.ArgumentParser, *names) -> None:
    p.add_argument("--config", help="flat key = value config file")
    converters = {"int": int, "float": float, "str": str}
    for name in names:
        kwargs = {"type": converters[_FIELD_TYPES[name]], "default": None}
        if name == "bucket":
            kwargs = {"choices": sorted(BUCKETS), "default": None}
        if name == "ablation":
            kwargs = {"choices": ("gaa", "max", "concat"), "default": None}
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereopaint",
        description="Stereo image inpainting with cost-volume attention and "
                    "iterative cross guidance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic stereo dataset")
    p.add_argument("--out", required=True)
    _add_config_flags(p, "seed", "height", "width", "max_disp", "bucket",
                      "train_count", "test_count")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory (with manifest.txt)")
    p.add_argument("--out", required=True, help="output directory for checkpoint and logs")
    _add_config_flags(p, "seed", "epochs", "batch_size", "learning_rate", "momentum",
                      "d_levels", "iterations", "lambda_adv", "ablation")

    p = sub.add_parser("infer", help="inpaint one stereo pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--mask-left", required=True)
    p.add_argument("--mask-right", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--buckets", default=None,
                   help="comma-separated buckets to re-mask with (default: dataset masks)")

    sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    return parser


def cmd_gen_data(args) -> int:
    from .data import make_dataset, mask_ratio, save_dataset

    cfg = resolve_config(args)
    out = Path(args.out)
    for split, count, seed in (("train", cfg.train_count, cfg.seed),
                               ("test", cfg.test_count, cfg.seed + 1)):
        samples = make_dataset(seed, count, cfg.height, cfg.width, cfg.max_disp, cfg.bucket)
        save_dataset(samples, out / split, seed=seed, max_disp=cfg.max_disp,
                     bucket=cfg.bucket)
        ratios = [mask_ratio(s.m_left) for s in samples]
        print(f"{split}: {count} samples, bucket {cfg.bucket}, "
              f"mask ratios {min(ratios):.2f}..{max(ratios):.2f} -> {out / split}")
    return 0


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .data import load_dataset
    from .figures import save_loss_curves
    from .train import train_model

    cfg = resolve_config(args)
    samples, meta = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def on_epoch(epoch, report):
        print(f"epoch {epoch} rec {report.rec:.6f} adv_gen {report.adv_gen:.6f} "
              f"adv_disc {report.adv_disc:.6f} total {report.total:.6f}")

    result = train_model(
        samples, seed=cfg.seed, epochs=cfg.epochs, batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate, momentum=cfg.momentum,
        d_levels=cfg.d_levels, iterations=cfg.iterations,
        lambda_adv=cfg.lambda_adv, ablation=cfg.ablation, on_epoch=on_epoch,
    )
    ckpt = out / "checkpoint.ckpt"
    save_checkpoint(ckpt, result.params)
    rows = ["epoch,rec,adv_gen,adv_disc,total"]
    for i, r in enumerate(result.log, 1):
        rows.append(f"{i},{r.rec:.6f},{r.adv_gen:.6f},{r.adv_disc:.6f},{r.total:.6f}")
    (out / "loss_log.csv").write_text("\n".join(rows) + "\n")
    save_loss_curves(result.log, out / "loss_curves.png")
    digest = hashlib.sha256(ckpt.read_bytes()).hexdigest()
    print(f"checkpoint {ckpt} sha256 {digest[:16]}")
    return 0


def cmd_infer(args) -> int:
    from .checkpoint import load_checkpoint
    from .icg import dump_history, icg_run
    from .pnm import read_image, read_mask, write_image
    from .tensor import Tensor, no_grad

    params = load_checkpoint(args.checkpoint)
    left = read_image(args.left)
    right = read_image(args.right)
    m_left = read_mask(args.mask_left)
    m_right = read_mask(args.mask_right)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with no_grad():
        y_left, y_right, history = icg_run(Tensor(left), Tensor(right),
                                           m_left, m_right, params,
                                           iterations=args.iterations)
    write_image(y_left, out / "out_left.ppm")
    write_image(y_right, out / "out_right.ppm")
    dump_history(history, out)
    print(f"wrote out_left.ppm, out_right.ppm and {len(history)} iteration "
          f"snapshots to {out}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_dataset
    from .evaluate import evaluate_samples, remask_samples, rows_to_csv, rows_to_text
    from .figures import save_metric_bars

    params = load_checkpoint(args.checkpoint)
    samples, meta = load_dataset(args.data)
    rows = []
    if args.buckets:
        for bucket in args.buckets.split(","):
            bucket = bucket.strip()
            if bucket not in BUCKETS:
                raise ValueError(f"unknown bucket {bucket!r}")
            rows.extend(evaluate_samples(params, remask_samples(samples, bucket,
                                                                meta["seed"]), bucket))
    else:
        rows.extend(evaluate_samples(params, samples, meta.get("bucket", "dataset")))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(rows_to_csv(rows))
    text = rows_to_text(rows)
    (out / "report.txt").write_text(text)
    save_metric_bars(rows, out / "report.png")
    print(text, end="")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import format_results, run_suite

    results = run_suite()
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
