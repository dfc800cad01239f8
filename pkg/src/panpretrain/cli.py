"""Command-line entry point.

Global flags (``--seed``, ``--config``, ``--out``) may appear before or
after the subcommand.  Exit status: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from .config import RunConfig
from .degradation import PROFILES
from .errors import PanPretrainError
from .io import (
    CKPT_MAGIC,
    PFT_MAGIC,
    Checkpoint,
    atomic_write_text,
    canonical_json,
    decode_checkpoint,
    decode_pft,
    load_checkpoint,
    markdown_table,
    meta_line,
    read_corpus_image,
    save_checkpoint,
    write_plot,
    write_report,
)
from .metrics import MetricReport, full_metrics, reduced_metrics
from .model import TuneMode, trainable_count
from .optim import ScheduleConfig, lr_at
from .pipeline import (
    CONDITIONS,
    build_dataset,
    evaluate,
    history_csv,
    load_dataset,
    load_manifest,
    one_shot_tune,
    pretrain,
    run_benchmark,
    wald_lowpass,
)

log = logging.getLogger("panpretrain")


class UsageError(Exception):
    pass


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="global seed (default 0)")
    parser.add_argument("--config", type=Path, default=default(None), help="JSON run configuration")
    parser.add_argument("--out", type=Path, default=default(None), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panpretrain", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="build a synthetic dataset from an image corpus")
    p.add_argument("corpus", type=Path)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--profile", choices=PROFILES, default="pretrain")

    p = sub.add_parser("pretrain", parents=[common], help="pretrain the fusion network on a dataset")
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("eval", parents=[common], help="zero-shot evaluation of a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--resolution", choices=("reduced", "full"), default="reduced")

    p = sub.add_parser("tune", parents=[common], help="one-shot tuning on a single dataset pair")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--mode", choices=[m.value for m in TuneMode], default="full")
    p.add_argument("--pair", type=int, default=0, help="index of the tuning pair; the others validate")

    p = sub.add_parser("bench", parents=[common], help="zero-shot / freeze / full / scratch benchmark")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("metrics", parents=[common], help="score a fused image against a reference")
    p.add_argument("pred", type=Path)
    p.add_argument("ref", type=Path, nargs="?", help="reference MS (reduced-resolution metrics)")
    p.add_argument("--lrms", type=Path, help="low-resolution MS (full-resolution metrics)")
    p.add_argument("--pan", type=Path, help="PAN (full-resolution metrics)")
    p.add_argument("--ratio", type=int, default=None)

    p = sub.add_parser("inspect", parents=[common], help="print headers, seed and config hash of an artifact")
    p.add_argument("path", type=Path)
    return parser


def _load_config(args) -> RunConfig:
    return RunConfig.load(args.config) if args.config else RunConfig()


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} needs --out")
    return args.out


def _meta(args, cfg: RunConfig) -> dict:
    return {"seed": args.seed, "config_hash": cfg.hash()}


def _print_means(report: MetricReport) -> None:
    for name, value in report.aggregate().items():
        print(f"{name:10s} {value:.6f}")


def cmd_synth(args, cfg):
    out = build_dataset(args.corpus, _require_out(args), args.count, args.profile, cfg, args.seed)
    print(f"wrote {args.count} samples to {out}")


def cmd_pretrain(args, cfg):
    out = _require_out(args)
    result = pretrain(load_dataset(args.dataset), cfg, args.seed, out)
    print(f"best val PSNR {result.best_val_psnr:.4f} dB at epoch {result.best.epoch}; checkpoints in {out}")


def cmd_eval(args, cfg):
    ckpt = load_checkpoint(args.checkpoint)
    report = evaluate(ckpt.params, load_dataset(args.dataset), args.resolution, cfg.eval.q_window)
    if args.out is not None:
        meta = _meta(args, cfg)
        write_report(report, args.out / f"eval_{args.resolution}.csv", "csv", meta)
        write_report(report, args.out / f"eval_{args.resolution}.md", "markdown", meta)
    _print_means(report)


def cmd_tune(args, cfg):
    out = _require_out(args)
    ckpt = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.dataset)
    if not 0 <= args.pair < len(samples) or len(samples) < 2:
        raise UsageError(f"--pair must index one of {len(samples)} samples and leave at least one to validate")
    val = samples[: args.pair] + samples[args.pair + 1 :]
    res = one_shot_tune(ckpt.params, samples[args.pair], args.mode, cfg, val)
    save_checkpoint(out / f"tuned_{args.mode}.pfck", Checkpoint(res.params, args.seed, cfg.hash(), res.best_epoch))
    sched = ScheduleConfig(cfg.finetune.lr, cfg.finetune.warmup_epochs, cfg.finetune.epochs)
    history = [
        {"epoch": i + 1, "loss": loss, "lr": lr_at(i, sched), "val_psnr": v}
        for i, (loss, v) in enumerate(zip(res.losses, res.curve))
    ]
    atomic_write_text(out / f"tune_{args.mode}.csv", history_csv(history, _meta(args, cfg)))
    print(
        f"{args.mode}-tuned {trainable_count(res.params, args.mode)} parameters; "
        f"best val PSNR {res.best_val_psnr:.4f} dB at epoch {res.best_epoch}"
    )


def bench_markdown(result: dict) -> str:
    meta = {"seed": result["seed"], "config_hash": result["config_hash"]}
    head = f"## One-shot benchmark ({result['n_tune']} tuning runs, {result['n_val']} validation images)\n\n"
    head += f"<!-- {meta_line(meta)} -->\n\n"
    return head + markdown_table(result["conditions"])


def bench_csv(result: dict) -> str:
    lines = [f"# seed={result['seed']} config_hash={result['config_hash']}", "condition,metric,value"]
    for cond in CONDITIONS:
        for metric, value in result["conditions"][cond].items():
            lines.append(f"{cond},{metric},{value!r}")
    return "\n".join(lines) + "\n"


def write_bench(result: dict, out: Path) -> None:
    meta = {"seed": result["seed"], "config_hash": result["config_hash"]}
    atomic_write_text(out / "bench.json", canonical_json(result))
    atomic_write_text(out / "bench.md", bench_markdown(result))
    atomic_write_text(out / "bench.csv", bench_csv(result))
    write_plot(result["curves"], out / "convergence.svg", meta=meta)


def cmd_bench(args, cfg):
    out = _require_out(args)
    ckpt = load_checkpoint(args.checkpoint)
    result = run_benchmark(ckpt.params, load_dataset(args.dataset), cfg, args.seed)
    write_bench(result, out)
    print(bench_markdown(result), end="")


def cmd_metrics(args, cfg):
    pred = read_corpus_image(args.pred)
    report_vals = {}
    if args.ref is not None:
        ref = read_corpus_image(args.ref)
        report_vals.update(reduced_metrics(pred, ref, args.ratio or cfg.eval.ratio))
    if args.lrms is not None or args.pan is not None:
        if args.lrms is None or args.pan is None:
            raise UsageError("full-resolution metrics need both --lrms and --pan")
        lrms, pan = read_corpus_image(args.lrms), read_corpus_image(args.pan)
        ratio = args.ratio or int(round(pan.shape[-1] / lrms.shape[-1]))
        report_vals.update(full_metrics(pred, lrms, pan, wald_lowpass(pan, ratio), cfg.eval.q_window))
    if not report_vals:
        raise UsageError("metrics needs a reference image or --lrms/--pan")
    for name, value in report_vals.items():
        print(f"{name:10s} {value:.6f}")


_META_RE = re.compile(r"seed=(\d+)\s+config_hash=([0-9a-f]{16})|config_hash=([0-9a-f]{16})\s+seed=(\d+)")


def inspect_path(path: Path) -> list[str]:
    """Human-readable header lines for a PFT, checkpoint, dataset or report."""
    if path.is_dir():
        path = path / "manifest.json"
    if path.name == "manifest.json":
        m = load_manifest(path.parent)
        return [
            f"dataset {path.parent}",
            f"seed {m['seed']}",
            f"config_hash {m['config_hash']}",
            f"profile {m['profile']} samples {m['count']} skipped {len(m['skipped'])}",
        ]
    data = path.read_bytes()
    if data[:4] == PFT_MAGIC:
        lines = [f"PFT {path.name}"]
        for i, t in enumerate(decode_pft(data)):
            lines.append(f"record {i}: channels {t.shape[0]} height {t.shape[1]} width {t.shape[2]}")
        spec = path.with_name(path.stem + ".spec.json")
        if spec.exists():
            lines.append(f"seed {json.loads(spec.read_text())['seed']}")
        return lines
    if data[:4] == CKPT_MAGIC:
        ck = decode_checkpoint(data)
        p = ck.params
        return [
            f"checkpoint {path.name}",
            f"seed {ck.seed}",
            f"config_hash {ck.config_hash}",
            f"c_max {p.c_max} hidden {p.hidden} epoch {ck.epoch}",
            f"parameters {p.count()} freeze-tunable {trainable_count(p, TuneMode.FREEZE)}",
            f"optimizer state {'yes' if ck.optimizer is not None else 'no'}",
        ]
    text = data.decode("utf-8", errors="replace")
    if path.suffix == ".json":
        obj = json.loads(text)
        if "seed" in obj and "config_hash" in obj:
            return [f"report {path.name}", f"seed {obj['seed']}", f"config_hash {obj['config_hash']}"]
    match = _META_RE.search(text)
    if match:
        seed = match.group(1) or match.group(4)
        chash = match.group(2) or match.group(3)
        return [f"report {path.name}", f"seed {seed}", f"config_hash {chash}"]
    raise PanPretrainError(f"{path}: unrecognized artifact")


def cmd_inspect(args, cfg):
    for line in inspect_path(args.path):
        print(line)


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "eval": cmd_eval,
    "tune": cmd_tune,
    "bench": cmd_bench,
    "metrics": cmd_metrics,
    "inspect": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"panpretrain: error: {exc}", file=sys.stderr)
        return 2
    except (PanPretrainError, OSError, ValueError, KeyError) as exc:
        print(f"panpretrain: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
