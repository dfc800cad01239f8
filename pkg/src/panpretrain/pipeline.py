"""Dataset factory, pretraining, evaluation, one-shot tuning and the benchmark.

Per-sample recipe used by :func:`build_dataset`::

    crop -> synthesize MS to c_max -> synthesize PAN
         -> shuffle (MS, carried into GT) -> jitter MS (carried into GT)
         -> PAN high-pass -> PAN jitter
         -> flips / rotation on (MS, PAN) jointly
         -> GT := MS
         -> degrade MS (blur, downsample, noise) and PAN (blur, noise)
         -> zero masked LRMS bands

Each sample draws from its own stream ``derive(global, LABEL_SAMPLE, index)``
so samples are independent of each other and of the corpus order.
"""

from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as R
from .augmentation import (
    AugmentSpec,
    channel_mask,
    channel_shuffle,
    color_jitter,
    highpass_pan,
    sample_augment_spec,
    spatial_augment,
)
from .config import RunConfig
from .degradation import (
    BlurSpec,
    apply_blur,
    degrade_pair,
    downsample,
    sample_degrade_spec,
)
from .errors import EmptyCorpus, FormatError, ImageTooSmall, ShapeError
from .io import (
    Checkpoint,
    atomic_write_text,
    canonical_json,
    list_corpus,
    read_corpus_image,
    read_pft,
    save_checkpoint,
    write_pft,
)
from .metrics import MetricReport, full_metrics, psnr, reduced_metrics
from .model import (
    ModelParams,
    TuneMode,
    backward,
    forward_prepared,
    init_params,
    l1_loss,
    upsample_input,
)
from .optim import AdamWState, ScheduleConfig, adamw_step, clip_grad_norm, lr_at
from .rng import RngStream
from .synthesis import sample_pan_weights, synthesize_ms, synthesize_pan
from .tensor_core import clamp01

log = logging.getLogger(__name__)

DATASET_FORMAT = "panpretrain-dataset"
EVAL_PROFILES = ("eval_4x", "eval_8x")


@dataclass
class SamplePair:
    lrms: np.ndarray
    pan: np.ndarray
    gt: np.ndarray
    sample_id: str = ""
    seed: int = 0
    source: str = ""
    spec: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.pan.shape[-1] / self.lrms.shape[-1]


# ---------------------------------------------------------------------------
# dataset construction


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    _, h, w = img.shape
    if h < size or w < size:
        raise ImageTooSmall(f"{h}x{w} image is smaller than the {size}x{size} crop")
    top = (h - size) // 2
    left = (w - size) // 2
    return np.ascontiguousarray(img[:, top : top + size, left : left + size])


def make_sample(
    img: np.ndarray, profile: str, cfg: RunConfig, stream: RngStream, sensor: RngStream | None = None
) -> SamplePair:
    """Run the full synthesis/augmentation/degradation recipe on one cropped image.

    ``sensor`` pins the spectral draws (band mixing and PAN weights) to one
    stream shared by every sample, as for images from a single instrument.
    Without it each sample gets its own spectral response.
    """
    c_max = cfg.data.c_max
    img = img[:c_max] if img.shape[0] > c_max else img
    spectral = sensor if sensor is not None else stream
    ms, mix = synthesize_ms(img, c_max, spectral.derive(R.LABEL_MIX))
    weights = sample_pan_weights(c_max, spectral.derive(R.LABEL_PAN))
    pan = synthesize_pan(ms, weights)

    if profile in EVAL_PROFILES or profile == "clean":
        aug = AugmentSpec()
    else:
        aug = sample_augment_spec(stream.derive(R.LABEL_AUGMENT), c_max, cfg.augment.probs)

    if aug.shuffle is not None:
        ms, _ = channel_shuffle(ms, ms, aug.shuffle)
    if aug.jitter_ms is not None:
        ms = color_jitter(ms, aug.jitter_ms)
    if aug.pan_highpass is not None:
        pan = highpass_pan(pan, aug.pan_highpass)
    if aug.jitter_pan is not None:
        pan = color_jitter(pan, aug.jitter_pan)
    ms, pan, _ = spatial_augment(ms, pan, ms, aug)
    gt = ms.copy()

    probs = {"blur_prob": cfg.degrade.blur_prob, "noise_prob": cfg.degrade.noise_prob}
    spec_ms = sample_degrade_spec(stream.derive(R.LABEL_DEGRADE_MS), profile, pan=False, **probs)
    spec_pan = sample_degrade_spec(stream.derive(R.LABEL_DEGRADE_PAN), profile, pan=True, **probs)
    lrms, pan_deg = degrade_pair(ms, pan, spec_ms, spec_pan)
    lrms = channel_mask(lrms, aug.mask)

    spec = {
        "profile": profile,
        "mix_matrix": mix.tolist(),
        "pan_weights": weights.to_dict(),
        "augment": aug.to_dict(),
        "degrade_ms": spec_ms.to_dict(),
        "degrade_pan": spec_pan.to_dict(),
    }
    return SamplePair(lrms, pan_deg, gt, seed=stream.state, spec=spec)


def _load_corpus(corpus_dir, crop: int) -> tuple[list[tuple[str, np.ndarray]], list[dict]]:
    images, skipped = [], []
    for path in list_corpus(corpus_dir):
        try:
            images.append((path.name, center_crop(read_corpus_image(path), crop)))
        except (FormatError, ImageTooSmall, OSError) as exc:
            log.warning("skipping corpus image %s: %s", path.name, exc)
            skipped.append({"source": path.name, "reason": str(exc)})
    return images, skipped


def build_dataset(corpus_dir, out_dir, count: int, profile: str, cfg: RunConfig, seed: int) -> Path:
    """Write ``count`` samples plus ``manifest.json`` under ``out_dir``.

    Source images are used round-robin in sorted filename order.
    """
    out = Path(out_dir)
    images, skipped = _load_corpus(corpus_dir, cfg.data.crop)
    if not images and count > 0:
        raise EmptyCorpus(f"no readable images in {corpus_dir}")
    root = RngStream(seed)
    # evaluation data stands in for one unseen instrument
    sensor = root.derive(R.LABEL_SENSOR) if profile in EVAL_PROFILES else None
    entries = []
    for i in range(count):
        name, img = images[i % len(images)]
        sample = make_sample(img, profile, cfg, root.derive(R.LABEL_SAMPLE, i), sensor)
        sid = f"{i:06d}"
        write_pft(out / "samples" / f"{sid}.pft", sample.lrms, sample.pan, sample.gt)
        spec = {"id": sid, "seed": sample.seed, "source": name, **sample.spec}
        atomic_write_text(out / "samples" / f"{sid}.spec.json", canonical_json(spec))
        entries.append({"id": sid, "seed": sample.seed, "source": name})
    manifest = {
        "format": DATASET_FORMAT,
        "version": 1,
        "seed": seed,
        "config_hash": cfg.hash(),
        "profile": profile,
        "c_max": cfg.data.c_max,
        "crop": cfg.data.crop,
        "count": count,
        "samples": entries,
        "skipped": skipped,
    }
    atomic_write_text(out / "manifest.json", canonical_json(manifest))
    log.info("wrote %d samples to %s", count, out)
    return out


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    manifest = json.loads(path.read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{path} is not a dataset manifest")
    return manifest


def load_dataset(dataset_dir) -> list[SamplePair]:
    root = Path(dataset_dir)
    manifest = load_manifest(root)
    samples = []
    for entry in manifest["samples"]:
        sid = entry["id"]
        tensors = read_pft(root / "samples" / f"{sid}.pft")
        if len(tensors) != 3:
            raise FormatError(f"sample {sid} holds {len(tensors)} tensors, expected 3")
        spec = json.loads((root / "samples" / f"{sid}.spec.json").read_text())
        samples.append(SamplePair(*tensors, sample_id=sid, seed=entry["seed"], source=entry["source"], spec=spec))
    return samples


# ---------------------------------------------------------------------------
# Wald protocol


def wald_lowpass(img: np.ndarray, ratio: int) -> np.ndarray:
    """Gaussian MTF blur (sigma = ratio / 2, 7x7) then area downsampling by ``ratio``."""
    blurred = apply_blur(img, BlurSpec("gaussian", k=7, sigma=ratio / 2.0))
    return downsample(blurred, 1.0 / ratio, "area")


def wald_degrade(ms: np.ndarray, pan: np.ndarray, ratio: int) -> SamplePair:
    """Reduced-resolution pair with the original MS as reference.

    A PAN already on the MS grid is kept as is; a PAN ``ratio`` times larger
    (a native sensor pair) is brought down to the MS grid first.  The result
    always has ``pan`` on the GT grid, and ``spec["lrpan"]`` holds PAN reduced
    once more to the LRMS grid for spatial-distortion scoring.
    """
    if pan.shape[-2:] != ms.shape[-2:]:
        if pan.shape[-2] != ms.shape[-2] * ratio or pan.shape[-1] != ms.shape[-1] * ratio:
            raise ShapeError(f"PAN {pan.shape[-2:]} is neither the MS grid nor {ratio}x it")
        pan = wald_lowpass(pan, ratio)
    lrms = wald_lowpass(ms, ratio)
    return SamplePair(lrms, pan.copy(), ms.copy(), spec={"lrpan": wald_lowpass(pan, ratio)})


# ---------------------------------------------------------------------------
# prepared tensors


@dataclass
class Prepared:
    """Upsampled network input, PAN and target stacked as a batch."""

    up: np.ndarray
    pan: np.ndarray
    gt: np.ndarray
    ids: list[str]

    def __len__(self) -> int:
        return len(self.ids)

    def take(self, idx) -> "Prepared":
        idx = list(idx)
        return Prepared(self.up[idx], self.pan[idx], self.gt[idx], [self.ids[i] for i in idx])


def _pad_bands(x: np.ndarray, c_max: int) -> np.ndarray:
    if x.shape[0] >= c_max:
        return x
    return np.pad(x, ((0, c_max - x.shape[0]), (0, 0), (0, 0)))


def prepare(samples: list[SamplePair], c_max: int) -> Prepared:
    if not samples:
        raise ValueError("nothing to prepare")
    shapes = {s.pan.shape for s in samples}
    if len(shapes) != 1:
        raise ShapeError(f"cannot batch samples with PAN shapes {sorted(shapes)}")
    h, w = samples[0].pan.shape[-2:]
    up = np.stack([upsample_input(s.lrms, h, w, c_max) for s in samples])
    pan = np.stack([s.pan for s in samples])
    gt = np.stack([_pad_bands(s.gt, c_max) for s in samples])
    return Prepared(up, pan, gt, [s.sample_id for s in samples])


def predict_prepared(params: ModelParams, data: Prepared, chunk: int = 32) -> np.ndarray:
    outs = []
    for start in range(0, len(data), chunk):
        pred, _ = forward_prepared(params, data.up[start : start + chunk], data.pan[start : start + chunk])
        outs.append(clamp01(pred))
    return np.concatenate(outs)


def mean_psnr(params: ModelParams, data: Prepared) -> float:
    pred = predict_prepared(params, data)
    return float(np.mean([psnr(p, g) for p, g in zip(pred, data.gt)]))


def train_step(params, opt, batch: Prepared, lr: float, mode, grad_clip=None) -> float:
    pred, tape = forward_prepared(params, batch.up, batch.pan)
    loss, dpred = l1_loss(pred, batch.gt)
    grads = backward(params, tape, dpred)
    if grad_clip:
        clip_grad_norm(grads, grad_clip)
    adamw_step(opt, params, grads, lr, mode)
    return loss


# ---------------------------------------------------------------------------
# pretraining


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    history: list[dict]
    best_val_psnr: float


def split_train_val(n: int, val_fraction: float) -> tuple[list[int], list[int]]:
    """Hold out ``round(n * val_fraction)`` evenly spaced samples (at least one).

    Spreading the held-out indices keeps the split representative when the
    corpus cycles through source images in order.  A single-sample dataset
    validates on its only sample.
    """
    if n == 1:
        return [0], [0]
    n_val = min(n - 1, max(1, int(round(n * val_fraction))))
    step = n / n_val
    val = [int(step * (k + 1)) - 1 for k in range(n_val)]
    held = set(val)
    return [i for i in range(n) if i not in held], val


def history_csv(history: list[dict], meta: dict | None = None) -> str:
    out = _io.StringIO()
    if meta:
        out.write("# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["epoch", "loss", "lr", "val_psnr"])
    for row in history:
        writer.writerow([row["epoch"], repr(row["loss"]), repr(row["lr"]), repr(row["val_psnr"])])
    return out.getvalue()


def pretrain(samples: list[SamplePair], cfg: RunConfig, seed: int, out_dir=None) -> TrainResult:
    """AdamW on the L1 loss with a linear-warmup cosine schedule.

    The checkpoint with the best held-out PSNR is kept alongside the final one.
    When ``out_dir`` is given, ``best.pfck``, ``final.pfck`` and ``log.csv`` are
    written there.
    """
    tc = cfg.train
    c_max = cfg.data.c_max
    data = prepare(samples, c_max)
    train_idx, val_idx = split_train_val(len(data), tc.val_fraction)
    train, val = data.take(train_idx), data.take(val_idx)

    root = RngStream(seed)
    params = init_params(c_max, root)
    opt = AdamWState.zeros_like(params, weight_decay=tc.weight_decay)
    steps_per_epoch = math.ceil(len(train) / tc.batch_size)
    sched = ScheduleConfig(tc.peak_lr, tc.warmup_epochs, tc.epochs, steps_per_epoch)
    chash = cfg.hash()

    history = []
    best_psnr, best = -math.inf, None
    step = 0
    for epoch in range(tc.epochs):
        order = root.derive(R.LABEL_SHUFFLE, epoch).permutation(len(train))
        losses, weights = [], []
        epoch_lr = lr_at(step, sched)
        for b in range(steps_per_epoch):
            idx = order[b * tc.batch_size : (b + 1) * tc.batch_size]
            loss = train_step(params, opt, train.take(idx), lr_at(step, sched), TuneMode.FULL, tc.grad_clip)
            losses.append(loss)
            weights.append(len(idx))
            step += 1
        val_psnr = mean_psnr(params, val)
        epoch_loss = float(np.average(losses, weights=weights))
        history.append({"epoch": epoch + 1, "loss": epoch_loss, "lr": epoch_lr, "val_psnr": val_psnr})
        log.info("epoch %d loss %.5f val_psnr %.3f", epoch + 1, epoch_loss, val_psnr)
        if val_psnr > best_psnr:
            best_psnr = val_psnr
            best = Checkpoint(params.copy(), seed, chash, epoch + 1)

    final = Checkpoint(params.copy(), seed, chash, tc.epochs, opt.copy())
    result = TrainResult(best, final, history, best_psnr)
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(out / "best.pfck", best)
        save_checkpoint(out / "final.pfck", final)
        atomic_write_text(out / "log.csv", history_csv(history, {"seed": seed, "config_hash": chash}))
    return result


# ---------------------------------------------------------------------------
# evaluation


def evaluate(
    params: ModelParams,
    samples: list[SamplePair],
    resolution: str = "reduced",
    q_window: int = 32,
) -> MetricReport:
    """Zero-shot evaluation: forward, clamp, score.

    ``reduced`` compares the prediction with GT.  ``full`` treats (LRMS, PAN)
    as a native pair and scores the fused image without a reference, with
    the low-resolution PAN obtained by the Wald low-pass at the pair's ratio.
    """
    if resolution not in ("reduced", "full"):
        raise ValueError(f"unknown resolution {resolution!r}")
    report = MetricReport(resolution)
    if not samples:
        return report
    groups: dict[tuple, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.pan.shape, []).append(i)
    preds: dict[int, np.ndarray] = {}
    for idx in groups.values():
        data = prepare([samples[i] for i in idx], params.c_max)
        for i, p in zip(idx, predict_prepared(params, data)):
            preds[i] = p
    for i, s in enumerate(samples):
        c = s.gt.shape[0]
        pred = preds[i][:c]
        ratio = int(round(s.ratio))
        if resolution == "reduced":
            values = reduced_metrics(pred, s.gt, ratio)
        else:
            lrpan = wald_lowpass(s.pan, ratio)
            values = full_metrics(pred, s.lrms, s.pan, lrpan, q_window)
        report.add(s.sample_id or f"{i:06d}", values)
    return report


def zero_shot_eval(ckpt: Checkpoint, samples: list[SamplePair], resolution: str = "reduced", q_window: int = 32):
    return evaluate(ckpt.params, samples, resolution, q_window)


# ---------------------------------------------------------------------------
# one-shot tuning


@dataclass
class TuneResult:
    params: ModelParams
    curve: list[float]
    losses: list[float]
    best_epoch: int
    best_val_psnr: float
    grad_sample_ids: list[str]


def one_shot_tune(
    params: ModelParams,
    tune_pair: SamplePair,
    mode: TuneMode | str,
    cfg: RunConfig,
    val_samples: list[SamplePair] | Prepared,
) -> TuneResult:
    """Fine-tune on a single pair, one step per epoch, keep the best-PSNR epoch.

    Gradients only ever see ``tune_pair``; ``grad_sample_ids`` records every
    sample id that entered a backward pass.  The input params are not modified.
    """
    fc = cfg.finetune
    mode = TuneMode(mode)
    c_max = params.c_max
    work = params.copy()
    opt = AdamWState.zeros_like(work, weight_decay=cfg.train.weight_decay)
    sched = ScheduleConfig(fc.lr, fc.warmup_epochs, fc.epochs, 1)
    pair = prepare([tune_pair], c_max)
    val = val_samples if isinstance(val_samples, Prepared) else prepare(val_samples, c_max)

    curve, losses, used = [], [], []
    best_psnr, best_params, best_epoch = -math.inf, work.copy(), 0
    for epoch in range(fc.epochs):
        losses.append(train_step(work, opt, pair, lr_at(epoch, sched), mode))
        used.extend(pair.ids)
        val_psnr = mean_psnr(work, val)
        curve.append(val_psnr)
        if val_psnr > best_psnr:
            best_psnr, best_params, best_epoch = val_psnr, work.copy(), epoch + 1
    return TuneResult(best_params, curve, losses, best_epoch, best_psnr, used)


# ---------------------------------------------------------------------------
# benchmark

CONDITIONS = ("scratch_one_shot", "zero_shot", "freeze_tune", "full_tune")
TUNED_CONDITIONS = ("scratch_one_shot", "freeze_tune", "full_tune")


def _score(params: ModelParams, val: list[SamplePair], val_prep: Prepared, q_window: int) -> dict[str, float]:
    pred = predict_prepared(params, val_prep)
    rows = []
    for p, s in zip(pred, val):
        c = s.gt.shape[0]
        ratio = int(round(s.ratio))
        lrpan = wald_lowpass(s.pan, ratio)
        rows.append({**reduced_metrics(p[:c], s.gt, ratio), **full_metrics(p[:c], s.lrms, s.pan, lrpan, q_window)})
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def run_benchmark(pretrained: ModelParams, eval_samples: list[SamplePair], cfg: RunConfig, seed: int) -> dict:
    """Zero-shot, freeze-tune, full-tune and scratch one-shot on an eval dataset.

    The first ``bench.n_tune`` samples are the tuning images, the rest form
    the shared validation set.  Each tuning image gives one independent
    single-pair run per tuned condition; metrics are validation means
    averaged over the runs, curves are per-epoch validation PSNR averaged
    over the runs.
    """
    n_tune = cfg.bench.n_tune
    if len(eval_samples) <= n_tune:
        raise ValueError(f"need more than {n_tune} evaluation samples, got {len(eval_samples)}")
    tune_set, val = eval_samples[:n_tune], eval_samples[n_tune:]
    val_prep = prepare(val, pretrained.c_max)
    qw = cfg.eval.q_window
    root = RngStream(seed)

    zero = _score(pretrained, val, val_prep, qw)
    per_cond = {c: [] for c in TUNED_CONDITIONS}
    curves = {c: [] for c in TUNED_CONDITIONS}
    runs = []
    for r, pair in enumerate(tune_set):
        scratch = init_params(pretrained.c_max, root.derive(R.LABEL_SCRATCH, r))
        starts = {
            "scratch_one_shot": (scratch, TuneMode.FULL),
            "freeze_tune": (pretrained, TuneMode.FREEZE),
            "full_tune": (pretrained, TuneMode.FULL),
        }
        run = {"tune_id": pair.sample_id}
        for cond, (start, mode) in starts.items():
            res = one_shot_tune(start, pair, mode, cfg, val_prep)
            if set(res.grad_sample_ids) != {pair.sample_id}:
                raise RuntimeError("one-shot tuning touched a sample other than its tuning pair")
            per_cond[cond].append(_score(res.params, val, val_prep, qw))
            curves[cond].append(res.curve)
            run[cond] = {"best_epoch": res.best_epoch, "best_val_psnr": res.best_val_psnr}
        runs.append(run)
        log.info("benchmark run %d/%d done", r + 1, n_tune)

    conditions = {"zero_shot": zero}
    for cond in TUNED_CONDITIONS:
        conditions[cond] = {k: float(np.mean([m[k] for m in per_cond[cond]])) for k in zero}
    mean_curves = {c: [float(v) for v in np.mean(curves[c], axis=0)] for c in TUNED_CONDITIONS}
    return {
        "seed": seed,
        "config_hash": cfg.hash(),
        "n_tune": n_tune,
        "n_val": len(val),
        "val_ids": [s.sample_id for s in val],
        "conditions": {c: conditions[c] for c in CONDITIONS},
        "curves": mean_curves,
        "zero_shot_val_psnr": zero["PSNR"],
        "runs": runs,
    }
