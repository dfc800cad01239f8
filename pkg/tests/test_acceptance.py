"""Acceptance gate: one PASS/FAIL line per criterion (see the terminal summary)."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from corpora import CORPUS_A, CORPUS_B, write_corpus
from gradcheck import gradient_errors
from oracles import (
    cc_direct,
    conv_direct,
    ergas_direct,
    mae_direct,
    median_direct,
    psnr_direct,
    q_direct,
    resample_direct,
    sam_direct,
    ssim_direct,
)
from panpretrain.cli import main
from panpretrain.config import RunConfig
from panpretrain.degradation import NoiseSpec, add_noise
from panpretrain.metrics import cc, ergas, mae, psnr, q_index, qnr, sam, ssim
from panpretrain.model import TuneMode, init_params, summary, trainable_count
from panpretrain.optim import ScheduleConfig, lr_at
from panpretrain.pipeline import build_dataset, load_dataset, pretrain, run_benchmark
from panpretrain.rng import RngStream
from panpretrain.synthesis import sample_mix_matrix, sample_pan_weights, synthesize_ms, synthesize_pan
from panpretrain.tensor_core import INTERP_METHODS, convolve2d, median_filter, resample

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEEDS = (1, 2, 3, 4, 5)
N_PRETRAIN = 200
N_EVAL = 30


def rel_err(a, b) -> float:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-12))


def test_criterion_01_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst = {}

    def track(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        c, h, w = int(rng.integers(1, 4)), int(rng.integers(3, 12)), int(rng.integers(3, 12))
        img = rng.random((c, h, w))
        k = int(rng.choice([1, 3, 5, 7]))
        kernel = rng.standard_normal((k, k))
        track("convolution", rel_err(convolve2d(img, kernel), conv_direct(img, kernel)))
        method = INTERP_METHODS[seed % len(INTERP_METHODS)]
        oh, ow = int(rng.integers(1, 20)), int(rng.integers(1, 20))
        track("resample", rel_err(resample(img, oh, ow, method), np.clip(resample_direct(img, oh, ow, method), 0, 1)))
        mk = int(rng.choice([1, 3, 5]))
        track("median", rel_err(median_filter(img, mk), median_direct(img, mk)))

        gt = rng.uniform(0.05, 1.0, (c, h + 4, w + 4))
        pred = np.clip(gt + rng.normal(0, 0.1, gt.shape), 0, 1)
        track("PSNR", rel_err(psnr(pred, gt), psnr_direct(pred, gt)))
        track("SSIM", rel_err(ssim(pred, gt), ssim_direct(pred, gt)))
        track("SAM", rel_err(sam(pred, gt), sam_direct(pred, gt)))
        track("ERGAS", rel_err(ergas(pred, gt, 4), ergas_direct(pred, gt, 4)))
        track("CC", rel_err(cc(pred, gt), cc_direct(pred, gt)))
        track("MAE", rel_err(mae(pred, gt), mae_direct(pred, gt)))
        qw = int(rng.integers(2, 9))
        track("Q", rel_err(q_index(pred[0], gt[0], qw), q_direct(pred[0], gt[0], qw)))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-5 and elapsed < 60
    detail = f"100 instances each, worst rel err {max(worst.values()):.1e} ({max(worst, key=worst.get)}), {elapsed:.1f}s"
    verdict(1, "oracle equivalence", ok, detail)


def test_criterion_02_gradients(verdict):
    t0 = time.perf_counter()
    errs = {m.value: gradient_errors(m, seed=0) for m in TuneMode}
    elapsed = time.perf_counter() - t0
    worst = max(e for per_mode in errs.values() for e in per_mode.values())
    ok = worst < 1e-3 and set(errs["full"]) == set(init_params(4, RngStream(0)).arrays) and elapsed < 60
    verdict(2, "gradient check, full and freeze", ok, f"worst rel err {worst:.1e}, {elapsed:.1f}s")


def test_criterion_03_normalization(verdict):
    root = RngStream(3)
    img = np.random.default_rng(3).random((3, 4, 4)).astype(np.float32)
    worst_row, worst_pan, convex = 0.0, 0.0, True
    for i in range(10_000):
        s = root.derive(i)
        c = 1 + i % 7
        mix = sample_mix_matrix(c, 8, s.derive(1))
        worst_row = max(worst_row, float(np.max(np.abs(mix.sum(axis=1) - 1.0))))
        pw = sample_pan_weights(8, s.derive(2))
        worst_pan = max(worst_pan, abs(float(np.sum(pw.weights)) - 1.0))
        src = img[: min(c, 3)]
        ms, _ = synthesize_ms(src, 8, s.derive(3))
        pan = synthesize_pan(ms, pw)
        convex &= bool(ms.min() >= src.min() - 1e-6 and ms.max() <= src.max() + 1e-6)
        convex &= bool(pan.min() >= ms.min() - 1e-6 and pan.max() <= ms.max() + 1e-6)
    ok = worst_row <= 1e-6 and worst_pan <= 1e-6 and convex
    verdict(3, "normalization invariants", ok, f"10^4 draws, row err {worst_row:.1e}, PAN err {worst_pan:.1e}")


def test_criterion_04_noise_statistics(verdict):
    gray = np.full((1, 1000, 1000), 0.5, np.float32)
    checks = {}
    for sd in (0.02, 0.05):
        out = add_noise(gray, NoiseSpec("gaussian", sd), RngStream(41)).astype(np.float64)
        checks[f"gaussian sd {sd}"] = abs(out.std() / sd - 1)
    for rate in (0.002, 0.01):
        out = add_noise(gray, NoiseSpec("salt_pepper", rate), RngStream(42))
        checks[f"s&p rate {rate}"] = abs(float(np.mean(out != 0.5)) / rate - 1)
    out = add_noise(gray, NoiseSpec("speckle", 0.1), RngStream(43)).astype(np.float64)
    checks["speckle variance"] = abs(out.var() / (0.5 * 0.1) ** 2 - 1)
    means = {}
    for spec in (NoiseSpec("poisson", 10.0), NoiseSpec("poisson", 50.0), NoiseSpec("speckle", 0.2)):
        out = add_noise(gray, spec, RngStream(44)).astype(np.float64)
        means[f"{spec.kind} {spec.level}"] = abs(out.mean() / 0.5 - 1)
    ok = (
        checks["gaussian sd 0.02"] <= 0.05
        and checks["gaussian sd 0.05"] <= 0.05
        and all(v <= 0.10 for k, v in checks.items() if not k.startswith("gaussian"))
        and all(v <= 0.01 for v in means.values())
    )
    worst = max({**checks, **means}.items(), key=lambda kv: kv[1])
    verdict(4, "noise statistics over 10^6 pixels", ok, f"largest relative deviation {worst[1]:.3f} ({worst[0]})")


def test_criterion_05_determinism(verdict, tmp_path_factory):
    root = tmp_path_factory.mktemp("determinism")
    train = write_corpus(root / "A", CORPUS_A, 32, 64, 6)
    evald = write_corpus(root / "B", CORPUS_B, 32, 64, 8)
    cfg = root / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "data": {"crop": 32},
                "train": {"epochs": 2, "warmup_epochs": 1},
                "finetune": {"epochs": 4},
                "bench": {"n_tune": 3},
            }
        )
    )
    trees = []
    for run in ("r1", "r2"):
        out = root / run
        flags = ["--seed", "17", "--config", str(cfg)]
        codes = [
            main(["synth", str(train), "--count", "24", "--out", str(out / "train"), *flags]),
            main(["synth", str(evald), "--count", "8", "--profile", "eval_4x", "--out", str(out / "eval"), *flags]),
            main(["pretrain", str(out / "train"), "--out", str(out / "model"), *flags]),
            main(["bench", str(out / "model" / "best.pfck"), str(out / "eval"), "--out", str(out / "bench"), *flags]),
        ]
        assert codes == [0, 0, 0, 0]
        trees.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    ok = trees[0] == trees[1]
    verdict(5, "determinism of synth + pretrain + bench", ok, f"{len(trees[0])} files byte-identical" if ok else "")


@pytest.fixture(scope="module")
def desk_benchmark(tmp_path_factory):
    """Five global seeds of the desk-scale benchmark; returns per-seed results and wall time."""
    root = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    corpus_a = write_corpus(root / "A", CORPUS_A, 64, 32, 60)
    corpus_b = write_corpus(root / "B", CORPUS_B, 32, 32, 30)
    cfg = RunConfig.load(CONFIGS / "desk.json")
    eval_cfg = RunConfig.load(CONFIGS / "desk_eval.json")
    results = []
    for seed in SEEDS:
        train = load_dataset(build_dataset(corpus_a, root / f"train_{seed}", N_PRETRAIN, "pretrain", cfg, seed))
        evald = load_dataset(build_dataset(corpus_b, root / f"eval_{seed}", N_EVAL, "eval_4x", eval_cfg, seed + 1000))
        model = pretrain(train, cfg, seed)
        results.append(run_benchmark(model.best.params, evald, cfg, seed))
    elapsed = time.perf_counter() - t0
    for seed, res in zip(SEEDS, results):
        row = "  ".join(f"{k} {v['PSNR']:.3f}" for k, v in res["conditions"].items())
        print(f"seed {seed}: {row}")
    return results, elapsed


def _mean_psnr(results, condition):
    return float(np.mean([r["conditions"][condition]["PSNR"] for r in results]))


def test_criterion_06_trend(verdict, desk_benchmark):
    results, elapsed = desk_benchmark
    full, freeze = _mean_psnr(results, "full_tune"), _mean_psnr(results, "freeze_tune")
    zero, scratch = _mean_psnr(results, "zero_shot"), _mean_psnr(results, "scratch_one_shot")
    ok = full > freeze >= zero > scratch and full - scratch >= 0.5 and elapsed <= 30 * 60
    detail = (
        f"full {full:.3f} > freeze {freeze:.3f} >= zero {zero:.3f} > scratch {scratch:.3f} dB, "
        f"gap {full - scratch:.2f} dB, {elapsed / 60:.1f} min"
    )
    verdict(6, "trend reproduction over 5 seeds", ok, detail)


def test_criterion_07_convergence(verdict, desk_benchmark):
    results, _ = desk_benchmark
    full = np.mean([r["curves"]["full_tune"] for r in results], axis=0)
    scratch = np.mean([r["curves"]["scratch_one_shot"] for r in results], axis=0)
    reached = np.flatnonzero(full >= scratch[-1])
    epoch = int(reached[0]) + 1 if reached.size else None
    ok = epoch is not None and epoch <= len(full) // 2
    verdict(7, "convergence speed", ok, f"full-tune reaches scratch final {scratch[-1]:.3f} dB at epoch {epoch} of {len(full)}")


def test_criterion_08_freeze_accounting(verdict):
    p = init_params(8, RngStream(0))
    n = trainable_count(p, TuneMode.FREEZE)
    ok = n == 2312 and "2.31K" in summary(p, TuneMode.FREEZE)
    verdict(8, "freeze-mode parameter count", ok, f"{n} tunable at c_max 8")


def test_criterion_09_metric_identities(verdict):
    x = np.random.default_rng(9).random((4, 16, 16))
    values = {
        "PSNR": (psnr(x, x), 100.0),
        "SSIM": (ssim(x, x), 1.0),
        "SAM": (sam(x, x), 0.0),
        "ERGAS": (ergas(x, x), 0.0),
        "CC": (cc(x, x), 1.0),
        "MAE": (mae(x, x), 0.0),
        "QNR": (qnr(0.0, 0.0), 1.0),
    }
    bad = [k for k, (got, want) in values.items() if got != want]
    verdict(9, "metric ideal values", not bad, "exact" if not bad else f"mismatch: {bad}")


def test_criterion_10_schedule(verdict):
    errs = []
    for peak, warm, epochs, spe in ((1e-3, 10, 100, 17), (1e-4, 0, 40, 1), (1e-3, 2, 15, 16)):
        cfg = ScheduleConfig(peak, warm, epochs, spe)
        w, t = warm * spe, epochs * spe
        if w:
            errs.append(abs(lr_at(w - 1, cfg) - peak))
        if (t - w) % 2 == 0:
            errs.append(abs(lr_at(w + (t - w) // 2, cfg) - peak / 2))
        errs.append(abs(lr_at(t, cfg)))
    ok = max(errs) <= 1e-9
    verdict(10, "schedule closed forms", ok, f"max abs err {max(errs):.1e} over {len(errs)} points")
