"""Acceptance criteria 1-10, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines are also
collected into an "acceptance criteria" section of the terminal summary.
"""

import time
from pathlib import Path

import numpy as np
import pytest
import torch
import yaml

from amcvad import cli
from amcvad.config import load_config
from amcvad.data import load_dataset, read_labels
from amcvad.evaluation import detect_events, join_labels, pr_ap, roc_auc
from amcvad.losses import LossWeights, appearance_loss, flow_loss
from amcvad.model import GeneratorConfig, build_discriminator, build_generator, to_nchw
from amcvad.scoring import (
    fit_score_weights,
    max_patch,
    pair_partial_scores,
    partial_scores_at,
    score_dataset,
)
from amcvad.synthetic import SynthSpec, generate_synthetic, generate_videos, write_split
from amcvad.training import TrainConfig, train

from conftest import ACCEPTANCE_LINES, tiny_spec
from oracles import (
    LOSS_NAMES,
    ap_sweep,
    auc_pairs,
    autograd,
    detect_oracle,
    exhaustive_window_means,
    fd_grad,
    loss_cases,
    relative_error,
)

ACCEPTANCE_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance.yaml"

pytestmark = pytest.mark.acceptance


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {n} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_1_shapes():
    gen, disc = build_generator().eval(), build_discriminator().eval()
    x = torch.rand(1, 3, 128, 192)
    start = time.perf_counter()
    with torch.no_grad():
        frame, flow = gen(x)
        d = disc(x, flow)
    elapsed = time.perf_counter() - start
    ok = (
        tuple(frame.shape) == (1, 3, 128, 192)
        and tuple(flow.shape) == (1, 3, 128, 192)
        and tuple(d.shape) == (1, 512, 16, 24)
        and bool((d > 0).all() and (d < 1).all())
        and elapsed < 1.0
    )
    report(1, "shape contracts", ok,
           f"frame {tuple(frame.shape[1:])}, flow {tuple(flow.shape[1:])}, D {tuple(d.shape[1:])}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_gradient_checks():
    start = time.perf_counter()
    worst = {}
    for name in LOSS_NAMES:
        errors = []
        for trial in range(20):
            fn, x = loss_cases(1000 + trial)[name]
            errors.append(relative_error(autograd(fn, x), fd_grad(fn, x)))
        worst[name] = max(errors)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-3 and elapsed < 30
    report(2, "gradient checks", ok,
           f"worst relative error {max(worst.values()):.1e} over 6 losses x 20 trials, {elapsed:.1f} s")
    assert ok, worst


def test_criterion_3_patch_oracle():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst, loc_mismatch = 0.0, 0
    for _ in range(100):
        e_f, e_i = rng.random((128, 192)) ** 3, rng.random((128, 192))
        means = exhaustive_window_means(e_f)
        ref_loc = np.unravel_index(int(np.argmax(means)), means.shape)
        loc, s_f = max_patch(e_f)
        got_f, got_i = partial_scores_at(e_i, e_f, loc)
        ref_i = exhaustive_window_means(e_i)[ref_loc]
        loc_mismatch += loc != tuple(int(v) for v in ref_loc)
        worst = max(worst, abs(s_f - means[ref_loc]), abs(got_f - means[ref_loc]), abs(got_i - ref_i))
    elapsed = time.perf_counter() - start
    ok = loc_mismatch == 0 and worst <= 1e-6 and elapsed < 30
    report(3, "patch-score oracle", ok,
           f"{loc_mismatch} location mismatches, max abs diff {worst:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_4_metric_oracles():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 501))
        s = np.round(rng.random(n), int(rng.integers(1, 5)))
        y = rng.integers(0, 2, n)
        y[:2] = (0, 1)
        worst = max(worst, abs(roc_auc(s, y)[0] - auc_pairs(s, y)), abs(pr_ap(s, y)[0] - ap_sweep(s, y)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 10
    report(4, "metric oracles", ok, f"max diff {worst:.1e} over 50 instances, {elapsed:.2f} s")
    assert ok


def test_criterion_5_calibration_identity(tmp_path):
    train_ds, _ = generate_synthetic(tiny_spec(), tmp_path)
    cfg = GeneratorConfig(32, 48, (4, 4, 4, 4), (8, 16, 32))
    gen = train(train_ds, TrainConfig(epochs=1, batch_size=8), cfg).checkpoint.generator
    w = fit_score_weights(gen, train_ds)
    s_f, s_i, _ = pair_partial_scores(gen, train_ds)
    dev_f, dev_i = abs(np.mean(w.w_f * s_f) - 1), abs(np.mean(w.w_i * s_i) - 1)
    ok = dev_f <= 1e-6 and dev_i <= 1e-6
    report(5, "calibration identity", ok, f"|mean w_F S_F - 1| = {dev_f:.1e}, |mean w_I S_I - 1| = {dev_i:.1e}")
    assert ok


def test_criterion_6_persistence_detector():
    rng = np.random.default_rng(6)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(1, 201))
        v = np.round(rng.random(n), int(rng.integers(1, 4))).tolist()
        threshold, merge = float(rng.choice([0.0, 0.05, 0.2, 0.5])), int(rng.integers(0, 20))
        mismatches += detect_events(v, threshold, merge) != detect_oracle(v, threshold, merge)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    report(6, "persistence detector", ok, f"{mismatches}/100 mismatching index sets, {elapsed:.2f} s")
    assert ok


def test_criterion_7_memorization(tmp_path):
    # default loss weights (lambda_G = 0.25) and learning rates; dropout off for a pure capacity check
    spec = SynthSpec(n_train_videos=1, frames_per_video=4, height=64, width=96, sprite_size=10,
                     anomaly_rate=0.0, seed=3)
    write_split(tmp_path, generate_videos(spec, "train"))
    ds = load_dataset(tmp_path, role="train", frame_size=(64, 96))
    gen_cfg = GeneratorConfig(64, 96, (8, 8, 8, 8), (64, 128, 256), dropout=0.0)
    start = time.perf_counter()
    result = train(ds, TrainConfig(epochs=500, batch_size=3, seed=0), gen_cfg, LossWeights())
    elapsed = time.perf_counter() - start
    gen = result.checkpoint.generator.eval()
    frames, flows = (to_nchw(a) for a in ds.pair_arrays)
    with torch.no_grad():
        frame_hat, flow_hat = gen(frames)
        appe, flo = appearance_loss(frames, frame_hat).item(), flow_loss(flows, flow_hat).item()
    ok = appe < 1e-2 and flo < 1e-2 and elapsed < 300
    report(7, "memorization", ok, f"after 500 steps L_appe={appe:.4f}, L_flow={flo:.4f}, {elapsed:.0f} s")
    assert ok


@pytest.fixture(scope="module")
def end_to_end(tmp_path_factory):
    """Train on the recorded acceptance config and score the test split with every method."""
    cfg = load_config(ACCEPTANCE_CONFIG)
    root = tmp_path_factory.mktemp("e2e")
    start = time.perf_counter()
    train_ds, test_ds = generate_synthetic(cfg.synth, root)
    result = train(train_ds, cfg.train, cfg.model, cfg.loss)
    gen = result.checkpoint.generator
    weights = fit_score_weights(gen, train_ds)
    labels = read_labels(root / "test" / "labels.csv")
    aucs = {}
    for method in ("patch", "motion", "appearance", "ssim"):
        records = score_dataset(gen, weights, test_ds, method, cfg.score.lambda_s, cfg.score.normalization)
        aucs[method] = roc_auc(*join_labels(records, labels))[0]
    elapsed = time.perf_counter() - start
    return dict(aucs=aucs, elapsed=elapsed, n_train=len(train_ds.pairs()), epochs=cfg.train.epochs, seed=cfg.seed)


def test_criterion_8_end_to_end(end_to_end):
    auc, elapsed = end_to_end["aucs"]["patch"], end_to_end["elapsed"]
    ok = auc >= 0.85 and elapsed <= 15 * 60 and end_to_end["n_train"] >= 500 and end_to_end["epochs"] <= 10
    report(8, "end-to-end detection", ok,
           f"patch AUC {auc:.4f} after {end_to_end['epochs']} epochs on {end_to_end['n_train']} pairs, "
           f"seed {end_to_end['seed']}, {elapsed / 60:.1f} min")
    assert ok


def test_criterion_9_ablation_ordering(end_to_end):
    a = end_to_end["aucs"]
    best_single = max(a["motion"], a["appearance"])
    ok = a["patch"] >= best_single - 0.02
    report(9, "ablation ordering", ok,
           f"combined {a['patch']:.4f} vs motion {a['motion']:.4f}, appearance {a['appearance']:.4f} "
           f"(ssim {a['ssim']:.4f})")
    assert ok


def _pipeline(root: Path, config: Path) -> Path:
    data, ckpt, scores = root / "data", root / "model.pt", root / "scores.csv"
    for argv in (
        ["synth", "--config", config, "--out", data],
        ["train", "--config", config, "--data", data, "--out", ckpt],
        ["score", "--ckpt", ckpt, "--data", data, "--out", scores],
    ):
        assert cli.main([str(a) for a in argv]) == 0
    return scores


def test_criterion_10_determinism(tmp_path, capsys):
    config = tmp_path / "cfg.yaml"
    config.write_text(yaml.safe_dump({
        "seed": 11,
        "synth": {"n_train_videos": 2, "n_test_videos": 3, "frames_per_video": 40, "height": 32, "width": 48,
                  "sprite_size": 6, "n_sprites": 1},
        "model": {"height": 32, "width": 48, "inception_widths": [4, 4, 4, 4], "encoder_widths": [8, 16, 32]},
        "train": {"epochs": 2, "batch_size": 8, "threads": 1},
    }))
    a = np.genfromtxt(_pipeline(tmp_path / "a", config), delimiter=",", skip_header=1)[:, 1:]
    b = np.genfromtxt(_pipeline(tmp_path / "b", config), delimiter=",", skip_header=1)[:, 1:]
    capsys.readouterr()
    diff = float(np.nanmax(np.abs(a - b))) if a.shape == b.shape else float("inf")
    ok = a.shape == b.shape and np.array_equal(np.isnan(a), np.isnan(b)) and diff <= 1e-6
    report(10, "determinism", ok, f"{a.shape[0]} score rows, max entry difference {diff:.1e}")
    assert ok
