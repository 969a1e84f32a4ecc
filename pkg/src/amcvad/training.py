"""Alternating conditional-GAN optimisation of the discriminator and generator."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import torch

from .data import VideoDataset, batch_iterator
from .errors import ConfigError, DataError, NumericError
from .losses import LossWeights, discriminator_loss, generator_loss
from .model import (
    Checkpoint,
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    save_checkpoint,
    to_nchw,
)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "loss_D", "loss_G", "loss_adv", "loss_appe", "loss_flow")


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 16
    lr_g: float = 2e-4
    lr_d: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 saves only the final checkpoint
    reduction: str = "mean"
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"reduction must be 'mean' or 'sum', got {self.reduction!r}")


class StepLog(NamedTuple):
    loss_d: float
    loss_g: float
    loss_adv: float
    loss_appe: float
    loss_flow: float


def make_optimizers(gen: Generator, disc: Discriminator, cfg: TrainConfig):
    betas = (cfg.beta1, cfg.beta2)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_g, betas=betas, eps=cfg.eps)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_d, betas=betas, eps=cfg.eps)
    return opt_g, opt_d


def _check_finite(value: torch.Tensor, step: int, component: str) -> None:
    if not torch.isfinite(value):
        raise NumericError(f"step {step}: non-finite {component} loss ({value.item()})")


def discriminator_step(frames, flows, flow_hat, disc, opt_d, reduction="mean", step=0) -> torch.Tensor:
    """One update of D. ``flow_hat`` is detached so no gradient reaches G."""
    d_real = disc(frames, flows)
    d_fake = disc(frames, flow_hat.detach())
    loss = discriminator_loss(d_real, d_fake, reduction)
    _check_finite(loss, step, "discriminator")
    opt_d.zero_grad(set_to_none=True)
    loss.backward()
    opt_d.step()
    return loss.detach()


def generator_step(frames, flows, frame_hat, flow_hat, disc, opt_g, weights, reduction="mean", step=0):
    """One update of G with D's parameters frozen."""
    frozen = [p for p in disc.parameters() if p.requires_grad]
    for p in frozen:
        p.requires_grad_(False)
    try:
        d_fake = disc(frames, flow_hat)
        parts = generator_loss(frames, frame_hat, flows, flow_hat, d_fake, weights, reduction)
        for name, value in zip(parts._fields, parts):
            _check_finite(value, step, name)
        opt_g.zero_grad(set_to_none=True)
        parts.total.backward()
        opt_g.step()
    finally:
        for p in frozen:
            p.requires_grad_(True)
    return parts


def train_step(frames, flows, gen, disc, weights, opt_g, opt_d, reduction="mean", step=0) -> StepLog:
    """Discriminator update followed by a generator update on one batch.

    ``frames`` and ``flows`` are N x 3 x H x W tensors.
    """
    gen.train()
    disc.train()
    frame_hat, flow_hat = gen(frames)
    loss_d = discriminator_step(frames, flows, flow_hat, disc, opt_d, reduction, step)
    parts = generator_step(frames, flows, frame_hat, flow_hat, disc, opt_g, weights, reduction, step)
    return StepLog(loss_d.item(), *(v.item() for v in parts))


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    epoch_logs: list[dict] = field(default_factory=list)


def seed_everything(seed: int, threads: int = 1) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    if threads:
        torch.set_num_threads(threads)


def train(
    dataset: VideoDataset,
    config: TrainConfig | None = None,
    gen_config: GeneratorConfig | None = None,
    weights: LossWeights | None = None,
    out_path=None,
    log_path=None,
    disc_config: DiscriminatorConfig | None = None,
    pipeline_config: dict | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train a fresh generator/discriminator pair on a training dataset."""
    cfg = config or TrainConfig()
    weights = weights or LossWeights()
    if dataset.role != "train":
        raise DataError(f"training requires a dataset with role 'train', got {dataset.role!r}")
    if not dataset.pairs():
        raise DataError("training dataset has no (frame, flow) pairs")
    gen_config = gen_config or GeneratorConfig(*dataset.frame_size)
    if (gen_config.height, gen_config.width) != tuple(dataset.frame_size):
        raise ConfigError(
            f"generator input {gen_config.height}x{gen_config.width} does not match "
            f"dataset frames {dataset.frame_size[0]}x{dataset.frame_size[1]}"
        )

    seed_everything(cfg.seed, cfg.threads)
    gen = build_generator(gen_config)
    disc = build_discriminator(disc_config)
    opt_g, opt_d = make_optimizers(gen, disc, cfg)

    ckpt = Checkpoint(gen, disc, config=pipeline_config or {"train": asdict(cfg)})
    logs = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        totals = np.zeros(5)
        n_seen = 0
        for batch in batch_iterator(dataset, cfg.batch_size, shuffle=True, seed=cfg.seed, epoch=epoch):
            frames, flows = to_nchw(batch.frames), to_nchw(batch.flows)
            step_log = train_step(frames, flows, gen, disc, weights, opt_g, opt_d, cfg.reduction, step)
            totals += np.array(step_log) * len(batch.keys)
            n_seen += len(batch.keys)
            step += 1
        means = totals / n_seen
        row = dict(zip(LOG_COLUMNS, [epoch, *means.tolist()]))
        logs.append(row)
        log.info("epoch %d: %s", epoch, " ".join(f"{k}={v:.5f}" for k, v in row.items() if k != "epoch"))
        if on_epoch is not None:
            on_epoch(row)
        ckpt.epoch = epoch
        ckpt.optimizer_states = {"generator": opt_g.state_dict(), "discriminator": opt_d.state_dict()}
        if out_path is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0 and epoch < cfg.epochs:
            p = Path(out_path)
            save_checkpoint(p.with_name(f"{p.stem}_epoch{epoch:03d}{p.suffix}"), ckpt)
    if log_path is not None:
        write_epoch_log(log_path, logs)
    if out_path is not None:
        save_checkpoint(out_path, ckpt)
    gen.eval()
    return TrainResult(ckpt, logs)


def write_epoch_log(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([row["epoch"], *(repr(float(row[k])) for k in LOG_COLUMNS[1:])])


def read_epoch_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)
        ]
