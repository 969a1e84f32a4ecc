"""Generator (shared encoder, appearance decoder, motion U-Net decoder) and
the conditional patch discriminator, plus checkpoint I/O."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from .errors import CheckpointError, ConfigError, ShapeError

CHECKPOINT_FORMAT = "amcvad-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class GeneratorConfig:
    height: int = 128
    width: int = 192
    inception_widths: tuple[int, int, int, int] = (16, 16, 16, 16)  # 1x1, 3x3, 5x5, 7x7 branches
    encoder_widths: tuple[int, ...] = (128, 256, 512)  # one stride-2 block each
    leaky_slope: float = 0.2
    dropout: float = 0.3

    def __post_init__(self):
        self.inception_widths = tuple(int(w) for w in self.inception_widths)
        self.encoder_widths = tuple(int(w) for w in self.encoder_widths)
        if len(self.inception_widths) != 4 or min(self.inception_widths) < 1:
            raise ConfigError(f"inception_widths needs 4 positive entries, got {self.inception_widths}")
        if not self.encoder_widths or min(self.encoder_widths) < 1:
            raise ConfigError(f"encoder_widths must be non-empty and positive, got {self.encoder_widths}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        factor = 2 ** len(self.encoder_widths)
        if self.height % factor or self.width % factor:
            raise ConfigError(
                f"input {self.height}x{self.width} is not divisible by 2^{len(self.encoder_widths)}"
            )

    @property
    def bottleneck_size(self) -> tuple[int, int]:
        factor = 2 ** len(self.encoder_widths)
        return self.height // factor, self.width // factor


@dataclass
class DiscriminatorConfig:
    widths: tuple[int, ...] = (64, 128, 256)  # stride-2 blocks
    out_channels: int = 512
    leaky_slope: float = 0.2

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Convolutions ~ N(0, std) with zero bias; BatchNorm scales ~ N(1, std)."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


def conv_down(c_in, c_out):
    return nn.Conv2d(c_in, c_out, kernel_size=4, stride=2, padding=1)


def conv_up(c_in, c_out):
    return nn.ConvTranspose2d(c_in, c_out, kernel_size=4, stride=2, padding=1)


def conv3(c_in, c_out):
    return nn.Conv2d(c_in, c_out, kernel_size=3, padding=1)


class Inception(nn.Module):
    """Four parallel branches with 1x1, 3x3, 5x5 and 7x7 receptive fields.

    Filters larger than 1x1 are stacks of 3x3 convolutions; no pooling branch.
    """

    def __init__(self, c_in, widths, slope):
        super().__init__()
        branches = []
        for depth, width in enumerate(widths):
            if depth == 0:
                layers = [nn.Conv2d(c_in, width, kernel_size=1), nn.LeakyReLU(slope)]
            else:
                layers = []
                for i in range(depth):
                    layers += [conv3(c_in if i == 0 else width, width), nn.LeakyReLU(slope)]
            branches.append(nn.Sequential(*layers))
        self.branches = nn.ModuleList(branches)

    def forward(self, x):
        return torch.cat([b(x) for b in self.branches], dim=1)


class EncoderBlock(nn.Sequential):
    def __init__(self, c_in, c_out, slope, batch_norm=True):
        layers = [conv_down(c_in, c_out)]
        if batch_norm:
            layers.append(nn.BatchNorm2d(c_out))
        layers.append(nn.LeakyReLU(slope))
        super().__init__(*layers)
        self.batch_norm = batch_norm


class DecoderBlock(nn.Sequential):
    def __init__(self, c_in, c_out, p_drop):
        super().__init__(conv_up(c_in, c_out), nn.BatchNorm2d(c_out), nn.Dropout(p_drop), nn.ReLU())


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c_inc = sum(config.inception_widths)
        enc = config.encoder_widths
        slope = config.leaky_slope

        self.inception = Inception(3, config.inception_widths, slope)
        chans = [c_inc, *enc]
        self.encoder = nn.ModuleList(
            EncoderBlock(chans[i], chans[i + 1], slope, batch_norm=i > 0) for i in range(len(enc))
        )
        # decoders mirror the encoder: out widths enc[-2], ..., enc[0], c_inc
        dec_out = [*reversed(chans[:-1])]
        self.appearance_decoder = nn.ModuleList(
            DecoderBlock(enc[-1] if i == 0 else dec_out[i - 1], dec_out[i], config.dropout)
            for i in range(len(enc))
        )
        # motion decoder concatenates the encoder map of equal resolution before each deconvolution
        self.motion_decoder = nn.ModuleList(
            DecoderBlock(enc[-1] if i == 0 else 2 * dec_out[i - 1], dec_out[i], config.dropout)
            for i in range(len(enc))
        )
        self.appearance_head = conv3(c_inc, 3)
        self.motion_head = conv3(2 * c_inc, 3)
        init_weights(self)

    def check_input(self, x: torch.Tensor) -> None:
        cfg = self.config
        if x.ndim != 4 or tuple(x.shape[1:]) != (3, cfg.height, cfg.width):
            raise ShapeError(f"generator expects N x 3 x {cfg.height} x {cfg.width}, got {tuple(x.shape)}")

    def encode(self, x):
        feats = [self.inception(x)]
        for block in self.encoder:
            feats.append(block(feats[-1]))
        return feats

    def forward(self, x):
        """Return (reconstructed frame in [0, 1], predicted flow), both N x 3 x H x W."""
        self.check_input(x)
        feats = self.encode(x)
        a = feats[-1]
        for block in self.appearance_decoder:
            a = block(a)
        m = feats[-1]
        for i, block in enumerate(self.motion_decoder):
            if i > 0:
                m = torch.cat([m, feats[-1 - i]], dim=1)
            m = block(m)
        m = torch.cat([m, feats[0]], dim=1)
        return torch.sigmoid(self.appearance_head(a)), self.motion_head(m)


class Discriminator(nn.Module):
    """Maps a (frame, flow) pair to per-unit probabilities of shape
    N x 512 x H/8 x W/8."""

    def __init__(self, config: DiscriminatorConfig | None = None):
        super().__init__()
        self.config = config = config or DiscriminatorConfig()
        layers = []
        c_in = 6
        for i, width in enumerate(config.widths):
            layers.append(conv_down(c_in, width))
            if i > 0:
                layers.append(nn.BatchNorm2d(width))
            layers.append(nn.LeakyReLU(config.leaky_slope))
            c_in = width
        layers += [conv3(c_in, config.out_channels), nn.Sigmoid()]
        self.net = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, frames, flows):
        if frames.shape[0] != flows.shape[0] or frames.shape[2:] != flows.shape[2:]:
            raise ShapeError(
                f"frame batch {tuple(frames.shape)} and flow batch {tuple(flows.shape)} do not match"
            )
        return self.net(torch.cat([frames, flows], dim=1))


def build_generator(config: GeneratorConfig | None = None) -> Generator:
    return Generator(config or GeneratorConfig())


def build_discriminator(config: DiscriminatorConfig | None = None) -> Discriminator:
    return Discriminator(config)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def to_nchw(batch) -> torch.Tensor:
    """N x H x W x C numpy batch -> float32 N x C x H x W tensor."""
    return torch.from_numpy(batch).permute(0, 3, 1, 2).contiguous().float()


def to_nhwc(t: torch.Tensor):
    return t.detach().permute(0, 2, 3, 1).cpu().numpy()


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


@dataclass
class Checkpoint:
    generator: Generator
    discriminator: Discriminator | None = None
    optimizer_states: dict = field(default_factory=dict)
    epoch: int = 0
    config: dict = field(default_factory=dict)  # resolved pipeline config echo
    score_weights: tuple[float, float] | None = None  # (w_F, w_I)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "generator_config": _config_dict(ckpt.generator.config),
        "discriminator_config": _config_dict(ckpt.discriminator.config) if ckpt.discriminator else None,
        "generator": ckpt.generator.state_dict(),
        "discriminator": ckpt.discriminator.state_dict() if ckpt.discriminator else None,
        "optimizers": ckpt.optimizer_states,
        "epoch": ckpt.epoch,
        "config": ckpt.config,
        "score_weights": list(ckpt.score_weights) if ckpt.score_weights is not None else None,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path, expected: GeneratorConfig | None = None) -> Checkpoint:
    """Load a checkpoint; if ``expected`` is given its input shape must match."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises a zoo of types for corrupt files
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")

    gen_cfg = GeneratorConfig(**payload["generator_config"])
    if expected is not None:
        if (expected.height, expected.width) != (gen_cfg.height, gen_cfg.width):
            raise CheckpointError(
                f"checkpoint input shape {gen_cfg.height}x{gen_cfg.width} does not match "
                f"configured {expected.height}x{expected.width}"
            )
        if _config_dict(expected) != _config_dict(gen_cfg):
            raise CheckpointError("checkpoint generator config does not match the configured one")
    generator = Generator(gen_cfg)
    generator.load_state_dict(payload["generator"])
    discriminator = None
    if payload.get("discriminator") is not None:
        discriminator = Discriminator(DiscriminatorConfig(**payload["discriminator_config"]))
        discriminator.load_state_dict(payload["discriminator"])
    weights = payload.get("score_weights")
    return Checkpoint(
        generator=generator,
        discriminator=discriminator,
        optimizer_states=payload.get("optimizers") or {},
        epoch=payload.get("epoch", 0),
        config=payload.get("config") or {},
        score_weights=tuple(weights) if weights is not None else None,
    )


def _config_dict(cfg) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}
