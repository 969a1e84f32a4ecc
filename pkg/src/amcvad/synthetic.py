"""Synthetic surveillance scenes: square sprites drifting rightward over a
static background, with exact flow and per-frame anomaly labels.

Anomalies in test videos are a large circle of a different colour (appearance),
a square moving leftward (direction) or a square moving three times faster
(speed). Sprites are hard-edged and move by whole pixels, so the flow written
for frame ``t`` is exact at every pixel: sprite pixels carry the sprite's
velocity, background pixels carry zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import (
    FLOW_PATTERN,
    FRAME_PATTERN,
    EventInterval,
    VideoDataset,
    load_dataset,
    make_flow,
    write_events,
    write_flow,
    write_labels,
)
from .errors import ConfigError

ANOMALY_KINDS = ("circle", "reverse", "fast")
SQUARE_COLOR = np.array([0.92, 0.72, 0.30])
CIRCLE_COLOR = np.array([0.25, 0.80, 0.95])


@dataclass
class SynthSpec:
    n_train_videos: int = 4
    n_test_videos: int = 4
    frames_per_video: int = 120
    height: int = 128
    width: int = 192
    sprite_size: int = 16
    n_sprites: int = 2  # normal sprites per video
    speed: int = 2  # pixels per frame
    anomaly_rate: float = 0.3  # target fraction of anomalous test frames
    anomaly_kinds: tuple[str, ...] = ANOMALY_KINDS
    seed: int = 0

    def __post_init__(self):
        self.anomaly_kinds = tuple(self.anomaly_kinds)
        if self.frames_per_video < 2:
            raise ConfigError(f"frames_per_video must be >= 2, got {self.frames_per_video}")
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise ConfigError(f"anomaly_rate must be in [0, 1], got {self.anomaly_rate}")
        unknown = set(self.anomaly_kinds) - set(ANOMALY_KINDS)
        if unknown or not self.anomaly_kinds:
            raise ConfigError(f"anomaly_kinds must be a non-empty subset of {ANOMALY_KINDS}")
        if self.speed < 1 or self.sprite_size < 2:
            raise ConfigError("speed must be >= 1 and sprite_size >= 2")
        if self.n_lanes < self.n_sprites + 1:
            raise ConfigError(
                f"a {self.height}-pixel frame fits {self.n_lanes} sprite lanes; "
                f"need n_sprites + 1 = {self.n_sprites + 1}"
            )

    @property
    def lane_height(self) -> int:
        return int(np.ceil(1.5 * self.sprite_size)) + 2

    @property
    def n_lanes(self) -> int:
        return self.height // self.lane_height


@dataclass
class Sprite:
    mask: np.ndarray  # boolean footprint, h x w
    color: np.ndarray
    row: int  # top edge
    x0: int  # left edge at t = 0 (may be off-screen)
    velocity: int  # pixels per frame along x
    anomalous: bool = False
    wraps: bool = True
    t_start: int = 0  # first frame the sprite exists

    def left(self, t: int, width: int) -> int | None:
        if t < self.t_start:
            return None
        x = self.x0 + self.velocity * (t - self.t_start)
        w = self.mask.shape[1]
        if self.wraps:
            return (x + w) % (width + w) - w
        return x if -w < x < width else None


def square_mask(size: int) -> np.ndarray:
    return np.ones((size, size), dtype=bool)


def circle_mask(diameter: int) -> np.ndarray:
    r = diameter / 2.0
    yy, xx = np.mgrid[:diameter, :diameter] + 0.5
    return (yy - r) ** 2 + (xx - r) ** 2 <= r * r


def make_background(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Static scene: a flat backdrop with a few fixed darker slabs.

    Piecewise constant on purpose: a smooth ramp quantizes to a uint8 staircase
    whose one-level steps the gradient loss would have to memorize.
    """
    h, w = spec.height, spec.width
    bg = np.ones((h, w, 3)) * np.array([0.24, 0.24, 0.252])
    for _ in range(3):
        bh, bw = rng.integers(h // 16, h // 6), rng.integers(w // 10, w // 4)
        r, c = rng.integers(0, h - bh), rng.integers(0, w - bw)
        bg[r : r + bh, c : c + bw] *= rng.uniform(0.55, 0.8)
    return np.clip(bg, 0.0, 1.0)


def render_video(spec: SynthSpec, background: np.ndarray, sprites: list[Sprite], n_frames: int):
    """Return (uint8 frames T x H x W x 3, float32 flows (T-1) x H x W x 3, labels T)."""
    h, w = spec.height, spec.width
    frames = np.empty((n_frames, h, w, 3), dtype=np.uint8)
    flows = np.empty((n_frames - 1, h, w, 3), dtype=np.float32)
    labels = np.zeros(n_frames, dtype=np.int64)
    for t in range(n_frames):
        img = background.copy()
        dx = np.zeros((h, w), dtype=np.float32)
        for sp in sprites:
            x = sp.left(t, w)
            if x is None:
                continue
            sh, sw = sp.mask.shape
            c0, c1 = max(x, 0), min(x + sw, w)
            if c0 >= c1:
                continue
            sub = sp.mask[:, c0 - x : c1 - x]
            region = (slice(sp.row, sp.row + sh), slice(c0, c1))
            img[region][sub] = sp.color
            dx[region][sub] = sp.velocity
            if sp.anomalous:
                labels[t] = 1
        frames[t] = np.round(img * 255).astype(np.uint8)
        if t < n_frames - 1:
            flows[t] = make_flow(dx, np.zeros_like(dx))
    return frames, flows, labels


def _normal_sprites(spec, rng, lanes) -> list[Sprite]:
    sprites = []
    for lane in lanes:
        shade = rng.uniform(0.85, 1.0)
        jitter = rng.integers(0, spec.lane_height - spec.sprite_size + 1)
        sprites.append(
            Sprite(
                square_mask(spec.sprite_size),
                np.clip(SQUARE_COLOR * shade, 0, 1),
                row=int(lane * spec.lane_height + jitter),
                x0=int(rng.integers(-spec.sprite_size, spec.width)),
                velocity=spec.speed,
            )
        )
    return sprites


def _anomalous_sprite(spec, rng, kind, lane, t_start) -> Sprite:
    s = spec.sprite_size
    if kind == "circle":
        mask, color, velocity = circle_mask(int(round(1.5 * s))), CIRCLE_COLOR, spec.speed
    elif kind == "reverse":
        mask, color, velocity = square_mask(s), SQUARE_COLOR * rng.uniform(0.85, 1.0), -spec.speed
    else:
        mask, color, velocity = square_mask(s), SQUARE_COLOR * rng.uniform(0.85, 1.0), 3 * spec.speed
    sw = mask.shape[1]
    x0 = -sw + velocity if velocity > 0 else spec.width + velocity
    row = lane * spec.lane_height + int(rng.integers(0, spec.lane_height - mask.shape[0] + 1))
    return Sprite(mask, np.clip(color, 0, 1), row=int(row), x0=int(x0), velocity=velocity,
                  anomalous=True, wraps=False, t_start=t_start)


def crossing_frames(spec: SynthSpec, kind: str) -> int:
    """Frames during which an anomalous sprite of ``kind`` is visible."""
    sw = int(round(1.5 * spec.sprite_size)) if kind == "circle" else spec.sprite_size
    speed = 3 * spec.speed if kind == "fast" else spec.speed
    return int(np.ceil((spec.width + sw - 1) / speed))


def generate_videos(spec: SynthSpec, role: str, anomaly_rate: float | None = None) -> list[tuple]:
    """Render all videos of one split in memory.

    Returns a list of ``(video_id, frames, flows, labels)``.
    """
    rate = spec.anomaly_rate if anomaly_rate is None else anomaly_rate
    if role not in ("train", "test"):
        raise ConfigError(f"role must be 'train' or 'test', got {role!r}")
    if role == "train" and rate > 0:
        raise ConfigError("training videos must contain only normal events (anomaly_rate > 0 given)")
    root_rng = np.random.default_rng(spec.seed)
    background = make_background(spec, root_rng)
    split_rng = np.random.default_rng([spec.seed, 0 if role == "train" else 1])
    n_videos = spec.n_train_videos if role == "train" else spec.n_test_videos
    T = spec.frames_per_video
    out = []
    for v in range(n_videos):
        lanes = split_rng.permutation(spec.n_lanes)
        sprites = _normal_sprites(spec, split_rng, lanes[: spec.n_sprites])
        if rate > 0:
            kind = spec.anomaly_kinds[v % len(spec.anomaly_kinds)]
            free_lane = int(lanes[spec.n_sprites])
            duration = crossing_frames(spec, kind)
            budget = rate * T
            t = int(split_rng.integers(2, max(3, T // 5)))
            used = 0
            while t + duration <= T and (used == 0 or used + duration <= budget):
                sprites.append(_anomalous_sprite(spec, split_rng, kind, free_lane, t))
                used += duration
                t += duration + int(split_rng.integers(8, 20))
        frames, flows, labels = render_video(spec, background, sprites, T)
        out.append((f"{role}_{v:03d}", frames, flows, labels))
    return out


def label_runs(labels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of 1s as inclusive (start, end) pairs."""
    runs = []
    start = None
    for t, lab in enumerate(labels):
        if lab and start is None:
            start = t
        elif not lab and start is not None:
            runs.append((start, t - 1))
            start = None
    if start is not None:
        runs.append((start, len(labels) - 1))
    return runs


def write_split(root, videos) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    events = []
    for video_id, frames, flows, labels in videos:
        vdir = root / video_id
        vdir.mkdir(exist_ok=True)
        for t, frame in enumerate(frames):
            Image.fromarray(frame).save(vdir / FRAME_PATTERN.format(t), format="PNG")
        for t, flow in enumerate(flows):
            write_flow(vdir / FLOW_PATTERN.format(t), flow)
        events += [EventInterval(video_id, s, e) for s, e in label_runs(labels)]
    write_labels(root / "labels.csv", [(v[0], v[3]) for v in videos])
    write_events(root / "events.csv", events)


def generate_synthetic(spec: SynthSpec, out_dir) -> tuple[VideoDataset, VideoDataset]:
    """Write train/ and test/ splits under ``out_dir`` and return both datasets."""
    out_dir = Path(out_dir)
    size = (spec.height, spec.width)
    write_split(out_dir / "train", generate_videos(spec, "train", anomaly_rate=0.0))
    write_split(out_dir / "test", generate_videos(spec, "test"))
    return (
        load_dataset(out_dir / "train", role="train", frame_size=size),
        load_dataset(out_dir / "test", role="test", frame_size=size),
    )
