"""Frames, flow fields, on-disk video datasets and training batches.

Frames are float32 ``H x W x 3`` arrays in [0, 1]. Flow fields are float32
``H x W x 3`` arrays holding (dx, dy, magnitude) in pixels per frame; the flow
stored for frame ``t`` describes the motion from ``t`` to ``t + 1``.

Dataset directory layout::

    root/
      <video_id>/frame_000000.png
      <video_id>/flow_000000.amcf      # one per frame except the last
      labels.csv                       # optional: video_id,frame_index,label
      events.csv                       # optional: video_id,start_frame,end_frame
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, DecodeError, MissingFlowError, ShapeError

DEFAULT_SIZE = (128, 192)
FLOW_MAGIC = b"AMCF"
FRAME_PATTERN = "frame_{:06d}.png"
FLOW_PATTERN = "flow_{:06d}.amcf"


# --------------------------------------------------------------------------
# frames
# --------------------------------------------------------------------------


def bilinear_resize(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize an ``H x W x C`` array with half-pixel-centred bilinear sampling.

    Sample positions outside the source grid are clamped to the border, the
    same convention as OpenCV's ``INTER_LINEAR`` without antialiasing.
    """
    h_in, w_in = image.shape[:2]
    h_out, w_out = size
    img = image.astype(np.float64)
    if (h_in, w_in) == (h_out, w_out):
        return img

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis_weights(h_in, h_out)
    c0, c1, fc = axis_weights(w_in, w_out)
    rows = img[r0] * (1 - fr)[:, None, None] + img[r1] * fr[:, None, None]
    return rows[:, c0] * (1 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]


def decode_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except FileNotFoundError:
        raise DecodeError(f"cannot decode image {path}: file not found") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from None
    if arr.size == 0:
        raise DecodeError(f"cannot decode image {path}: empty image")
    return arr


def preprocess_frame(raw, size: tuple[int, int] = DEFAULT_SIZE) -> np.ndarray:
    """Turn an 8-bit gray or RGB image (array or file path) into a FrameTensor."""
    source = raw if isinstance(raw, (str, Path)) else "<array>"
    arr = decode_image(raw) if isinstance(raw, (str, Path)) else np.asarray(raw)
    if arr.size == 0:
        raise DecodeError(f"cannot decode image {source}: empty image")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise DecodeError(f"cannot decode image {source}: expected 1 or 3 channels, got shape {arr.shape}")
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    frame = bilinear_resize(arr, size) / 255.0
    return np.clip(frame, 0.0, 1.0).astype(np.float32)


def check_frame(frame: np.ndarray) -> None:
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ShapeError(f"frame must be H x W x 3, got {frame.shape}")
    if not np.all(np.isfinite(frame)) or frame.min() < 0 or frame.max() > 1:
        raise DataError("frame values must be finite and within [0, 1]")


# --------------------------------------------------------------------------
# flow
# --------------------------------------------------------------------------


def make_flow(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Stack displacements into an ``H x W x 3`` (dx, dy, magnitude) field."""
    dx = np.asarray(dx, dtype=np.float32)
    dy = np.asarray(dy, dtype=np.float32)
    if dx.shape != dy.shape or dx.ndim != 2:
        raise ShapeError(f"dx and dy must be equal 2-D arrays, got {dx.shape} and {dy.shape}")
    mag = np.sqrt(dx.astype(np.float64) ** 2 + dy.astype(np.float64) ** 2).astype(np.float32)
    return np.stack([dx, dy, mag], axis=-1)


def write_flow(path, flow: np.ndarray) -> None:
    """Write the (dx, dy) part of a flow field as an AMCF file."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] < 2:
        raise ShapeError(f"flow must be H x W x 2 or 3, got {flow.shape}")
    h, w = flow.shape[:2]
    payload = np.ascontiguousarray(flow[:, :, :2], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC + struct.pack("<II", w, h) + payload)


def read_flow(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise MissingFlowError(f"flow file not found: {path}") from None
    if len(blob) < 12 or blob[:4] != FLOW_MAGIC:
        raise DecodeError(f"not an AMCF flow file: {path}")
    w, h = struct.unpack("<II", blob[4:12])
    expected = 12 + 8 * w * h
    if len(blob) != expected:
        raise DecodeError(f"truncated flow file {path}: {len(blob)} bytes, expected {expected}")
    dxdy = np.frombuffer(blob, dtype="<f4", offset=12).reshape(h, w, 2)
    if not np.all(np.isfinite(dxdy)):
        raise DataError(f"non-finite values in flow file {path}")
    return make_flow(dxdy[:, :, 0], dxdy[:, :, 1])


def resize_flow(flow: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resample a flow field, scaling displacements with the grid."""
    h, w = flow.shape[:2]
    if (h, w) == tuple(size):
        return flow.astype(np.float32)
    dxdy = bilinear_resize(flow[:, :, :2], size)
    return make_flow(dxdy[:, :, 0] * size[1] / w, dxdy[:, :, 1] * size[0] / h)


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EventInterval:
    video_id: str
    start_frame: int
    end_frame: int  # inclusive

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise DataError(f"event {self.video_id} [{self.start_frame}, {self.end_frame}] has start > end")

    def __contains__(self, frame_index: int) -> bool:
        return self.start_frame <= frame_index <= self.end_frame


@dataclass(frozen=True)
class Video:
    video_id: str
    frame_paths: tuple[Path, ...]
    flow_paths: tuple[Path | None, ...] = ()
    labels: np.ndarray | None = None
    events: tuple[EventInterval, ...] = ()

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.frame_paths):
            raise DataError(
                f"video {self.video_id}: {len(self.labels)} labels for {len(self.frame_paths)} frames"
            )

    @property
    def n_frames(self) -> int:
        return len(self.frame_paths)

    def flow_path(self, t: int) -> Path | None:
        return self.flow_paths[t] if t < len(self.flow_paths) else None


@dataclass(frozen=True, eq=False)
class VideoDataset:
    """Immutable collection of videos. Decoded frames are cached on first use."""

    videos: tuple[Video, ...]
    role: str = "test"
    frame_size: tuple[int, int] = DEFAULT_SIZE
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.role not in ("train", "test"):
            raise DataError(f"dataset role must be 'train' or 'test', got {self.role!r}")

    def pairs(self) -> list[tuple[int, int]]:
        """(video index, frame index) for every frame that has a successor."""
        return [(vi, t) for vi, v in enumerate(self.videos) for t in range(v.n_frames - 1)]

    def frame(self, vi: int, t: int) -> np.ndarray:
        return self._frames[vi][t]

    def flow(self, vi: int, t: int) -> np.ndarray:
        video = self.videos[vi]
        path = video.flow_path(t)
        if path is None:
            raise MissingFlowError(f"video {video.video_id} frame {t} has no flow record")
        return resize_flow(read_flow(path), self.frame_size)

    def check_flows(self) -> None:
        for vi, t in self.pairs():
            video = self.videos[vi]
            path = video.flow_path(t)
            if path is None or not Path(path).is_file():
                raise MissingFlowError(f"video {video.video_id} frame {t} has no flow record")

    @cached_property
    def _frames(self) -> list[np.ndarray]:
        return [
            np.stack([preprocess_frame(p, self.frame_size) for p in v.frame_paths]) for v in self.videos
        ]

    @cached_property
    def pair_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """All (frame, flow) pairs stacked as two ``N x H x W x 3`` arrays."""
        self.check_flows()
        pairs = self.pairs()
        frames = np.stack([self.frame(vi, t) for vi, t in pairs]) if pairs else np.zeros((0, *self.frame_size, 3))
        flows = np.stack([self.flow(vi, t) for vi, t in pairs]) if pairs else np.zeros((0, *self.frame_size, 3))
        return frames.astype(np.float32), flows.astype(np.float32)

    def pair_key(self, vi: int, t: int) -> tuple[str, int]:
        return self.videos[vi].video_id, t


def read_labels(path) -> dict[str, dict[int, int]]:
    out: dict[str, dict[int, int]] = {}
    for row in _read_csv(path, ("video_id", "frame_index", "label")):
        label = int(row["label"])
        if label not in (0, 1):
            raise DataError(f"{path}: label must be 0 or 1, got {label}")
        out.setdefault(row["video_id"], {})[int(row["frame_index"])] = label
    return out


def write_labels(path, labels: Iterable[tuple[str, Sequence[int]]]) -> None:
    """Write ``(video_id, per-frame labels)`` pairs as a labels CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "frame_index", "label"])
        for video_id, video_labels in labels:
            for t, label in enumerate(video_labels):
                writer.writerow([video_id, t, int(label)])


def read_events(path) -> list[EventInterval]:
    return [
        EventInterval(row["video_id"], int(row["start_frame"]), int(row["end_frame"]))
        for row in _read_csv(path, ("video_id", "start_frame", "end_frame"))
    ]


def write_events(path, events: Sequence[EventInterval]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "start_frame", "end_frame"])
        for ev in events:
            writer.writerow([ev.video_id, ev.start_frame, ev.end_frame])


def _read_csv(path, columns: Sequence[str]) -> list[dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(columns) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        try:
            return list(reader)
        except csv.Error as exc:
            raise DataError(f"{path}: {exc}") from None


def load_dataset(root, role: str = "test", frame_size: tuple[int, int] = DEFAULT_SIZE) -> VideoDataset:
    """Index a dataset directory. Frames are decoded lazily."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    labels = read_labels(root / "labels.csv") if (root / "labels.csv").is_file() else {}
    events = read_events(root / "events.csv") if (root / "events.csv").is_file() else []
    videos = []
    for vdir in sorted(p for p in root.iterdir() if p.is_dir()):
        frames = sorted(vdir.glob("frame_*.png"))
        if not frames:
            continue
        n = len(frames)
        flows = tuple(
            (vdir / FLOW_PATTERN.format(t)) if (vdir / FLOW_PATTERN.format(t)).is_file() else None
            for t in range(n - 1)
        )
        vlabels = None
        if vdir.name in labels:
            per = labels[vdir.name]
            if sorted(per) != list(range(n)):
                raise DataError(f"labels for video {vdir.name} do not cover frames 0..{n - 1}")
            vlabels = np.array([per[t] for t in range(n)], dtype=np.int64)
        vevents = tuple(ev for ev in events if ev.video_id == vdir.name)
        videos.append(Video(vdir.name, tuple(frames), flows, vlabels, vevents))
    if not videos:
        raise DataError(f"no videos found under {root}")
    return VideoDataset(tuple(videos), role=role, frame_size=tuple(frame_size), root=root)


# --------------------------------------------------------------------------
# batches
# --------------------------------------------------------------------------


class Batch(NamedTuple):
    frames: np.ndarray  # N x H x W x 3
    flows: np.ndarray  # N x H x W x 3
    keys: list[tuple[str, int]]


def batch_iterator(
    dataset: VideoDataset, batch_size: int, shuffle: bool = False, seed: int = 0, epoch: int = 0
) -> Iterator[Batch]:
    """Yield every (frame, next-frame flow) pair once, in batches.

    The shuffled order depends only on ``(seed, epoch)``; the final batch may be
    smaller than ``batch_size``.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    frames, flows = dataset.pair_arrays
    pairs = dataset.pairs()
    order = np.arange(len(pairs))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield Batch(frames[idx], flows[idx], [dataset.pair_key(*pairs[i]) for i in idx])
