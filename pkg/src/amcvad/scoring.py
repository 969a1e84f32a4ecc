"""Frame-level anomaly scores from the two generator streams.

The default ``patch`` score is

    S = log(w_F * S_F(P)) + lambda_S * log(w_I * S_I(P))

where S_F and S_I are mean squared errors of the flow and frame over a 16x16
window P, P is the window with the largest flow error, and w_F, w_I are the
reciprocals of the mean training-set partial scores. Scores are normalised per
video afterwards.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from .data import VideoDataset
from .errors import CalibrationError, ConfigError, DataError, ShapeError
from .model import Generator, to_nchw, to_nhwc

LOG_EPS = 1e-12
METHODS = ("patch", "motion", "appearance", "ssim")
SCORE_COLUMNS = ("video_id", "frame_index", "score_raw", "score_norm", "patch_row", "patch_col", "s_f", "s_i")


@dataclass(frozen=True)
class ScoreWeights:
    w_f: float
    w_i: float

    def __post_init__(self):
        for name in ("w_f", "w_i"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise CalibrationError(f"score weight {name} must be finite and positive, got {value}")


@dataclass
class ScoreRecord:
    video_id: str
    frame_index: int
    s_f: float | None
    s_i: float | None
    patch_row: int | None
    patch_col: int | None
    score_raw: float
    score_norm: float = float("nan")


# --------------------------------------------------------------------------
# patch scores
# --------------------------------------------------------------------------


def squared_error_maps(frame, frame_hat, flow, flow_hat) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel squared errors averaged over channels, for frame and flow."""
    frame, frame_hat, flow, flow_hat = (np.asarray(a, dtype=np.float64) for a in (frame, frame_hat, flow, flow_hat))
    if frame.shape != frame_hat.shape or flow.shape != flow_hat.shape or frame.shape[:-1] != flow.shape[:-1]:
        raise ShapeError("frame/flow pairs must share shape and spatial size")
    return ((frame - frame_hat) ** 2).mean(axis=-1), ((flow - flow_hat) ** 2).mean(axis=-1)


def window_means(error_map: np.ndarray, patch: int = 16) -> np.ndarray:
    """Mean over every stride-1 ``patch x patch`` window (top-left indexed)."""
    e = np.asarray(error_map, dtype=np.float64)
    h, w = e.shape
    if h < patch or w < patch:
        raise ShapeError(f"error map {h}x{w} is smaller than the {patch}x{patch} patch")
    integral = np.zeros((h + 1, w + 1))
    integral[1:, 1:] = e.cumsum(axis=0).cumsum(axis=1)
    sums = (
        integral[patch:, patch:] - integral[:-patch, patch:] - integral[patch:, :-patch] + integral[:-patch, :-patch]
    )
    return sums / (patch * patch)


def max_patch(error_map: np.ndarray, patch: int = 16) -> tuple[tuple[int, int], float]:
    """Top-left corner and mean of the window with the largest mean error.

    Ties (up to float rounding of the running sums) go to the smallest row,
    then the smallest column.
    """
    means = window_means(error_map, patch)
    best = means.max()
    tol = 1e-12 * max(1.0, abs(best))
    flat = int(np.flatnonzero(means >= best - tol)[0])
    row, col = divmod(flat, means.shape[1])
    # report the exact window mean rather than the running-sum estimate
    value = float(np.asarray(error_map, dtype=np.float64)[row : row + patch, col : col + patch].mean())
    return (row, col), value


def window_mean_at(error_map: np.ndarray, location: tuple[int, int], patch: int = 16) -> float:
    r, c = location
    e = np.asarray(error_map, dtype=np.float64)
    if r < 0 or c < 0 or r + patch > e.shape[0] or c + patch > e.shape[1]:
        raise ShapeError(f"patch at {location} does not fit in a {e.shape[0]}x{e.shape[1]} map")
    return float(e[r : r + patch, c : c + patch].mean())


def partial_scores_at(e_i, e_f, location, patch: int = 16) -> tuple[float, float]:
    """(S_F, S_I) read from both maps at the same window."""
    return window_mean_at(e_f, location, patch), window_mean_at(e_i, location, patch)


def frame_score(s_f: float, s_i: float, weights: ScoreWeights, lambda_s: float = 0.2) -> float:
    if s_f < 0 or s_i < 0:
        raise ValueError("partial scores must be non-negative")
    term_f = math.log(max(weights.w_f * s_f, LOG_EPS))
    if lambda_s == 0:
        return term_f
    return term_f + lambda_s * math.log(max(weights.w_i * s_i, LOG_EPS))


def normalize_scores(scores: Sequence[float], mode: str = "minmax") -> np.ndarray:
    """Per-video normalisation.

    ``minmax`` maps onto [0, 1] (a constant sequence maps to 0.5). ``literal``
    divides by the maximum; this inverts the ordering when scores are negative.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot normalise an empty score sequence")
    if mode == "minmax":
        lo, hi = s.min(), s.max()
        if hi == lo:
            return np.full_like(s, 0.5)
        return (s - lo) / (hi - lo)
    if mode == "literal":
        hi = s.max()
        if hi == 0:
            raise ValueError("literal normalisation is undefined when the maximum score is 0")
        return s / hi
    raise ConfigError(f"normalization must be 'minmax' or 'literal', got {mode!r}")


# --------------------------------------------------------------------------
# SSIM
# --------------------------------------------------------------------------


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, window: int = 11, sigma: float = 1.5, data_range: float = 1.0) -> float:
    """Mean SSIM over channels and all fully interior Gaussian windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if min(a.shape[:2]) < window:
        raise ShapeError(f"images smaller than the {window}x{window} SSIM window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    g = gaussian_window(window, sigma)
    values = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        vx = _filter_valid(x * x, g) - mx * mx
        vy = _filter_valid(y * y, g) - my * my
        cxy = _filter_valid(x * y, g) - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        values.append(s.mean())
    return float(np.mean(values))


def ssim_score(frame, frame_hat) -> float:
    """Anomaly score 1 - SSIM; 0 for identical frames."""
    return 1.0 - ssim(frame, frame_hat)


# --------------------------------------------------------------------------
# inference over datasets
# --------------------------------------------------------------------------


@torch.no_grad()
def predict(gen: Generator, frames: np.ndarray, batch_size: int = 16) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Eval-mode generator outputs as N x H x W x 3 arrays, batch by batch."""
    gen.eval()
    for start in range(0, len(frames), batch_size):
        frame_hat, flow_hat = gen(to_nchw(frames[start : start + batch_size]))
        yield to_nhwc(frame_hat), to_nhwc(flow_hat)


def pair_partial_scores(gen: Generator, dataset: VideoDataset, patch: int = 16, batch_size: int = 16):
    """(S_F, S_I, locations) for every (frame, flow) pair at the flow-argmax window."""
    frames, flows = dataset.pair_arrays
    s_f, s_i, locs = [], [], []
    offset = 0
    for frame_hat, flow_hat in predict(gen, frames, batch_size):
        for k in range(len(frame_hat)):
            j = offset + k
            e_i, e_f = squared_error_maps(frames[j], frame_hat[k], flows[j], flow_hat[k])
            loc, sf = max_patch(e_f, patch)
            s_f.append(sf)
            s_i.append(window_mean_at(e_i, loc, patch))
            locs.append(loc)
        offset += len(frame_hat)
    return np.array(s_f), np.array(s_i), locs


def fit_score_weights(gen: Generator, dataset: VideoDataset, patch: int = 16, batch_size: int = 16) -> ScoreWeights:
    """Reciprocals of the mean training-set partial scores."""
    if dataset.role != "train":
        raise DataError(f"calibration requires the training split, got role {dataset.role!r}")
    s_f, s_i, _ = pair_partial_scores(gen, dataset, patch, batch_size)
    return weights_from_partial_scores(s_f, s_i)


def weights_from_partial_scores(s_f, s_i) -> ScoreWeights:
    s_f = np.asarray(s_f, dtype=np.float64)
    s_i = np.asarray(s_i, dtype=np.float64)
    if s_f.size == 0:
        raise CalibrationError("no training pairs to calibrate on")
    mean_f, mean_i = s_f.mean(), s_i.mean()
    if mean_f == 0 or mean_i == 0:
        raise CalibrationError(
            f"degenerate calibration: mean training score is zero (S_F={mean_f}, S_I={mean_i})"
        )
    return ScoreWeights(1.0 / mean_f, 1.0 / mean_i)


def score_dataset(
    gen: Generator,
    weights: ScoreWeights | None,
    dataset: VideoDataset,
    method: str = "patch",
    lambda_s: float = 0.2,
    normalization: str = "minmax",
    patch: int = 16,
    batch_size: int = 16,
) -> list[ScoreRecord]:
    """Score every frame of ``dataset``; higher means more anomalous.

    ``patch`` combines both streams, ``motion`` keeps only the flow term,
    ``appearance`` uses the frame error at its own argmax window, and ``ssim``
    uses 1 - SSIM of the reconstruction (every frame, no flow needed).
    """
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    if method != "ssim" and weights is None:
        raise CalibrationError(f"method {method!r} needs calibrated score weights (w_F, w_I)")

    records: list[ScoreRecord] = []
    if method == "ssim":
        for vi, video in enumerate(dataset.videos):
            frames = np.stack([dataset.frame(vi, t) for t in range(video.n_frames)])
            t = 0
            for frame_hat, _ in predict(gen, frames, batch_size):
                for k in range(len(frame_hat)):
                    records.append(
                        ScoreRecord(video.video_id, t, None, None, None, None, ssim_score(frames[t], frame_hat[k]))
                    )
                    t += 1
    else:
        frames, flows = dataset.pair_arrays
        keys = [dataset.pair_key(vi, t) for vi, t in dataset.pairs()]
        j = 0
        for frame_hat, flow_hat in predict(gen, frames, batch_size):
            for k in range(len(frame_hat)):
                e_i, e_f = squared_error_maps(frames[j], frame_hat[k], flows[j], flow_hat[k])
                if method == "appearance":
                    loc, s_i = max_patch(e_i, patch)
                    s_f = window_mean_at(e_f, loc, patch)
                    raw = math.log(max(weights.w_i * s_i, LOG_EPS))
                else:
                    loc, s_f = max_patch(e_f, patch)
                    s_i = window_mean_at(e_i, loc, patch)
                    raw = frame_score(s_f, s_i, weights, lambda_s if method == "patch" else 0.0)
                records.append(ScoreRecord(*keys[j], s_f, s_i, loc[0], loc[1], raw))
                j += 1

    by_video: dict[str, list[ScoreRecord]] = {}
    for rec in records:
        by_video.setdefault(rec.video_id, []).append(rec)
    for recs in by_video.values():
        for rec, norm in zip(recs, normalize_scores([r.score_raw for r in recs], normalization)):
            rec.score_norm = float(norm)
    return records


def write_scores(path, records: Sequence[ScoreRecord]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)

    def fmt(x):
        return "" if x is None else repr(float(x)) if isinstance(x, float) else str(x)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCORE_COLUMNS)
        for r in records:
            writer.writerow(
                [r.video_id, r.frame_index, fmt(r.score_raw), fmt(r.score_norm),
                 fmt(r.patch_row), fmt(r.patch_col), fmt(r.s_f), fmt(r.s_i)]
            )


def read_scores(path) -> list[ScoreRecord]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"scores file not found: {path}")
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SCORE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            opt = lambda key, cast: cast(row[key]) if row[key] != "" else None  # noqa: E731
            out.append(
                ScoreRecord(
                    row["video_id"], int(row["frame_index"]), opt("s_f", float), opt("s_i", float),
                    opt("patch_row", int), opt("patch_col", int), float(row["score_raw"]), float(row["score_norm"]),
                )
            )
    return out
