"""Facial-landmark motion features: mouth crop, frame differences, temporal upsampling."""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

N_LANDMARKS = 68
MOUTH_SLICE = slice(48, 68)  # mouth points of the 68-landmark scheme
MOUTH_DIM = 40               # 20 landmarks x 2 coordinates
VIDEO_FPS = 25


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension min/max, computed on the training split and frozen."""

    mins: np.ndarray
    maxs: np.ndarray

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureStats":
        return cls(np.asarray(obj["mins"], dtype=np.float64), np.asarray(obj["maxs"], dtype=np.float64))


def mouth_subset(landmarks: np.ndarray) -> np.ndarray:
    """Select the 20 mouth landmarks (indices 48..67) from a T'x68x2 sequence."""
    landmarks = np.asarray(landmarks)
    if landmarks.ndim != 3 or landmarks.shape[1] != N_LANDMARKS:
        raise ValueError(f"expected (T, {N_LANDMARKS}, 2) landmarks, got {landmarks.shape}")
    return landmarks[:, MOUTH_SLICE, :]


def motion_vectors(points: np.ndarray) -> np.ndarray:
    """Flattened consecutive-frame differences: row f = flatten(points[f+1] - points[f])."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        raise ValueError("need at least 2 frames to compute motion")
    diffs = points[1:] - points[:-1]
    return diffs.reshape(diffs.shape[0], -1)


def upsample_temporal(features: np.ndarray, target_len: int, kind: str = "cubic") -> np.ndarray:
    """Resample each feature dimension onto a uniform grid of target_len steps."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise ValueError("need at least 2 source rows to interpolate")
    if target_len < 2:
        raise ValueError(f"target length must be >= 2, got {target_len}")
    if target_len == features.shape[0]:
        return features.copy()
    src = np.linspace(0.0, 1.0, features.shape[0])
    dst = np.linspace(0.0, 1.0, target_len)
    if kind == "cubic":
        return CubicSpline(src, features, axis=0)(dst)
    if kind == "linear":
        return np.stack([np.interp(dst, src, features[:, d]) for d in range(features.shape[1])], axis=1)
    raise ValueError(f"unknown interpolation kind: {kind}")


def compute_stats(feature_arrays) -> FeatureStats:
    """Per-dimension min/max over a collection of TxD feature arrays."""
    stacked = np.concatenate([np.asarray(a, dtype=np.float64) for a in feature_arrays], axis=0)
    if not np.all(np.isfinite(stacked)):
        raise ValueError("features contain non-finite values")
    return FeatureStats(stacked.min(axis=0), stacked.max(axis=0))


def normalize01(features: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Affine map to [0, 1] per dimension; constant dimensions map to 0.5.

    Values outside the training-split range clip to the boundaries.
    """
    features = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise ValueError("features contain non-finite values")
    span = stats.maxs - stats.mins
    out = np.full_like(features, 0.5)
    live = span > 0
    out[:, live] = (features[:, live] - stats.mins[live]) / span[live]
    return np.clip(out, 0.0, 1.0)


def motion_features(
    landmarks: np.ndarray,
    target_len: int,
    stats: FeatureStats | None = None,
    mouth_only: bool = True,
    kind: str = "cubic",
) -> np.ndarray:
    """Landmark sequence -> normalized TxD motion features.

    Differences are taken before upsampling; normalization is skipped when
    stats is None (used while collecting training statistics).
    """
    points = mouth_subset(landmarks) if mouth_only else np.asarray(landmarks)
    motion = motion_vectors(points)
    upsampled = upsample_temporal(motion, target_len, kind)
    return upsampled if stats is None else normalize01(upsampled, stats)


def load_landmarks_csv(path) -> np.ndarray:
    """Read a per-clip landmark CSV with header frame,x0,y0,...,x67,y67."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 1 + 2 * N_LANDMARKS:
            raise ValueError(f"{path}: expected {1 + 2 * N_LANDMARKS} columns, got {len(header)}")
        for row in reader:
            rows.append([float(v) for v in row[1:]])
    frames = np.asarray(rows, dtype=np.float64)
    return frames.reshape(frames.shape[0], N_LANDMARKS, 2)


def save_landmarks_csv(path, landmarks: np.ndarray) -> None:
    landmarks = np.asarray(landmarks)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + [f"{axis}{i}" for i in range(N_LANDMARKS) for axis in ("x", "y")])
        for f in range(landmarks.shape[0]):
            writer.writerow([f] + [f"{v:.4f}" for v in landmarks[f].reshape(-1)])
