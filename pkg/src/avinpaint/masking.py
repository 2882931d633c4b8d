"""Random spectrogram gap simulation: mask sampling, application, compositing."""

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MaskSpec:
    """Gap-sampling parameters, in milliseconds plus the frame hop."""

    mean_ms: float = 900.0
    std_ms: float = 300.0
    min_total_ms: float = 300.0
    max_total_ms: float = 1500.0
    min_gaps: int = 1
    max_gaps: int = 8
    min_gap_ms: float = 36.0
    hop_ms: float = 20.0

    def __post_init__(self):
        if not self.min_total_ms <= self.mean_ms <= self.max_total_ms:
            raise ValueError("mean_ms must lie within [min_total_ms, max_total_ms]")
        if self.min_gap_ms <= 0:
            raise ValueError("min_gap_ms must be positive")
        if not self.max_gaps >= self.min_gaps >= 1:
            raise ValueError("need max_gaps >= min_gaps >= 1")

    @property
    def mean_frames(self) -> float:
        return self.mean_ms / self.hop_ms

    @property
    def std_frames(self) -> float:
        return self.std_ms / self.hop_ms

    @property
    def min_total_frames(self) -> int:
        return int(round(self.min_total_ms / self.hop_ms))

    @property
    def max_total_frames(self) -> int:
        return int(round(self.max_total_ms / self.hop_ms))

    @property
    def min_gap_frames(self) -> int:
        return math.ceil(self.min_gap_ms / self.hop_ms)


@dataclass(frozen=True)
class Mask:
    """Per-frame corruption mask: 1 = intact, 0 = masked."""

    length: int
    gaps: tuple = field(default_factory=tuple)  # ((start_frame, len_frames), ...)
    hop_ms: float = 20.0

    def __post_init__(self):
        prev_end = -1
        for start, size in self.gaps:
            if size < 1 or start < 0 or start + size > self.length:
                raise ValueError(f"gap ({start}, {size}) outside [0, {self.length})")
            if start <= prev_end:
                raise ValueError("gaps must be disjoint, ordered, and separated")
            prev_end = start + size

    @property
    def vector(self) -> np.ndarray:
        m = np.ones(self.length)
        for start, size in self.gaps:
            m[start : start + size] = 0.0
        return m

    @property
    def total_masked(self) -> int:
        return sum(size for _, size in self.gaps)

    def to_json(self) -> str:
        return json.dumps({"T": self.length, "gaps": [list(g) for g in self.gaps], "hop_ms": self.hop_ms})

    @classmethod
    def from_json(cls, text: str) -> "Mask":
        obj = json.loads(text)
        return cls(obj["T"], tuple(tuple(g) for g in obj["gaps"]), obj["hop_ms"])


def sample_mask(seed: int, n_frames: int, spec: MaskSpec = MaskSpec()) -> Mask:
    """Draw a random mask; a pure function of (seed, n_frames, spec).

    Total masked duration is a clipped, rounded normal draw; the gap count is
    uniform over the feasible range; lengths come from uniform cuts of the
    surplus above the per-gap minimum; positions are uniform among placements
    that keep at least one intact frame between consecutive gaps.
    """
    rng = np.random.default_rng(seed)
    min_gap = spec.min_gap_frames
    total = int(round(float(np.clip(rng.normal(spec.mean_frames, spec.std_frames),
                                    spec.min_total_frames, spec.max_total_frames))))
    k_max = min(spec.max_gaps, total // min_gap)
    k = int(rng.integers(spec.min_gaps, k_max + 1))

    surplus = total - k * min_gap
    cuts = np.sort(rng.integers(0, surplus + 1, size=k - 1))
    bounds = np.concatenate(([0], cuts, [surplus]))
    lengths = np.diff(bounds) + min_gap

    slack = n_frames - total - (k - 1)
    if slack < 0:
        raise ValueError(f"{n_frames} frames cannot host {k} gaps totalling {total} frames")
    offsets = np.sort(rng.integers(0, slack + 1, size=k))
    gaps = []
    cursor = 0
    for i in range(k):
        start = int(offsets[i]) + cursor + i
        gaps.append((start, int(lengths[i])))
        cursor += int(lengths[i])
    return Mask(n_frames, tuple(gaps), spec.hop_ms)


def apply_mask(values: np.ndarray, mask: Mask) -> np.ndarray:
    """Zero the masked frames: a_t = m_t * x_t."""
    values = np.asarray(values)
    if values.shape[0] != mask.length:
        raise ValueError(f"length mismatch: {values.shape[0]} frames vs mask of {mask.length}")
    return values * mask.vector[:, None]


def composite(x: np.ndarray, y: np.ndarray, mask: Mask) -> np.ndarray:
    """Merge intact input frames with model output: o_t = m_t*x_t + (1-m_t)*y_t.

    The output is clipped to [0, 1], the range of normalized spectrograms.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] != mask.length:
        raise ValueError(f"length mismatch: {x.shape[0]} frames vs mask of {mask.length}")
    m = mask.vector[:, None]
    return np.clip(m * x + (1.0 - m) * y, 0.0, 1.0)
