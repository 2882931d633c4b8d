"""Waveform <-> normalized log-Mel spectrogram conversions.

Pipeline: resample -> pre-emphasis -> STFT -> Mel projection -> per-utterance
dB normalization into [0, 1], and the inverse chain (Mel pseudo-inverse,
Griffin-Lim phase recovery, inverse STFT, de-emphasis).
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps

SAMPLE_RATE = 8000
RAW_SAMPLE_RATE = 25000
WIN_LENGTH = 320           # 40 ms at 8 kHz
HOP_LENGTH = 160           # 20 ms at 8 kHz
FFT_LENGTH = 510           # zero-padded analysis length (63.75 ms)
N_MELS = 64
DB_FLOOR = -80.0
PREEMPHASIS = 0.97
GRIFFIN_LIM_ITERS = 300
MEL_SCALE = "mel-2595log10"

_POWER_FLOOR = 1e-10       # reference power for silent utterances


@dataclass(frozen=True)
class NormalizationParams:
    """Per-utterance dB normalization: value = (dB - db_floor) / -db_floor."""

    db_floor: float
    reference_power: float

    def __post_init__(self):
        if self.db_floor >= 0:
            raise ValueError(f"db_floor must be negative, got {self.db_floor}")
        if self.reference_power <= 0:
            raise ValueError("reference_power must be positive")


@dataclass
class MelSpectrogram:
    """T x n_mels grid of normalized log-Mel magnitudes in [0, 1]."""

    values: np.ndarray
    norm: NormalizationParams
    mel_scale: str = MEL_SCALE

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def resample(samples: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """Polyphase resampling; identity when the rates already match."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if source_rate <= 0:
        raise ValueError(f"source_rate must be positive, got {source_rate}")
    x = np.asarray(samples, dtype=np.float64)
    if target_rate == source_rate:
        return x.copy()
    ratio = Fraction(target_rate, source_rate)
    return sps.resample_poly(x, ratio.numerator, ratio.denominator)


def preemphasize(samples: np.ndarray, coeff: float = PREEMPHASIS) -> np.ndarray:
    """First-order high-pass FIR: y[0]=x[0], y[n]=x[n]-coeff*x[n-1]."""
    _check_emphasis_coeff(coeff)
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0 or coeff == 0.0:
        return x.copy()
    return np.append(x[0], x[1:] - coeff * x[:-1])


def deemphasize(samples: np.ndarray, coeff: float = PREEMPHASIS) -> np.ndarray:
    """Inverse of preemphasize: IIR recursion y[n]=x[n]+coeff*y[n-1]."""
    _check_emphasis_coeff(coeff)
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0 or coeff == 0.0:
        return x.copy()
    return sps.lfilter([1.0], [1.0, -coeff], x)


def _check_emphasis_coeff(coeff: float) -> None:
    if not 0.0 <= coeff < 1.0:
        raise ValueError(f"emphasis coefficient must be in [0, 1), got {coeff}")


def make_window(name: str, length: int) -> np.ndarray:
    """Periodic analysis window (periodic Hann sums to 1 at 50% overlap)."""
    n = np.arange(length)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / length)
    if name == "rect":
        return np.ones(length)
    raise ValueError(f"unknown window function: {name}")


def frame_count(n_samples: int, win: int = WIN_LENGTH, hop: int = HOP_LENGTH) -> int:
    if n_samples < win:
        raise ValueError(f"signal of {n_samples} samples is shorter than one {win}-sample window")
    return (n_samples - win) // hop + 1


def stft(
    samples: np.ndarray,
    win: int = WIN_LENGTH,
    hop: int = HOP_LENGTH,
    fft_len: int = FFT_LENGTH,
    window_fn: str = "hann",
) -> np.ndarray:
    """One-sided STFT, shape (T, fft_len//2 + 1); frames are zero-padded to fft_len."""
    if win > fft_len:
        raise ValueError(f"window length {win} exceeds FFT length {fft_len}")
    if hop > win:
        raise ValueError(f"hop {hop} exceeds window length {win}")
    x = np.asarray(samples, dtype=np.float64)
    n_frames = frame_count(x.size, win, hop)
    window = make_window(window_fn, win)
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window[None, :]
    return np.fft.rfft(frames, n=fft_len, axis=1)


def istft(
    frames: np.ndarray,
    win: int = WIN_LENGTH,
    hop: int = HOP_LENGTH,
    fft_len: int = FFT_LENGTH,
    window_fn: str = "hann",
) -> np.ndarray:
    """Least-squares inverse STFT: weighted overlap-add with window-squared normalization."""
    frames = np.asarray(frames)
    n_frames = frames.shape[0]
    window = make_window(window_fn, win)
    segments = np.fft.irfft(frames, n=fft_len, axis=1)[:, :win]
    n_samples = (n_frames - 1) * hop + win
    num = np.zeros(n_samples)
    den = np.zeros(n_samples)
    for t in range(n_frames):
        start = t * hop
        num[start : start + win] += segments[t] * window
        den[start : start + win] += window * window
    # In the fully-overlapped interior the denominator is hop-periodic; a zero
    # there means (win, hop, window) cannot invert the transform.
    interior = den[win : n_samples - win]
    if interior.size and np.any(interior == 0):
        raise ValueError("window/hop combination has zero overlap-add denominator")
    out = np.zeros(n_samples)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix(n_mels: int = N_MELS, fft_len: int = FFT_LENGTH, rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular Mel filterbank, shape (n_mels, fft_len//2 + 1).

    Filter centers are equally spaced on the Mel axis between 0 and rate/2;
    triangles are evaluated at the exact bin frequencies (not quantized to
    bins), so every row has at least one nonzero entry.
    """
    n_bins = fft_len // 2 + 1
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if n_mels > n_bins:
        raise ValueError(f"n_mels {n_mels} exceeds bin count {n_bins}")
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(rate / 2.0), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * rate / fft_len
    weights = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        weights[i] = np.maximum(0.0, np.minimum(up, down))
    return weights


def to_mel(frames: np.ndarray, fb: np.ndarray, db_floor: float = DB_FLOOR) -> MelSpectrogram:
    """Project STFT power onto the Mel axis, compress to dB, normalize to [0, 1].

    The dB reference is the utterance's own maximum Mel power (stored in the
    result), so normalized values are invariant to amplitude scaling.
    """
    frames = np.asarray(frames)
    if frames.shape[1] != fb.shape[1]:
        raise ValueError(f"bin count mismatch: spectrogram {frames.shape[1]} vs filterbank {fb.shape[1]}")
    power = np.abs(frames) ** 2
    mel_power = power @ fb.T
    reference = max(float(mel_power.max(initial=0.0)), _POWER_FLOOR)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(np.maximum(mel_power, 0.0) / reference)
    db = np.clip(db, db_floor, 0.0)
    values = (db - db_floor) / -db_floor
    return MelSpectrogram(values, NormalizationParams(db_floor, reference))


def invert_mel(mel: MelSpectrogram, fb: np.ndarray) -> np.ndarray:
    """Approximate linear-frequency magnitudes from a normalized Mel spectrogram.

    Undoes the dB normalization, then maps Mel power back to linear power via
    the Moore-Penrose pseudo-inverse of the filterbank with negatives clipped
    to zero. Cells at the dB floor (value exactly 0) map back to zero power.
    """
    if mel.norm is None:
        raise ValueError("MelSpectrogram is missing normalization params")
    values = np.asarray(mel.values)
    if values.shape[1] != fb.shape[0]:
        raise ValueError(f"mel band mismatch: {values.shape[1]} vs filterbank {fb.shape[0]}")
    db = values * -mel.norm.db_floor + mel.norm.db_floor
    mel_power = mel.norm.reference_power * 10.0 ** (db / 10.0)
    mel_power[values <= 0.0] = 0.0
    power = mel_power @ np.linalg.pinv(fb.T)
    np.maximum(power, 0.0, out=power)
    return np.sqrt(power)


def spectral_inconsistency(mag: np.ndarray, samples: np.ndarray, win: int, hop: int, fft_len: int, window_fn: str = "hann") -> float:
    """Squared distance between the target magnitudes and |STFT| of a waveform."""
    rebuilt = np.abs(stft(samples, win, hop, fft_len, window_fn))
    return float(np.sum((rebuilt - mag) ** 2))


def griffin_lim(
    mag: np.ndarray,
    iters: int = GRIFFIN_LIM_ITERS,
    win: int = WIN_LENGTH,
    hop: int = HOP_LENGTH,
    fft_len: int = FFT_LENGTH,
    window_fn: str = "hann",
    init_phase: np.ndarray | None = None,
    on_iteration=None,
) -> np.ndarray:
    """Iterative phase recovery from a magnitude spectrogram (Griffin & Lim 1984).

    Alternates least-squares ISTFT and STFT, keeping the known magnitudes and
    re-estimated phases. ``on_iteration(k, objective)`` receives the spectral
    inconsistency after each of the ``iters`` iterations.
    """
    mag = np.asarray(mag, dtype=np.float64)
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    if np.any(mag < 0):
        raise ValueError("magnitudes must be non-negative")
    phase = np.zeros(mag.shape) if init_phase is None else np.asarray(init_phase)
    samples = istft(mag * np.exp(1j * phase), win, hop, fft_len, window_fn)
    for k in range(iters):
        rebuilt = stft(samples, win, hop, fft_len, window_fn)
        if on_iteration is not None:
            on_iteration(k, float(np.sum((np.abs(rebuilt) - mag) ** 2)))
        phase = np.angle(rebuilt)
        samples = istft(mag * np.exp(1j * phase), win, hop, fft_len, window_fn)
    return samples


def waveform_to_mel(
    samples: np.ndarray,
    fb: np.ndarray,
    preemph: float = PREEMPHASIS,
    win: int = WIN_LENGTH,
    hop: int = HOP_LENGTH,
    fft_len: int = FFT_LENGTH,
    window_fn: str = "hann",
) -> MelSpectrogram:
    """Full analysis chain: pre-emphasis, STFT, Mel projection, normalization."""
    emphasized = preemphasize(samples, preemph)
    return to_mel(stft(emphasized, win, hop, fft_len, window_fn), fb)


def mel_to_waveform(
    mel: MelSpectrogram,
    fb: np.ndarray,
    iters: int = GRIFFIN_LIM_ITERS,
    preemph: float = PREEMPHASIS,
    win: int = WIN_LENGTH,
    hop: int = HOP_LENGTH,
    fft_len: int = FFT_LENGTH,
    window_fn: str = "hann",
) -> np.ndarray:
    """Full synthesis chain: Mel inversion, Griffin-Lim, de-emphasis."""
    mag = invert_mel(mel, fb)
    samples = griffin_lim(mag, iters, win, hop, fft_len, window_fn)
    return deemphasize(samples, preemph)
