"""File formats: tensor container, PCM16 WAV audio, and dataset manifests."""

import json
import os
import struct
from dataclasses import asdict, dataclass

import numpy as np
from scipy.io import wavfile

TENSOR_MAGIC = b"AVI1"
_DTYPE_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_TAG_DTYPES = {tag: dt for dt, tag in _DTYPE_TAGS.items()}

SPLITS = ("train", "val", "test")


def write_tensor(path, array: np.ndarray) -> None:
    """Binary tensor file: magic, u32 dtype tag, u32 ndim, u32 dims, LE payload."""
    array = np.asarray(array)
    dtype = np.dtype("<f8") if array.dtype == np.float64 else np.dtype("<f4")
    data = np.ascontiguousarray(array, dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", _DTYPE_TAGS[dtype], data.ndim))
        fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
        fh.write(data.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TENSOR_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        tag, ndim = struct.unpack("<II", fh.read(8))
        if tag not in _TAG_DTYPES:
            raise ValueError(f"{path}: unknown dtype tag {tag}")
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        dtype = _TAG_DTYPES[tag]
        payload = fh.read()
    expected = dtype.itemsize * int(np.prod(shape)) if ndim else dtype.itemsize
    if len(payload) != expected:
        raise ValueError(f"{path}: payload of {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def write_wav(path, samples: np.ndarray, rate: int) -> None:
    """Mono PCM16 little-endian output; samples clipped to [-1, 1]."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    wavfile.write(path, rate, (clipped * 32767.0).astype("<i2"))


def read_wav(path):
    """Returns (samples in [-1, 1] float64, rate); mono PCM16 or float input."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return samples, int(rate)


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    wav_path: str
    landmarks_path: str
    transcript: str
    speaker_id: str
    split: str


def save_manifest(path, entries) -> None:
    payload = {"entries": [asdict(e) for e in entries]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_manifest(path, check_files: bool = True):
    """Load and validate a manifest; relative media paths resolve against it.

    Validation: unique utterance ids, known split names, speaker-disjoint
    splits, and (optionally) that every referenced file exists.
    """
    with open(path) as fh:
        payload = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    seen_ids = set()
    speaker_split = {}
    for raw in payload["entries"]:
        entry = ManifestEntry(**raw)
        if entry.split not in SPLITS:
            raise ValueError(f"{entry.utterance_id}: unknown split {entry.split!r}")
        if entry.utterance_id in seen_ids:
            raise ValueError(f"duplicate utterance id {entry.utterance_id!r}")
        seen_ids.add(entry.utterance_id)
        previous = speaker_split.setdefault(entry.speaker_id, entry.split)
        if previous != entry.split:
            raise ValueError(
                f"speaker {entry.speaker_id!r} appears in both {previous!r} and {entry.split!r} splits"
            )
        entry = ManifestEntry(
            entry.utterance_id,
            os.path.join(base, entry.wav_path),
            os.path.join(base, entry.landmarks_path),
            entry.transcript,
            entry.speaker_id,
            entry.split,
        )
        if check_files:
            for p in (entry.wav_path, entry.landmarks_path):
                if not os.path.exists(p):
                    raise FileNotFoundError(f"{entry.utterance_id}: missing file {p}")
        entries.append(entry)
    return entries
