"""The four in-painting model variants and single-sample inference.

A-SI        audio-only: BLSTM stack over the masked spectrogram.
AV-S2S      encoder (motion -> BLSTM stack -> FC) feeding a decoder that sees
            the masked spectrogram concatenated per step with encoder context.
AV-MTL-S2S  AV-S2S plus a phoneme softmax head on the encoder for the CTC task.
AV-SI       early fusion: motion and masked spectrogram concatenated into one
            BLSTM stack.
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import containers
from .masking import Mask, composite
from .neural import BLSTM, Dense, GradientTape, Tensor, concat, parameter_count

VARIANTS = ("A-SI", "AV-S2S", "AV-MTL-S2S", "AV-SI")
CHECKPOINT_FORMAT = "avinpaint-checkpoint-v1"

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    hidden: int = 256
    encoder_layers: int = 3
    decoder_layers: int = 3
    fc_dim: int = 64
    n_mels: int = 64
    motion_dim: int = 40
    vocab_size: int = 39          # labels excluding blank; CTC head is vocab_size+1 wide
    lam: float = 0.001            # joint-loss weight, used by AV-MTL-S2S only
    init_seed: int = 0
    precision: str = "f32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.hidden <= 0:
            raise ValueError("hidden must be positive")
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {tuple(_DTYPES)}")

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass
class InpaintResult:
    y: np.ndarray                      # raw decoder output, (T, n_mels)
    o: np.ndarray                      # composited spectrogram, (T, n_mels)
    mask: Mask
    encoder_context: np.ndarray | None = None   # (T, fc_dim)
    phoneme_logits: np.ndarray | None = None    # (T, vocab_size+1)


class InpaintModel:
    """A built model variant: layer stacks plus forward/inference entry points."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        dtype = config.dtype
        h = config.hidden
        self.encoder = []
        self.encoder_fc = None
        self.ctc_head = None

        if config.variant in ("AV-S2S", "AV-MTL-S2S"):
            in_dim = config.motion_dim
            for i in range(config.encoder_layers):
                self.encoder.append(BLSTM(in_dim, h, name=f"encoder.blstm{i}", rng=rng, dtype=dtype))
                in_dim = 2 * h
            self.encoder_fc = Dense(2 * h, config.fc_dim, "relu", name="encoder.fc", rng=rng, dtype=dtype)
            if config.variant == "AV-MTL-S2S":
                self.ctc_head = Dense(2 * h, config.vocab_size + 1, "linear", name="encoder.ctc", rng=rng, dtype=dtype)
            dec_in = config.n_mels + config.fc_dim
        elif config.variant == "AV-SI":
            dec_in = config.n_mels + config.motion_dim
        else:  # A-SI
            dec_in = config.n_mels

        self.decoder = []
        in_dim = dec_in
        for i in range(config.decoder_layers):
            self.decoder.append(BLSTM(in_dim, h, name=f"decoder.blstm{i}", rng=rng, dtype=dtype))
            in_dim = 2 * h
        self.head = Dense(2 * h, config.n_mels, "relu", name="decoder.fc", rng=rng, dtype=dtype)

    @property
    def uses_visual(self) -> bool:
        return self.config.variant != "A-SI"

    @property
    def has_ctc(self) -> bool:
        return self.config.variant == "AV-MTL-S2S"

    @property
    def params(self):
        out = []
        for layer in self.encoder:
            out.extend(layer.params)
        if self.encoder_fc is not None:
            out.extend(self.encoder_fc.params)
        if self.ctc_head is not None:
            out.extend(self.ctc_head.params)
        for layer in self.decoder:
            out.extend(layer.params)
        out.extend(self.head.params)
        return out

    def parameter_count(self) -> int:
        return parameter_count(self.params)

    def forward(self, tape: GradientTape, masked: np.ndarray, motion: np.ndarray | None):
        """Batched forward pass: masked (B, T, n_mels), motion (B, T, motion_dim).

        Returns {"y": Tensor, "context": Tensor|None, "logits": Tensor|None}.
        """
        cfg = self.config
        if self.uses_visual and motion is None:
            raise ValueError(f"{cfg.variant} requires motion features")
        if not self.uses_visual and motion is not None:
            raise ValueError("A-SI takes no motion features")
        dtype = cfg.dtype
        a = Tensor(np.ascontiguousarray(masked, dtype=dtype))

        context = None
        logits = None
        if cfg.variant in ("AV-S2S", "AV-MTL-S2S"):
            hid = Tensor(np.ascontiguousarray(motion, dtype=dtype))
            for layer in self.encoder:
                hid = layer(hid, tape)
            context = self.encoder_fc(hid, tape)
            if self.ctc_head is not None:
                logits = self.ctc_head(hid, tape)
            dec_in = concat(tape, a, context)
        elif cfg.variant == "AV-SI":
            dec_in = concat(tape, Tensor(np.ascontiguousarray(motion, dtype=dtype)), a)
        else:
            dec_in = a

        hid = dec_in
        for layer in self.decoder:
            hid = layer(hid, tape)
        y = self.head(hid, tape)
        return {"y": y, "context": context, "logits": logits}

    def save(self, directory, extra: dict | None = None) -> None:
        save_checkpoint(directory, self, extra)


def build(config: ModelConfig) -> InpaintModel:
    """Construct a model variant with deterministic initialization."""
    return InpaintModel(config)


def inpaint(model: InpaintModel, masked: np.ndarray, mask: Mask, motion: np.ndarray | None = None) -> InpaintResult:
    """Single-sample inference plus compositing with the intact input frames."""
    masked = np.asarray(masked)
    out = model.forward(GradientTape(), masked[None], None if motion is None else np.asarray(motion)[None])
    y = np.asarray(out["y"].data[0], dtype=np.float64)
    o = composite(masked, y, mask)
    return InpaintResult(
        y=y,
        o=o,
        mask=mask,
        encoder_context=None if out["context"] is None else np.asarray(out["context"].data[0], dtype=np.float64),
        phoneme_logits=None if out["logits"] is None else np.asarray(out["logits"].data[0], dtype=np.float64),
    )


def save_checkpoint(directory, model: InpaintModel, extra: dict | None = None) -> None:
    """Write config.json, params.json, and one tensor file per parameter."""
    os.makedirs(os.path.join(directory, "params"), exist_ok=True)
    meta = {"format": CHECKPOINT_FORMAT, "model": model.config.to_dict(), "extra": extra or {}}
    with open(os.path.join(directory, "config.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    index = []
    for p in model.params:
        fname = f"{p.name}.avt"
        containers.write_tensor(os.path.join(directory, "params", fname), p.data)
        layer, _, role = p.name.rpartition(".")
        index.append({"name": p.name, "layer": layer, "role": role, "shape": list(p.data.shape), "file": fname})
    with open(os.path.join(directory, "params.json"), "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)


def load_checkpoint(directory) -> tuple[InpaintModel, dict]:
    """Rebuild a model from a checkpoint directory; returns (model, extra)."""
    with open(os.path.join(directory, "config.json")) as fh:
        meta = json.load(fh)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {meta.get('format')!r}")
    model = build(ModelConfig.from_dict(meta["model"]))
    with open(os.path.join(directory, "params.json")) as fh:
        index = {entry["name"]: entry for entry in json.load(fh)}
    for p in model.params:
        entry = index.get(p.name)
        if entry is None:
            raise ValueError(f"checkpoint is missing parameter {p.name}")
        data = containers.read_tensor(os.path.join(directory, "params", entry["file"]))
        if list(data.shape) != list(p.data.shape):
            raise ValueError(f"shape mismatch for {p.name}: {data.shape} vs {p.data.shape}")
        p.data = data.astype(model.config.dtype)
        p.grad = np.zeros_like(p.data)
    return model, meta.get("extra", {})
